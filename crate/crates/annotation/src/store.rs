//! Durable event logs behind one interface.
//!
//! Each `append` is one record written atomically: a single line for the
//! file store, a single row for sqlite.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rusqlite::Connection;

use crate::model::Event;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("event encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

pub trait Store: Send {
    /// Persists one event. Must not return before the event is durable.
    fn append(&mut self, event: &Event) -> Result<(), StoreError>;

    /// All events in append order.
    fn load(&mut self) -> Result<Vec<Event>, StoreError>;
}

/// Keeps events in memory only. For tests and throwaway servers.
#[derive(Debug, Default)]
pub struct MemoryStore {
    events: Vec<Event>,
}

impl Store for MemoryStore {
    fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        self.events.push(event.clone());
        Ok(())
    }

    fn load(&mut self) -> Result<Vec<Event>, StoreError> {
        Ok(self.events.clone())
    }
}

/// Append-only JSONL file, one event per line.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
}

impl FileStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(FileStore { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Store for FileStore {
    fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        let mut f = OpenOptions::new().append(true).open(&self.path).map_err(io)?;
        f.write_all(line.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)
    }

    fn load(&mut self) -> Result<Vec<Event>, StoreError> {
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        let reader = BufReader::new(File::open(&self.path).map_err(io)?);
        let mut events = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: self.path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(events)
    }
}

/// Relational store. Events go into one table with their instance and
/// annotator ids broken out as indexed columns.
pub struct SqliteStore {
    conn: Connection,
}

impl SqliteStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch(
            "CREATE TABLE IF NOT EXISTS events (
                seq INTEGER PRIMARY KEY AUTOINCREMENT,
                kind TEXT NOT NULL,
                instance_id TEXT,
                annotator_id TEXT,
                payload TEXT NOT NULL
            );
            CREATE INDEX IF NOT EXISTS events_instance ON events(instance_id);
            CREATE INDEX IF NOT EXISTS events_annotator ON events(annotator_id);",
        )?;
        Ok(SqliteStore { conn })
    }
}

impl Store for SqliteStore {
    fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        self.conn.execute(
            "INSERT INTO events (kind, instance_id, annotator_id, payload) VALUES (?1, ?2, ?3, ?4)",
            (
                event.kind(),
                event.instance_id(),
                event.annotator_id(),
                serde_json::to_string(event)?,
            ),
        )?;
        Ok(())
    }

    fn load(&mut self) -> Result<Vec<Event>, StoreError> {
        let mut stmt = self.conn.prepare("SELECT payload FROM events ORDER BY seq")?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
        let mut events = Vec::new();
        for row in rows {
            events.push(serde_json::from_str(&row?)?);
        }
        Ok(events)
    }
}

/// Which backend to open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreKind {
    Memory,
    File(PathBuf),
    Sqlite(PathBuf),
}

impl StoreKind {
    /// `memory`, `file:<path>` or `sqlite:<path>`. A bare path is a file store.
    pub fn parse(s: &str) -> Self {
        if s == "memory" {
            StoreKind::Memory
        } else if let Some(p) = s.strip_prefix("sqlite:") {
            StoreKind::Sqlite(p.into())
        } else {
            StoreKind::File(s.strip_prefix("file:").unwrap_or(s).into())
        }
    }

    pub fn open(&self) -> Result<Box<dyn Store>, StoreError> {
        Ok(match self {
            StoreKind::Memory => Box::new(MemoryStore::default()),
            StoreKind::File(p) => Box::new(FileStore::open(p)?),
            StoreKind::Sqlite(p) => Box::new(SqliteStore::open(p)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Consent, Event};

    fn events() -> Vec<Event> {
        vec![
            Event::Approved {
                annotator_id: "a1".into(),
            },
            Event::Consented {
                annotator_id: "a1".into(),
                consent: Consent {
                    data_use: true,
                    cookies: false,
                },
            },
        ]
    }

    fn roundtrip(store: &mut dyn Store) {
        for e in events() {
            store.append(&e).unwrap();
        }
        assert_eq!(store.load().unwrap(), events());
    }

    #[test]
    fn file_store_roundtrip_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/events.jsonl");
        roundtrip(&mut FileStore::open(&path).unwrap());
        assert_eq!(FileStore::open(&path).unwrap().load().unwrap(), events());
    }

    #[test]
    fn file_store_reports_corrupt_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        fs::write(&path, "{\"event\":\"approved\",\"annotator_id\":\"a\"}\nnot json\n").unwrap();
        match FileStore::open(&path).unwrap().load() {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected corrupt error, got {other:?}"),
        }
    }

    #[test]
    fn sqlite_store_roundtrip_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.db");
        roundtrip(&mut SqliteStore::open(&path).unwrap());
        assert_eq!(SqliteStore::open(&path).unwrap().load().unwrap(), events());
        roundtrip(&mut SqliteStore::in_memory().unwrap());
    }

    #[test]
    fn store_kind_parsing() {
        assert_eq!(StoreKind::parse("memory"), StoreKind::Memory);
        assert_eq!(StoreKind::parse("sqlite:x.db"), StoreKind::Sqlite("x.db".into()));
        assert_eq!(StoreKind::parse("log.jsonl"), StoreKind::File("log.jsonl".into()));
    }
}
