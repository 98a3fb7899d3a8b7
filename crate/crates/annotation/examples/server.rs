//! Serve the annotation HTTP API over the fixture corpus with an in-memory store.
//!
//! `ADMIN_TOKEN=secret cargo run -p citesum-annotation --example server`
//! then e.g. `curl localhost:8080/api/health`.

use std::path::Path;

use citesum::Dataset;
use citesum_annotation::http::{router, ApiConfig};
use citesum_annotation::{AnnotationService, MemoryStore};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let ds = Dataset::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/corpus/dataset.jsonl"))?;
    let svc = AnnotationService::open(ds, Box::new(MemoryStore::default()))?;
    let admin_token = std::env::var("ADMIN_TOKEN").unwrap_or_else(|_| "change-me".into());
    let app = router(
        svc,
        ApiConfig {
            admin_token,
            static_dir: None,
            export_path: Some("revised.jsonl".into()),
        },
    );

    let addr = std::env::var("ADDR").unwrap_or_else(|_| "127.0.0.1:8080".into());
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    println!("listening on http://{addr}");
    axum::serve(listener, app).await?;
    Ok(())
}
