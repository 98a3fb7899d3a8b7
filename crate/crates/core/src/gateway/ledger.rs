//! Exact cost accounting.
//!
//! Prices are stored as rationals parsed from decimal strings, so totals are
//! exact: `Σ (in·p_in + out·p_out) / 10⁶` with no float drift.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use num::{BigInt, BigRational, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decimal;

/// A non-negative decimal amount of currency, held exactly.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Money(pub BigRational);

impl Money {
    pub fn zero() -> Self {
        Money(BigRational::zero())
    }

    /// Rounded to `places` decimals, half up.
    pub fn render(&self, places: u32) -> String {
        decimal::big(&self.0, places)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.render(6))
    }
}

impl FromStr for Money {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches('$');
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(format!("not a decimal amount: {s:?}"));
        }
        let digits: BigInt = format!("{int}{frac}")
            .parse()
            .map_err(|_| format!("not a decimal amount: {s:?}"))?;
        let value = BigRational::new(digits, BigInt::from(10u32).pow(frac.len() as u32));
        Ok(Money(if neg { -value } else { value }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render(6))
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(u64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Int(n) => Ok(Money(BigRational::from_integer(n.into()))),
        }
    }
}

/// Per-million-token prices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Price {
    #[serde(default = "Money::zero", rename = "price_in_per_million")]
    pub input_per_million: Money,
    #[serde(default = "Money::zero", rename = "price_out_per_million")]
    pub output_per_million: Money,
}

impl Price {
    pub fn new(input_per_million: &str, output_per_million: &str) -> Result<Self, String> {
        let p = Price {
            input_per_million: input_per_million.parse()?,
            output_per_million: output_per_million.parse()?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.input_per_million.0.is_negative() || self.output_per_million.0.is_negative() {
            return Err("prices must be >= 0".into());
        }
        Ok(())
    }

    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> Money {
        let million = BigRational::from_integer(1_000_000.into());
        let total = &self.input_per_million.0 * BigRational::from_integer(input_tokens.into())
            + &self.output_per_million.0 * BigRational::from_integer(output_tokens.into());
        Money(total / million)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LedgerEntry {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LedgerTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Money,
}

/// Thread-safe, append-only usage ledger keyed by backend name.
#[derive(Debug, Default)]
pub struct CostLedger {
    entries: Mutex<BTreeMap<String, LedgerEntry>>,
}

impl CostLedger {
    pub fn record(&self, backend: &str, price: &Price, input_tokens: u64, output_tokens: u64) {
        let cost = price.cost(input_tokens, output_tokens);
        let mut entries = self.entries.lock().expect("ledger lock");
        let e = entries.entry(backend.to_string()).or_default();
        e.calls += 1;
        e.input_tokens += input_tokens;
        e.output_tokens += output_tokens;
        e.cost = Money(&e.cost.0 + cost.0);
    }

    pub fn entries(&self) -> BTreeMap<String, LedgerEntry> {
        self.entries.lock().expect("ledger lock").clone()
    }

    pub fn totals(&self) -> LedgerTotals {
        let entries = self.entries.lock().expect("ledger lock");
        let mut t = LedgerTotals::default();
        for e in entries.values() {
            t.calls += e.calls;
            t.input_tokens += e.input_tokens;
            t.output_tokens += e.output_tokens;
            t.cost = Money(&t.cost.0 + &e.cost.0);
        }
        t
    }

    /// Plain-text table, one row per backend plus a total.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<24} {:>8} {:>12} {:>12} {:>12}\n",
            "backend", "calls", "input", "output", "cost"
        );
        for (name, e) in self.entries() {
            out.push_str(&format!(
                "{:<24} {:>8} {:>12} {:>12} {:>12}\n",
                name,
                e.calls,
                e.input_tokens,
                e.output_tokens,
                format!("${}", e.cost.render(4))
            ));
        }
        let t = self.totals();
        out.push_str(&format!(
            "{:<24} {:>8} {:>12} {:>12} {:>12}\n",
            "total",
            t.calls,
            t.input_tokens,
            t.output_tokens,
            format!("${}", t.cost.render(4))
        ));
        out
    }
}
