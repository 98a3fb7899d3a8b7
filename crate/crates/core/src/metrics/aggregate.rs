use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num::{BigRational, Zero};
use serde::{Deserialize, Serialize, Serializer};

use crate::aspect::AspectCode;
use crate::decimal;

use super::{InstanceReport, MetricsError, Score};

/// How instance scores are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of per-instance values.
    #[default]
    Macro,
    /// Pooled counts: `Σ num / Σ den`. A degenerate score counts as one unit
    /// worth its conventional value.
    Micro,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Macro => "macro",
            Aggregation::Micro => "micro",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Ok(Aggregation::Macro),
            "micro" => Ok(Aggregation::Micro),
            _ => Err(format!("unknown aggregation `{s}` (expected macro or micro)")),
        }
    }
}

/// Harmonic mean of recall and precision; 0 when both are 0.
pub fn f1(recall: &BigRational, precision: &BigRational) -> BigRational {
    let sum = recall + precision;
    if sum.is_zero() {
        return BigRational::zero();
    }
    BigRational::from_integer(2.into()) * recall * precision / sum
}

fn ser_exact<S: Serializer>(v: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Exact {
        exact: String,
        percent: String,
        value: f64,
    }
    Exact {
        exact: format!("{}/{}", v.numer(), v.denom()),
        percent: decimal::percent(v),
        value: decimal::to_f64(v),
    }
    .serialize(s)
}

/// Aggregated scores for a group of instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricRow {
    pub count: usize,
    #[serde(serialize_with = "ser_exact")]
    pub clr: BigRational,
    #[serde(serialize_with = "ser_exact")]
    pub cir: BigRational,
    #[serde(serialize_with = "ser_exact")]
    pub clp: BigRational,
    #[serde(serialize_with = "ser_exact")]
    pub cip: BigRational,
    #[serde(serialize_with = "ser_exact")]
    pub f1_claim: BigRational,
    #[serde(serialize_with = "ser_exact")]
    pub f1_citation: BigRational,
}

impl MetricRow {
    fn from_reports(reports: &[&InstanceReport], mode: Aggregation) -> Self {
        let combine = |pick: fn(&InstanceReport) -> Score| -> BigRational {
            match mode {
                Aggregation::Macro => {
                    let sum = reports.iter().fold(BigRational::zero(), |acc, r| acc + pick(r).big());
                    sum / BigRational::from_integer(reports.len().into())
                }
                Aggregation::Micro => {
                    let (mut num, mut den) = (BigRational::zero(), 0u64);
                    for r in reports {
                        let s = pick(r);
                        if s.is_degenerate() {
                            num += s.big();
                            den += 1;
                        } else {
                            num += BigRational::from_integer(s.num.into());
                            den += s.den;
                        }
                    }
                    num / BigRational::from_integer(den.into())
                }
            }
        };
        let clr = combine(|r| r.clr);
        let cir = combine(|r| r.cir);
        let clp = combine(|r| r.clp);
        let cip = combine(|r| r.cip);
        MetricRow {
            count: reports.len(),
            f1_claim: f1(&clr, &clp),
            f1_citation: f1(&cir, &cip),
            clr,
            cir,
            clp,
            cip,
        }
    }

    /// Percentages in table column order: CLR, CIR, CLP, CIP, F1 claim, F1 citation.
    pub fn percents(&self) -> [String; 6] {
        [
            &self.clr,
            &self.cir,
            &self.clp,
            &self.cip,
            &self.f1_claim,
            &self.f1_citation,
        ]
        .map(decimal::percent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricReport {
    pub aggregation: Aggregation,
    pub instance_count: usize,
    pub overall: MetricRow,
    pub per_aspect: BTreeMap<AspectCode, MetricRow>,
}

/// Combines instance reports overall and per aspect.
pub fn aggregate(items: &[(AspectCode, &InstanceReport)], mode: Aggregation) -> Result<MetricReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    let all: Vec<&InstanceReport> = items.iter().map(|(_, r)| *r).collect();
    let mut groups: BTreeMap<AspectCode, Vec<&InstanceReport>> = BTreeMap::new();
    for (aspect, r) in items {
        groups.entry(*aspect).or_default().push(r);
    }
    Ok(MetricReport {
        aggregation: mode,
        instance_count: items.len(),
        overall: MetricRow::from_reports(&all, mode),
        per_aspect: groups
            .into_iter()
            .map(|(a, rs)| (a, MetricRow::from_reports(&rs, mode)))
            .collect(),
    })
}

const GROUP_HEADER: [&str; 3] = ["Completeness", "Conciseness", "F1 Score"];
const COLUMNS: [&str; 6] = ["CLR", "CIR", "CLP", "CIP", "F1-cl", "F1-ci"];

fn render_rows(first_column: &str, rows: &[(String, &MetricRow)], separator_before: &[usize]) -> String {
    let width = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .chain([first_column.len(), 6])
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<width$} | {:^13} | {:^13} | {:^13}\n",
        "", GROUP_HEADER[0], GROUP_HEADER[1], GROUP_HEADER[2]
    ));
    out.push_str(&format!("{first_column:<width$} |"));
    for pair in COLUMNS.chunks(2) {
        out.push_str(&format!(" {:>6} {:>6} |", pair[0], pair[1]));
    }
    out.pop();
    out.push('\n');
    let rule = format!("{}\n", "-".repeat(width + 3 + 3 * 16 - 1));
    out.push_str(&rule);
    for (i, (label, row)) in rows.iter().enumerate() {
        if separator_before.contains(&i) {
            out.push_str(&rule);
        }
        let p = row.percents();
        out.push_str(&format!(
            "{label:<width$} | {:>6} {:>6} | {:>6} {:>6} | {:>6} {:>6}\n",
            p[0], p[1], p[2], p[3], p[4], p[5]
        ));
    }
    out
}

/// One row per method, as in a comparison of systems.
pub fn render_method_table(rows: &[(String, &MetricRow)]) -> String {
    render_rows("Method", rows, &[])
}

/// One row per aspect in canonical order, then an `Avg.` row over all instances.
pub fn render_aspect_table(report: &MetricReport) -> String {
    let mut rows: Vec<(String, &MetricRow)> = AspectCode::ALL
        .iter()
        .filter_map(|a| Some((a.code().to_ascii_uppercase().to_string(), report.per_aspect.get(a)?)))
        .collect();
    let avg_at = rows.len();
    rows.push(("Avg.".to_string(), &report.overall));
    render_rows("Aspect", &rows, &[avg_at])
}
