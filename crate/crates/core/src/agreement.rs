//! Inter-annotator agreement and correlation between two scorers.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num::rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::aspect::AspectCode;
use crate::decimal;
use crate::metrics::{EvaluationReport, Score};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("no score pairs")]
    Empty,
    #[error("score {0} outside the 1-5 scale")]
    OutOfScale(u8),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
    #[error("{0}")]
    Mismatch(String),
}

/// Qualitative rating dimensions on a 1-5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikertMetric {
    Completeness,
    Conciseness,
    Traceability,
}

impl LikertMetric {
    pub const ALL: [LikertMetric; 3] = [
        LikertMetric::Completeness,
        LikertMetric::Conciseness,
        LikertMetric::Traceability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LikertMetric::Completeness => "completeness",
            LikertMetric::Conciseness => "conciseness",
            LikertMetric::Traceability => "traceability",
        }
    }
}

impl fmt::Display for LikertMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LikertMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown rating metric `{s}`"))
    }
}

/// Two annotators' scores for one item on one metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorePair {
    pub item: String,
    pub metric: LikertMetric,
    pub score_a: u8,
    pub score_b: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IaaStats {
    pub pairs: usize,
    #[serde(serialize_with = "ser_ratio")]
    pub exact_match: Ratio<u64>,
    #[serde(serialize_with = "ser_ratio")]
    pub within_one: Ratio<u64>,
    #[serde(serialize_with = "ser_ratio")]
    pub mae: Ratio<u64>,
}

fn ser_ratio<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Exact {
        exact: String,
        value: f64,
    }
    Exact {
        exact: format!("{}/{}", r.numer(), r.denom()),
        value: *r.numer() as f64 / *r.denom() as f64,
    }
    .serialize(s)
}

impl IaaStats {
    pub fn render(&self) -> String {
        let pct = |r: &Ratio<u64>| decimal::ratio_u128(*r.numer() as u128 * 100, *r.denom() as u128, 1);
        format!(
            "pairs {:>5}  exact {:>5}%  within-one {:>5}%  mae {}",
            self.pairs,
            pct(&self.exact_match),
            pct(&self.within_one),
            decimal::ratio_u128(*self.mae.numer() as u128, *self.mae.denom() as u128, 2)
        )
    }
}

/// Exact-match rate, within-one rate and mean absolute difference of Likert pairs.
pub fn iaa_stats(pairs: &[(u8, u8)]) -> Result<IaaStats, AgreementError> {
    if pairs.is_empty() {
        return Err(AgreementError::Empty);
    }
    let (mut exact, mut within, mut abs) = (0u64, 0u64, 0u64);
    for &(a, b) in pairs {
        for s in [a, b] {
            if !(1..=5).contains(&s) {
                return Err(AgreementError::OutOfScale(s));
            }
        }
        let d = a.abs_diff(b) as u64;
        exact += (d == 0) as u64;
        within += (d <= 1) as u64;
        abs += d;
    }
    let n = pairs.len() as u64;
    Ok(IaaStats {
        pairs: pairs.len(),
        exact_match: Ratio::new(exact, n),
        within_one: Ratio::new(within, n),
        mae: Ratio::new(abs, n),
    })
}

/// Agreement over all pairs pooled, and per rating metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IaaReport {
    pub pooled: IaaStats,
    pub per_metric: BTreeMap<LikertMetric, IaaStats>,
}

pub fn iaa_report(pairs: &[ScorePair]) -> Result<IaaReport, AgreementError> {
    let all: Vec<(u8, u8)> = pairs.iter().map(|p| (p.score_a, p.score_b)).collect();
    let mut groups: BTreeMap<LikertMetric, Vec<(u8, u8)>> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.metric).or_default().push((p.score_a, p.score_b));
    }
    Ok(IaaReport {
        pooled: iaa_stats(&all)?,
        per_metric: groups
            .into_iter()
            .map(|(m, v)| Ok((m, iaa_stats(&v)?)))
            .collect::<Result<_, AgreementError>>()?,
    })
}

fn check_inputs(xs: &[f64], ys: &[f64]) -> Result<(), AgreementError> {
    if xs.len() != ys.len() {
        return Err(AgreementError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AgreementError::TooShort(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AgreementError::NonFinite);
    }
    Ok(())
}

/// Product-moment correlation using centered sums.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, AgreementError> {
    check_inputs(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AgreementError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank. Returned doubled so
/// they are integers.
fn doubled_ranks(values: &[f64]) -> Vec<i128> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0i128; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average of 1-based ranks i+1 ..= j+1, doubled.
        let doubled = (i + 1 + j + 1) as i128;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation with average ranks for ties.
///
/// Computed on integer (doubled) ranks, so perfectly monotone inputs give
/// exactly `1.0` or `-1.0`.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, AgreementError> {
    check_inputs(xs, ys)?;
    let rx = doubled_ranks(xs);
    let ry = doubled_ranks(ys);
    let n = xs.len() as i128;
    let sum = |v: &[i128]| v.iter().sum::<i128>();
    let dot = |a: &[i128], b: &[i128]| a.iter().zip(b).map(|(x, y)| x * y).sum::<i128>();
    let sxy = n * dot(&rx, &ry) - sum(&rx) * sum(&ry);
    let sxx = n * dot(&rx, &rx) - sum(&rx) * sum(&rx);
    let syy = n * dot(&ry, &ry) - sum(&ry) * sum(&ry);
    if sxx == 0 || syy == 0 {
        return Err(AgreementError::ZeroVariance);
    }
    if sxy * sxy == sxx * syy {
        return Ok(if sxy > 0 { 1.0 } else { -1.0 });
    }
    Ok((sxy as f64 / ((sxx as f64).sqrt() * (syy as f64).sqrt())).clamp(-1.0, 1.0))
}

/// The four automatic metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Clr,
    Cir,
    Clp,
    Cip,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [MetricName::Clr, MetricName::Cir, MetricName::Clp, MetricName::Cip];

    pub fn label(self) -> &'static str {
        match self {
            MetricName::Clr => "CLR",
            MetricName::Cir => "CIR",
            MetricName::Clp => "CLP",
            MetricName::Cip => "CIP",
        }
    }

    fn pick(self, r: &crate::metrics::InstanceReport) -> Score {
        match self {
            MetricName::Clr => r.clr,
            MetricName::Cir => r.cir,
            MetricName::Clp => r.clp,
            MetricName::Cip => r.cip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCorrelation {
    pub metric: MetricName,
    pub n: usize,
    /// `None` when undefined (zero variance on either side).
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationStudy {
    pub per_metric: Vec<MetricCorrelation>,
    /// Mean over the metrics whose correlation is defined.
    pub mean_spearman: Option<f64>,
    pub mean_pearson: Option<f64>,
}

impl CorrelationStudy {
    pub fn render(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
        let mut out = format!("{:<6} {:>5} {:>10} {:>10}\n", "metric", "n", "spearman", "pearson");
        for m in &self.per_metric {
            out.push_str(&format!(
                "{:<6} {:>5} {:>10} {:>10}\n",
                m.metric.label(),
                m.n,
                fmt(m.spearman),
                fmt(m.pearson)
            ));
        }
        out.push_str(&format!(
            "{:<6} {:>5} {:>10} {:>10}\n",
            "mean",
            "",
            fmt(self.mean_spearman),
            fmt(self.mean_pearson)
        ));
        out
    }
}

/// Correlates two evaluations of the same instances (e.g. automatic vs human judge),
/// per metric across instances, then averages across metrics.
pub fn correlation_study(a: &EvaluationReport, b: &EvaluationReport) -> Result<CorrelationStudy, AgreementError> {
    let index: HashMap<(&str, AspectCode), &crate::metrics::InstanceReport> = b
        .instances
        .iter()
        .map(|i| ((i.pmid.as_str(), i.aspect), &i.report))
        .collect();
    let mut matched = Vec::new();
    for i in &a.instances {
        if let Some(other) = index.get(&(i.pmid.as_str(), i.aspect)) {
            matched.push((&i.report, *other));
        }
    }
    if matched.is_empty() {
        return Err(AgreementError::Mismatch("the two reports share no instances".into()));
    }
    let mut per_metric = Vec::new();
    for metric in MetricName::ALL {
        let xs: Vec<f64> = matched
            .iter()
            .map(|(x, _)| decimal::to_f64(&metric.pick(x).big()))
            .collect();
        let ys: Vec<f64> = matched
            .iter()
            .map(|(_, y)| decimal::to_f64(&metric.pick(y).big()))
            .collect();
        per_metric.push(MetricCorrelation {
            metric,
            n: xs.len(),
            spearman: spearman_rho(&xs, &ys).ok(),
            pearson: pearson_r(&xs, &ys).ok(),
        });
    }
    let mean = |f: fn(&MetricCorrelation) -> Option<f64>| {
        let vals: Vec<f64> = per_metric.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(CorrelationStudy {
        mean_spearman: mean(|m| m.spearman),
        mean_pearson: mean(|m| m.pearson),
        per_metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iaa_identical() {
        let s = iaa_stats(&[(3, 3), (5, 5)]).unwrap();
        assert_eq!(s.exact_match, Ratio::new(1, 1));
        assert_eq!(s.within_one, Ratio::new(1, 1));
        assert_eq!(s.mae, Ratio::new(0, 1));
    }

    #[test]
    fn iaa_hand_computed() {
        let s = iaa_stats(&[(3, 4), (5, 5), (2, 5)]).unwrap();
        assert_eq!(s.exact_match, Ratio::new(1, 3));
        assert_eq!(s.within_one, Ratio::new(2, 3));
        assert_eq!(s.mae, Ratio::new(4, 3));
    }

    #[test]
    fn iaa_errors() {
        assert_eq!(iaa_stats(&[]), Err(AgreementError::Empty));
        assert_eq!(iaa_stats(&[(0, 3)]), Err(AgreementError::OutOfScale(0)));
        assert_eq!(iaa_stats(&[(3, 6)]), Err(AgreementError::OutOfScale(6)));
    }

    #[test]
    fn iaa_pooled_and_per_metric() {
        let p = |m, a, b| ScorePair {
            item: "x".into(),
            metric: m,
            score_a: a,
            score_b: b,
        };
        let r = iaa_report(&[p(LikertMetric::Completeness, 3, 3), p(LikertMetric::Traceability, 1, 5)]).unwrap();
        assert_eq!(r.pooled.exact_match, Ratio::new(1, 2));
        assert_eq!(r.per_metric[&LikertMetric::Traceability].mae, Ratio::new(4, 1));
        assert!(!r.per_metric.contains_key(&LikertMetric::Conciseness));
    }

    #[test]
    fn spearman_monotone_is_exact() {
        let xs = [0.1, 0.5, 0.3, 2.0];
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x + 7.0).collect();
        assert_eq!(spearman_rho(&xs, &ys).unwrap(), 1.0);
        let rev: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_eq!(spearman_rho(&xs, &rev).unwrap(), -1.0);
    }

    #[test]
    fn spearman_ties_use_average_ranks() {
        assert_eq!(doubled_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![4, 7, 7, 2]);
    }

    #[test]
    fn pearson_affine() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson_r(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson_r(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_errors() {
        assert_eq!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]), Err(AgreementError::ZeroVariance));
        assert_eq!(
            spearman_rho(&[1.0, 2.0], &[3.0, 3.0]),
            Err(AgreementError::ZeroVariance)
        );
        assert_eq!(spearman_rho(&[1.0], &[1.0]), Err(AgreementError::TooShort(1)));
        assert_eq!(
            pearson_r(&[1.0, 2.0], &[1.0]),
            Err(AgreementError::LengthMismatch(2, 1))
        );
        assert_eq!(pearson_r(&[1.0, f64::NAN], &[1.0, 2.0]), Err(AgreementError::NonFinite));
    }
}
