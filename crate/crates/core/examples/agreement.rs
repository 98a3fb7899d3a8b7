//! Inter-annotator agreement on 1-5 ratings and rank/linear correlation.

use citesum::agreement::{iaa_report, pearson_r, spearman_rho, LikertMetric, ScorePair};

fn main() -> anyhow::Result<()> {
    let ratings = [
        ("a", LikertMetric::Completeness, 5, 4),
        ("a", LikertMetric::Conciseness, 4, 4),
        ("b", LikertMetric::Completeness, 2, 4),
        ("b", LikertMetric::Conciseness, 3, 3),
        ("c", LikertMetric::Completeness, 3, 3),
        ("c", LikertMetric::Traceability, 5, 1),
    ];
    let pairs: Vec<ScorePair> = ratings
        .iter()
        .map(|&(item, metric, a, b)| ScorePair {
            item: item.into(),
            metric,
            score_a: a,
            score_b: b,
        })
        .collect();
    let report = iaa_report(&pairs)?;
    println!("{:<14} {}", "pooled", report.pooled.render());
    for (metric, stats) in &report.per_metric {
        println!("{:<14} {}", metric.name(), stats.render());
    }

    let automatic = [0.9, 0.4, 0.4, 0.7, 0.1];
    let human = [5.0, 2.0, 3.0, 4.0, 1.0];
    println!("spearman {:.3}", spearman_rho(&automatic, &human)?);
    println!("pearson  {:.3}", pearson_r(&automatic, &human)?);
    Ok(())
}
