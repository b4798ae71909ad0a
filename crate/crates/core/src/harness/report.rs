//! CSV and plain-text renderings of harness results.

use std::fmt::Write as _;

use super::{RocResult, StabilityCurve, SweepResult};

/// `kind,severity,rl2` rows.
pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::from("kind,severity,rl2\n");
    for r in results {
        for (s, v) in r.severities.iter().zip(&r.rl2_values) {
            writeln!(out, "{},{s},{v}", r.kind).unwrap();
        }
    }
    out
}

pub fn sweep_summary(results: &[SweepResult]) -> String {
    let mut out = String::from("kind,levels,monotone,spearman\n");
    for r in results {
        writeln!(
            out,
            "{},{},{},{}",
            r.kind,
            r.severities.len(),
            r.monotone,
            r.spearman
        )
        .unwrap();
    }
    out
}

/// `threshold,fpr,tpr` rows.
pub fn roc_csv(roc: &RocResult) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for ((t, f), p) in roc.thresholds.iter().zip(&roc.fpr).zip(&roc.tpr) {
        writeln!(out, "{t},{f},{p}").unwrap();
    }
    out
}

/// `n,mean_rl2,std_rl2,resamples` rows.
pub fn stability_csv(curve: &StabilityCurve) -> String {
    let mut out = String::from("n,mean_rl2,std_rl2,resamples\n");
    for ((n, m), s) in curve
        .sample_sizes
        .iter()
        .zip(&curve.mean_rl2)
        .zip(&curve.std_rl2)
    {
        writeln!(out, "{n},{m},{s},{}", curve.resamples).unwrap();
    }
    out
}
