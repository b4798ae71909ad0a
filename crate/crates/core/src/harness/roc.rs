use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Inputs up to this many scores use exact pair counting; larger ones use ranks.
pub const PAIR_COUNT_LIMIT: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct RocResult {
    pub auc: f64,
    /// Descending score thresholds; the first point (+inf) is the empty selection.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub warnings: Vec<String>,
}

impl RocResult {
    /// Trapezoidal area under the stored curve.
    pub fn trapezoid_auc(&self) -> f64 {
        self.fpr
            .windows(2)
            .zip(self.tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) * 0.5)
            .sum()
    }
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("labels must be 0 or 1, got {l}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(
            "ROC needs both positive and negative labels",
        ));
    }
    Ok((n_pos, n_neg))
}

/// Twice the Mann–Whitney count: 2 per (pos > neg) pair, 1 per tie.
fn doubled_wins_by_pairs(scores: &[f64], labels: &[u8]) -> u64 {
    let with_label = |want: u8| -> Vec<f64> {
        scores
            .iter()
            .zip(labels)
            .filter(|&(_, &l)| l == want)
            .map(|(&s, _)| s)
            .collect()
    };
    let (pos, neg) = (with_label(1), with_label(0));
    let mut total = 0u64;
    for &p in &pos {
        for &n in &neg {
            total += match p.partial_cmp(&n).expect("no NaN") {
                Ordering::Greater => 2,
                Ordering::Equal => 1,
                Ordering::Less => 0,
            };
        }
    }
    total
}

/// The same count from tie-averaged ranks: `2·R_pos − P(P+1)`.
fn doubled_wins_by_ranks(scores: &[f64], labels: &[u8], n_pos: usize) -> u64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled_rank_sum = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share the doubled average rank i+1+j
        let group_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        doubled_rank_sum += group_pos * (i + 1 + j) as u64;
        i = j;
    }
    let p = n_pos as u64;
    doubled_rank_sum - p * (p + 1)
}

/// AUC by brute-force comparison of every positive/negative pair.
pub fn auc_pair_count(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, n) = validate(scores, labels)?;
    Ok(doubled_wins_by_pairs(scores, labels) as f64 / (2 * p * n) as f64)
}

/// AUC by the rank-sum formula.
pub fn auc_rank(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, n) = validate(scores, labels)?;
    Ok(doubled_wins_by_ranks(scores, labels, p) as f64 / (2 * p * n) as f64)
}

/// ROC curve and AUC where a higher score means "more likely positive".
///
/// Ties count one half, so the AUC equals the Mann–Whitney statistic.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocResult> {
    let (n_pos, n_neg) = validate(scores, labels)?;
    let doubled = if scores.len() <= PAIR_COUNT_LIMIT {
        doubled_wins_by_pairs(scores, labels)
    } else {
        doubled_wins_by_ranks(scores, labels, n_pos)
    };
    let auc = doubled as f64 / (2 * n_pos * n_neg) as f64;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(threshold);
        tpr.push(tp as f64 / n_pos as f64);
        fpr.push(fp as f64 / n_neg as f64);
    }
    Ok(RocResult {
        auc,
        thresholds,
        tpr,
        fpr,
        n_pos,
        n_neg,
        warnings: Vec::new(),
    })
}
