use rayon::prelude::*;

use crate::degrade::{DegradeKind, DegradeSpec, NoiseSchedule};
use crate::error::{ensure_dim, Error, Result};
use crate::features::BuiltinExtractor;
use crate::flow::FlowModel;
use crate::image::Image;
use crate::metrics::{latent_distance, mean_latent};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub kind: DegradeKind,
    pub severities: Vec<f64>,
    pub rl2_values: Vec<f64>,
    /// `rl2_values` strictly increasing
    pub monotone: bool,
    pub spearman: f64,
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = avg;
        }
        i = j;
    }
    out
}

/// Spearman rank correlation with tie-averaged ranks. Constant input gives 0.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 1.0;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

fn is_untrained(model: &FlowModel) -> bool {
    let identity_standardizer =
        model.shift().iter().all(|&v| v == 0.0) && model.scale().iter().all(|&v| v == 1.0);
    let zero_outputs = model.layers().iter().all(|l| {
        [l.scale_net(), l.translate_net()].iter().all(|net| {
            net.weights()
                .last()
                .is_some_and(|w| w.iter().all(|&v| v == 0.0))
                && net
                    .biases()
                    .last()
                    .is_some_and(|b| b.iter().all(|&v| v == 0.0))
        })
    });
    identity_standardizer && zero_outputs
}

/// RL2 of a degraded corpus against its clean counterpart, per severity.
///
/// The corpus is split into disjoint halves: the first half is the clean
/// reference and the second half is degraded at each severity. Severity 0
/// therefore measures real-vs-real RL2 between the two clean halves.
pub fn monotonicity_sweep(
    clean: &[Image],
    kind: DegradeKind,
    severities: &[f64],
    model: &FlowModel,
    extractor: &BuiltinExtractor,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<SweepResult> {
    if severities.first() != Some(&0.0) {
        return Err(Error::invalid("severities must start at 0"));
    }
    if severities.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("severities must be strictly increasing"));
    }
    if clean.len() < 2 {
        return Err(Error::invalid("a sweep needs at least two clean images"));
    }
    ensure_dim(model.dim(), extractor.output_dim())?;
    if is_untrained(model) {
        return Err(Error::invalid(
            "model is untrained (identity standardizer and zero subnets)",
        ));
    }
    for &s in severities {
        DegradeSpec::new(kind, s, seed).validate(schedule)?;
    }

    let half = clean.len() / 2;
    let (reference, held_out) = clean.split_at(half);
    let reference_latent = mean_latent(&extractor.extract_features(reference, "clean-a")?, model)?;

    let mut rl2_values = Vec::with_capacity(severities.len());
    for &severity in severities {
        let spec = DegradeSpec::new(kind, severity, seed);
        let degraded: Vec<Image> = held_out
            .par_iter()
            .enumerate()
            .map(|(i, img)| spec.apply(img, schedule, (half + i) as u64))
            .collect::<Result<_>>()?;
        let features = extractor.extract_features(&degraded, &format!("{kind}@{severity}"))?;
        let latent = mean_latent(&features, model)?;
        rl2_values.push(latent_distance(&reference_latent, &latent)?);
    }

    let monotone = rl2_values.windows(2).all(|w| w[1] > w[0]);
    let spearman = if rl2_values.len() < 2 {
        1.0
    } else {
        spearman(severities, &rl2_values)
    };
    Ok(SweepResult {
        kind,
        severities: severities.to_vec(),
        rl2_values,
        monotone,
        spearman,
    })
}
