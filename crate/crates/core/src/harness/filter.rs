use std::collections::HashSet;

use crate::error::Result;
use crate::features::FeatureSet;
use crate::flow::FlowModel;
use crate::harness::roc::{roc_auc, RocResult};
use crate::metrics::per_sample_nll;
use crate::train::{train, TrainConfig};

/// ROC of per-sample NLL with artifacts as positives and clean patches as negatives.
pub fn score_filter(
    model: &FlowModel,
    clean_test: &FeatureSet,
    artifact_test: &FeatureSet,
) -> Result<RocResult> {
    let mut scores = per_sample_nll(artifact_test, model)?;
    let mut labels = vec![1u8; scores.len()];
    scores.extend(per_sample_nll(clean_test, model)?);
    labels.resize(scores.len(), 0);
    roc_auc(&scores, &labels)
}

fn row_key(row: &[f32]) -> Vec<u32> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Train on clean patches, then separate artifact patches from held-out clean ones by NLL.
///
/// Test rows that also occur verbatim in the training set are reported as a
/// warning on the result.
pub fn filter_experiment(
    clean_train: &FeatureSet,
    clean_test: &FeatureSet,
    artifact_test: &FeatureSet,
    config: &TrainConfig,
) -> Result<(FlowModel, RocResult)> {
    let (model, _) = train(clean_train, config)?;
    let mut roc = score_filter(&model, clean_test, artifact_test)?;

    let seen: HashSet<Vec<u32>> = clean_train.rows().map(row_key).collect();
    for (name, set) in [("clean test", clean_test), ("artifact test", artifact_test)] {
        let dup = set.rows().filter(|r| seen.contains(&row_key(r))).count();
        if dup > 0 {
            roc.warnings.push(format!(
                "{dup} of {} {name} rows also appear in the training set",
                set.len()
            ));
        }
    }
    Ok((model, roc))
}
