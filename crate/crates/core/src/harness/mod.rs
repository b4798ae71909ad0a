//! Experimental protocols: severity sweeps, likelihood-based patch filtering
//! and sample-size stability of RL2.

mod filter;
mod report;
mod roc;
mod stability;
mod sweep;

pub use filter::{filter_experiment, score_filter};
pub use report::{roc_csv, stability_csv, sweep_csv, sweep_summary};
pub use roc::{auc_pair_count, auc_rank, roc_auc, RocResult, PAIR_COUNT_LIMIT};
pub use stability::{stability_curve, StabilityCurve};
pub use sweep::{monotonicity_sweep, spearman, SweepResult};
