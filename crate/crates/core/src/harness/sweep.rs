//! Policy sweeps over a fixed, already-trained cohort.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{analyze, AnalysisOptions, Cohort, ExperimentConfig, HarnessError, SweepSpec, TEST_VS_CONTRE};
use crate::augment::{AugmentPolicy, Selection};
use crate::data_io::{DataError, View};
use crate::image_ops::OpName;
use crate::report::CorrelationStatus;

/// Outcome of one policy in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub policy: String,
    pub n_ops: usize,
    pub magnitude: f64,
    pub ops: Vec<OpName>,
    /// Rank correlation between test accuracy and contrastive accuracy.
    pub spearman: Option<f64>,
    pub status: CorrelationStatus,
    pub mean_contre_accuracy: f64,
}

impl Cohort {
    /// Evaluates one policy, skipping features and the transformed test set.
    pub fn evaluate_policy(&self, policy: &AugmentPolicy, views_per_sample: u32) -> Result<SweepCell, HarnessError> {
        let mut records = self.original_records.clone();
        records.extend(self.contrastive_records(policy, views_per_sample, false, false)?);
        let options = AnalysisOptions {
            fisher: false,
            ..AnalysisOptions::default()
        };
        let report = analyze(&records, &options, options.report_config(None, Vec::new()))?;
        let corr = report.correlation(TEST_VS_CONTRE).expect("always computed");
        let contre = report.table(View::TrainContre).expect("required view");
        let mean = contre.rows.iter().map(|r| r.accuracy).sum::<f64>() / contre.rows.len() as f64;
        Ok(SweepCell {
            policy: policy.tag(),
            n_ops: policy.n_ops,
            magnitude: policy.magnitude,
            ops: match policy.selection {
                Selection::Sequence => policy.op_pool.clone(),
                Selection::Random => Vec::new(),
            },
            spearman: corr.value,
            status: corr.status,
            mean_contre_accuracy: mean,
        })
    }
}

/// Every `(n, m)` combination, `n` outer.
pub fn sweep_nm(
    cohort: &Cohort,
    base: &AugmentPolicy,
    ns: &[usize],
    ms: &[f64],
    views_per_sample: u32,
) -> Result<Vec<SweepCell>, HarnessError> {
    let mut cells = Vec::with_capacity(ns.len() * ms.len());
    for &n in ns {
        for &m in ms {
            let policy = AugmentPolicy {
                n_ops: n,
                magnitude: m,
                selection: Selection::Random,
                ..base.clone()
            };
            cells.push(cohort.evaluate_policy(&policy, views_per_sample)?);
        }
    }
    Ok(cells)
}

/// One cell per operator in the base pool, each applied alone.
pub fn sweep_single_ops(cohort: &Cohort, base: &AugmentPolicy, views_per_sample: u32) -> Result<Vec<SweepCell>, HarnessError> {
    base.op_pool
        .iter()
        .map(|&op| {
            let policy = AugmentPolicy::fixed_sequence(vec![op], base.magnitude, base.master_seed)?;
            cohort.evaluate_policy(&policy, views_per_sample)
        })
        .collect()
}

/// Ordered pairs `(a, b)` from the base pool, row-major. The diagonal holds
/// the single-operator result.
pub fn sweep_pairs(cohort: &Cohort, base: &AugmentPolicy, views_per_sample: u32) -> Result<Vec<SweepCell>, HarnessError> {
    let mut cells = Vec::new();
    for &a in &base.op_pool {
        for &b in &base.op_pool {
            let ops = if a == b { vec![a] } else { vec![a, b] };
            let policy = AugmentPolicy::fixed_sequence(ops, base.magnitude, base.master_seed)?;
            cells.push(cohort.evaluate_policy(&policy, views_per_sample)?);
        }
    }
    Ok(cells)
}

/// Runs the sweep named in the config; without one, the single cell of the
/// config's own policy.
pub fn run_sweep(cohort: &Cohort, config: &ExperimentConfig) -> Result<Vec<SweepCell>, HarnessError> {
    let views = config.views_per_sample;
    match &config.sweep {
        Some(SweepSpec::Grid { n, m }) => sweep_nm(cohort, &config.policy, n, m, views),
        Some(SweepSpec::SingleOps) => sweep_single_ops(cohort, &config.policy, views),
        Some(SweepSpec::Pairs) => sweep_pairs(cohort, &config.policy, views),
        None => Ok(vec![cohort.evaluate_policy(&config.policy, views)?]),
    }
}

pub const SWEEP_HEADER: &str = "policy,n_ops,magnitude,ops,spearman,status,mean_contre_accuracy";

fn status_str(status: CorrelationStatus) -> &'static str {
    match status {
        CorrelationStatus::Ok => "ok",
        CorrelationStatus::Degenerate => "degenerate",
        CorrelationStatus::ControlDegenerate => "control_degenerate",
    }
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for c in cells {
        let ops: Vec<&str> = c.ops.iter().map(|o| o.as_str()).collect();
        let value = c.spearman.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.policy,
            c.n_ops,
            c.magnitude,
            ops.join("+"),
            value,
            status_str(c.status),
            c.mean_contre_accuracy
        )
        .unwrap();
    }
    out
}

pub fn write_sweep_csv(cells: &[SweepCell], path: &Path) -> Result<(), HarnessError> {
    fs::write(path, sweep_csv(cells)).map_err(|source| {
        HarnessError::Data(DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}
