//! Prediction records in, correlation report out.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::data_io::{score, PredictionRecord, ScoreTable, View};
use crate::image_ops::EXCLUDED_OPERATORS;
use crate::report::{
    ConsistencyRow, CorrelationEntry, CorrelationReport, CorrelationStatus, FisherRow, FisherSection, Note,
    ReportConfig, ScoreSection, VectorRef, SCHEMA_VERSION,
};
use crate::stats::{self, StatsError, WithinWeighting};

pub const DEFAULT_REDUCE_DIM: usize = 64;
pub const MIN_COHORT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Compute Fisher ratios when features are present.
    #[serde(default = "yes")]
    pub fisher: bool,
    #[serde(default = "default_reduce_dim")]
    pub reduce_dim: usize,
    #[serde(default)]
    pub within_weighting: WithinWeighting,
}

fn yes() -> bool {
    true
}

fn default_reduce_dim() -> usize {
    DEFAULT_REDUCE_DIM
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            fisher: true,
            reduce_dim: DEFAULT_REDUCE_DIM,
            within_weighting: WithinWeighting::Standard,
        }
    }
}

impl AnalysisOptions {
    pub fn report_config(&self, experiment: Option<serde_json::Value>, inputs: Vec<String>) -> ReportConfig {
        ReportConfig {
            tool: format!("contre {}", env!("CARGO_PKG_VERSION")),
            within_weighting: self.within_weighting,
            reduce_dim: self.reduce_dim,
            excluded_operators: EXCLUDED_OPERATORS.iter().map(|s| s.to_string()).collect(),
            experiment,
            inputs,
        }
    }
}

pub const TEST_VS_CONTRE: &str = "test_vs_contre";
pub const TEST_VS_TRAIN: &str = "test_vs_train";
pub const TEST_VS_CONTRE_GIVEN_TRAIN: &str = "test_vs_contre_given_train";
pub const GAP_VS_CONSISTENCY: &str = "gap_vs_consistency";
pub const CONTRE_TRAIN_VS_CONTRE_TEST: &str = "contre_train_vs_contre_test";
pub const TEST_VS_FISHER_CONTRE: &str = "test_vs_fisher_contre";
pub const TEST_VS_FISHER_ORIG: &str = "test_vs_fisher_orig";

fn vector(quantity: &str, view: Option<View>, models: &[String], values: Vec<f64>) -> VectorRef {
    VectorRef {
        quantity: quantity.to_string(),
        view,
        model_ids: models.to_vec(),
        values,
    }
}

fn entry(name: &str, x: VectorRef, y: VectorRef, control: Option<VectorRef>) -> CorrelationEntry {
    let result = match &control {
        None => stats::spearman(&x.values, &y.values),
        Some(z) => stats::partial_spearman(&x.values, &y.values, &z.values),
    };
    let (value, status) = match result {
        Ok(v) => (Some(v), CorrelationStatus::Ok),
        Err(StatsError::ControlDegenerate(_)) => (None, CorrelationStatus::ControlDegenerate),
        Err(_) => (None, CorrelationStatus::Degenerate),
    };
    CorrelationEntry {
        name: name.to_string(),
        x,
        y,
        control,
        value,
        status,
    }
}

fn accuracies(table: &ScoreTable, models: &[String]) -> Vec<f64> {
    models.iter().map(|m| table.accuracy_of(m).unwrap_or(f64::NAN)).collect()
}

/// Builds the full report from prediction records.
///
/// Requires `train_orig`, `train_contre` and `test_orig`; `test_contre` is
/// optional. Only models present in all three required views are compared.
pub fn analyze(
    records: &[PredictionRecord],
    options: &AnalysisOptions,
    config: ReportConfig,
) -> Result<CorrelationReport, HarnessError> {
    let tables = score(records)?;
    let table = |view: View| tables.iter().find(|t| t.view == view);
    let required = [View::TrainOrig, View::TrainContre, View::TestOrig];
    for view in required {
        if table(view).is_none() {
            return Err(HarnessError::MissingView(view));
        }
    }
    let (train, contre, test) = (
        table(View::TrainOrig).unwrap(),
        table(View::TrainContre).unwrap(),
        table(View::TestOrig).unwrap(),
    );
    let ids = |t: &ScoreTable| t.rows.iter().map(|r| r.model_id.clone()).collect::<BTreeSet<_>>();
    let all: BTreeSet<String> = tables.iter().flat_map(ids).collect();
    let models: Vec<String> = all
        .iter()
        .filter(|m| [train, contre, test].iter().all(|t| t.accuracy_of(m).is_some()))
        .cloned()
        .collect();
    if models.len() < MIN_COHORT {
        return Err(HarnessError::InsufficientCohort(models.len()));
    }

    let mut notes = vec![Note::new(
        "excluded_operator",
        "Cutout is not part of the operator table; contrastive views never occlude",
    )];
    let dropped: Vec<&String> = all.iter().filter(|m| !models.contains(m)).collect();
    if !dropped.is_empty() {
        notes.push(Note::new(
            "dropped_models",
            format!(
                "models missing a required view were left out: {}",
                dropped.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            ),
        ));
    }

    let train_acc = accuracies(train, &models);
    let contre_acc = accuracies(contre, &models);
    let test_acc = accuracies(test, &models);
    let consistency: Vec<ConsistencyRow> = models
        .iter()
        .enumerate()
        .map(|(i, m)| ConsistencyRow {
            model_id: m.clone(),
            train_accuracy: train_acc[i],
            contre_accuracy: contre_acc[i],
            consistency: stats::consistency(train_acc[i], contre_acc[i]),
        })
        .collect();

    let acc = |view, values: &Vec<f64>| vector("accuracy", Some(view), &models, values.clone());
    let gap: Vec<f64> = train_acc.iter().zip(&test_acc).map(|(a, b)| a - b).collect();
    let mut correlations = vec![
        entry(TEST_VS_CONTRE, acc(View::TrainContre, &contre_acc), acc(View::TestOrig, &test_acc), None),
        entry(TEST_VS_TRAIN, acc(View::TrainOrig, &train_acc), acc(View::TestOrig, &test_acc), None),
        entry(
            TEST_VS_CONTRE_GIVEN_TRAIN,
            acc(View::TrainContre, &contre_acc),
            acc(View::TestOrig, &test_acc),
            Some(acc(View::TrainOrig, &train_acc)),
        ),
        entry(
            GAP_VS_CONSISTENCY,
            vector("consistency", None, &models, consistency.iter().map(|c| c.consistency).collect()),
            vector("generalization_gap", None, &models, gap),
            None,
        ),
    ];
    if let Some(test_contre) = table(View::TestContre) {
        let subset: Vec<String> = models
            .iter()
            .filter(|m| test_contre.accuracy_of(m).is_some())
            .cloned()
            .collect();
        correlations.push(entry(
            CONTRE_TRAIN_VS_CONTRE_TEST,
            vector("accuracy", Some(View::TrainContre), &subset, accuracies(contre, &subset)),
            vector("accuracy", Some(View::TestContre), &subset, accuracies(test_contre, &subset)),
            None,
        ));
    }

    let fisher = if options.fisher {
        fisher_section(records, &models, test, options)
    } else {
        None
    };
    if fisher.is_some() {
        notes.push(Note::new(
            "within_weighting",
            match options.within_weighting {
                WithinWeighting::Standard => {
                    "within-class scatter sums unweighted class blocks, so S_b + S_w equals the total scatter"
                }
                WithinWeighting::PaperLiteral => {
                    "within-class scatter multiplies every class block by its class size"
                }
            },
        ));
        for row in fisher.iter().flat_map(|f| &f.rows) {
            if let Some(err) = &row.error {
                notes.push(Note::new(
                    "fisher_failed",
                    format!("{} on {}: {err}", row.model_id, row.view),
                ));
            } else if row.ridge > 0.0 {
                notes.push(Note::new(
                    "fisher_ridge",
                    format!("{} on {}: within-class scatter regularized with ridge {}", row.model_id, row.view, row.ridge),
                ));
            }
        }
    }

    let mut report = CorrelationReport {
        schema_version: SCHEMA_VERSION,
        config,
        scores: ScoreSection { tables, consistency },
        correlations,
        fisher,
        notes,
    };
    let degenerate: Vec<Note> = report
        .all_correlations()
        .filter(|c| c.status != CorrelationStatus::Ok)
        .map(|c| {
            Note::new(
                "degenerate_correlation",
                format!("{} is undefined ({:?})", c.name, c.status),
            )
        })
        .collect();
    report.notes.extend(degenerate);
    Ok(report)
}

fn fisher_section(
    records: &[PredictionRecord],
    models: &[String],
    test: &ScoreTable,
    options: &AnalysisOptions,
) -> Option<FisherSection> {
    let mut groups: BTreeMap<(&str, View), Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        if matches!(r.view, View::TrainOrig | View::TrainContre) && r.feature.is_some() {
            groups.entry((&r.model_id, r.view)).or_default().push(r);
        }
    }
    let jobs: Vec<(&String, View)> = models
        .iter()
        .flat_map(|m| [(m, View::TrainOrig), (m, View::TrainContre)])
        .filter(|(m, v)| groups.contains_key(&(m.as_str(), *v)))
        .collect();
    if jobs.is_empty() {
        return None;
    }
    let rows: Vec<FisherRow> = jobs
        .par_iter()
        .map(|(m, v)| fisher_row(m, *v, &groups[&(m.as_str(), *v)], options))
        .collect();

    let ratios = |view: View| -> (Vec<String>, Vec<f64>) {
        rows.iter()
            .filter(|r| r.view == view)
            .filter_map(|r| r.ratio.map(|x| (r.model_id.clone(), x)))
            .unzip()
    };
    let mut correlations = Vec::new();
    for (name, view) in [(TEST_VS_FISHER_CONTRE, View::TrainContre), (TEST_VS_FISHER_ORIG, View::TrainOrig)] {
        let (ids, values) = ratios(view);
        if rows.iter().any(|r| r.view == view) {
            correlations.push(entry(
                name,
                vector("fisher", Some(view), &ids, values),
                vector("accuracy", Some(View::TestOrig), &ids, accuracies(test, &ids)),
                None,
            ));
        }
    }
    Some(FisherSection { rows, correlations })
}

fn fisher_row(model_id: &str, view: View, group: &[&PredictionRecord], options: &AnalysisOptions) -> FisherRow {
    let mut group = group.to_vec();
    group.sort_by(|a, b| (&a.sample_id, a.view_index).cmp(&(&b.sample_id, b.view_index)));
    let feature_dim = group[0].feature_dim().unwrap_or(0);
    let mut row = FisherRow {
        model_id: model_id.to_string(),
        view,
        feature_dim,
        reduced_dim: None,
        retained_variance: None,
        ratio: None,
        ridge: 0.0,
        error: None,
    };
    if let Some(bad) = group.iter().find(|r| r.feature_dim() != Some(feature_dim)) {
        row.error = Some(format!("feature dimension varies (sample {})", bad.sample_id));
        return row;
    }

    // dense class indices in label order
    let classes: BTreeSet<u32> = group.iter().map(|r| r.label).collect();
    let index: BTreeMap<u32, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let labels: Vec<usize> = group.iter().map(|r| index[&r.label]).collect();
    let n = group.len();
    let mut features = DMatrix::from_fn(n, feature_dim, |i, k| group[i].feature.as_ref().unwrap()[k] as f64);

    let mut counts = vec![0usize; classes.len()];
    for &l in &labels {
        counts[l] += 1;
    }
    let min_class = counts.iter().copied().min().unwrap_or(0);
    if feature_dim > min_class {
        let target = options.reduce_dim.min(n).min(feature_dim);
        match stats::svd_reduce(&features, target) {
            Ok(reduction) => {
                row.reduced_dim = Some(target);
                row.retained_variance = Some(reduction.retained_variance);
                features = reduction.projected;
            }
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        }
    }
    match stats::scatter_matrices(&features, &labels, options.within_weighting).and_then(|p| stats::fisher_ratio_auto(&p)) {
        Ok(outcome) => {
            row.ratio = Some(outcome.ratio);
            row.ridge = outcome.ridge;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}
