//! End-to-end experiment driver: data, built-in cohort, contrastive views,
//! predictions, report.

mod analysis;
mod sweep;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::*;
pub use sweep::*;

use crate::augment::{self, derive_seed, AugmentError, AugmentPolicy};
use crate::data_io::{self, DataError, PredictionRecord, View};
use crate::image_ops::{self, ImageError};
use crate::model::{self, ModelConfig, ModelError, TrainedModel};
use crate::plots;
use crate::report::CorrelationReport;
use crate::synth::{Sample, SyntheticSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("need at least 3 models with complete predictions, got {0}")]
    InsufficientCohort(usize),
    #[error("no predictions for view `{0}`")]
    MissingView(View),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::InsufficientCohort(_)
            | HarnessError::Augment(AugmentError::InvalidPolicy(_))
            | HarnessError::Model(ModelError::InvalidConfig(_)) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// `sample_id,path,label` CSV manifests.
    Manifests { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub policy: AugmentPolicy,
    #[serde(default = "one")]
    pub views_per_sample: u32,
    pub data: DataSource,
    /// Built-in models, trained on the train split.
    pub cohort: Vec<ModelConfig>,
    /// Prediction files from external models, already covering the
    /// `train_orig`, `train_contre` and `test_orig` views.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub external_predictions: Vec<PathBuf>,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    /// Also predict on transformed test images.
    #[serde(default = "yes")]
    pub test_contre: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Not recorded in reports, so moving the output leaves them unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepSpec {
    Grid { n: Vec<usize>, m: Vec<f64> },
    SingleOps,
    Pairs,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

/// Ten built-in models spanning capacity, training length and label noise.
pub fn default_cohort(seed: u64) -> Vec<ModelConfig> {
    let specs: [(&[usize], usize, f64); 10] = [
        (&[], 2, 0.0),
        (&[], 20, 0.0),
        (&[8], 20, 0.0),
        (&[8], 20, 0.2),
        (&[32], 2, 0.0),
        (&[32], 20, 0.0),
        (&[32], 20, 0.2),
        (&[128], 2, 0.0),
        (&[128], 20, 0.0),
        (&[128], 20, 0.2),
    ];
    specs
        .iter()
        .map(|&(hidden, epochs, noise)| {
            let arch = hidden.first().map_or("linear".to_string(), |w| format!("mlp{w}"));
            let id = format!("{arch}_e{epochs}_n{}", (noise * 100.0).round() as u32);
            let mut config = ModelConfig::new(&id, hidden.to_vec(), epochs, derive_seed(seed, &id, 0));
            config.label_noise = noise;
            config
        })
        .collect()
}

impl ExperimentConfig {
    /// The built-in synthetic task: 300 train and 300 test shapes, the
    /// default cohort and policy, everything seeded from `seed`.
    pub fn builtin(seed: u64) -> Self {
        Self {
            policy: AugmentPolicy {
                master_seed: seed,
                ..AugmentPolicy::default()
            },
            views_per_sample: 1,
            data: DataSource::Synthetic(SyntheticSpec::new(300, 300, seed)),
            cohort: default_cohort(seed),
            external_predictions: Vec::new(),
            analysis: AnalysisOptions::default(),
            test_contre: true,
            sweep: None,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.policy.validate()?;
        if self.views_per_sample == 0 {
            return Err(HarnessError::Config("views_per_sample must be at least 1".into()));
        }
        if self.analysis.reduce_dim == 0 {
            return Err(HarnessError::Config("reduce_dim must be positive".into()));
        }
        if self.external_predictions.is_empty() && self.cohort.len() < MIN_COHORT {
            return Err(HarnessError::InsufficientCohort(self.cohort.len()));
        }
        if let Some(SweepSpec::Grid { n, m }) = &self.sweep {
            if n.is_empty() || m.is_empty() {
                return Err(HarnessError::Config("sweep grid needs at least one N and one M".into()));
            }
        }
        let mut ids = BTreeSet::new();
        for m in &self.cohort {
            m.validate()?;
            if !ids.insert(&m.model_id) {
                return Err(HarnessError::Config(format!("duplicate model id `{}`", m.model_id)));
            }
        }
        Ok(())
    }
}

fn load_split(path: &Path) -> Result<Vec<Sample>, HarnessError> {
    data_io::read_dataset_manifest(path)?
        .into_par_iter()
        .map(|row| {
            Ok(Sample {
                image: image_ops::read_png(&row.path)?,
                id: row.sample_id,
                label: row.label,
            })
        })
        .collect()
}

pub fn load_data(source: &DataSource) -> Result<(Vec<Sample>, Vec<Sample>), HarnessError> {
    match source {
        DataSource::Synthetic(spec) => Ok(spec.generate()),
        DataSource::Manifests { train, test } => Ok((load_split(train)?, load_split(test)?)),
    }
}

/// A trained cohort plus its predictions on the original images. Sweeps reuse
/// one of these across policies.
pub struct Cohort {
    pub models: Vec<TrainedModel>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub original_records: Vec<PredictionRecord>,
}

/// A sample image tagged with the view it belongs to.
struct ViewImage<'a> {
    sample_id: &'a str,
    view_index: u32,
    label: u32,
    image: std::borrow::Cow<'a, image_ops::Image>,
}

fn predict_views(
    models: &[TrainedModel],
    view: View,
    images: &[ViewImage<'_>],
    with_features: bool,
) -> Result<Vec<PredictionRecord>, HarnessError> {
    let per_image: Vec<Vec<PredictionRecord>> = images
        .par_iter()
        .map(|vi| {
            models
                .iter()
                .map(|m| {
                    let (feature, p) = m.forward(&vi.image)?;
                    Ok(PredictionRecord {
                        model_id: m.config.model_id.clone(),
                        view,
                        sample_id: vi.sample_id.to_string(),
                        view_index: vi.view_index,
                        label: vi.label,
                        pred: p.pred,
                        logits: Some(p.logits.iter().map(|&v| v as f64).collect()),
                        feature: with_features.then_some(feature),
                    })
                })
                .collect::<Result<_, HarnessError>>()
        })
        .collect::<Result<_, _>>()?;
    // model-major order
    let mut out = Vec::with_capacity(per_image.len() * models.len());
    for k in 0..models.len() {
        out.extend(per_image.iter().map(|row| row[k].clone()));
    }
    Ok(out)
}

fn originals(samples: &[Sample]) -> Vec<ViewImage<'_>> {
    samples
        .iter()
        .map(|s| ViewImage {
            sample_id: &s.id,
            view_index: 0,
            label: s.label,
            image: std::borrow::Cow::Borrowed(&s.image),
        })
        .collect()
}

fn contrastive<'a>(
    policy: &AugmentPolicy,
    views_per_sample: u32,
    samples: &'a [Sample],
) -> Result<Vec<ViewImage<'a>>, HarnessError> {
    samples
        .par_iter()
        .flat_map_iter(|s| {
            (1..=views_per_sample).map(move |k| {
                let (_, image) = augment::contrastive_view(policy, &s.id, k, &s.image)?;
                Ok(ViewImage {
                    sample_id: &s.id,
                    view_index: k,
                    label: s.label,
                    image: std::borrow::Cow::Owned(image),
                })
            })
        })
        .collect()
}

impl Cohort {
    /// Loads data, trains every model and predicts the original views.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let (train, test) = load_data(&config.data)?;
        if train.is_empty() || test.is_empty() {
            return Err(HarnessError::Config("train and test splits must be non-empty".into()));
        }
        let images: Vec<_> = train.iter().map(|s| s.image.clone()).collect();
        let labels: Vec<u32> = train.iter().map(|s| s.label).collect();
        let n_classes = train.iter().chain(&test).map(|s| s.label).max().unwrap() as usize + 1;
        let models = config
            .cohort
            .par_iter()
            .map(|c| model::train(c, &images, &labels, n_classes))
            .collect::<Result<Vec<_>, _>>()?;
        let with_features = config.analysis.fisher;
        let mut original_records = predict_views(&models, View::TrainOrig, &originals(&train), with_features)?;
        original_records.extend(predict_views(&models, View::TestOrig, &originals(&test), false)?);
        Ok(Self {
            models,
            train,
            test,
            original_records,
        })
    }

    /// Predictions on freshly rendered contrastive views of the training set
    /// and, optionally, of the test set.
    pub fn contrastive_records(
        &self,
        policy: &AugmentPolicy,
        views_per_sample: u32,
        test_contre: bool,
        with_features: bool,
    ) -> Result<Vec<PredictionRecord>, HarnessError> {
        policy.validate()?;
        let views = contrastive(policy, views_per_sample, &self.train)?;
        let mut records = predict_views(&self.models, View::TrainContre, &views, with_features)?;
        drop(views);
        if test_contre {
            let views = contrastive(policy, views_per_sample, &self.test)?;
            records.extend(predict_views(&self.models, View::TestContre, &views, false)?);
        }
        Ok(records)
    }
}

pub struct PipelineOutput {
    pub report: CorrelationReport,
    pub records: Vec<PredictionRecord>,
}

pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutput, HarnessError> {
    let mut records = Vec::new();
    if config.cohort.is_empty() {
        config.validate()?;
    } else {
        let cohort = Cohort::prepare(config)?;
        records = cohort.original_records.clone();
        records.extend(cohort.contrastive_records(
            &config.policy,
            config.views_per_sample,
            config.test_contre,
            config.analysis.fisher,
        )?);
    }
    let builtin: BTreeSet<String> = config.cohort.iter().map(|m| m.model_id.clone()).collect();
    for path in &config.external_predictions {
        for record in data_io::read_predictions(path)? {
            let record = record?;
            if builtin.contains(&record.model_id) {
                return Err(HarnessError::Config(format!(
                    "{}: model id `{}` clashes with a built-in model",
                    path.display(),
                    record.model_id
                )));
            }
            records.push(record);
        }
    }
    let provenance = ExperimentConfig {
        output_dir: None,
        ..config.clone()
    };
    let experiment = serde_json::to_value(&provenance).map_err(|e| HarnessError::Config(e.to_string()))?;
    let report = analyze(
        &records,
        &config.analysis,
        config.analysis.report_config(Some(experiment), Vec::new()),
    )?;
    Ok(PipelineOutput { report, records })
}

pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const PLOTS_DIR: &str = "plots";

/// Writes `report.json`, `predictions.jsonl` and `plots/` under `out_dir`.
pub fn write_outputs(output: &PipelineOutput, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |source, path: &Path| {
        HarnessError::Data(DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    fs::create_dir_all(out_dir).map_err(|e| io(e, out_dir))?;
    let report = out_dir.join(REPORT_FILE);
    data_io::write_report(&output.report, &report)?;
    let predictions = out_dir.join(PREDICTIONS_FILE);
    data_io::write_predictions(&output.records, &predictions)?;
    let plot_dir = out_dir.join(PLOTS_DIR);
    let mut written = vec![report, predictions];
    written.extend(plots::emit_plots(&output.report, &plot_dir).map_err(|e| io(e, &plot_dir))?);
    Ok(written)
}
