//! Correlation report: the JSON document every analysis path produces.

use serde::{Deserialize, Serialize};

use crate::data_io::{ScoreTable, View};
use crate::stats::WithinWeighting;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub schema_version: u32,
    pub config: ReportConfig,
    pub scores: ScoreSection,
    pub correlations: Vec<CorrelationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fisher: Option<FisherSection>,
    pub notes: Vec<Note>,
}

/// Provenance of the numbers in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub tool: String,
    pub within_weighting: WithinWeighting,
    pub reduce_dim: usize,
    pub excluded_operators: Vec<String>,
    /// Full experiment config when the report came from the pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<serde_json::Value>,
    /// Prediction files when the report came from existing files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSection {
    pub tables: Vec<ScoreTable>,
    pub consistency: Vec<ConsistencyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub model_id: String,
    pub train_accuracy: f64,
    pub contre_accuracy: f64,
    pub consistency: f64,
}

/// A named per-model score vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRef {
    /// `accuracy`, `fisher` or `gap`/`consistency`.
    pub quantity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<View>,
    pub model_ids: Vec<String>,
    pub values: Vec<f64>,
}

impl VectorRef {
    pub fn label(&self) -> String {
        match self.view {
            Some(view) => format!("{}:{}", self.quantity, view.as_str()),
            None => self.quantity.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationStatus {
    Ok,
    /// A vector had zero rank variance or too few models.
    Degenerate,
    /// The control variable was perfectly rank-correlated with x or y.
    ControlDegenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub name: String,
    pub x: VectorRef,
    pub y: VectorRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<VectorRef>,
    pub value: Option<f64>,
    pub status: CorrelationStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherRow {
    pub model_id: String,
    pub view: View,
    pub feature_dim: usize,
    /// Dimension after truncated SVD; absent when no reduction was needed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained_variance: Option<f64>,
    pub ratio: Option<f64>,
    pub ridge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherSection {
    pub rows: Vec<FisherRow>,
    pub correlations: Vec<CorrelationEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub kind: String,
    pub message: String,
}

impl Note {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl CorrelationReport {
    pub fn correlation(&self, name: &str) -> Option<&CorrelationEntry> {
        self.all_correlations().find(|c| c.name == name)
    }

    /// Top-level correlations followed by the Fisher ones.
    pub fn all_correlations(&self) -> impl Iterator<Item = &CorrelationEntry> {
        self.correlations
            .iter()
            .chain(self.fisher.iter().flat_map(|f| f.correlations.iter()))
    }

    pub fn has_degenerate(&self) -> bool {
        self.all_correlations().any(|c| c.status != CorrelationStatus::Ok)
    }

    pub fn table(&self, view: View) -> Option<&ScoreTable> {
        self.scores.tables.iter().find(|t| t.view == view)
    }
}
