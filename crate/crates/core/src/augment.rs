//! The contrastive sampling strategy: seeded selection of `N` operators at a
//! shared magnitude `M`, applied in sequence.
//!
//! Every view draws from its own generator, seeded by a 64-bit FNV-1a hash of
//! `master_seed (LE) ‖ sample_id (UTF-8) ‖ view_index (LE u64)`. Outputs
//! therefore depend only on the sample, never on dataset order or on how the
//! work is scheduled.

use std::collections::HashSet;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::{self, DataError, DatasetRow, GenerationRow};
use crate::image_ops::{self, Image, ImageError, OpName, Sign, MAX_MAGNITUDE};

pub const DEFAULT_N_OPS: usize = 2;
pub const DEFAULT_MAGNITUDE: f64 = 20.0;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("view index must be at least 1 for a contrastive view")]
    OriginalViewIndex,
    #[error("duplicate sample id `{0}` in dataset")]
    DuplicateSample(String),
    #[error("malformed ops field `{0}`")]
    MalformedOps(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// How operators are chosen for each view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// `n_ops` uniform draws with replacement from the pool.
    #[default]
    Random,
    /// The pool itself, in order; `n_ops` equals its length.
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub n_ops: usize,
    pub magnitude: f64,
    pub op_pool: Vec<OpName>,
    pub master_seed: u64,
    #[serde(default)]
    pub selection: Selection,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            n_ops: DEFAULT_N_OPS,
            magnitude: DEFAULT_MAGNITUDE,
            op_pool: OpName::ALL.to_vec(),
            master_seed: 0,
            selection: Selection::Random,
        }
    }
}

impl AugmentPolicy {
    pub fn new(n_ops: usize, magnitude: f64, op_pool: Vec<OpName>, master_seed: u64) -> Result<Self, AugmentError> {
        let policy = Self {
            n_ops,
            magnitude,
            op_pool,
            master_seed,
            selection: Selection::Random,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Applies exactly `ops`, in order, to every view. Signs are still drawn
    /// per view for signed operators.
    pub fn fixed_sequence(ops: Vec<OpName>, magnitude: f64, master_seed: u64) -> Result<Self, AugmentError> {
        let policy = Self {
            n_ops: ops.len(),
            magnitude,
            op_pool: ops,
            master_seed,
            selection: Selection::Sequence,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let invalid = |msg: String| Err(AugmentError::InvalidPolicy(msg));
        if self.n_ops == 0 {
            return invalid("n_ops must be at least 1".into());
        }
        if !(0.0..=MAX_MAGNITUDE).contains(&self.magnitude) {
            return invalid(format!("magnitude {} outside [0, 30]", self.magnitude));
        }
        if self.op_pool.is_empty() {
            return invalid("operator pool is empty".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.op_pool.iter().find(|op| !seen.insert(**op)) {
            return invalid(format!("operator {dup} listed twice"));
        }
        if self.selection == Selection::Sequence && self.n_ops != self.op_pool.len() {
            return invalid("sequence policies apply every pool entry".into());
        }
        Ok(())
    }

    /// Short tag in the `RA_N{n}_M{m}` style.
    pub fn tag(&self) -> String {
        match self.selection {
            Selection::Random => format!("RA_N{}_M{}", self.n_ops, self.magnitude),
            Selection::Sequence => {
                let names: Vec<_> = self.op_pool.iter().map(|o| o.as_str()).collect();
                format!("SEQ_{}_M{}", names.join("+"), self.magnitude)
            }
        }
    }
}

/// One realization of a sample: the original (`view_index == 0`, no ops) or
/// a seeded transformation of it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ViewDescriptor {
    pub sample_id: String,
    pub view_index: u32,
    pub chosen_ops: Vec<(OpName, Sign)>,
    pub derived_seed: u64,
}

impl ViewDescriptor {
    pub fn original(sample_id: &str, master_seed: u64) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            view_index: 0,
            chosen_ops: Vec::new(),
            derived_seed: derive_seed(master_seed, sample_id, 0),
        }
    }

    /// `name:+1;name:-1` encoding used in generation manifests.
    pub fn ops_field(&self) -> String {
        self.chosen_ops
            .iter()
            .map(|(op, sign)| format!("{op}:{}1", sign.as_char()))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Parses the `ops` column of a generation manifest.
pub fn parse_ops_field(field: &str) -> Result<Vec<(OpName, Sign)>, AugmentError> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|item| {
            let (name, sign) = item
                .split_once(':')
                .ok_or_else(|| AugmentError::MalformedOps(field.to_string()))?;
            let sign = match sign {
                "+1" => Sign::Plus,
                "-1" => Sign::Minus,
                _ => return Err(AugmentError::MalformedOps(field.to_string())),
            };
            Ok((name.parse()?, sign))
        })
        .collect()
}

pub fn derive_seed(master_seed: u64, sample_id: &str, view_index: u32) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(&master_seed.to_le_bytes());
    hasher.write(sample_id.as_bytes());
    hasher.write(&(view_index as u64).to_le_bytes());
    hasher.finish()
}

pub fn sample_view(policy: &AugmentPolicy, sample_id: &str, view_index: u32) -> Result<ViewDescriptor, AugmentError> {
    if view_index == 0 {
        return Err(AugmentError::OriginalViewIndex);
    }
    let derived_seed = derive_seed(policy.master_seed, sample_id, view_index);
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed);
    let draw_sign = |op: OpName, rng: &mut ChaCha8Rng| {
        if op.standard().signed && rng.random_bool(0.5) {
            Sign::Minus
        } else {
            Sign::Plus
        }
    };
    let chosen_ops = match policy.selection {
        Selection::Random => (0..policy.n_ops)
            .map(|_| {
                let op = policy.op_pool[rng.random_range(0..policy.op_pool.len())];
                (op, draw_sign(op, &mut rng))
            })
            .collect(),
        Selection::Sequence => policy.op_pool.iter().map(|&op| (op, draw_sign(op, &mut rng))).collect(),
    };
    Ok(ViewDescriptor {
        sample_id: sample_id.to_string(),
        view_index,
        chosen_ops,
        derived_seed,
    })
}

/// Applies the descriptor's operators in order at the policy magnitude.
pub fn render_view(magnitude: f64, descriptor: &ViewDescriptor, image: &Image) -> Result<Image, ImageError> {
    let mut current = image.clone();
    for &(op, sign) in &descriptor.chosen_ops {
        current = image_ops::apply_op(&op.standard(), magnitude, sign, &current)?;
    }
    Ok(current)
}

/// Samples and renders one contrastive view.
pub fn contrastive_view(
    policy: &AugmentPolicy,
    sample_id: &str,
    view_index: u32,
    image: &Image,
) -> Result<(ViewDescriptor, Image), AugmentError> {
    let descriptor = sample_view(policy, sample_id, view_index)?;
    let rendered = render_view(policy.magnitude, &descriptor, image)?;
    Ok((descriptor, rendered))
}

/// File name for a generated view. Sample ids that are not already safe
/// file-name stems get a hash suffix so distinct ids never collide.
pub fn view_file_name(sample_id: &str, view_index: u32) -> String {
    let safe: String = sample_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if safe == sample_id && !safe.is_empty() {
        format!("{safe}_v{view_index}.png")
    } else {
        let mut hasher = FnvHasher::default();
        hasher.write(sample_id.as_bytes());
        format!("{safe}_{:016x}_v{view_index}.png", hasher.finish())
    }
}

pub const GENERATION_MANIFEST: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationManifest {
    pub path: PathBuf,
    pub rows: Vec<GenerationRow>,
}

/// Writes `views_per_sample` transformed PNGs per dataset row into `out_dir`
/// plus `manifest.csv`, rows ordered by `(sample_id, view_index)`. Paths in
/// the manifest are relative to `out_dir`.
pub fn generate_contrastive_set(
    policy: &AugmentPolicy,
    dataset: &[DatasetRow],
    views_per_sample: u32,
    out_dir: &Path,
) -> Result<GenerationManifest, AugmentError> {
    policy.validate()?;
    if views_per_sample == 0 {
        return Err(AugmentError::InvalidPolicy("views_per_sample must be at least 1".into()));
    }
    let mut ids = HashSet::new();
    if let Some(dup) = dataset.iter().find(|row| !ids.insert(row.sample_id.as_str())) {
        return Err(AugmentError::DuplicateSample(dup.sample_id.clone()));
    }
    fs::create_dir_all(out_dir).map_err(|source| ImageError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut rows: Vec<GenerationRow> = dataset
        .par_iter()
        .map(|row| -> Result<Vec<GenerationRow>, AugmentError> {
            let image = image_ops::read_png(&row.path)?;
            (1..=views_per_sample)
                .map(|view_index| {
                    let (descriptor, rendered) = contrastive_view(policy, &row.sample_id, view_index, &image)?;
                    let file = view_file_name(&row.sample_id, view_index);
                    image_ops::write_png(&rendered, &out_dir.join(&file))?;
                    Ok(GenerationRow {
                        sample_id: row.sample_id.clone(),
                        view_index,
                        path: PathBuf::from(file),
                        label: row.label,
                        ops: descriptor.ops_field(),
                        seed: descriptor.derived_seed,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id).then(a.view_index.cmp(&b.view_index)));

    let path = out_dir.join(GENERATION_MANIFEST);
    data_io::write_generation_manifest(&rows, &path)?;
    Ok(GenerationManifest { path, rows })
}
