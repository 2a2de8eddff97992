//! Rank statistics, scatter matrices and the Fisher ratio.
//!
//! Every summation runs in a canonical order (sorted by value, or by class and
//! then row contents), so results are bitwise independent of sample order.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Condition number above which a within-class system is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Distance from ±1 at which a control correlation counts as perfect.
const PERFECT_CORRELATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("input contains a non-finite value at index {0}")]
    NonFiniteInput(usize),
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("rank vector is constant")]
    DegenerateVariance,
    #[error("control variable is perfectly rank-correlated (r = {0}); partial correlation undefined")]
    ControlDegenerate(f64),
    #[error("need at least two classes")]
    SingleClass,
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("feature matrix has {rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("within-class scatter is numerically singular (condition estimate {0:e})")]
    SingularWithin(f64),
    #[error("target dimension {target} exceeds min(n, d) = {max}")]
    DimensionTooLarge { target: usize, max: usize },
    #[error("target dimension must be positive")]
    ZeroDimension,
    #[error("ridge must be finite and non-negative, got {0}")]
    InvalidRidge(f64),
}

/// Mid-ranks (1-based) of a sample; ties share the mean of the ranks they span.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    values: Vec<f64>,
}

impl RankVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_finite(x: &[f64]) -> Result<(), StatsError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatsError::NonFiniteInput(i)),
        None => Ok(()),
    }
}

pub fn rank_transform(x: &[f64]) -> Result<RankVector, StatsError> {
    if x.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(x)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut values = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            values[i] = mid;
        }
        start = end;
    }
    Ok(RankVector { values })
}

/// Pearson correlation of two rank vectors, summed in (rank_x, rank_y) order.
fn pearson_of_ranks(rx: &RankVector, ry: &RankVector) -> Result<f64, StatsError> {
    let n = rx.len();
    let mut pairs: Vec<(f64, f64)> = rx.values.iter().copied().zip(ry.values.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // mid-ranks always average to (n + 1) / 2
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        let (da, db) = (a - mean, b - mean);
        cov += da * db;
        vx += da * da;
        vy += db * db;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation coefficient, tie-aware.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewObservations(x.len()));
    }
    pearson_of_ranks(&rank_transform(x)?, &rank_transform(y)?)
}

/// First-order partial correlation from the three pairwise coefficients.
pub fn partial_from_pairwise(r_xy: f64, r_xz: f64, r_yz: f64) -> Result<f64, StatsError> {
    for r in [r_xz, r_yz] {
        if 1.0 - r.abs() <= PERFECT_CORRELATION_TOL {
            return Err(StatsError::ControlDegenerate(r));
        }
    }
    Ok((r_xy - r_xz * r_yz) / ((1.0 - r_xz * r_xz).sqrt() * (1.0 - r_yz * r_yz).sqrt()))
}

/// Rank correlation of `x` and `y` with the control `z` partialled out.
pub fn partial_spearman(x: &[f64], y: &[f64], z: &[f64]) -> Result<f64, StatsError> {
    let r_xy = spearman(x, y)?;
    let r_xz = spearman(x, z)?;
    let r_yz = spearman(y, z)?;
    partial_from_pairwise(r_xy, r_xz, r_yz)
}

/// Weighting of the within-class scatter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithinWeighting {
    /// `S_w = Σ_i Σ_j (x_ij - m_i)(x_ij - m_i)ᵀ`; satisfies `S_b + S_w = S_total`.
    #[default]
    Standard,
    /// Every class block additionally multiplied by its class size `N_i`.
    PaperLiteral,
}

impl std::str::FromStr for WithinWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Self::Standard),
            "paper_literal" | "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(format!("unknown within-class weighting `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub s_b: DMatrix<f64>,
    pub s_w: DMatrix<f64>,
    pub class_counts: Vec<usize>,
    pub class_means: Vec<DVector<f64>>,
    pub grand_mean: DVector<f64>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Between- and within-class scatter of `features` (one row per sample).
///
/// Classes are `0..=max(labels)`; each must be populated.
pub fn scatter_matrices(
    features: &DMatrix<f64>,
    labels: &[usize],
    weighting: WithinWeighting,
) -> Result<ScatterPair, StatsError> {
    let (n, d) = features.shape();
    if labels.len() != n {
        return Err(StatsError::LabelCount { rows: n, labels: labels.len() });
    }
    if n == 0 || d == 0 {
        return Err(StatsError::Empty);
    }
    if let Some(i) = features.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput(i));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut members: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_classes];
    for (row, &label) in features.row_iter().zip(labels) {
        members[label].push(row.iter().copied().collect());
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(StatsError::EmptyClass(empty));
    }
    if n_classes < 2 {
        return Err(StatsError::SingleClass);
    }
    for rows in &mut members {
        rows.sort_by(|a, b| lexicographic(a, b));
    }

    let mut grand_mean = DVector::zeros(d);
    let mut class_means = Vec::with_capacity(n_classes);
    for rows in &members {
        let mut mean = DVector::zeros(d);
        for row in rows {
            for (k, v) in row.iter().enumerate() {
                mean[k] += v;
                grand_mean[k] += v;
            }
        }
        class_means.push(mean / rows.len() as f64);
    }
    grand_mean /= n as f64;

    let mut s_b = DMatrix::zeros(d, d);
    let mut s_w = DMatrix::zeros(d, d);
    for (rows, mean) in members.iter().zip(&class_means) {
        let count = rows.len() as f64;
        let diff = mean - &grand_mean;
        s_b.ger(count, &diff, &diff, 1.0);

        let centered = DMatrix::from_fn(rows.len(), d, |r, k| rows[r][k] - mean[k]);
        let block = centered.tr_mul(&centered);
        let weight = match weighting {
            WithinWeighting::Standard => 1.0,
            WithinWeighting::PaperLiteral => count,
        };
        s_w += block * weight;
    }
    symmetrize(&mut s_b);
    symmetrize(&mut s_w);

    Ok(ScatterPair {
        s_b,
        s_w,
        class_counts: members.iter().map(Vec::len).collect(),
        class_means,
        grand_mean,
    })
}

/// Total scatter `Σ (x - m)(x - m)ᵀ` about the grand mean, rows summed in
/// lexicographic order.
pub fn total_scatter(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = features.shape();
    let mut rows: Vec<Vec<f64>> = features.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.sort_by(|a, b| lexicographic(a, b));
    let mut mean = DVector::zeros(d);
    for row in &rows {
        for (k, v) in row.iter().enumerate() {
            mean[k] += v;
        }
    }
    mean /= n as f64;
    let centered = DMatrix::from_fn(n, d, |r, k| rows[r][k] - mean[k]);
    let mut total = centered.tr_mul(&centered);
    symmetrize(&mut total);
    total
}

/// Spectral condition estimate of a symmetric matrix; infinite when it is
/// not positive definite.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eigen = m.clone().symmetric_eigenvalues();
    let max = eigen.max();
    let min = eigen.min();
    if min <= 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `trace((S_w + ridge I)⁻¹ S_b)` via a Cholesky solve.
pub fn fisher_ratio(pair: &ScatterPair, ridge: f64) -> Result<f64, StatsError> {
    if !ridge.is_finite() || ridge < 0.0 {
        return Err(StatsError::InvalidRidge(ridge));
    }
    let d = pair.s_w.nrows();
    let system = &pair.s_w + DMatrix::identity(d, d) * ridge;
    let condition = condition_estimate(&system);
    if condition > MAX_CONDITION {
        return Err(StatsError::SingularWithin(condition));
    }
    let chol = system.cholesky().ok_or(StatsError::SingularWithin(condition))?;
    let solved = chol.solve(&pair.s_b);
    Ok(solved.trace().max(0.0))
}

/// Scale-aware default ridge: `1e-6 · trace(S_w) / d`.
pub fn default_ridge(pair: &ScatterPair) -> f64 {
    1e-6 * pair.s_w.trace() / pair.s_w.nrows() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherOutcome {
    pub ratio: f64,
    pub ridge: f64,
}

/// Fisher ratio without regularization, falling back to [`default_ridge`]
/// only when the plain system fails the condition check.
pub fn fisher_ratio_auto(pair: &ScatterPair) -> Result<FisherOutcome, StatsError> {
    match fisher_ratio(pair, 0.0) {
        Ok(ratio) => Ok(FisherOutcome { ratio, ridge: 0.0 }),
        Err(StatsError::SingularWithin(_)) => {
            let ridge = default_ridge(pair);
            fisher_ratio(pair, ridge).map(|ratio| FisherOutcome { ratio, ridge })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// Centered data projected onto the leading right singular vectors (n × k).
    pub projected: DMatrix<f64>,
    /// Share of the total squared singular mass kept, in `[0, 1]`.
    pub retained_variance: f64,
}

/// Truncated SVD of the column-centered data.
pub fn svd_reduce(features: &DMatrix<f64>, target_dim: usize) -> Result<Reduction, StatsError> {
    let (n, d) = features.shape();
    if target_dim == 0 {
        return Err(StatsError::ZeroDimension);
    }
    if target_dim > n.min(d) {
        return Err(StatsError::DimensionTooLarge {
            target: target_dim,
            max: n.min(d),
        });
    }
    if let Some(i) = features.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput(i));
    }
    let means = features.row_mean();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let squares: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let total: f64 = squares.iter().sum();
    let kept: f64 = squares[..target_dim].iter().sum();
    let basis = v_t.rows(0, target_dim);
    Ok(Reduction {
        projected: centered * basis.transpose(),
        retained_variance: if total > 0.0 { (kept / total).min(1.0) } else { 1.0 },
    })
}

/// Train accuracy minus contrastive accuracy. Not clamped.
pub fn consistency(train_acc: f64, contre_acc: f64) -> f64 {
    train_acc - contre_acc
}
