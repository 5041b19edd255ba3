//! Training losses and their gradients with respect to predicted
//! scatterer coordinates.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::problems::stream_rng;
use crate::scatter::{Cluster, ForwardModel, IncidentForce};

/// Weights of the field reconstruction, coordinate, force and sparse terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub fields: f64,
    pub coords: f64,
    pub force: f64,
    pub sparse: f64,
}

impl LossWeights {
    pub fn new(fields: f64, coords: f64, force: f64, sparse: f64) -> Result<Self> {
        let w = Self {
            fields,
            coords,
            force,
            sparse,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || all.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidParameter(format!("loss weights {self:?}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.fields, self.coords, self.force, self.sparse]
    }

    /// Zeroes the terms a stage does not use.
    pub fn masked(&self, mask: StageMask) -> Self {
        let pick = |on: bool, v: f64| if on { v } else { 0.0 };
        Self {
            fields: pick(mask.fields, self.fields),
            coords: pick(mask.coords, self.coords),
            force: pick(mask.force, self.force),
            sparse: pick(mask.sparse, self.sparse),
        }
    }
}

/// Multipliers that bring the raw coordinate, force and sparse losses to a
/// common scale before the weights apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct LossScales {
    pub coords: f64,
    pub force: f64,
    pub sparse: f64,
}

impl Default for LossScales {
    fn default() -> Self {
        Self {
            coords: 1.0,
            force: 1.0,
            sparse: 1.0,
        }
    }
}

impl LossScales {
    pub fn validate(&self) -> Result<()> {
        if [self.coords, self.force, self.sparse]
            .iter()
            .any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidParameter(format!("loss scales {self:?}")));
        }
        Ok(())
    }

    /// Effective weights `lambda_i * s_i`; the field term is not rescaled.
    pub fn apply(&self, w: &LossWeights) -> LossWeights {
        LossWeights {
            fields: w.fields,
            coords: w.coords * self.coords,
            force: w.force * self.force,
            sparse: w.sparse * self.sparse,
        }
    }
}

/// Which loss terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMask {
    pub fields: bool,
    pub coords: bool,
    pub force: bool,
    pub sparse: bool,
}

impl StageMask {
    pub const ALL: StageMask = StageMask {
        fields: true,
        coords: true,
        force: true,
        sparse: true,
    };
}

fn check_same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Mean squared deviation over every element of the batch, with its
/// gradient with respect to the predictions.
pub fn loss_mse_fields(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_same_len(truth.len(), pred.len(), "batch sizes")?;
    let mut count = 0usize;
    for (t, p) in truth.iter().zip(pred) {
        check_same_len(t.len(), p.len(), "field sizes")?;
        count += t.len();
    }
    if count == 0 {
        return Ok((0.0, pred.iter().map(|p| vec![0.0; p.len()]).collect()));
    }
    let scale = 1.0 / count as f64;
    let mut total = 0.0;
    let grads = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| {
            t.iter()
                .zip(p)
                .map(|(a, b)| {
                    let d = b - a;
                    total += d * d;
                    2.0 * d * scale
                })
                .collect()
        })
        .collect();
    Ok((total * scale, grads))
}

/// Batch mean of the squared Euclidean distance between flattened
/// coordinate vectors; gradient `2 (pred - truth) / batch`.
pub fn loss_mse_coords(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_same_len(truth.len(), pred.len(), "batch sizes")?;
    if truth.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let scale = 1.0 / truth.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (t, p) in truth.iter().zip(pred) {
        check_same_len(t.len(), p.len(), "coordinate counts")?;
        grads.push(
            t.iter()
                .zip(p)
                .map(|(a, b)| {
                    total += (b - a) * (b - a);
                    2.0 * (b - a) * scale
                })
                .collect(),
        );
    }
    Ok((total * scale, grads))
}

/// Minimum distance between the reference centroid and the forcing point.
pub const CENTROID_GUARD: f64 = 1e-9;

/// Force-vector loss of one sample and its gradient with respect to the
/// predicted flat coordinates:
/// `|E*(X) - E*(X_hat)| / f0^2 + |c(X) - c(X_hat)| / |c(X) - x0|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceLoss {
    pub energy_term: f64,
    pub centroid_term: f64,
    pub grad: Vec<f64>,
}

impl ForceLoss {
    pub fn value(&self) -> f64 {
        self.energy_term + self.centroid_term
    }
}

pub fn loss_force(
    model: &ForwardModel,
    force: &IncidentForce,
    truth: &Cluster,
    pred: &Cluster,
) -> Result<ForceLoss> {
    check_same_len(truth.len(), pred.len(), "scatterer counts")?;
    let n = pred.len();
    if n == 0 {
        return Err(Error::InvalidParameter("force loss of an empty cluster".into()));
    }
    let f0_sq = force.amplitude * force.amplitude;
    let e_true = model.interaction_energy(truth, force)?;
    let sol = model.solve_forces(pred, force)?;
    let e_pred = crate::linalg::dot_conj(&sol.rhs, &sol.forces);
    let delta = e_true - e_pred;
    let energy_term = delta.norm() / f0_sq;
    let mut grad = vec![0.0; 2 * n];
    if delta.norm() > 0.0 {
        let de = model.energy_position_gradient_from(pred, force, &sol)?;
        let unit = delta.conj() / delta.norm();
        for (a, d) in de.iter().enumerate() {
            for axis in 0..2 {
                grad[2 * a + axis] = -(unit * d[axis]).re / f0_sq;
            }
        }
    }
    let c = truth.centroid().unwrap_or([0.0; 2]);
    let c_hat = pred.centroid().unwrap_or([0.0; 2]);
    let lever = (c[0] - force.location[0]).hypot(c[1] - force.location[1]);
    if lever < CENTROID_GUARD {
        return Err(Error::CentroidSingular);
    }
    let gap = [c[0] - c_hat[0], c[1] - c_hat[1]];
    let gap_norm = gap[0].hypot(gap[1]);
    let centroid_term = gap_norm / lever;
    if gap_norm > 0.0 {
        for a in 0..n {
            for axis in 0..2 {
                grad[2 * a + axis] -= gap[axis] / (gap_norm * n as f64 * lever);
            }
        }
    }
    Ok(ForceLoss {
        energy_term,
        centroid_term,
        grad,
    })
}

/// Draws a fresh uniform subset of grid cells for every batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseSampler {
    pub n_points: usize,
    pub seed: u64,
    /// Number of draws made so far.
    pub draws: u64,
}

pub const DEFAULT_SPARSE_POINTS: usize = 225;

impl SparseSampler {
    pub fn new(n_points: usize, seed: u64) -> Self {
        Self {
            n_points,
            seed,
            draws: 0,
        }
    }

    /// Cell indices, without replacement. All cells when `n_points` is at
    /// least the grid size.
    pub fn sample(&mut self, grid_len: usize) -> Vec<usize> {
        let mut rng = stream_rng(self.seed, self.draws);
        self.draws += 1;
        if self.n_points >= grid_len {
            return (0..grid_len).collect();
        }
        let mut idx = index::sample(&mut rng, grid_len, self.n_points).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Sparse-reconstruction loss of one sample,
/// `sum_p (target_p - |psi(x_p; X_hat)|)^2`, and its coordinate gradient.
pub fn loss_sparse(
    model: &ForwardModel,
    force: &IncidentForce,
    points: &[Point],
    target: &[f64],
    pred: &Cluster,
) -> Result<(f64, Vec<f64>)> {
    check_same_len(points.len(), target.len(), "sparse points and targets")?;
    if points.is_empty() {
        return Err(Error::InvalidParameter("sparse loss with no target points".into()));
    }
    if target.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sparse target".into()));
    }
    let sol = model.solve_forces(pred, force)?;
    let psi = model.eval_field(pred, force, &sol, points)?;
    let jac = model.field_position_jacobian(pred, force, &sol, points)?;
    let n = pred.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; 2 * n];
    for ((p, t), row) in psi.iter().zip(target).zip(&jac) {
        let amp = p.norm();
        let resid = t - amp;
        value += resid * resid;
        if amp < 1e-12 {
            continue;
        }
        for a in 0..n {
            for axis in 0..2 {
                let d_amp = (p.conj() * row[a][axis]).re / amp;
                grad[2 * a + axis] -= 2.0 * resid * d_amp;
            }
        }
    }
    Ok((value, grad))
}

/// The four loss values of one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub fields: f64,
    pub coords: f64,
    pub force: f64,
    pub sparse: f64,
}

impl LossValues {
    pub fn as_array(&self) -> [f64; 4] {
        [self.fields, self.coords, self.force, self.sparse]
    }
}

/// Weighted sum and the combined gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss {
    pub value: f64,
    /// Gradient with respect to the reconstructed fields, per sample.
    pub grad_fields: Vec<Vec<f64>>,
    /// Gradient with respect to the predicted coordinates, per sample.
    pub grad_coords: Vec<Vec<f64>>,
}

/// Per-term values and gradients of a batch, as produced by the individual losses.
#[derive(Debug, Clone, Default)]
pub struct LossTerms {
    pub values: LossValues,
    pub grad_fields: Vec<Vec<f64>>,
    pub grad_coords: Vec<Vec<f64>>,
    pub grad_force: Vec<Vec<f64>>,
    pub grad_sparse: Vec<Vec<f64>>,
}

/// `sum_i lambda_i L_i` under the stage mask. Terms that are masked out do
/// not contribute to any gradient.
pub fn joint_loss(weights: &LossWeights, mask: StageMask, terms: &LossTerms) -> JointLoss {
    let w = weights.masked(mask);
    let v = &terms.values;
    let mut value = 0.0;
    for (wi, li) in w.as_array().iter().zip(v.as_array()) {
        if *wi != 0.0 {
            value += wi * li;
        }
    }
    let grad_fields = terms
        .grad_fields
        .iter()
        .map(|g| g.iter().map(|x| w.fields * x).collect())
        .collect();
    let batch = terms
        .grad_coords
        .len()
        .max(terms.grad_force.len())
        .max(terms.grad_sparse.len());
    let grad_coords = (0..batch)
        .map(|s| {
            let mut acc: Vec<f64> = Vec::new();
            for (wi, g) in [
                (w.coords, &terms.grad_coords),
                (w.force, &terms.grad_force),
                (w.sparse, &terms.grad_sparse),
            ] {
                if wi == 0.0 {
                    continue;
                }
                if let Some(row) = g.get(s) {
                    if acc.is_empty() {
                        acc = vec![0.0; row.len()];
                    }
                    for (a, x) in acc.iter_mut().zip(row) {
                        *a += wi * x;
                    }
                }
            }
            acc
        })
        .collect();
    JointLoss {
        value,
        grad_fields,
        grad_coords,
    }
}
