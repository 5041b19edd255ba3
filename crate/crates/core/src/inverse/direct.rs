//! Gradient-based inverse design directly on scatterer coordinates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimizerState};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::FieldGrid;
use crate::losses::{loss_force, loss_sparse, SparseSampler, DEFAULT_SPARSE_POINTS};
use crate::plate::GreensRoute;
use crate::problems::{stream_rng, LatinHypercube, ProblemSpec};
use crate::scatter::{Cluster, ForwardModel, IncidentForce};

/// Consecutive failed solves after which a start is abandoned.
pub const MAX_CONSECUTIVE_FAILURES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StartMode {
    /// Latin-hypercube points of the scatterer domain.
    Lhs,
    /// Uniform within `radius` of each scatterer of `center` (flat coordinates).
    Around { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct DirectConfig {
    pub starts: usize,
    pub iterations: usize,
    pub lr: f64,
    /// Relative improvement of the best objective below which a start stops.
    pub tolerance: f64,
    /// Window, in iterations, over which the improvement is measured.
    pub patience: usize,
    /// Sparse target points; `None` uses every raster cell.
    pub sparse_points: Option<usize>,
    pub weight_sparse: f64,
    /// Weight of the force loss, used only when the true cluster is supplied.
    pub weight_force: f64,
    pub start: StartMode,
    pub seed: u64,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            iterations: 500,
            lr: 0.05,
            tolerance: 1e-8,
            patience: 50,
            sparse_points: Some(DEFAULT_SPARSE_POINTS),
            weight_sparse: 1.0,
            weight_force: 0.0,
            start: StartMode::Lhs,
            seed: 0,
        }
    }
}

impl DirectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 || !(self.lr > 0.0) || !(self.tolerance >= 0.0) || self.patience == 0 {
            return Err(Error::InvalidParameter(format!("direct inversion settings {self:?}")));
        }
        if !(self.weight_sparse >= 0.0) || !(self.weight_force >= 0.0) {
            return Err(Error::InvalidParameter("negative objective weight".into()));
        }
        if let StartMode::Around { radius, .. } = self.start {
            if !(radius >= 0.0) {
                return Err(Error::InvalidParameter("negative start radius".into()));
            }
        }
        Ok(())
    }
}

/// History of one start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartTrace {
    pub initial: Vec<f64>,
    /// Objective at every evaluated iterate.
    pub objective: Vec<f64>,
    pub best_objective: f64,
    pub best_positions: Vec<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectResult {
    pub positions: Vec<f64>,
    pub objective: f64,
    pub best_start: usize,
    /// `|| |psi_rec| - |psi_target| ||_2 / || |psi_target| ||_2` over the raster.
    pub relative_field_error: f64,
    pub starts: Vec<StartTrace>,
    #[serde(skip)]
    pub cluster: Cluster,
}

struct Objective<'a> {
    spec: &'a ProblemSpec,
    k: f64,
    model: ForwardModel,
    force: IncidentForce,
    points: Vec<Point>,
    target: Vec<f64>,
    truth: Option<&'a Cluster>,
    cfg: &'a DirectConfig,
}

impl Objective<'_> {
    fn eval(&self, flat: &[f64]) -> Result<(f64, Vec<f64>)> {
        let pts: Vec<Point> = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
        let cluster = self.spec.cluster_at(self.k, &pts)?;
        let mut value = 0.0;
        let mut grad = vec![0.0; flat.len()];
        if self.cfg.weight_sparse > 0.0 {
            let (v, g) = loss_sparse(&self.model, &self.force, &self.points, &self.target, &cluster)?;
            value += self.cfg.weight_sparse * v;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += self.cfg.weight_sparse * b);
        }
        if let (Some(truth), true) = (self.truth, self.cfg.weight_force > 0.0) {
            let fl = loss_force(&self.model, &self.force, truth, &cluster)?;
            value += self.cfg.weight_force * fl.value();
            grad.iter_mut().zip(&fl.grad).for_each(|(a, b)| *a += self.cfg.weight_force * b);
        }
        Ok((value, grad))
    }

    fn run(&self, start: usize, initial: Vec<f64>) -> StartTrace {
        let domain = &self.spec.scatter_domain;
        let mut x = initial.clone();
        let mut opt = OptimizerState::new(x.len(), self.cfg.lr);
        let mut rng = stream_rng(self.cfg.seed ^ 0x4449_5245, start as u64 + 1);
        let mut trace = StartTrace {
            initial,
            objective: Vec::new(),
            best_objective: f64::INFINITY,
            best_positions: x.clone(),
            failed: false,
        };
        let mut best_curve = Vec::with_capacity(self.cfg.iterations + 1);
        let mut failures = 0;
        for it in 0..=self.cfg.iterations {
            let (value, grad) = match self.eval(&x) {
                Ok(r) if r.0.is_finite() => r,
                Ok(_) | Err(_) => {
                    failures += 1;
                    if failures > MAX_CONSECUTIVE_FAILURES {
                        trace.failed = trace.best_objective.is_infinite();
                        break;
                    }
                    // nudge off the degenerate configuration
                    for v in &mut x {
                        *v += rng.random_range(-1e-3..1e-3);
                    }
                    project_flat(domain, &mut x);
                    continue;
                }
            };
            failures = 0;
            trace.objective.push(value);
            if value < trace.best_objective {
                trace.best_objective = value;
                trace.best_positions.clone_from(&x);
            }
            best_curve.push(trace.best_objective);
            if value == 0.0 || it == self.cfg.iterations {
                break;
            }
            let n = best_curve.len();
            if n > self.cfg.patience {
                let old = best_curve[n - 1 - self.cfg.patience];
                if (old - trace.best_objective) <= self.cfg.tolerance * old.abs() {
                    break;
                }
            }
            if adam_step(&mut opt, &mut x, &grad).is_err() {
                break;
            }
            project_flat(domain, &mut x);
        }
        trace
    }
}

fn project_flat(domain: &crate::problems::ScatterDomain, flat: &mut [f64]) {
    let mut pts: Vec<Point> = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
    domain.project(&mut pts);
    for (c, p) in flat.chunks_mut(2).zip(pts) {
        c.copy_from_slice(&p);
    }
}

fn initial_points(spec: &ProblemSpec, cfg: &DirectConfig) -> Result<Vec<Vec<f64>>> {
    let n = spec.n_scatterers();
    let domain = &spec.scatter_domain;
    match &cfg.start {
        StartMode::Lhs => {
            let lhs = LatinHypercube::new(2 * n, cfg.starts, cfg.seed);
            Ok((0..cfg.starts)
                .map(|i| domain.realize(&lhs.point(i)).into_iter().flatten().collect())
                .collect())
        }
        StartMode::Around { center, radius } => {
            if center.len() != 2 * n {
                return Err(Error::Shape(format!(
                    "start centre has {} coordinates, expected {}",
                    center.len(),
                    2 * n
                )));
            }
            Ok((0..cfg.starts)
                .map(|s| {
                    let mut rng = stream_rng(cfg.seed, s as u64 + 1);
                    let mut x = center.clone();
                    for c in x.chunks_mut(2) {
                        let r = radius * rng.random::<f64>().sqrt();
                        let t = std::f64::consts::TAU * rng.random::<f64>();
                        c[0] += r * t.cos();
                        c[1] += r * t.sin();
                    }
                    project_flat(domain, &mut x);
                    x
                })
                .collect())
        }
    }
}

/// Relative L2 misfit of `|psi|` for `cluster` against a target raster.
pub fn relative_field_error(model: &ForwardModel, cluster: &Cluster, force: &IncidentForce, target: &FieldGrid) -> Result<f64> {
    let (_, amp) = model.eval_field_grid(cluster, force, &target.spec)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, t) in amp.values.iter().zip(&target.values) {
        num += (a - t) * (a - t);
        den += t * t;
    }
    if den == 0.0 {
        return Err(Error::InvalidParameter("target field is identically zero".into()));
    }
    Ok((num / den).sqrt())
}

/// Multi-start Adam on scatterer coordinates against an observed `|psi|`
/// raster at wavenumber `k`. Iterates are projected onto the scatterer
/// domain after every step. Supplying `truth` enables the force loss.
pub fn invert_direct(
    spec: &ProblemSpec,
    k: f64,
    force: &IncidentForce,
    target: &FieldGrid,
    truth: Option<&Cluster>,
    cfg: &DirectConfig,
    route: &GreensRoute,
) -> Result<DirectResult> {
    spec.validate()?;
    cfg.validate()?;
    let grid = spec.grid()?;
    if target.spec != grid {
        return Err(Error::Shape("target raster does not match the problem window and resolution".into()));
    }
    let model = spec.model(k, route)?;
    let idx: Vec<usize> = match cfg.sparse_points {
        Some(n) => SparseSampler::new(n, cfg.seed).sample(grid.len()),
        None => (0..grid.len()).collect(),
    };
    let objective = Objective {
        spec,
        k,
        model: model.clone(),
        force: *force,
        points: idx.iter().map(|&i| grid.point_at(i)).collect(),
        target: idx.iter().map(|&i| target.values[i]).collect(),
        truth,
        cfg,
    };
    let traces: Vec<StartTrace> = initial_points(spec, cfg)?
        .into_par_iter()
        .enumerate()
        .map(|(s, x)| objective.run(s, x))
        .collect();
    let (best_start, best) = traces
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.failed)
        .min_by(|a, b| a.1.best_objective.total_cmp(&b.1.best_objective))
        .ok_or(Error::AllStartsFailed(cfg.starts))?;
    let positions = best.best_positions.clone();
    let objective_value = best.best_objective;
    let pts: Vec<Point> = positions.chunks(2).map(|c| [c[0], c[1]]).collect();
    let cluster = spec.cluster_at(k, &pts)?;
    let relative_field_error = relative_field_error(&model, &cluster, force, target)?;
    Ok(DirectResult {
        positions,
        objective: objective_value,
        best_start,
        relative_field_error,
        starts: traces,
        cluster,
    })
}
