//! Bayesian optimisation of training hyperparameters.

mod gp;
mod space;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gp::{expected_improvement, matern52, GpState, BASE_JITTER, LENGTH_GRID};
pub use space::{HyperParam, HyperSpace, Scale};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::inverse::{init_model, train, LossName, Split, SurrogateArch, TrainConfig};
use crate::losses::{loss_force, loss_mse_coords, loss_sparse, LossScales, LossWeights, SparseSampler};
use crate::plate::GreensRoute;
use crate::problems::{stream_rng, LatinHypercube, ProblemSpec};

pub const DEFAULT_BUDGET: usize = 50;
pub const ACQUISITION_CANDIDATES: usize = 1024;
pub const PERTURBATION_DIRECTIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "lowercase")]
pub enum HyperStage {
    Cae,
    Mlp,
    Joint,
}

impl HyperStage {
    pub fn name(self) -> &'static str {
        match self {
            HyperStage::Cae => "cae",
            HyperStage::Mlp => "mlp",
            HyperStage::Joint => "joint",
        }
    }

    pub fn default_space(self) -> HyperSpace {
        match self {
            HyperStage::Cae => HyperSpace::cae(),
            HyperStage::Mlp => HyperSpace::mlp(),
            HyperStage::Joint => HyperSpace::joint(),
        }
    }
}

impl std::str::FromStr for HyperStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cae" => Ok(HyperStage::Cae),
            "mlp" => Ok(HyperStage::Mlp),
            "joint" => Ok(HyperStage::Joint),
            _ => Err(Error::InvalidParameter(format!("unknown hyperopt stage {s:?}"))),
        }
    }
}

/// Candidate seed of acquisition round `round`.
fn round_seed(seed: u64, round: usize) -> u64 {
    (seed ^ 0x4859_5045_5250).wrapping_add(round as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Maximises expected improvement below `best` over Latin-hypercube
/// candidates followed by coordinate refinement. Returns a unit-cube point.
pub fn propose_next(gp: &GpState, dim: usize, best: f64, seed: u64) -> Vec<f64> {
    let ei = |x: &[f64]| {
        let (m, v) = gp.posterior(x);
        expected_improvement(m, v, best)
    };
    let lhs = LatinHypercube::new(dim, ACQUISITION_CANDIDATES, seed);
    let mut x = lhs.point(0);
    let mut fx = ei(&x);
    for i in 1..ACQUISITION_CANDIDATES {
        let c = lhs.point(i);
        let fc = ei(&c);
        if fc > fx {
            x = c;
            fx = fc;
        }
    }
    for step in [0.05, 0.02, 0.01, 0.005, 0.002, 0.001] {
        for _ in 0..20 {
            let mut moved = false;
            for d in 0..dim {
                for sign in [-1.0, 1.0] {
                    let mut y = x.clone();
                    y[d] = (y[d] + sign * step).clamp(0.0, 1.0);
                    let fy = ei(&y);
                    if fy > fx {
                        x = y;
                        fx = fy;
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub index: usize,
    pub unit: Vec<f64>,
    pub params: Vec<f64>,
    /// `+inf` when the evaluation failed.
    pub objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageResult {
    pub stage: HyperStage,
    pub names: Vec<String>,
    pub best_index: usize,
    pub best_params: Vec<f64>,
    pub best_objective: f64,
    pub trials: Vec<Trial>,
}

impl StageResult {
    /// Best objective after each trial.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                best = best.min(t.objective);
                best
            })
            .collect()
    }

    /// `trial,<params...>,objective`; wall times are kept out so reruns
    /// produce identical files.
    pub fn trials_csv(&self) -> String {
        let mut s = format!("trial,{},objective\n", self.names.join(","));
        for t in &self.trials {
            let params: Vec<String> = t.params.iter().map(|p| format!("{p:e}")).collect();
            s.push_str(&format!("{},{},{:e}\n", t.index, params.join(","), t.objective));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("trial,wall_seconds\n");
        for t in &self.trials {
            s.push_str(&format!("{},{:.6}\n", t.index, t.seconds));
        }
        s
    }
}

/// Sequential GP-EI minimisation of `objective` over `space` with `budget`
/// evaluations. Failed evaluations are recorded as `+inf`.
pub fn run_stage(
    stage: HyperStage,
    space: &HyperSpace,
    budget: usize,
    seed: u64,
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<StageResult> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::InvalidParameter("hyperopt budget must be positive".into()));
    }
    let dim = space.dim();
    let n_init = budget.min((dim + 1).max(3));
    let init = LatinHypercube::new(dim, n_init, seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(budget);
    for index in 0..budget {
        let unit = if index < n_init {
            init.point(index)
        } else {
            let finite: Vec<f64> = trials.iter().map(|t| t.objective).filter(|v| v.is_finite()).collect();
            if finite.is_empty() {
                let mut rng = stream_rng(round_seed(seed, index), 0);
                (0..dim).map(|_| rng.random::<f64>()).collect()
            } else {
                // standardise so the zero-mean, data-variance prior is sensible
                let worst = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mean = finite.iter().sum::<f64>() / finite.len() as f64;
                let sd = (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / finite.len() as f64).sqrt();
                let sd = if sd > 0.0 { sd } else { 1.0 };
                let ys: Vec<f64> = trials
                    .iter()
                    .map(|t| (if t.objective.is_finite() { t.objective } else { worst } - mean) / sd)
                    .collect();
                let xs: Vec<Vec<f64>> = trials.iter().map(|t| t.unit.clone()).collect();
                let best = ys.iter().cloned().fold(f64::INFINITY, f64::min);
                let gp = GpState::fit(xs, ys)?;
                propose_next(&gp, dim, best, round_seed(seed, index))
            }
        };
        let params = space.from_unit(&unit);
        let t0 = Instant::now();
        let value = match objective(&params) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        };
        trials.push(Trial {
            index,
            unit,
            params,
            objective: value,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    let (best_index, best) = trials
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective))
        .expect("budget is positive");
    Ok(StageResult {
        stage,
        names: space.names().iter().map(|s| s.to_string()).collect(),
        best_index,
        best_params: best.params.clone(),
        best_objective: best.objective,
        trials: trials.clone(),
    })
}

/// Mean raw coordinate, force and sparse losses of a representative
/// instance when every scatterer is displaced by 1 m in a random direction.
pub fn perturbation_losses(spec: &ProblemSpec, route: &GreensRoute, seed: u64, directions: usize) -> Result<[f64; 3]> {
    spec.validate()?;
    let n = spec.n_scatterers();
    if n == 0 {
        return Err(Error::InvalidParameter("loss normalization needs a non-empty cluster".into()));
    }
    if directions == 0 {
        return Err(Error::InvalidParameter("at least one perturbation direction".into()));
    }
    let inst = spec.realize(&LatinHypercube::new(spec.design_dim(), 1, seed).point(0))?;
    let model = spec.model(inst.k, route)?;
    let grid = spec.grid()?;
    let (_, amp) = model.eval_field_grid(&inst.cluster, &inst.force, &grid)?;
    let truth = inst.cluster.flat_positions();
    let mut sampler = SparseSampler::new(crate::losses::DEFAULT_SPARSE_POINTS, seed);
    let mut sums = [0.0; 3];
    for d in 0..directions {
        let mut rng = stream_rng(seed ^ 0x5045_5254, d as u64);
        let pts: Vec<Point> = inst
            .cluster
            .positions()
            .iter()
            .map(|p| {
                let t = std::f64::consts::TAU * rng.random::<f64>();
                [p[0] + t.cos(), p[1] + t.sin()]
            })
            .collect();
        let pred = spec.cluster_at(inst.k, &pts)?;
        let (c, _) = loss_mse_coords(std::slice::from_ref(&truth), &[pred.flat_positions()])?;
        let f = loss_force(&model, &inst.force, &inst.cluster, &pred)?.value();
        let idx = sampler.sample(grid.len());
        let points: Vec<Point> = idx.iter().map(|&i| grid.point_at(i)).collect();
        let target: Vec<f64> = idx.iter().map(|&i| amp.values[i]).collect();
        let (s, _) = loss_sparse(&model, &inst.force, &points, &target, &pred)?;
        sums[0] += c;
        sums[1] += f;
        sums[2] += s;
    }
    Ok(sums.map(|v| v / directions as f64))
}

/// Reciprocal loss scales that make the coordinate, force and sparse losses
/// contribute equally at a 1 m perturbation.
pub fn normalize_loss_weights(spec: &ProblemSpec, route: &GreensRoute, seed: u64) -> Result<LossScales> {
    scales_from_losses(perturbation_losses(spec, route, seed, PERTURBATION_DIRECTIONS)?)
}

/// Reciprocals of raw coordinate, force and sparse loss values.
pub fn scales_from_losses([c, f, s]: [f64; 3]) -> Result<LossScales> {
    if [c, f, s].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("degenerate perturbation losses {c}, {f}, {s}")));
    }
    Ok(LossScales {
        coords: 1.0 / c,
        force: 1.0 / f,
        sparse: 1.0 / s,
    })
}

/// Objective of one hyperopt stage built from short training runs.
pub struct TrainingObjective<'a> {
    pub stage: HyperStage,
    pub dataset: &'a Dataset,
    pub base: TrainConfig,
    pub arch: SurrogateArch,
    pub route: &'a GreensRoute,
    /// Normalised weights of the joint objective.
    pub scales: LossScales,
}

fn value_or_train(h: &crate::inverse::LossHistory, epoch: usize, loss: LossName) -> Result<f64> {
    h.value(epoch, Split::Validation, loss)
        .or_else(|| h.value(epoch, Split::Train, loss))
        .ok_or_else(|| Error::InvalidParameter(format!("no {} value at epoch {epoch}", loss.as_str())))
}

impl TrainingObjective<'_> {
    /// Trains a fresh model with `params` and returns the stage objective.
    pub fn evaluate(&self, space: &HyperSpace, params: &[f64]) -> Result<f64> {
        let get = |name: &str| -> Result<f64> {
            space
                .names()
                .iter()
                .position(|n| *n == name)
                .map(|i| params[i])
                .ok_or_else(|| Error::InvalidParameter(format!("search space lacks {name}")))
        };
        let mut cfg = self.base.clone();
        let mut arch = self.arch.clone();
        match self.stage {
            HyperStage::Cae => {
                arch.encoder_hidden = vec![get("encoder_width_1")? as usize, get("encoder_width_2")? as usize];
                cfg.lr_stage1 = get("lr_stage1")?;
                cfg.weights = LossWeights::new(1.0, 0.0, 0.0, 0.0)?;
                cfg.epochs_stage2 = 0;
            }
            HyperStage::Mlp => {
                let layers = get("head_layers")? as usize;
                let (first, last) = (get("head_first")?, get("head_last")?);
                let hidden = layers.saturating_sub(1).max(1);
                arch.head_hidden = (0..hidden)
                    .map(|i| {
                        let t = if hidden == 1 { 0.0 } else { i as f64 / (hidden - 1) as f64 };
                        (first * (last / first).powf(t)).round() as usize
                    })
                    .collect();
                arch.latent = get("latent")? as usize;
                cfg.weights = LossWeights::new(cfg.weights.fields, 1.0, 0.0, 0.0)?;
                cfg.epochs_stage2 = 0;
            }
            HyperStage::Joint => {
                cfg.weights = LossWeights::new(
                    cfg.weights.fields,
                    get("lambda_coords")?,
                    get("lambda_force")?,
                    get("lambda_sparse")?,
                )?;
                cfg.lr_stage1 = get("lr_stage1")?;
                cfg.lr_stage2 = get("lr_stage2")?;
                cfg.batch_size = get("batch_size")? as usize;
                cfg.scales = self.scales;
            }
        }
        let mut model = init_model(self.dataset, Some(arch), cfg.seed)?;
        let h = train(&mut model, self.dataset, &cfg, self.route)?;
        let e1 = cfg.epochs_stage1;
        match self.stage {
            HyperStage::Cae => value_or_train(&h, e1, LossName::MseFields),
            HyperStage::Mlp => value_or_train(&h, e1, LossName::MseCoords),
            HyperStage::Joint => {
                let e2 = e1 + cfg.epochs_stage2;
                Ok(self.scales.coords * value_or_train(&h, e1, LossName::MseCoords)?
                    + self.scales.force * value_or_train(&h, e1, LossName::Force)?
                    + self.scales.sparse * value_or_train(&h, e2, LossName::Sparse)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{preset, ProblemClass};

    #[test]
    fn single_trial_budget() {
        let space = HyperSpace::new(vec![HyperParam::new("x", -1.0, 1.0, Scale::Linear, false)]).unwrap();
        let r = run_stage(HyperStage::Joint, &space, 1, 4, |p| Ok(p[0] * p[0])).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best_params, r.trials[0].params);
    }

    #[test]
    fn proposal_moves_away_from_a_single_observation() {
        let gp = GpState::fit(vec![vec![0.3, 0.7]], vec![0.0]).unwrap();
        let x = propose_next(&gp, 2, 0.0, 1);
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((x[0] - 0.3).abs() + (x[1] - 0.7).abs() > 1e-3);
    }

    #[test]
    fn finds_a_bowl_minimum_deterministically() {
        let space = HyperSpace::new(vec![
            HyperParam::new("a", 0.0, 1.0, Scale::Linear, false),
            HyperParam::new("b", 0.0, 1.0, Scale::Linear, false),
        ])
        .unwrap();
        let target = [0.62, 0.27];
        let f = |p: &[f64]| Ok((p[0] - target[0]).powi(2) + 3.0 * (p[1] - target[1]).powi(2));
        let r = run_stage(HyperStage::Joint, &space, 30, 8, f).unwrap();
        let d = ((r.best_params[0] - target[0]).powi(2) + (r.best_params[1] - target[1]).powi(2)).sqrt();
        assert!(d < 0.05, "{:?}", r.best_params);
        let curve = r.best_so_far();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        let again = run_stage(HyperStage::Joint, &space, 30, 8, f).unwrap();
        assert_eq!(again.trials_csv(), r.trials_csv());
    }

    #[test]
    fn failures_are_recorded_as_infinite() {
        let space = HyperSpace::new(vec![HyperParam::new("x", 0.0, 1.0, Scale::Linear, false)]).unwrap();
        let r = run_stage(HyperStage::Cae, &space, 6, 2, |p| {
            if p[0] > 0.5 {
                Err(Error::Cholesky)
            } else {
                Ok(p[0])
            }
        })
        .unwrap();
        assert!(r.trials.iter().any(|t| t.objective.is_infinite()));
        assert!(r.best_objective.is_finite());
    }

    #[test]
    fn normalized_losses_are_balanced() {
        let mut spec = preset(ProblemClass::NearFar);
        spec.resolution = [32, 32];
        let route = GreensRoute::Analytic;
        let s = normalize_loss_weights(&spec, &route, 5).unwrap();
        // same instance, fresh directions and sparse points
        let inst_seed = 5;
        let raw = {
            let mut spec2 = spec.clone();
            spec2.resolution = [32, 32];
            perturbation_losses_with_direction_seed(&spec2, &route, inst_seed, 77)
        };
        let w = [raw[0] * s.coords, raw[1] * s.force, raw[2] * s.sparse];
        let mean = (w[0] + w[1] + w[2]) / 3.0;
        for v in w {
            assert!((v / mean - 1.0).abs() < 0.05, "{w:?}");
        }
    }

    fn perturbation_losses_with_direction_seed(spec: &ProblemSpec, route: &GreensRoute, seed: u64, salt: u64) -> [f64; 3] {
        // reuse the instance of `seed` but different random directions
        let inst = spec.realize(&LatinHypercube::new(spec.design_dim(), 1, seed).point(0)).unwrap();
        let model = spec.model(inst.k, route).unwrap();
        let grid = spec.grid().unwrap();
        let (_, amp) = model.eval_field_grid(&inst.cluster, &inst.force, &grid).unwrap();
        let truth = inst.cluster.flat_positions();
        let mut sampler = SparseSampler::new(crate::losses::DEFAULT_SPARSE_POINTS, salt);
        let mut sums = [0.0; 3];
        for d in 0..PERTURBATION_DIRECTIONS {
            let mut rng = stream_rng(salt, d as u64);
            let pts: Vec<Point> = inst
                .cluster
                .positions()
                .iter()
                .map(|p| {
                    let t = std::f64::consts::TAU * rng.random::<f64>();
                    [p[0] + t.cos(), p[1] + t.sin()]
                })
                .collect();
            let pred = spec.cluster_at(inst.k, &pts).unwrap();
            sums[0] += loss_mse_coords(std::slice::from_ref(&truth), &[pred.flat_positions()]).unwrap().0;
            sums[1] += loss_force(&model, &inst.force, &inst.cluster, &pred).unwrap().value();
            let idx = sampler.sample(grid.len());
            let points: Vec<Point> = idx.iter().map(|&i| grid.point_at(i)).collect();
            let target: Vec<f64> = idx.iter().map(|&i| amp.values[i]).collect();
            sums[2] += loss_sparse(&model, &inst.force, &points, &target, &pred).unwrap().0;
        }
        sums.map(|v| v / PERTURBATION_DIRECTIONS as f64)
    }

    #[test]
    fn doubling_a_raw_loss_halves_its_scale() {
        let a = scales_from_losses([5.0, 0.2, 300.0]).unwrap();
        let b = scales_from_losses([5.0, 0.4, 300.0]).unwrap();
        assert_eq!(b.force, a.force / 2.0);
        assert_eq!((b.coords, b.sparse), (a.coords, a.sparse));
        assert!(scales_from_losses([1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn empty_cluster_is_rejected() {
        let mut spec = preset(ProblemClass::NearFar);
        spec.scatter_domain = crate::problems::ScatterDomain::Sectors {
            center: [0.0, 0.0],
            radius: 30.0,
            inner_radius: 0.5,
            count: 0,
        };
        assert!(perturbation_losses(&spec, &GreensRoute::Analytic, 1, 4).is_err());
    }
}
