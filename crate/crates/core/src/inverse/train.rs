//! Two-stage surrogate training and transfer learning.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimizerState};
use super::history::{LossHistory, LossName, Split};
use super::surrogate::{ParamGrads, Stage, SurrogateArch, SurrogateModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::grid::FieldGrid;
use crate::losses::{
    joint_loss, loss_force, loss_mse_coords, loss_mse_fields, loss_sparse, LossScales, LossTerms,
    LossValues, LossWeights, SparseSampler, StageMask, DEFAULT_SPARSE_POINTS,
};
use crate::plate::GreensRoute;
use crate::problems::{stream_rng, ProblemClass, ProblemSpec, SampleRecord};
use crate::scatter::{Cluster, IncidentForce, MIN_SEPARATION};

/// Seed offsets separating the random streams used during training.
const SHUFFLE_SALT: u64 = 0x5348_5546_4c45;
const VALIDATION_SALT: u64 = 0x5641_4c49_4454;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub epochs_transfer: usize,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub lr_transfer: f64,
    pub batch_size: usize,
    pub weights: LossWeights,
    #[serde(default)]
    pub scales: LossScales,
    pub sparse_points: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Selected hyperparameters of each problem class; the field weight is 1.
    pub fn preset(class: ProblemClass) -> Self {
        let (coords, force, sparse, lr1, lr2, batch) = match class {
            ProblemClass::NearFar => (0.67, 0.28, 0.093, 1.2e-3, 8.9e-5, 32),
            ProblemClass::Downstream => (0.088, 0.64, 1.0, 1.3e-4, 1.4e-4, 64),
            ProblemClass::Incident => (0.40, 0.64, 0.93, 1.6e-3, 4.4e-5, 62),
        };
        Self {
            epochs_stage1: 60,
            epochs_stage2: 40,
            epochs_transfer: 200,
            lr_stage1: lr1,
            lr_stage2: lr2,
            lr_transfer: 2e-4,
            batch_size: batch,
            weights: LossWeights {
                fields: 1.0,
                coords,
                force,
                sparse,
            },
            scales: LossScales::default(),
            sparse_points: DEFAULT_SPARSE_POINTS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.scales.validate()?;
        let rates = [self.lr_stage1, self.lr_stage2, self.lr_transfer];
        if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidParameter("learning rates must be positive".into()));
        }
        if self.batch_size == 0 || self.sparse_points == 0 {
            return Err(Error::InvalidParameter("batch size and sparse point count must be positive".into()));
        }
        Ok(())
    }

    fn effective_weights(&self) -> LossWeights {
        self.scales.apply(&self.weights)
    }
}

/// A sample laid out for the network and the physics losses.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    /// Normalized network input.
    pub input: Vec<f64>,
    /// True flat coordinates; empty for synthetic targets.
    pub coords: Vec<f64>,
    pub k: f64,
    pub force: IncidentForce,
    pub truth: Option<Cluster>,
    /// Observed `|psi|` over the whole raster, physical units.
    pub target: Vec<f64>,
}

impl PreparedSample {
    pub fn from_record(spec: &ProblemSpec, model: &SurrogateModel, r: &SampleRecord) -> Result<Self> {
        Ok(Self {
            input: model.norm.model_input(&r.incident.values, &r.amplitude.values),
            coords: r.positions.clone(),
            k: r.k,
            force: r.force()?,
            truth: Some(spec.cluster_at(r.k, &r.points())?),
            target: r.amplitude.values.clone(),
        })
    }
}

/// Batch-mean loss values, the weighted objective and optional gradients.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub values: LossValues,
    pub objective: f64,
    pub grads: Option<ParamGrads>,
}

/// What the physics part of a batch evaluation needs besides the model.
pub struct PhysicsSetup<'a> {
    pub spec: &'a ProblemSpec,
    pub route: &'a GreensRoute,
    /// Cell centres of the raster.
    pub grid_points: &'a [Point],
    /// Region predictions are clamped to before a forward solve.
    pub clamp_box: Rect,
}

impl<'a> PhysicsSetup<'a> {
    pub fn new(spec: &'a ProblemSpec, route: &'a GreensRoute, grid_points: &'a [Point]) -> Self {
        Self {
            spec,
            route,
            grid_points,
            clamp_box: spec.scatter_domain.bounding_box(),
        }
    }
}

struct SamplePhysics {
    force: f64,
    force_grad: Vec<f64>,
    sparse: f64,
    sparse_grad: Vec<f64>,
}

/// Offset applied to coincident predictions, which clamping to a corner of
/// the box can produce.
const SEPARATION_NUDGE: f64 = 1e-6;

fn separate(mut pts: Vec<Point>) -> Vec<Point> {
    for a in 1..pts.len() {
        let mut shift = 0.0;
        while pts[..a]
            .iter()
            .any(|q| (q[0] - pts[a][0]).hypot(q[1] - pts[a][1]) <= MIN_SEPARATION)
        {
            shift += SEPARATION_NUDGE;
            pts[a] = [pts[a][0] + shift, pts[a][1] + shift];
        }
    }
    pts
}

/// Predicted flat coordinates as solver positions: clamped to `bounds` and
/// nudged apart where clamping made them coincide. The flags mark clamped
/// coordinates, whose gradient is zero.
pub fn clamp_for_solver(bounds: &Rect, pred: &[f64]) -> (Vec<Point>, Vec<bool>) {
    let mut clamped = vec![false; pred.len()];
    let pts = pred
        .chunks(2)
        .enumerate()
        .map(|(a, c)| {
            let q = bounds.clamp([c[0], c[1]]);
            clamped[2 * a] = q[0] != c[0];
            clamped[2 * a + 1] = q[1] != c[1];
            q
        })
        .collect();
    (separate(pts), clamped)
}

fn sample_physics(
    phys: &PhysicsSetup<'_>,
    s: &PreparedSample,
    pred: &[f64],
    sparse_idx: &[usize],
    compute: StageMask,
) -> Result<SamplePhysics> {
    let (pts, clamped) = clamp_for_solver(&phys.clamp_box, pred);
    let model = phys.spec.model(s.k, phys.route)?;
    let cluster = phys.spec.cluster_at(s.k, &pts)?;
    let mut out = SamplePhysics {
        force: 0.0,
        force_grad: vec![0.0; pred.len()],
        sparse: 0.0,
        sparse_grad: vec![0.0; pred.len()],
    };
    if compute.force {
        if let Some(truth) = &s.truth {
            let fl = loss_force(&model, &s.force, truth, &cluster)?;
            out.force = fl.value();
            out.force_grad = fl.grad;
        }
    }
    if compute.sparse {
        let points: Vec<Point> = sparse_idx.iter().map(|&i| phys.grid_points[i]).collect();
        let target: Vec<f64> = sparse_idx.iter().map(|&i| s.target[i]).collect();
        let (v, g) = loss_sparse(&model, &s.force, &points, &target, &cluster)?;
        out.sparse = v;
        out.sparse_grad = g;
    }
    for (i, c) in clamped.iter().enumerate() {
        if *c {
            out.force_grad[i] = 0.0;
            out.sparse_grad[i] = 0.0;
        }
    }
    Ok(out)
}

/// Evaluates the losses of a batch in `stage`. `compute` selects which
/// terms are evaluated for reporting; gradients follow the stage mask.
/// Terms that cannot be evaluated (no truth, no decoder pass) are NaN.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_batch(
    model: &SurrogateModel,
    phys: &PhysicsSetup<'_>,
    samples: &[&PreparedSample],
    weights: &LossWeights,
    stage: Stage,
    sparse_idx: &[usize],
    compute: StageMask,
    want_grad: bool,
) -> Result<BatchEval> {
    let b = samples.len();
    if b == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let mask = stage.mask();
    let d = model.arch.input_dim;
    let mut input = Array2::zeros((b, d));
    for (i, s) in samples.iter().enumerate() {
        if s.input.len() != d {
            return Err(Error::Shape(format!("sample input {} vs model {}", s.input.len(), d)));
        }
        input.row_mut(i).assign(&ndarray::ArrayView1::from(&s.input));
    }
    let run_decoder = compute.fields || (want_grad && mask.fields);
    let pass = model.forward_pass(input.view(), run_decoder)?;
    let pred = model.physical_coords(&pass);
    let mut values = LossValues {
        fields: f64::NAN,
        coords: f64::NAN,
        force: f64::NAN,
        sparse: f64::NAN,
    };
    let mut terms = LossTerms::default();

    if let Some(recon) = pass.reconstruction() {
        let truth: Vec<Vec<f64>> = samples.iter().map(|s| s.input.clone()).collect();
        let recon_rows: Vec<Vec<f64>> = recon.rows().into_iter().map(|r| r.to_vec()).collect();
        let (v, g) = loss_mse_fields(&truth, &recon_rows)?;
        values.fields = v;
        terms.grad_fields = g;
    }
    let have_truth = samples.iter().all(|s| s.truth.is_some());
    if have_truth && (compute.coords || mask.coords) {
        let truth: Vec<Vec<f64>> = samples.iter().map(|s| s.coords.clone()).collect();
        let (v, g) = loss_mse_coords(&truth, &pred)?;
        values.coords = v;
        terms.grad_coords = g;
    }
    let need = StageMask {
        fields: false,
        coords: false,
        force: have_truth && (compute.force || (want_grad && mask.force)),
        sparse: compute.sparse || (want_grad && mask.sparse),
    };
    if need.force || need.sparse {
        let per: Vec<SamplePhysics> = samples
            .par_iter()
            .zip(pred.par_iter())
            .map(|(s, p)| sample_physics(phys, s, p, sparse_idx, need))
            .collect::<Result<_>>()?;
        let inv_b = 1.0 / b as f64;
        if need.force {
            values.force = per.iter().map(|p| p.force).sum::<f64>() * inv_b;
            terms.grad_force = per
                .iter()
                .map(|p| p.force_grad.iter().map(|g| g * inv_b).collect())
                .collect();
        }
        if need.sparse {
            values.sparse = per.iter().map(|p| p.sparse).sum::<f64>() * inv_b;
            terms.grad_sparse = per
                .iter()
                .map(|p| p.sparse_grad.iter().map(|g| g * inv_b).collect())
                .collect();
        }
    }
    terms.values = values;
    // absent terms must not poison the weighted sum
    let mut active = weights.masked(mask);
    for (on, w) in [
        (!values.fields.is_nan(), &mut active.fields),
        (!values.coords.is_nan(), &mut active.coords),
        (!values.force.is_nan(), &mut active.force),
        (!values.sparse.is_nan(), &mut active.sparse),
    ] {
        if !on {
            *w = 0.0;
        }
    }
    for v in [
        &mut terms.values.fields,
        &mut terms.values.coords,
        &mut terms.values.force,
        &mut terms.values.sparse,
    ] {
        if v.is_nan() {
            *v = 0.0;
        }
    }
    let joint = joint_loss(&active, StageMask::ALL, &terms);

    let grads = if want_grad {
        let gc: Vec<Vec<f64>> = if joint.grad_coords.len() == b {
            joint.grad_coords
        } else {
            vec![vec![0.0; model.arch.n_coords]; b]
        };
        let gr = if mask.fields && active.fields != 0.0 && joint.grad_fields.len() == b {
            Some(Array2::from_shape_fn((b, d), |(i, j)| joint.grad_fields[i][j]))
        } else {
            None
        };
        Some(model.backward(&pass, gr.as_ref().map(|g| g.view()), &gc)?)
    } else {
        None
    };
    Ok(BatchEval {
        values,
        objective: joint.value,
        grads,
    })
}

struct Optimizers {
    encoder: OptimizerState,
    decoder: OptimizerState,
    head: OptimizerState,
}

impl Optimizers {
    fn new(model: &SurrogateModel, lr: f64) -> Self {
        Self {
            encoder: OptimizerState::new(model.encoder.n_params(), lr),
            decoder: OptimizerState::new(model.decoder.n_params(), lr),
            head: OptimizerState::new(model.head.n_params(), lr),
        }
    }

    fn apply(&mut self, model: &mut SurrogateModel, g: &ParamGrads, stage: Stage) -> Result<()> {
        adam_step(&mut self.encoder, &mut model.encoder.params, &g.encoder)?;
        adam_step(&mut self.head, &mut model.head.params, &g.head)?;
        if stage.trains_decoder() {
            if let Some(gd) = &g.decoder {
                adam_step(&mut self.decoder, &mut model.decoder.params, gd)?;
            }
        }
        Ok(())
    }
}

/// Sample-weighted running means of batch losses.
#[derive(Default)]
struct EpochMeans {
    sums: [f64; 4],
    counts: [usize; 4],
}

impl EpochMeans {
    fn add(&mut self, v: &LossValues, n: usize) {
        for (i, x) in v.as_array().iter().enumerate() {
            if !x.is_nan() {
                self.sums[i] += x * n as f64;
                self.counts[i] += n;
            }
        }
    }

    fn record(&self, history: &mut LossHistory, epoch: usize, split: Split) {
        for (i, name) in LossName::ALL.iter().enumerate() {
            if self.counts[i] > 0 {
                history.push(epoch, split, *name, self.sums[i] / self.counts[i] as f64);
            }
        }
    }
}

struct EpochRunner<'a> {
    phys: PhysicsSetup<'a>,
    cfg: &'a TrainConfig,
    weights: LossWeights,
    train: Vec<PreparedSample>,
    validation: Vec<PreparedSample>,
    validation_idx: Vec<usize>,
    sampler: SparseSampler,
    compute: StageMask,
}

impl EpochRunner<'_> {
    fn run(
        &mut self,
        model: &mut SurrogateModel,
        stage: Stage,
        epochs: usize,
        lr: f64,
        history: &mut LossHistory,
    ) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        model.stage = stage;
        let mut opt = Optimizers::new(model, lr);
        let grid_len = self.phys.grid_points.len();
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        for _ in 0..epochs {
            let epoch = history.last_epoch() + 1;
            order.sort_unstable();
            order.shuffle(&mut stream_rng(self.cfg.seed ^ SHUFFLE_SALT, epoch as u64));
            let mut means = EpochMeans::default();
            for chunk in order.chunks(self.cfg.batch_size) {
                let batch: Vec<&PreparedSample> = chunk.iter().map(|&i| &self.train[i]).collect();
                let idx = self.sampler.sample(grid_len);
                let ev = evaluate_batch(model, &self.phys, &batch, &self.weights, stage, &idx, self.compute, true)?;
                if !ev.objective.is_finite() {
                    return Err(diverged(epoch, history));
                }
                means.add(&ev.values, batch.len());
                opt.apply(model, ev.grads.as_ref().expect("gradients requested"), stage)?;
            }
            means.record(history, epoch, Split::Train);
            if !self.validation.is_empty() {
                let mut vmeans = EpochMeans::default();
                for chunk in self.validation.chunks(self.cfg.batch_size) {
                    let batch: Vec<&PreparedSample> = chunk.iter().collect();
                    let ev = evaluate_batch(
                        model,
                        &self.phys,
                        &batch,
                        &self.weights,
                        stage,
                        &self.validation_idx,
                        self.compute,
                        false,
                    )?;
                    if !ev.objective.is_finite() {
                        return Err(diverged(epoch, history));
                    }
                    vmeans.add(&ev.values, batch.len());
                }
                vmeans.record(history, epoch, Split::Validation);
            }
        }
        Ok(())
    }
}

fn diverged(epoch: usize, history: &LossHistory) -> Error {
    Error::Diverged {
        epoch,
        history: Box::new(history.clone()),
    }
}

/// A randomly initialised surrogate sized for `dataset`.
pub fn init_model(dataset: &Dataset, arch: Option<SurrogateArch>, seed: u64) -> Result<SurrogateModel> {
    let spec = &dataset.manifest.spec;
    let grid = spec.grid()?;
    let arch = arch.unwrap_or_else(|| SurrogateArch::desk(2 * grid.len(), 2 * spec.n_scatterers()));
    if arch.input_dim != 2 * grid.len() || arch.n_coords != 2 * spec.n_scatterers() {
        return Err(Error::Shape("architecture does not match the dataset".into()));
    }
    SurrogateModel::new(arch, dataset.norm_stats()?.clone(), &mut stream_rng(seed, 0))
}

/// Runs stage I then stage II, appending one row per epoch, split and loss.
pub fn train(
    model: &mut SurrogateModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    route: &GreensRoute,
) -> Result<LossHistory> {
    cfg.validate()?;
    let spec = &dataset.manifest.spec;
    let grid_points = spec.grid()?.points();
    let prepare = |recs: Vec<&SampleRecord>| -> Result<Vec<PreparedSample>> {
        recs.into_par_iter()
            .map(|r| PreparedSample::from_record(spec, model, r))
            .collect()
    };
    let train_set = prepare(dataset.train_records())?;
    if train_set.is_empty() {
        return Err(Error::InvalidParameter("no training samples".into()));
    }
    let validation = prepare(dataset.validation_records())?;
    let mut runner = EpochRunner {
        phys: PhysicsSetup::new(spec, route, &grid_points),
        cfg,
        weights: cfg.effective_weights(),
        train: train_set,
        validation,
        validation_idx: SparseSampler::new(cfg.sparse_points, cfg.seed ^ VALIDATION_SALT).sample(grid_points.len()),
        sampler: SparseSampler::new(cfg.sparse_points, cfg.seed),
        compute: StageMask::ALL,
    };
    let mut history = LossHistory::default();
    runner.run(model, Stage::One, cfg.epochs_stage1, cfg.lr_stage1, &mut history)?;
    history.stage_boundary = Some(cfg.epochs_stage1);
    runner.run(model, Stage::Two, cfg.epochs_stage2, cfg.lr_stage2, &mut history)?;
    Ok(history)
}

/// Forcing and wavenumber the synthetic targets are paired with: the
/// nominal source location at the middle of the wavenumber range.
pub fn synthetic_conditions(spec: &ProblemSpec) -> Result<(f64, IncidentForce)> {
    let k = 0.5 * (spec.k_range[0] + spec.k_range[1]);
    Ok((k, IncidentForce::new(spec.forcing.nominal, spec.forcing.amplitude)?))
}

/// Continues training a stage-II model against synthetic `|psi|` targets
/// with the sparse loss alone.
pub fn transfer_learn(
    model: &mut SurrogateModel,
    spec: &ProblemSpec,
    targets: &[FieldGrid],
    cfg: &TrainConfig,
    route: &GreensRoute,
) -> Result<LossHistory> {
    cfg.validate()?;
    if !matches!(model.stage, Stage::Two | Stage::Transfer) {
        return Err(Error::StageMismatch(format!(
            "transfer learning needs a model trained through stage II, got {:?}",
            model.stage
        )));
    }
    if targets.is_empty() {
        return Err(Error::InvalidParameter("no synthetic targets".into()));
    }
    let grid = spec.grid()?;
    let (k, force) = synthetic_conditions(spec)?;
    let fwd = spec.model(k, route)?;
    let (incident, _) = fwd.eval_field_grid(&Cluster::empty(), &force, &grid)?;
    let samples: Vec<PreparedSample> = targets
        .iter()
        .map(|t| {
            if t.spec != grid {
                return Err(Error::Shape("synthetic target raster does not match the problem grid".into()));
            }
            Ok(PreparedSample {
                input: model.norm.model_input(&incident.values, &t.values),
                coords: Vec::new(),
                k,
                force,
                truth: None,
                target: t.values.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let grid_points = grid.points();
    let mut runner = EpochRunner {
        phys: PhysicsSetup::new(spec, route, &grid_points),
        cfg,
        weights: cfg.effective_weights(),
        train: samples,
        validation: Vec::new(),
        validation_idx: Vec::new(),
        sampler: SparseSampler::new(cfg.sparse_points, cfg.seed),
        compute: Stage::Transfer.mask(),
    };
    let mut history = LossHistory::default();
    runner.run(model, Stage::Transfer, cfg.epochs_transfer, cfg.lr_transfer, &mut history)?;
    Ok(history)
}
