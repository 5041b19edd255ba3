//! Execution of each command into a staging directory.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use flexscatter::dataset::{encode_field_grid, read_field_grid, Dataset};
use flexscatter::gradcheck::{check_instance, rows_csv, CheckRow};
use flexscatter::grid::FieldGrid;
use flexscatter::hyperopt::{normalize_loss_weights, run_stage, TrainingObjective};
use flexscatter::inverse::{
    clamp_for_solver, init_model, invert_direct, relative_field_error, train, transfer_learn, SurrogateArch,
    SurrogateModel,
};
use flexscatter::losses::LossScales;
use flexscatter::plate::GreensRoute;
use flexscatter::problems::{
    channel_profile, eval_on_circle, incident_channel_sites, preset, random_synthetic, stream_rng, synth_incident, Instance,
    LatinHypercube, ProblemClass, ProblemSpec, SYNTH_CHANNEL_EXPONENT, SYNTH_CHANNEL_RADIUS,
};
use flexscatter::scatter::{Cluster, IncidentForce};
use flexscatter::{Point, Rect};
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::command::*;
use crate::config::{route_for, ClusterInput, LossScaling, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{record_input, FileRecord, RunManifest, Staging, TOOL};

/// Largest analytic/finite-difference discrepancy `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const SIDECAR: &str = "solve.json";

/// Parameters of a `solve` run stored next to its field files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSidecar {
    pub class: ProblemClass,
    pub k: f64,
    pub omega: f64,
    pub x0: Point,
    pub f0: f64,
    pub positions: Vec<Point>,
    pub window: Rect,
    pub resolution: [usize; 2],
    pub energy: [f64; 2],
}

pub fn read_sidecar(dir: &Path) -> CliResult<SolveSidecar> {
    let p = dir.join(SIDECAR);
    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

struct Run<'a> {
    cfg: &'a RunConfig,
    staging: Staging,
    inputs: Vec<FileRecord>,
    summary: serde_json::Map<String, Value>,
}

impl Run<'_> {
    fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(record_input(path)?);
        Ok(())
    }

    fn grid(&mut self, name: &str, g: &FieldGrid) -> CliResult<()> {
        self.staging.write(name, &encode_field_grid(g))
    }

    fn json(&mut self, name: &str, v: &impl Serialize) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(v).expect("serializable");
        s.push('\n');
        self.staging.write(name, s.as_bytes())
    }

    fn note(&mut self, key: &str, v: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(v).expect("serializable"));
    }
}

/// Runs `cmd` with `cfg`, leaving its outputs and manifest in `out`. On
/// failure nothing is left behind.
pub fn execute(cmd: &Command, cfg: &RunConfig, out: &Path) -> CliResult<RunManifest> {
    let mut run = Run {
        cfg,
        staging: Staging::new(out)?,
        inputs: Vec::new(),
        summary: serde_json::Map::new(),
    };
    match cmd {
        Command::Solve(a) => solve(&mut run, a)?,
        Command::Dataset(a) => dataset(&mut run, a)?,
        Command::Synth(a) => synth(&mut run, a)?,
        Command::Train(a) => train_cmd(&mut run, a)?,
        Command::Invert(a) => invert(&mut run, a)?,
        Command::Hyperopt(a) => hyperopt(&mut run, a)?,
        Command::Gradcheck(a) => gradcheck(&mut run, a)?,
        Command::Circle(a) => circle(&mut run, a)?,
    }
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        command: cmd.clone(),
        config: cfg.clone(),
        inputs: run.inputs,
        outputs: run.staging.records()?,
        unhashed: run.staging.unhashed(),
        summary: Value::Object(run.summary),
    };
    run.staging.commit(&manifest)?;
    Ok(manifest)
}

fn instance_from(spec: &ProblemSpec, c: &ClusterInput) -> CliResult<Instance> {
    let k = c.k.unwrap_or(0.5 * (spec.k_range[0] + spec.k_range[1]));
    Ok(Instance {
        k,
        cluster: spec.cluster_at(k, &c.positions)?,
        force: IncidentForce::new(
            c.x0.unwrap_or(spec.forcing.nominal),
            c.f0.unwrap_or(spec.forcing.amplitude),
        )?,
    })
}

/// The instance a command acts on: a cluster file, the configured cluster
/// or the seed's Latin-hypercube draw.
fn pick_instance(run: &mut Run, file: Option<&Path>) -> CliResult<Instance> {
    let cfg = run.cfg;
    let spec = &cfg.problem;
    if let Some(path) = file {
        run.input(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let c: ClusterInput =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return instance_from(spec, &c);
    }
    if let Some(c) = &cfg.cluster {
        return instance_from(spec, c);
    }
    Ok(spec.realize(&LatinHypercube::new(spec.design_dim(), 1, cfg.seed).point(0))?)
}

fn solve(run: &mut Run, a: &SolveArgs) -> CliResult<()> {
    let spec = run.cfg.problem.clone();
    let inst = pick_instance(run, a.cluster.as_deref())?;
    let route = run.cfg.route()?;
    let model = spec.model(inst.k, &route)?;
    let ch = model.eval_field_channels(&inst.cluster, &inst.force, &spec.grid()?)?;
    let energy = model.interaction_energy(&inst.cluster, &inst.force)?;
    run.grid("incident_real.msfg", &ch.incident_real)?;
    run.grid("scattered_real.msfg", &ch.scattered_real)?;
    run.grid("amplitude.msfg", &ch.amplitude)?;
    let sidecar = SolveSidecar {
        class: spec.class,
        k: inst.k,
        omega: spec.context(inst.k)?.omega,
        x0: inst.force.location,
        f0: inst.force.amplitude,
        positions: inst.cluster.positions(),
        window: spec.window,
        resolution: spec.resolution,
        energy: [energy.re, energy.im],
    };
    run.json(SIDECAR, &sidecar)?;
    run.note("k", inst.k);
    run.note("n_scatterers", inst.cluster.len());
    run.note("max_amplitude", ch.amplitude.max_abs());
    Ok(())
}

fn dataset(run: &mut Run, a: &DatasetArgs) -> CliResult<()> {
    let route = run.cfg.route()?;
    let mut ds = Dataset::generate(&run.cfg.problem, a.n, run.cfg.seed, &route)?;
    let written = ds.save(run.staging.path())?;
    for p in written {
        let name = p.file_name().expect("file path").to_string_lossy().into_owned();
        run.staging.adopt(&name);
    }
    run.note("n_samples", ds.manifest.n_samples);
    run.note("n_train", ds.manifest.train.len());
    run.note("n_validation", ds.manifest.validation.len());
    Ok(())
}

#[derive(Serialize)]
struct SynthEntry {
    file: String,
    description: String,
    channels: Option<Vec<Point>>,
    /// The target evaluated exactly at each channel centre.
    channel_values: Option<Vec<f64>>,
    max_value: f64,
}

fn synth(run: &mut Run, a: &SynthArgs) -> CliResult<()> {
    let cfg = run.cfg;
    let spec = &cfg.problem;
    if spec.class != a.kind.class() {
        return Err(CliError::Config(format!(
            "synthetic {} targets need the {} preset",
            a.kind.class().name(),
            a.kind.class().name()
        )));
    }
    if a.count == 0 {
        return Err(CliError::Config("--count must be positive".into()));
    }
    let grid = spec.grid()?;
    let targets: Vec<(String, Option<Vec<Point>>, FieldGrid)> = match (a.kind, a.channels) {
        (SynthType::Downstream, Some(_)) => {
            return Err(CliError::Config("--channels applies to incident targets".into()))
        }
        (SynthType::Incident, Some(n)) => {
            if !(1..=9).contains(&n) {
                return Err(CliError::Config(format!("{n} channels (1 to 9 allowed)")));
            }
            (0..a.count)
                .map(|i| {
                    // the window centre always carries a channel
                    let mut sites = incident_channel_sites();
                    let centre = sites.iter().position(|p| *p == [0.0, 0.0]).expect("centre site");
                    sites.swap(0, centre);
                    sites[1..].shuffle(&mut stream_rng(cfg.seed, i as u64 + 1));
                    sites.truncate(n);
                    let f = synth_incident(&sites, SYNTH_CHANNEL_RADIUS, SYNTH_CHANNEL_EXPONENT, &grid)?;
                    Ok((format!("incident channels={n}"), Some(sites), f))
                })
                .collect::<CliResult<_>>()?
        }
        (_, None) => random_synthetic(spec.class, &grid, a.count, cfg.seed)?
            .into_iter()
            .map(|t| (t.description, None, t.field))
            .collect(),
    };
    let mut entries = Vec::with_capacity(targets.len());
    for (i, (description, channels, field)) in targets.into_iter().enumerate() {
        let file = format!("synth_{i:04}.msfg");
        run.grid(&file, &field)?;
        let channel_values = channels.as_ref().map(|cs| {
            cs.iter()
                .map(|p| {
                    cs.iter()
                        .map(|c| channel_profile((p[0] - c[0]).hypot(p[1] - c[1]), SYNTH_CHANNEL_RADIUS, SYNTH_CHANNEL_EXPONENT))
                        .sum()
                })
                .collect()
        });
        entries.push(SynthEntry {
            file,
            description,
            channels,
            channel_values,
            max_value: field.max_abs(),
        });
    }
    run.note("count", entries.len());
    run.json("synth.json", &entries)?;
    Ok(())
}

fn loss_scales(cfg: &RunConfig, spec: &ProblemSpec, route: &GreensRoute) -> CliResult<LossScales> {
    Ok(match cfg.loss_scaling {
        LossScaling::Normalize => normalize_loss_weights(spec, route, cfg.seed)?,
        LossScaling::None => LossScales::default(),
    })
}

fn train_cmd(run: &mut Run, a: &TrainArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let (model, history) = match a.stage {
        TrainStage::Full => {
            let path = a
                .dataset
                .as_deref()
                .ok_or_else(|| CliError::Config("full training needs --dataset".into()))?;
            let ds = Dataset::load(path)?;
            let manifest_path = Dataset::manifest_path(path);
            run.input(&manifest_path)?;
            let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
            for s in &ds.manifest.shards {
                run.input(&dir.join(&s.file))?;
            }
            let spec = ds.manifest.spec.clone();
            if spec.class != run.cfg.problem.class {
                return Err(CliError::Config(format!(
                    "dataset is {}, configuration is {}",
                    spec.class.name(),
                    run.cfg.problem.class.name()
                )));
            }
            let route = route_for(&spec, run.cfg.greens)?;
            let mut cfg = run.cfg.train.clone();
            cfg.scales = loss_scales(run.cfg, &spec, &route)?;
            run.note("loss_scales", cfg.scales);
            let mut model = init_model(&ds, run.cfg.architecture.clone(), run.cfg.seed)?;
            let h = train(&mut model, &ds, &cfg, &route)?;
            (model, h)
        }
        TrainStage::Transfer => {
            let path = a
                .model
                .as_deref()
                .ok_or_else(|| CliError::Config("transfer learning needs --model".into()))?;
            run.input(path)?;
            let mut model = SurrogateModel::load(path)?;
            let spec = run.cfg.problem.clone();
            let route = run.cfg.route()?;
            let grid = spec.grid()?;
            let targets: Vec<FieldGrid> = random_synthetic(spec.class, &grid, a.count, run.cfg.seed)?
                .into_iter()
                .map(|t| t.field)
                .collect();
            let h = transfer_learn(&mut model, &spec, &targets, &run.cfg.train, &route)?;
            (model, h)
        }
    };
    let seconds = t0.elapsed().as_secs_f64();
    let ckpt = run.staging.file("model.msck");
    model.save(&ckpt)?;
    run.staging.adopt("model.msck");
    run.staging.write("history.csv", history.to_csv().as_bytes())?;
    run.staging
        .write_unhashed("timing.csv", format!("phase,wall_seconds\ntrain,{seconds:.6}\n").as_bytes())?;
    run.note("n_params", model.n_params());
    run.note("stage", model.stage);
    run.note("epochs", history.last_epoch());
    Ok(())
}

/// A target `|psi|` with the conditions it was produced under.
struct Target {
    k: f64,
    force: IncidentForce,
    incident: FieldGrid,
    amplitude: FieldGrid,
    truth: Option<Cluster>,
}

fn load_target(run: &mut Run, dir: Option<&Path>, route: &GreensRoute) -> CliResult<Target> {
    let spec = run.cfg.problem.clone();
    match dir {
        Some(dir) => {
            let side = read_sidecar(dir)?;
            if side.class != spec.class || side.window != spec.window || side.resolution != spec.resolution {
                return Err(CliError::Config("target does not match the configured problem".into()));
            }
            for name in [SIDECAR, "incident_real.msfg", "amplitude.msfg"] {
                run.input(&dir.join(name))?;
            }
            let truth = spec.cluster_at(side.k, &side.positions)?;
            Ok(Target {
                k: side.k,
                force: IncidentForce::new(side.x0, side.f0)?,
                incident: read_field_grid(&dir.join("incident_real.msfg"))?,
                amplitude: read_field_grid(&dir.join("amplitude.msfg"))?,
                truth: Some(truth),
            })
        }
        None => {
            let inst = pick_instance(run, None)?;
            let model = spec.model(inst.k, route)?;
            let (incident, amplitude) = model.eval_field_grid(&inst.cluster, &inst.force, &spec.grid()?)?;
            run.grid("target_amplitude.msfg", &amplitude)?;
            Ok(Target {
                k: inst.k,
                force: inst.force,
                incident,
                amplitude,
                truth: Some(inst.cluster),
            })
        }
    }
}

fn positions_csv(pos: &[Point]) -> String {
    let mut s = String::from("scatterer,x,y\n");
    for (i, p) in pos.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", p[0], p[1]);
    }
    s
}

fn invert(run: &mut Run, a: &InvertArgs) -> CliResult<()> {
    let spec = run.cfg.problem.clone();
    let route = run.cfg.route()?;
    let target = load_target(run, a.target.as_deref(), &route)?;
    let fwd = spec.model(target.k, &route)?;
    let cluster = match a.mode {
        InvertMode::Direct => {
            let truth_flat = target.truth.as_ref().map(|c| c.flat_positions());
            let dcfg = run.cfg.direct_for(truth_flat.as_deref())?;
            let res = invert_direct(
                &spec,
                target.k,
                &target.force,
                &target.amplitude,
                target.truth.as_ref(),
                &dcfg,
                &route,
            )?;
            run.note("objective", res.objective);
            run.note("best_start", res.best_start);
            run.json("inversion.json", &res)?;
            res.cluster
        }
        InvertMode::Surrogate => {
            let path = a
                .model
                .as_deref()
                .ok_or_else(|| CliError::Config("surrogate inversion needs --model".into()))?;
            run.input(path)?;
            let model = SurrogateModel::load(path)?;
            let input = model.norm.model_input(&target.incident.values, &target.amplitude.values);
            let x = Array2::from_shape_vec((1, input.len()), input)
                .map_err(|e| CliError::Config(format!("model input: {e}")))?;
            let (_, coords) = model.predict(x.view())?;
            let (pts, _) = clamp_for_solver(&spec.scatter_domain.bounding_box(), &coords[0]);
            let cluster = spec.cluster_at(target.k, &pts)?;
            run.json("inversion.json", &json!({ "raw_prediction": coords[0], "positions": pts }))?;
            cluster
        }
    };
    let err = relative_field_error(&fwd, &cluster, &target.force, &target.amplitude)?;
    let (_, rec) = fwd.eval_field_grid(&cluster, &target.force, &spec.grid()?)?;
    run.grid("reconstructed_amplitude.msfg", &rec)?;
    run.staging.write("positions.csv", positions_csv(&cluster.positions()).as_bytes())?;
    run.note("relative_field_error", err);
    if let Some(t) = &target.truth {
        let d: f64 = t
            .flat_positions()
            .iter()
            .zip(cluster.flat_positions())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        run.note("coords_squared_error", d);
    }
    Ok(())
}

fn hyperopt(run: &mut Run, a: &HyperoptArgs) -> CliResult<()> {
    let spec = run.cfg.problem.clone();
    let route = run.cfg.route()?;
    let ds = Dataset::generate(&spec, a.n, run.cfg.seed, &route)?;
    let grid = spec.grid()?;
    let arch = run
        .cfg
        .architecture
        .clone()
        .unwrap_or_else(|| SurrogateArch::desk(2 * grid.len(), 2 * spec.n_scatterers()));
    let mut base = run.cfg.train.clone();
    base.epochs_stage1 = run.cfg.hyperopt.epochs_stage1;
    base.epochs_stage2 = run.cfg.hyperopt.epochs_stage2;
    let scales = loss_scales(run.cfg, &spec, &route)?;
    let space = run.cfg.hyperopt.space.clone().unwrap_or_else(|| a.stage.default_space());
    let objective = TrainingObjective {
        stage: a.stage,
        dataset: &ds,
        base,
        arch,
        route: &route,
        scales,
    };
    let result = run_stage(a.stage, &space, a.trials, run.cfg.seed, |p| objective.evaluate(&space, p))?;
    run.staging.write("trials.csv", result.trials_csv().as_bytes())?;
    let mut curve = String::from("trial,best_objective\n");
    for (i, b) in result.best_so_far().iter().enumerate() {
        let _ = writeln!(curve, "{i},{b:e}");
    }
    run.staging.write("best_so_far.csv", curve.as_bytes())?;
    run.staging.write_unhashed("timing.csv", result.timing_csv().as_bytes())?;
    let best = json!({
        "stage": result.stage,
        "names": result.names,
        "best_index": result.best_index,
        "best_params": result.best_params,
        "best_objective": result.best_objective,
    });
    run.json("best.json", &best)?;
    run.note("best_objective", result.best_objective);
    run.note("best_params", &result.best_params);
    Ok(())
}

fn gradcheck(run: &mut Run, a: &GradcheckArgs) -> CliResult<()> {
    if a.n == 0 || a.classes.is_empty() {
        return Err(CliError::Config("gradcheck needs at least one instance and class".into()));
    }
    let mut rows: Vec<CheckRow> = Vec::new();
    for &class in &a.classes {
        let spec = if class == run.cfg.problem.class {
            run.cfg.problem.clone()
        } else {
            let mut s = preset(class);
            s.resolution = run.cfg.problem.resolution;
            s
        };
        let route = route_for(&spec, run.cfg.greens)?;
        for i in 0..a.n {
            rows.extend(check_instance(&spec, &route, run.cfg.seed, i)?);
        }
    }
    run.staging.write("gradcheck.csv", rows_csv(&rows).as_bytes())?;
    let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    let mut by_quantity = serde_json::Map::new();
    for q in flexscatter::gradcheck::Quantity::ALL {
        let w = rows.iter().filter(|r| r.quantity == q).map(|r| r.rel_error).fold(0.0, f64::max);
        by_quantity.insert(q.name().to_string(), json!(w));
    }
    run.note("worst_rel_error", worst);
    run.note("worst_by_quantity", Value::Object(by_quantity));
    run.note("tolerance", GRADCHECK_TOLERANCE);
    run.note("passed", worst <= GRADCHECK_TOLERANCE);
    Ok(())
}

fn circle(run: &mut Run, a: &CircleArgs) -> CliResult<()> {
    let spec = run.cfg.problem.clone();
    let inst = pick_instance(run, a.cluster.as_deref())?;
    let route = run.cfg.route()?;
    let model = spec.model(inst.k, &route)?;
    let settings = &run.cfg.circle;
    let center = settings.center.unwrap_or_else(|| spec.scatter_domain.bounding_box().center());
    let mut csv = String::from("radius,angle,x,y,scattered_abs,total_abs\n");
    let mut means = Vec::with_capacity(settings.radii.len());
    for &r in &settings.radii {
        let samples = eval_on_circle(&model, &inst.cluster, &inst.force, center, r, settings.angles)?;
        for s in &samples {
            let _ = writeln!(
                csv,
                "{r},{},{},{},{},{}",
                s.angle, s.point[0], s.point[1], s.scattered_abs, s.total_abs
            );
        }
        means.push(samples.iter().map(|s| s.scattered_abs).sum::<f64>() / samples.len() as f64);
    }
    run.staging.write("circle.csv", csv.as_bytes())?;
    run.note("center", center);
    run.note("mean_scattered_abs", means);
    Ok(())
}
