//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if a criterion fails that is not listed in `KNOWN_RED`.
//!
//! `cargo test --test acceptance -- 3 7` runs a subset.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use flexscatter::dataset::Dataset;
use flexscatter::gradcheck::check_instance;
use flexscatter::hyperopt::{
    expected_improvement, normalize_loss_weights, run_stage, GpState, HyperParam, HyperSpace, HyperStage, Scale,
};
use flexscatter::inverse::{
    evaluate_batch, init_model, invert_direct, train, Activation, DirectConfig, LossName, PhysicsSetup,
    PreparedSample, Split, Stage, StartMode, SurrogateArch, TrainConfig,
};
use flexscatter::losses::{LossWeights, StageMask};
use flexscatter::plate::{greens, GreensRoute};
use flexscatter::problems::{
    channel_profile, preset, sample_cluster, solve_instance, stream_rng, synth_downstream, LatinHypercube,
    ProblemClass,
};
use flexscatter::scatter::{Cluster, ForwardModel};
use flexscatter::specfun::{gbar, gbar_prime, hankel1_0, hankel1_1, mod_bessel_k};
use flexscatter::{Point, Result};
use num_complex::Complex64;
use rand::Rng;

/// Criteria that fail at desk scale, with the reason recorded alongside the
/// project notes. They still run and still print FAIL.
const KNOWN_RED: &[usize] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

// 1. special functions against the mpmath oracle
fn c1() -> Result<Outcome> {
    let csv = include_str!("../../core/tests/data/bessel_oracle.csv");
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for line in csv.lines().skip(1).take(200) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let x = v[0];
        assert!((1e-6 * (1.0 - 1e-12)..=300.0 * (1.0 + 1e-12)).contains(&x));
        let h0 = Complex64::new(v[1], v[3]);
        let h1 = Complex64::new(v[2], v[4]);
        worst = worst
            .max(rel(hankel1_0(x)?, h0))
            .max(rel(hankel1_1(x)?, h1))
            .max((mod_bessel_k(0, x)? - v[5]).abs() / v[5])
            .max((mod_bessel_k(1, x)? - v[6]).abs() / v[6]);
        count += 1;
    }
    let e = t.elapsed();
    outcome(count == 200 && worst <= 1e-10 && within(e, 1.0), format!("{count} arguments, worst relative error {worst:.2e}, {e:.2?}"))
}

// 2. the kernel limit at the origin and its derivative
fn c2() -> Result<Outcome> {
    let t = Instant::now();
    let limit = (gbar(1e-8)? - Complex64::new(0.0, 1.0)).norm();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let r = 1e-2 * 1e4f64.powf(i as f64 / 99.0);
        let h = 1e-5 * r.min(1.0);
        let fd = (gbar(r + h)? - gbar(r - h)?) / (2.0 * h);
        worst = worst.max(rel(fd, gbar_prime(r)?));
    }
    let e = t.elapsed();
    outcome(
        limit <= 1e-6 && worst <= 1e-6 && within(e, 1.0),
        format!("|g(1e-8) - i| = {limit:.1e}, derivative worst {worst:.2e} over 100 radii, {e:.2?}"),
    )
}

// 3. forward-solver identities
fn c3() -> Result<Outcome> {
    let t = Instant::now();
    let (mut self_c, mut single): (f64, f64) = (0.0, 0.0);
    let mut reciprocal = true;
    for class in ProblemClass::ALL {
        let spec = preset(class);
        let mut rng = stream_rng(31, class as u64);
        for _ in 0..50 {
            let inst = sample_cluster(&spec, &mut rng)?;
            let m = ForwardModel::analytic(spec.context(inst.k)?);
            let (c, f) = (&inst.cluster, &inst.force);
            let (a, _) = m.assemble_system(c, f)?;
            reciprocal &= a == a.transpose();
            let pos = c.positions();
            for (i, &p) in pos.iter().enumerate() {
                let q = pos[(i + 1) % pos.len()];
                reciprocal &= greens(&m.ctx, p, q) == greens(&m.ctx, q, p);
            }
            let sol = m.solve_forces(c, f)?;
            let psi = m.eval_field(c, f, &sol, &pos)?;
            let mu = c.transmission(m.ctx.omega)?;
            for i in 0..c.len() {
                self_c = self_c.max(rel(psi[i], sol.forces[i] / mu[i]));
            }
            let lone = Cluster::new(vec![c.scatterers[0]])?;
            let mu0 = lone.transmission(m.ctx.omega)?[0];
            let closed = f.amplitude * greens(&m.ctx, pos[0], f.location) / (1.0 / mu0 - m.ctx.self_term());
            single = single.max(rel(m.solve_forces(&lone, f)?.forces[0], closed));
        }
    }
    let e = t.elapsed();
    outcome(
        self_c <= 1e-9 && reciprocal && single <= 1e-12 && within(e, 30.0),
        format!("self-consistency {self_c:.1e}, reciprocity exact: {reciprocal}, single scatterer {single:.1e}, {e:.2?}"),
    )
}

// 4. spline route against the analytic route
fn c4() -> Result<Outcome> {
    let t = Instant::now();
    let (mut field, mut kernel): (f64, f64) = (0.0, 0.0);
    for class in ProblemClass::ALL {
        let spec = preset(class);
        let route = spec.spline_route()?;
        let inst = spec.realize(&LatinHypercube::new(spec.design_dim(), 1, 5).point(0))?;
        let pts = spec.grid()?.points();
        let eval = |route: &GreensRoute| -> Result<Vec<Complex64>> {
            let m = spec.model(inst.k, route)?;
            let sol = m.solve_forces(&inst.cluster, &inst.force)?;
            m.eval_field(&inst.cluster, &inst.force, &sol, &pts)
        };
        let (s, a) = (eval(&route)?, eval(&GreensRoute::Analytic)?);
        let peak = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = s.iter().zip(&a).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        field = field.max(diff / peak);
        let GreensRoute::Spline(splines) = &route else { unreachable!() };
        for sp in [&splines.incident, &splines.scattering] {
            let (lo, hi) = sp.fit_domain;
            for i in 0..2000 {
                let x = lo.max(1e-6) * (hi / lo.max(1e-6)).powf(i as f64 / 1999.0);
                kernel = kernel.max(rel(sp.eval_scaled(x)?, gbar(x)?));
            }
        }
    }
    let e = t.elapsed();
    outcome(
        field <= 1e-6 && kernel <= 1e-6 && within(e, 30.0),
        format!("field error {field:.1e} of peak, kernel relative error {kernel:.1e}, {e:.2?}"),
    )
}

fn surrogate_fd_error() -> Result<f64> {
    let mut spec = preset(ProblemClass::NearFar);
    spec.resolution = [3, 3];
    let ds = Dataset::generate(&spec, 3, 11, &GreensRoute::Analytic)?;
    let arch = SurrogateArch {
        input_dim: 18,
        encoder_hidden: vec![4],
        latent: 3,
        head_hidden: vec![4],
        n_coords: 10,
        act_encoder: Activation::Elu,
        act_head: Activation::Elu,
    };
    let mut model = init_model(&ds, Some(arch), 4)?;
    assert!(model.n_params() <= 500);
    for p in &mut model.head.params {
        *p *= 0.1;
    }
    let pts = spec.grid()?.points();
    let route = GreensRoute::Analytic;
    let phys = PhysicsSetup::new(&spec, &route, &pts);
    let samples: Vec<PreparedSample> =
        ds.records[..2].iter().map(|r| PreparedSample::from_record(&spec, &model, r)).collect::<Result<_>>()?;
    let batch: Vec<&PreparedSample> = samples.iter().collect();
    let idx = [0, 4, 7];
    let w = LossWeights::new(0.7, 0.3, 20.0, 0.05)?;
    let mut worst: f64 = 0.0;
    for stage in [Stage::One, Stage::Two] {
        let ev = evaluate_batch(&model, &phys, &batch, &w, stage, &idx, StageMask::ALL, true)?;
        let g = ev.grads.expect("gradient requested").flatten(model.decoder.n_params());
        let mut params = model.flat_params();
        let h = 1e-6;
        for p in 0..params.len() {
            let orig = params[p];
            let mut at = |v: f64| -> Result<f64> {
                params[p] = v;
                let mut m = model.clone();
                m.set_flat_params(&params)?;
                Ok(evaluate_batch(&m, &phys, &batch, &w, stage, &idx, StageMask::ALL, false)?.objective)
            };
            let fd = (at(orig + h)? - at(orig - h)?) / (2.0 * h);
            params[p] = orig;
            worst = worst.max((fd - g[p]).abs() / (1e-3 * ev.objective.abs()).max(fd.abs()));
        }
    }
    Ok(worst)
}

// 5. analytic gradients against central differences
fn c5() -> Result<Outcome> {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for class in ProblemClass::ALL {
        let spec = preset(class);
        let route = spec.spline_route()?;
        for i in 0..20 {
            for r in check_instance(&spec, &route, 7, i)? {
                worst = worst.max(r.rel_error);
                rows += 1;
            }
        }
    }
    let net = surrogate_fd_error()?;
    let e = t.elapsed();
    outcome(
        rows == 240 && worst <= 1e-5 && net <= 1e-4 && within(e, 300.0),
        format!("{rows} physics checks worst {worst:.1e}, surrogate backprop worst {net:.1e}, {e:.2?}"),
    )
}

fn rotate(p: Point, about: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (p[0] - about[0], p[1] - about[1]);
    [about[0] + c * dx - s * dy, about[1] + s * dx + c * dy]
}

// 6. interaction energy under rigid rotations about the forcing point
fn c6() -> Result<Outcome> {
    let spec = preset(ProblemClass::NearFar);
    let mut rng = stream_rng(61, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let inst = sample_cluster(&spec, &mut rng)?;
        let m = ForwardModel::analytic(spec.context(inst.k)?);
        let e0 = m.interaction_energy(&inst.cluster, &inst.force)?;
        let angle = rng.random_range(0.0..2.0 * PI);
        let x0 = inst.force.location;
        let turned: Vec<Point> = inst.cluster.positions().iter().map(|&p| rotate(p, x0, angle)).collect();
        let e1 = m.interaction_energy(&inst.cluster.with_positions(&turned)?, &inst.force)?;
        worst = worst.max(rel(e1, e0));
    }
    outcome(worst <= 1e-10, format!("20 rotations, worst |dE|/|E| {worst:.1e}"))
}

// 7. synthetic target generators
fn c7() -> Result<Outcome> {
    let grid = flexscatter::grid::GridSpec::new(flexscatter::Rect::new(-10.0, 10.0, -10.0, 10.0), 41, 41)?;
    let origin = [-10.0, 0.0];
    let phi = 0.0;
    let f = synth_downstream(phi, origin, 40, &grid);
    // row 20 is y = 0, on the ray from the origin along phi
    let on_ray = (1..41).map(|c| (f.get(c, 20) - 41.0).abs()).fold(0.0, f64::max);
    let mut dirichlet: f64 = 0.0;
    for (i, &x) in grid.points().iter().enumerate() {
        let d = (x[1] - origin[1]).atan2(x[0] - origin[0]) - phi;
        let brute: Complex64 = (0..=40).map(|h| Complex64::from_polar(1.0, h as f64 * d)).sum();
        let closed = if d.abs() < 1e-12 { 41.0 } else { ((41.0 * d / 2.0).sin() / (d / 2.0).sin()).abs() };
        dirichlet = dirichlet.max((brute.norm() - closed).abs()).max((f.values[i] - closed).abs());
    }
    let r = 5.0;
    let profile = [(0.0, 1.0), (r, 0.5), (2.0 * r, 1.0 / 17.0)]
        .iter()
        .map(|&(d, want)| (channel_profile(d, r, 4.0) - want).abs())
        .fold(0.0, f64::max);
    outcome(
        on_ray <= 1e-10 && dirichlet <= 1e-10 && profile <= 1e-12,
        format!("on-ray {on_ray:.1e}, Dirichlet closed form {dirichlet:.1e}, channel profile {profile:.1e}"),
    )
}

// 8. direct inverse design from a start within 2 m of the truth
fn c8() -> Result<Outcome> {
    let t = Instant::now();
    let spec = preset(ProblemClass::NearFar);
    let route = spec.spline_route()?;
    let lhs = LatinHypercube::new(spec.design_dim(), 10, 80);
    let mut errors = Vec::new();
    for i in 0..10 {
        let inst = spec.realize(&lhs.point(i))?;
        let target = solve_instance(&spec, &route, &inst)?.amplitude;
        let cfg = DirectConfig {
            starts: 1,
            start: StartMode::Around {
                center: inst.cluster.flat_positions(),
                radius: 2.0,
            },
            seed: i as u64,
            ..DirectConfig::default()
        };
        let r = invert_direct(&spec, inst.k, &inst.force, &target, None, &cfg, &route)?;
        errors.push(r.relative_field_error);
    }
    let good = errors.iter().filter(|&&e| e < 0.05).count();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    let e = t.elapsed();
    outcome(good >= 9 && within(e, 600.0), format!("{good}/10 below 5% (worst {:.2}%), {e:.2?}", 100.0 * worst))
}

// 9. desk-scale two-stage training
fn c9() -> Result<Outcome> {
    let t = Instant::now();
    let spec = preset(ProblemClass::NearFar);
    let route = spec.spline_route()?;
    let ds = Dataset::generate(&spec, 2000, 0, &route)?;
    let mut cfg = TrainConfig::preset(ProblemClass::NearFar);
    cfg.epochs_stage1 = 12;
    cfg.epochs_stage2 = 8;
    cfg.scales = normalize_loss_weights(&spec, &route, 0)?;
    let mut model = init_model(&ds, None, 0)?;
    let h = train(&mut model, &ds, &cfg, &route)?;
    let v = |epoch, loss| h.value(epoch, Split::Validation, loss).unwrap_or(f64::NAN);
    let coords = v(12, LossName::MseCoords) / v(1, LossName::MseCoords);
    let sparse = v(20, LossName::Sparse) / v(12, LossName::Sparse);
    let e = t.elapsed();
    outcome(
        coords <= 0.5 && sparse <= 0.7 && within(e, 1800.0),
        format!(
            "validation coordinate MSE {:.0} -> {:.0} m² (ratio {coords:.2}, need <= 0.50), sparse loss ratio over stage II {sparse:.2} (need <= 0.70), {e:.0?}",
            v(1, LossName::MseCoords),
            v(12, LossName::MseCoords)
        ),
    )
}

// 10. hyperparameter search on an injected quadratic
fn c10() -> Result<Outcome> {
    let t = Instant::now();
    let space = HyperSpace::new(vec![
        HyperParam::new("a", 0.0, 1.0, Scale::Linear, false),
        HyperParam::new("b", 0.0, 1.0, Scale::Linear, false),
    ])?;
    let argmin = [0.31, 0.74];
    let r = run_stage(HyperStage::Joint, &space, 50, 10, |p| {
        Ok((p[0] - argmin[0]).powi(2) + 2.0 * (p[1] - argmin[1]).powi(2) + 0.5 * (p[0] - argmin[0]) * (p[1] - argmin[1]))
    })?;
    let miss = (r.best_params[0] - argmin[0]).hypot(r.best_params[1] - argmin[1]);

    let xs = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.3]];
    let ys = vec![1.0, -0.5, 0.25];
    let gp = GpState::fit(xs.clone(), ys.clone())?;
    let interp = xs.iter().zip(&ys).map(|(x, y)| {
        let (m, var) = gp.posterior(x);
        (m - y).abs().max(var)
    });
    let interp = interp.fold(0.0, f64::max);
    let ei_ok = expected_improvement(0.0, 0.0, 1.0) == 1.0
        && expected_improvement(2.0, 0.0, 1.0) == 0.0
        && expected_improvement(2.0, 1.0, 1.0) > 0.0
        && expected_improvement(0.0, 1.0, 1.0) < expected_improvement(0.0, 4.0, 1.0);
    let e = t.elapsed();
    outcome(
        miss <= 0.05 && interp <= 1e-6 && ei_ok && within(e, 60.0),
        format!("argmin missed by {miss:.3} in 50 trials, GP interpolation {interp:.1e}, EI properties hold: {ei_ok}, {e:.2?}"),
    )
}

// 11. finite-difference biharmonic residual of the incident field
fn c11() -> Result<Outcome> {
    let t = Instant::now();
    let spec = preset(ProblemClass::NearFar);
    let k = 0.5;
    let ctx = spec.context(k)?;
    let x0 = [0.0, 0.0];
    let psi = |x: f64, y: f64| greens(&ctx, [x, y], x0);
    let residual = |h: f64| -> f64 {
        let mut worst: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let (x, y) = (12.0 + i as f64, 7.0 + j as f64);
                let p = |a: f64, b: f64| psi(x + a * h, y + b * h);
                let bih = 20.0 * p(0.0, 0.0) - 8.0 * (p(1.0, 0.0) + p(-1.0, 0.0) + p(0.0, 1.0) + p(0.0, -1.0))
                    + 2.0 * (p(1.0, 1.0) + p(1.0, -1.0) + p(-1.0, 1.0) + p(-1.0, -1.0))
                    + p(2.0, 0.0)
                    + p(-2.0, 0.0)
                    + p(0.0, 2.0)
                    + p(0.0, -2.0);
                let res = bih / h.powi(4) - k.powi(4) * p(0.0, 0.0);
                worst = worst.max(res.norm());
                peak = peak.max(k.powi(4) * p(0.0, 0.0).norm());
            }
        }
        worst / peak
    };
    let r: Vec<f64> = [0.4, 0.2, 0.1].iter().map(|&h| residual(h)).collect();
    let orders = [(r[0] / r[1]).log2(), (r[1] / r[2]).log2()];
    let e = t.elapsed();
    outcome(
        orders.iter().all(|&o| o >= 1.7) && within(e, 60.0),
        format!("relative residuals {:.1e}, {:.1e}, {:.1e}; orders {:.2}, {:.2}, {e:.2?}", r[0], r[1], r[2], orders[0], orders[1]),
    )
}

fn cli(args: &[&str]) -> std::result::Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_flexscatter")).args(args).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()))
    }
}

// 12. byte-identical reruns of every command
fn c12() -> Result<Outcome> {
    let root = tempfile::tempdir().expect("temporary directory");
    let dir = |name: &str| -> PathBuf { root.path().join(name) };
    let p = |path: &Path| path.to_str().unwrap().to_string();
    let spec = preset(ProblemClass::Downstream);
    let cfg = dir("small.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "train": {
                "epochs_stage1": 1, "epochs_stage2": 1, "epochs_transfer": 1, "batch_size": 4, "sparse_points": 10,
                "architecture": {
                    "input_dim": 512, "encoder_hidden": [16], "latent": 4, "head_hidden": [8], "n_coords": 2 * spec.n_scatterers(),
                    "act_encoder": "elu", "act_head": "elu"
                }
            },
            "hyperopt": {"epochs_stage1": 1, "epochs_stage2": 1},
            "direct": {"starts": 2, "iterations": 5},
            "circle": {"radii": [3.0, 6.0], "angles": 12}
        })
        .to_string(),
    )
    .expect("write config");
    let common = |name: &str| -> Vec<String> {
        vec!["--preset".into(), "downstream".into(), "--resolution".into(), "16".into(), "--config".into(), p(&cfg), "--out".into(), p(&dir(name))]
    };
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("solve", vec!["solve".into()]),
        ("dataset", vec!["dataset".into(), "--n".into(), "12".into()]),
        ("synth", vec!["synth".into(), "--type".into(), "downstream".into(), "--count".into(), "2".into()]),
        ("train", vec!["train".into(), "--dataset".into(), p(&dir("dataset"))]),
        ("transfer", vec!["train".into(), "--stage".into(), "transfer".into(), "--model".into(), p(&dir("train").join("model.msck")), "--count".into(), "2".into()]),
        ("invert", vec!["invert".into(), "--target".into(), p(&dir("solve"))]),
        ("invert_surrogate", vec!["invert".into(), "--mode".into(), "surrogate".into(), "--target".into(), p(&dir("solve")), "--model".into(), p(&dir("train").join("model.msck"))]),
        ("hyperopt", vec!["hyperopt".into(), "--stage".into(), "joint".into(), "--trials".into(), "2".into(), "--n".into(), "8".into()]),
        ("gradcheck", vec!["gradcheck".into(), "--n".into(), "1".into()]),
        ("circle", vec!["circle".into()]),
    ];
    let mut failures = Vec::new();
    let mut files = 0;
    for (name, mut args) in runs {
        args.extend(common(name));
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        if let Err(e) = cli(&args) {
            failures.push(e);
            continue;
        }
        let again = dir(&format!("{name}_rerun"));
        match cli(&["rerun", &p(&dir(name)), "--out", &p(&again), "--check"]) {
            Ok(()) => {
                let m = flexscatter_cli::manifest::RunManifest::load(&dir(name)).expect("manifest");
                for o in &m.outputs {
                    if std::fs::read(dir(name).join(&o.path)).ok() != std::fs::read(again.join(&o.path)).ok() {
                        failures.push(format!("{name}: {} differs", o.path));
                    }
                }
                files += m.outputs.len();
            }
            Err(e) => failures.push(e),
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("10 runs of 8 commands, {files} outputs reproduced byte for byte")
        } else {
            failures.join("; ")
        },
    )
}

type Criterion = (usize, &'static str, fn() -> Result<Outcome>);

const CRITERIA: [Criterion; 12] = [
    (1, "special functions", c1),
    (2, "kernel limit and derivative", c2),
    (3, "forward-solver identities", c3),
    (4, "spline fidelity", c4),
    (5, "gradient suite", c5),
    (6, "energy rotation invariance", c6),
    (7, "synthetic targets", c7),
    (8, "direct inverse design", c8),
    (9, "desk-scale training", c9),
    (10, "hyperparameter search", c10),
    (11, "PDE residual order", c11),
    (12, "determinism", c12),
];

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut out = std::io::stdout().lock();
    let (mut passed, mut failed, mut unexpected) = (0, Vec::new(), Vec::new());
    for (id, name, run) in CRITERIA {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let o = run().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let tag = if o.pass { "PASS" } else { "FAIL" };
        writeln!(out, "criterion {id:2} {tag} {name}: {}", o.detail).unwrap();
        out.flush().unwrap();
        if o.pass {
            passed += 1;
        } else {
            failed.push(id);
            if !KNOWN_RED.contains(&id) {
                unexpected.push(id);
            }
        }
    }
    writeln!(out, "acceptance: {passed} passed, {} failed {failed:?}", failed.len()).unwrap();
    if !unexpected.is_empty() {
        writeln!(out, "unexpected failures: {unexpected:?}").unwrap();
        std::process::exit(1);
    }
}
