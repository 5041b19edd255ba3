//! Central finite-difference checks of every analytic coordinate gradient.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::Point;
use crate::losses::{loss_force, loss_sparse, SparseSampler, DEFAULT_SPARSE_POINTS};
use crate::plate::GreensRoute;
use crate::problems::{stream_rng, LatinHypercube, ProblemClass, ProblemSpec};
use crate::scatter::Cluster;
use rand::Rng;

/// Finite-difference step in metres.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    ForceLoss,
    SparseLoss,
    FieldJacobian,
    EnergyGradient,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [
        Quantity::ForceLoss,
        Quantity::SparseLoss,
        Quantity::FieldJacobian,
        Quantity::EnergyGradient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::ForceLoss => "force_loss",
            Quantity::SparseLoss => "sparse_loss",
            Quantity::FieldJacobian => "field_jacobian",
            Quantity::EnergyGradient => "energy_gradient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub class: ProblemClass,
    pub instance: usize,
    pub quantity: Quantity,
    /// `max |fd - analytic| / max |analytic|` over all components.
    pub rel_error: f64,
}

fn normwise(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(fd).fold(0.0f64, |m, (a, f)| m.max((a - f).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn central(x: &[f64], mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(x.len());
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + FD_STEP;
        let p = f(&y)?;
        y[i] = x[i] - FD_STEP;
        let m = f(&y)?;
        y[i] = x[i];
        out.push(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * FD_STEP)).collect());
    }
    Ok(out)
}

fn split(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Checks the four gradients on one random instance of `spec`.
pub fn check_instance(spec: &ProblemSpec, route: &GreensRoute, seed: u64, instance: usize) -> Result<Vec<CheckRow>> {
    let lhs = LatinHypercube::new(spec.design_dim(), 2, seed ^ instance as u64);
    let truth = spec.realize(&lhs.point(0))?;
    let model = spec.model(truth.k, route)?;
    let force = truth.force;
    let n = truth.cluster.len();
    let mut rng = stream_rng(seed, 1000 + instance as u64);
    let guess: Vec<f64> = truth
        .cluster
        .flat_positions()
        .iter()
        .map(|v| v + rng.random_range(-1.5..1.5))
        .collect();
    let pred = truth.cluster.with_flat_positions(&guess)?;
    let grid = spec.grid()?;
    let idx = SparseSampler::new(DEFAULT_SPARSE_POINTS, seed ^ instance as u64).sample(grid.len());
    let points: Vec<Point> = idx.iter().map(|&i| grid.point_at(i)).collect();
    let (_, amp) = model.eval_field_grid(&truth.cluster, &force, &grid)?;
    let target: Vec<f64> = idx.iter().map(|&i| amp.values[i]).collect();
    let at = |x: &[f64]| -> Result<Cluster> { pred.with_flat_positions(x) };

    let mut rows = Vec::new();
    let mut push = |quantity, rel_error| {
        rows.push(CheckRow {
            class: spec.class,
            instance,
            quantity,
            rel_error,
        })
    };

    let fl = loss_force(&model, &force, &truth.cluster, &pred)?;
    let fd = central(&guess, |x| Ok(vec![loss_force(&model, &force, &truth.cluster, &at(x)?)?.value()]))?;
    push(Quantity::ForceLoss, normwise(&fl.grad, &fd.iter().map(|v| v[0]).collect::<Vec<_>>()));

    let (_, sg) = loss_sparse(&model, &force, &points, &target, &pred)?;
    let fd = central(&guess, |x| Ok(vec![loss_sparse(&model, &force, &points, &target, &at(x)?)?.0]))?;
    push(Quantity::SparseLoss, normwise(&sg, &fd.iter().map(|v| v[0]).collect::<Vec<_>>()));

    let sol = model.solve_forces(&pred, &force)?;
    let jac = model.field_position_jacobian(&pred, &force, &sol, &points)?;
    let fd = central(&guess, |x| {
        let c = at(x)?;
        let s = model.solve_forces(&c, &force)?;
        Ok(split(&model.eval_field(&c, &force, &s, &points)?))
    })?;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (j, col) in fd.iter().enumerate() {
        let (a, axis) = (j / 2, j % 2);
        for (p, row) in jac.iter().enumerate() {
            analytic.extend([row[a][axis].re, row[a][axis].im]);
            numeric.extend([col[2 * p], col[2 * p + 1]]);
        }
    }
    push(Quantity::FieldJacobian, normwise(&analytic, &numeric));

    let eg = model.energy_position_gradient(&pred, &force)?;
    let fd = central(&guess, |x| {
        let e = model.interaction_energy(&at(x)?, &force)?;
        Ok(vec![e.re, e.im])
    })?;
    let mut analytic = Vec::with_capacity(4 * n);
    let mut numeric = Vec::with_capacity(4 * n);
    for (j, col) in fd.iter().enumerate() {
        let g = eg[j / 2][j % 2];
        analytic.extend([g.re, g.im]);
        numeric.extend([col[0], col[1]]);
    }
    push(Quantity::EnergyGradient, normwise(&analytic, &numeric));
    Ok(rows)
}

pub fn rows_csv(rows: &[CheckRow]) -> String {
    let mut s = String::from("class,instance,quantity,rel_error\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{:e}\n", r.class.name(), r.instance, r.quantity.name(), r.rel_error));
    }
    s
}
