//! Point-oscillator clusters on the plate: the coupled force system, the
//! resulting fields, the interaction energy and their position derivatives.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point};
use crate::grid::{ChannelKind, FieldGrid, GridSpec};
use crate::linalg::{dot_conj, ComplexMatrix, ComplexVector, LuFactors};
use crate::plate::{GreensRoute, SplineKind, WaveContext};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Minimum distance between two scatterers of a cluster, in meters.
pub const MIN_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    pub position: Point,
    /// kg
    pub mass: f64,
    /// N s/m
    pub damping: f64,
    /// N/m
    pub stiffness: f64,
}

impl Scatterer {
    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().all(|v| v.is_finite());
        if finite && self.mass > 0.0 && self.damping >= 0.0 && self.stiffness > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("oscillator {self:?}")))
        }
    }

    pub fn natural_frequency(&self) -> f64 {
        (self.stiffness / self.mass).sqrt()
    }
}

/// Recipe for oscillators tuned relative to the driving frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams {
    pub mass: f64,
    /// Natural frequency as a multiple of the driving frequency.
    pub tuning_ratio: f64,
    /// Fraction of critical damping.
    pub damping_ratio: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            tuning_ratio: 1.1,
            damping_ratio: 0.02,
        }
    }
}

impl OscillatorParams {
    pub fn scatterer(&self, position: Point, omega: f64) -> Scatterer {
        let natural = self.tuning_ratio * omega;
        Scatterer {
            position,
            mass: self.mass,
            damping: 2.0 * self.damping_ratio * self.mass * natural,
            stiffness: self.mass * natural * natural,
        }
    }
}

/// Base-motion transmission coefficient of a damped oscillator at `omega`.
pub fn transmission_mu(s: &Scatterer, omega: f64) -> Result<Complex64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!("angular frequency {omega}")));
    }
    let m = s.mass;
    let wa2 = s.stiffness / m;
    let wa = wa2.sqrt();
    if s.damping == 0.0 && ((omega - wa) / wa).abs() < 1e-12 {
        return Err(Error::ResonantSingular);
    }
    let num = Complex64::new(m * wa2, omega * s.damping) * (m * omega * omega);
    let den = Complex64::new(m * (wa2 - omega * omega), omega * s.damping);
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    pub scatterers: Vec<Scatterer>,
    /// Transmission coefficients overriding the oscillator model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<Complex64>>,
}

impl Cluster {
    pub fn new(scatterers: Vec<Scatterer>) -> Result<Self> {
        let c = Self {
            scatterers,
            mu: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn empty() -> Self {
        Self {
            scatterers: Vec::new(),
            mu: None,
        }
    }

    /// Oscillators tuned by `params` at the driving frequency `omega`.
    pub fn tuned(positions: &[Point], params: &OscillatorParams, omega: f64) -> Result<Self> {
        Self::new(positions.iter().map(|&p| params.scatterer(p, omega)).collect())
    }

    pub fn with_mu(scatterers: Vec<Scatterer>, mu: Vec<Complex64>) -> Result<Self> {
        let c = Self {
            scatterers,
            mu: Some(mu),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.scatterers {
            s.validate()?;
        }
        if let Some(mu) = &self.mu {
            if mu.len() != self.scatterers.len() {
                return Err(Error::Shape(format!(
                    "{} transmission coefficients for {} scatterers",
                    mu.len(),
                    self.scatterers.len()
                )));
            }
            if mu.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidParameter("non-finite transmission coefficient".into()));
            }
        }
        for (i, a) in self.scatterers.iter().enumerate() {
            for (j, b) in self.scatterers.iter().enumerate().skip(i + 1) {
                if distance(a.position, b.position) <= MIN_SEPARATION {
                    return Err(Error::InvalidGeometry(format!(
                        "scatterers {i} and {j} coincide at {:?}",
                        a.position
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.scatterers.iter().map(|s| s.position).collect()
    }

    /// Positions flattened as `[x_1, y_1, x_2, y_2, ...]`.
    pub fn flat_positions(&self) -> Vec<f64> {
        self.scatterers.iter().flat_map(|s| s.position).collect()
    }

    /// Same oscillators moved to new positions.
    pub fn with_positions(&self, positions: &[Point]) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} positions for {} scatterers",
                positions.len(),
                self.len()
            )));
        }
        let mut c = self.clone();
        for (s, &p) in c.scatterers.iter_mut().zip(positions) {
            s.position = p;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn with_flat_positions(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * self.len() {
            return Err(Error::Shape(format!(
                "{} coordinates for {} scatterers",
                flat.len(),
                self.len()
            )));
        }
        let pts: Vec<Point> = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
        self.with_positions(&pts)
    }

    pub fn transmission(&self, omega: f64) -> Result<Vec<Complex64>> {
        match &self.mu {
            Some(mu) => Ok(mu.clone()),
            None => self
                .scatterers
                .iter()
                .map(|s| transmission_mu(s, omega))
                .collect(),
        }
    }

    pub fn centroid(&self) -> Option<Point> {
        if self.is_empty() {
            return None;
        }
        let n = self.len() as f64;
        let sx: f64 = self.scatterers.iter().map(|s| s.position[0]).sum();
        let sy: f64 = self.scatterers.iter().map(|s| s.position[1]).sum();
        Some([sx / n, sy / n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentForce {
    pub location: Point,
    /// N
    pub amplitude: f64,
}

impl IncidentForce {
    pub fn new(location: Point, amplitude: f64) -> Result<Self> {
        let f = Self {
            location,
            amplitude,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitude != 0.0
            && self.amplitude.is_finite()
            && self.location.iter().all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("incident force {self:?}")))
        }
    }
}

/// An oscillator whose transmission coefficient vanishes exerts no force;
/// its row and column of the system are replaced by the identity.
fn is_inert(mu: Complex64) -> bool {
    mu.norm() < f64::MIN_POSITIVE
}

/// Solved scatterer forces together with the factorized system.
#[derive(Debug, Clone)]
pub struct ScatterSolution {
    pub forces: ComplexVector,
    pub rhs: ComplexVector,
    lu: Option<LuFactors>,
    inert: Vec<bool>,
}

impl ScatterSolution {
    fn lu(&self) -> Result<&LuFactors> {
        self.lu
            .as_ref()
            .ok_or_else(|| Error::Shape("solution of an empty cluster has no system".into()))
    }
}

/// Total, incident and scattered field values at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub incident: Complex64,
    pub scattered: Complex64,
}

impl FieldSample {
    pub fn total(&self) -> Complex64 {
        self.incident + self.scattered
    }
}

/// The three raster channels of a solved instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldChannels {
    pub incident_real: FieldGrid,
    pub scattered_real: FieldGrid,
    pub amplitude: FieldGrid,
}

/// Wave context plus the chosen Green's function route.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub ctx: WaveContext,
    pub route: GreensRoute,
}

impl ForwardModel {
    pub fn new(ctx: WaveContext, route: GreensRoute) -> Self {
        Self { ctx, route }
    }

    pub fn analytic(ctx: WaveContext) -> Self {
        Self::new(ctx, GreensRoute::Analytic)
    }

    fn g_inc(&self, a: Point, b: Point) -> Result<Complex64> {
        self.route.value(SplineKind::Incident, &self.ctx, a, b)
    }

    fn g_sc(&self, a: Point, b: Point) -> Result<Complex64> {
        self.route.value(SplineKind::Scattering, &self.ctx, a, b)
    }

    /// `A = diag(1/mu) - G` (with `G(0)` on the diagonal) and `b = f0 G(x_a, x0)`.
    pub fn assemble_system(
        &self,
        cluster: &Cluster,
        force: &IncidentForce,
    ) -> Result<(ComplexMatrix, ComplexVector)> {
        let mu = cluster.transmission(self.ctx.omega)?;
        let pos = cluster.positions();
        let n = pos.len();
        let inert: Vec<bool> = mu.iter().map(|&m| is_inert(m)).collect();
        let mut a = ComplexMatrix::zeros(n, n);
        let mut b = vec![ZERO; n];
        let g0 = match pos.first() {
            Some(&p) => self.g_sc(p, p)?,
            None => ZERO,
        };
        for i in 0..n {
            if inert[i] {
                a[(i, i)] = Complex64::new(1.0, 0.0);
                continue;
            }
            a[(i, i)] = 1.0 / mu[i] - g0;
            b[i] = self.g_inc(pos[i], force.location)? * force.amplitude;
            for j in i + 1..n {
                if inert[j] {
                    continue;
                }
                let g = self.g_sc(pos[i], pos[j])?;
                a[(i, j)] = -g;
                a[(j, i)] = -g;
            }
        }
        Ok((a, b))
    }

    pub fn solve_forces(&self, cluster: &Cluster, force: &IncidentForce) -> Result<ScatterSolution> {
        let (a, b) = self.assemble_system(cluster, force)?;
        let inert = cluster
            .transmission(self.ctx.omega)?
            .iter()
            .map(|&m| is_inert(m))
            .collect();
        if cluster.is_empty() {
            return Ok(ScatterSolution {
                forces: Vec::new(),
                rhs: Vec::new(),
                lu: None,
                inert,
            });
        }
        let lu = a.lu()?;
        let forces = lu.solve(&b)?;
        Ok(ScatterSolution {
            forces,
            rhs: b,
            lu: Some(lu),
            inert,
        })
    }

    fn sample(
        &self,
        pos: &[Point],
        force: &IncidentForce,
        solution: &ScatterSolution,
        x: Point,
    ) -> Result<FieldSample> {
        let incident = self.g_inc(x, force.location)? * force.amplitude;
        let mut scattered = ZERO;
        for (p, f) in pos.iter().zip(&solution.forces) {
            if *f != ZERO {
                scattered += self.g_sc(x, *p)? * f;
            }
        }
        Ok(FieldSample {
            incident,
            scattered,
        })
    }

    /// Incident and scattered parts at each point, in input order.
    pub fn eval_field_parts(
        &self,
        cluster: &Cluster,
        force: &IncidentForce,
        solution: &ScatterSolution,
        points: &[Point],
    ) -> Result<Vec<FieldSample>> {
        if solution.forces.len() != cluster.len() {
            return Err(Error::Shape("solution does not match cluster".into()));
        }
        let pos = cluster.positions();
        points
            .par_iter()
            .map(|&x| self.sample(&pos, force, solution, x))
            .collect()
    }

    /// Total field `psi = f0 G(x, x0) + sum_a f_a G(x, x_a)`.
    pub fn eval_field(
        &self,
        cluster: &Cluster,
        force: &IncidentForce,
        solution: &ScatterSolution,
        points: &[Point],
    ) -> Result<Vec<Complex64>> {
        Ok(self
            .eval_field_parts(cluster, force, solution, points)?
            .iter()
            .map(FieldSample::total)
            .collect())
    }

    pub fn eval_field_channels(
        &self,
        cluster: &Cluster,
        force: &IncidentForce,
        grid: &GridSpec,
    ) -> Result<FieldChannels> {
        let solution = self.solve_forces(cluster, force)?;
        let samples = self.eval_field_parts(cluster, force, &solution, &grid.points())?;
        let mk = |kind, f: &dyn Fn(&FieldSample) -> f64| {
            FieldGrid::new(*grid, kind, samples.iter().map(f).collect())
        };
        Ok(FieldChannels {
            incident_real: mk(ChannelKind::IncidentReal, &|s| s.incident.re)?,
            scattered_real: mk(ChannelKind::ScatteredReal, &|s| s.scattered.re)?,
            amplitude: mk(ChannelKind::Amplitude, &|s| s.total().norm())?,
        })
    }

    /// The two model input channels: `Re psi0` and `|psi|`.
    pub fn eval_field_grid(
        &self,
        cluster: &Cluster,
        force: &IncidentForce,
        grid: &GridSpec,
    ) -> Result<(FieldGrid, FieldGrid)> {
        let ch = self.eval_field_channels(cluster, force, grid)?;
        Ok((ch.incident_real, ch.amplitude))
    }

    /// `E* = b^H A^{-1} b`.
    pub fn interaction_energy(&self, cluster: &Cluster, force: &IncidentForce) -> Result<Complex64> {
        let sol = self.solve_forces(cluster, force)?;
        Ok(dot_conj(&sol.rhs, &sol.forces))
    }

    /// For scatterer `alpha` and coordinate `axis`: the perturbation of the
    /// right-hand side and of `A f`, i.e. `db` and `dA f`, as dense vectors.
    fn system_derivative(
        &self,
        pos: &[Point],
        force: &IncidentForce,
        sol: &ScatterSolution,
        grads: &PairGrads,
        alpha: usize,
        axis: usize,
    ) -> (ComplexVector, ComplexVector) {
        let n = pos.len();
        let mut db = vec![ZERO; n];
        let mut da_f = vec![ZERO; n];
        if sol.inert[alpha] {
            return (db, da_f);
        }
        db[alpha] = grads.source[alpha][axis] * force.amplitude;
        for beta in 0..n {
            if beta == alpha || sol.inert[beta] {
                continue;
            }
            let g = grads.pair(alpha, beta)[axis];
            // dA[alpha][beta] = dA[beta][alpha] = -dG(x_alpha, x_beta)/dx_alpha
            da_f[alpha] -= g * sol.forces[beta];
            da_f[beta] -= g * sol.forces[alpha];
        }
        (db, da_f)
    }

    fn pair_grads(&self, pos: &[Point], force: &IncidentForce) -> Result<PairGrads> {
        let n = pos.len();
        let mut pairs = vec![[ZERO; 2]; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let g = self.route.grad(SplineKind::Scattering, &self.ctx, pos[i], pos[j])?;
                pairs[i * n + j] = g;
                pairs[j * n + i] = [-g[0], -g[1]];
            }
        }
        let source = pos
            .iter()
            .map(|&p| {
                if p == force.location {
                    // the incident kernel is flat at the source
                    Ok([ZERO; 2])
                } else {
                    self.route.grad(SplineKind::Incident, &self.ctx, p, force.location)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PairGrads { n, pairs, source })
    }

    /// `d psi(x*) / d x_alpha` for every evaluation point and scatterer,
    /// indexed `[point][alpha][axis]`.
    pub fn field_position_jacobian(
        &self,
        cluster: &Cluster,
        force: &IncidentForce,
        solution: &ScatterSolution,
        points: &[Point],
    ) -> Result<Vec<Vec<[Complex64; 2]>>> {
        let pos = cluster.positions();
        let n = pos.len();
        if n == 0 {
            return Ok(vec![Vec::new(); points.len()]);
        }
        let lu = solution.lu()?;
        let grads = self.pair_grads(&pos, force)?;
        // df for every (alpha, axis)
        let mut dfs = Vec::with_capacity(2 * n);
        for alpha in 0..n {
            for axis in 0..2 {
                let (db, da_f) = self.system_derivative(&pos, force, solution, &grads, alpha, axis);
                let rhs: ComplexVector = db.iter().zip(&da_f).map(|(p, q)| p - q).collect();
                dfs.push(lu.solve(&rhs)?);
            }
        }
        points
            .par_iter()
            .map(|&x| {
                let mut g_row = Vec::with_capacity(n);
                for &p in &pos {
                    g_row.push(self.g_sc(x, p)?);
                }
                let mut out = vec![[ZERO; 2]; n];
                for alpha in 0..n {
                    let direct = if solution.forces[alpha] == ZERO {
                        [ZERO; 2]
                    } else {
                        // d G(x, x_alpha) / d x_alpha
                        let g = self.route.grad(SplineKind::Scattering, &self.ctx, pos[alpha], x)?;
                        [g[0] * solution.forces[alpha], g[1] * solution.forces[alpha]]
                    };
                    for axis in 0..2 {
                        let df = &dfs[2 * alpha + axis];
                        let induced: Complex64 = g_row.iter().zip(df).map(|(g, d)| g * d).sum();
                        out[alpha][axis] = direct[axis] + induced;
                    }
                }
                Ok(out)
            })
            .collect()
    }

    /// `d E* / d x_alpha` via one adjoint solve `A^H h = b`.
    pub fn energy_position_gradient(
        &self,
        cluster: &Cluster,
        force: &IncidentForce,
    ) -> Result<Vec<[Complex64; 2]>> {
        let sol = self.solve_forces(cluster, force)?;
        self.energy_position_gradient_from(cluster, force, &sol)
    }

    pub fn energy_position_gradient_from(
        &self,
        cluster: &Cluster,
        force: &IncidentForce,
        sol: &ScatterSolution,
    ) -> Result<Vec<[Complex64; 2]>> {
        let pos = cluster.positions();
        let n = pos.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let h = sol.lu()?.solve_adjoint(&sol.rhs)?;
        let grads = self.pair_grads(&pos, force)?;
        let mut out = vec![[ZERO; 2]; n];
        for alpha in 0..n {
            for axis in 0..2 {
                let (db, da_f) = self.system_derivative(&pos, force, sol, &grads, alpha, axis);
                let resid: ComplexVector = db.iter().zip(&da_f).map(|(p, q)| p - q).collect();
                out[alpha][axis] = dot_conj(&db, &sol.forces) + dot_conj(&h, &resid);
            }
        }
        Ok(out)
    }
}

struct PairGrads {
    n: usize,
    /// `dG(x_i, x_j)/dx_i` at `i * n + j`.
    pairs: Vec<[Complex64; 2]>,
    /// `dG(x_i, x0)/dx_i`.
    source: Vec<[Complex64; 2]>,
}

impl PairGrads {
    fn pair(&self, i: usize, j: usize) -> [Complex64; 2] {
        self.pairs[i * self.n + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plate::{DispersionMode, PlateSpec};
    use std::f64::consts::PI;

    fn model(k: f64) -> ForwardModel {
        ForwardModel::analytic(
            WaveContext::from_wavenumber(PlateSpec::default(), k, DispersionMode::Printed).unwrap(),
        )
    }

    fn cluster(m: &ForwardModel, pts: &[Point]) -> Cluster {
        Cluster::tuned(pts, &OscillatorParams::default(), m.ctx.omega).unwrap()
    }

    fn force() -> IncidentForce {
        IncidentForce::new([0.5, -1.0], 100.0).unwrap()
    }

    #[test]
    fn mu_limits() {
        let s = Scatterer {
            position: [0.0; 2],
            mass: 2.0,
            damping: 0.0,
            stiffness: 8.0,
        };
        let mu = transmission_mu(&s, 1.0).unwrap();
        assert_eq!(mu.im, 0.0);
        assert!((mu.re - 2.0 * 4.0 / 3.0).abs() < 1e-14);
        assert!(transmission_mu(&s, 1e-9).unwrap().norm() < 1e-16);
        assert!(matches!(transmission_mu(&s, 2.0), Err(Error::ResonantSingular)));
        let damped = Scatterer { damping: 0.1, ..s };
        assert!(transmission_mu(&damped, 2.0).is_ok());
    }

    #[test]
    fn single_scatterer_closed_form() {
        let m = model(PI / 10.0);
        let c = cluster(&m, &[[7.0, 3.0]]);
        let f = force();
        let (a, b) = m.assemble_system(&c, &f).unwrap();
        let mu = c.transmission(m.ctx.omega).unwrap()[0];
        let a11 = 1.0 / mu - m.ctx.self_term();
        assert_eq!(a[(0, 0)], a11);
        let g = crate::plate::greens(&m.ctx, [7.0, 3.0], f.location);
        let expected = f.amplitude * g / a11;
        let sol = m.solve_forces(&c, &f).unwrap();
        assert!((sol.forces[0] - expected).norm() <= 1e-12 * expected.norm());
        let e = m.interaction_energy(&c, &f).unwrap();
        let e_closed = (f.amplitude * g).norm_sqr() / a11;
        assert!((e - e_closed).norm() <= 1e-12 * e_closed.norm());
        assert_eq!(b[0], f.amplitude * g);
    }

    #[test]
    fn scatterer_on_source() {
        let m = model(0.3);
        let f = force();
        let c = cluster(&m, &[f.location]);
        let (_, b) = m.assemble_system(&c, &f).unwrap();
        assert_eq!(b[0], m.ctx.self_term() * f.amplitude);
    }

    #[test]
    fn empty_cluster() {
        let m = model(0.4);
        let c = Cluster::empty();
        let f = force();
        let sol = m.solve_forces(&c, &f).unwrap();
        assert!(sol.forces.is_empty());
        let pts = [[3.0, 4.0], [-10.0, 2.0]];
        let psi = m.eval_field(&c, &f, &sol, &pts).unwrap();
        for (p, v) in pts.iter().zip(&psi) {
            assert_eq!(*v, crate::plate::greens(&m.ctx, *p, f.location) * f.amplitude);
        }
        assert_eq!(m.interaction_energy(&c, &f).unwrap(), ZERO);
        assert!(m.energy_position_gradient(&c, &f).unwrap().is_empty());
    }

    #[test]
    fn symmetric_system_and_self_consistency() {
        let m = model(0.45);
        let c = cluster(&m, &[[1.0, 2.0], [-5.0, 3.0], [4.0, -6.0], [9.0, 9.0]]);
        let f = force();
        let (a, _) = m.assemble_system(&c, &f).unwrap();
        assert_eq!(a, a.transpose());
        let sol = m.solve_forces(&c, &f).unwrap();
        let psi = m.eval_field(&c, &f, &sol, &c.positions()).unwrap();
        let mu = c.transmission(m.ctx.omega).unwrap();
        for i in 0..c.len() {
            let lhs = sol.forces[i] / mu[i];
            assert!((psi[i] - lhs).norm() <= 1e-9 * lhs.norm());
        }
    }

    #[test]
    fn vanishing_oscillator_exerts_no_force() {
        let m = model(0.45);
        let base = cluster(&m, &[[1.0, 2.0], [-5.0, 3.0]]);
        let mut mu = base.transmission(m.ctx.omega).unwrap();
        mu[1] = ZERO;
        let c = Cluster::with_mu(base.scatterers.clone(), mu).unwrap();
        let sol = m.solve_forces(&c, &force()).unwrap();
        assert_eq!(sol.forces[1], ZERO);
        let alone = cluster(&m, &[[1.0, 2.0]]);
        let sol1 = m.solve_forces(&alone, &force()).unwrap();
        assert!((sol.forces[0] - sol1.forces[0]).norm() < 1e-12 * sol1.forces[0].norm());
    }

    #[test]
    fn linear_in_amplitude() {
        let m = model(0.5);
        let c = cluster(&m, &[[1.0, 2.0], [-5.0, 3.0]]);
        let f1 = force();
        let f2 = IncidentForce::new(f1.location, 2.0 * f1.amplitude).unwrap();
        let pts = [[10.0, 0.0], [0.0, -20.0]];
        let p1 = m.eval_field(&c, &f1, &m.solve_forces(&c, &f1).unwrap(), &pts).unwrap();
        let p2 = m.eval_field(&c, &f2, &m.solve_forces(&c, &f2).unwrap(), &pts).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((2.0 * a - b).norm() <= 1e-13 * b.norm());
        }
    }

    #[test]
    fn coincident_scatterers_rejected() {
        let m = model(0.5);
        assert!(Cluster::tuned(&[[1.0, 1.0], [1.0, 1.0]], &OscillatorParams::default(), m.ctx.omega).is_err());
    }

    fn fd_check(m: &ForwardModel, c: &Cluster, f: &IncidentForce, pts: &[Point]) {
        let h = 1e-5;
        let sol = m.solve_forces(c, f).unwrap();
        let jac = m.field_position_jacobian(c, f, &sol, pts).unwrap();
        let eg = m.energy_position_gradient(c, f).unwrap();
        let base = c.positions();
        for alpha in 0..c.len() {
            for axis in 0..2 {
                let shifted = |d: f64| {
                    let mut p = base.clone();
                    p[alpha][axis] += d;
                    c.with_positions(&p).unwrap()
                };
                let (cp, cm) = (shifted(h), shifted(-h));
                let sp = m.solve_forces(&cp, f).unwrap();
                let sm = m.solve_forces(&cm, f).unwrap();
                let vp = m.eval_field(&cp, f, &sp, pts).unwrap();
                let vm = m.eval_field(&cm, f, &sm, pts).unwrap();
                for (i, (a, b)) in vp.iter().zip(&vm).enumerate() {
                    let fd = (a - b) / (2.0 * h);
                    let an = jac[i][alpha][axis];
                    assert!(
                        (fd - an).norm() <= 1e-5 * an.norm().max(1e-8),
                        "field jacobian point {i} alpha {alpha} axis {axis}: {fd} vs {an}"
                    );
                }
                let ep = m.interaction_energy(&cp, f).unwrap();
                let em = m.interaction_energy(&cm, f).unwrap();
                let fd = (ep - em) / (2.0 * h);
                let an = eg[alpha][axis];
                assert!((fd - an).norm() <= 1e-5 * an.norm(), "energy {fd} vs {an}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = model(PI / 8.0);
        let c = cluster(&m, &[[3.0, 12.0], [-14.0, 5.0], [-6.0, -18.0], [11.0, -7.0], [20.0, 16.0]]);
        let f = force();
        fd_check(&m, &c, &f, &[[30.0, 1.0], [-40.0, 25.0], [2.0, 2.0]]);
    }
}
