//! Plate material, the wavenumber/frequency relation and the Green's function,
//! evaluated either directly or through splines fitted over `k r`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point, Rect};
use crate::specfun;
use crate::spline::CubicSpline;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct PlateSpec {
    /// Pa
    pub youngs_modulus: f64,
    pub poisson: f64,
    /// m
    pub thickness: f64,
    /// kg/m^2
    pub areal_density: f64,
}

impl Default for PlateSpec {
    /// A 1 cm steel plate.
    fn default() -> Self {
        Self {
            youngs_modulus: 200e9,
            poisson: 0.3,
            thickness: 0.01,
            areal_density: 78.5,
        }
    }
}

impl PlateSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.youngs_modulus > 0.0
            && (0.0..0.5).contains(&self.poisson)
            && self.thickness > 0.0
            && self.areal_density > 0.0
            && self.youngs_modulus.is_finite()
            && self.thickness.is_finite()
            && self.areal_density.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("plate parameters {self:?}")))
        }
    }

    /// Flexural rigidity `D = E H^3 / (12 (1 - nu^2))`.
    pub fn rigidity(&self) -> f64 {
        self.youngs_modulus * self.thickness.powi(3) / (12.0 * (1.0 - self.poisson * self.poisson))
    }

    /// The inertia coefficient multiplying `omega^2` in the dispersion relation.
    fn inertia(&self, mode: DispersionMode) -> f64 {
        match mode {
            DispersionMode::Printed => self.areal_density * self.thickness,
            DispersionMode::Consistent => self.areal_density,
        }
    }
}

/// Which form of the dispersion relation ties `k` to `omega`.
///
/// `Printed` uses `k^4 = rho' H omega^2 / D`; `Consistent` uses
/// `k^4 = rho' omega^2 / D`, which is the relation satisfied by solutions of
/// `D lap^2 psi - rho' omega^2 psi = 0` with `rho'` an areal density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "lowercase")]
pub enum DispersionMode {
    #[default]
    Printed,
    Consistent,
}

pub fn wavenumber_from_omega(plate: &PlateSpec, omega: f64, mode: DispersionMode) -> f64 {
    (plate.inertia(mode) * omega * omega / plate.rigidity()).powf(0.25)
}

pub fn omega_from_wavenumber(plate: &PlateSpec, k: f64, mode: DispersionMode) -> f64 {
    k * k * (plate.rigidity() / plate.inertia(mode)).sqrt()
}

/// Wavenumber, angular frequency and the plate they belong to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveContext {
    pub k: f64,
    pub omega: f64,
    pub plate: PlateSpec,
    pub mode: DispersionMode,
}

impl WaveContext {
    pub fn from_wavenumber(plate: PlateSpec, k: f64, mode: DispersionMode) -> Result<Self> {
        plate.validate()?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("wavenumber {k}")));
        }
        Ok(Self {
            k,
            omega: omega_from_wavenumber(&plate, k, mode),
            plate,
            mode,
        })
    }

    pub fn from_omega(plate: PlateSpec, omega: f64, mode: DispersionMode) -> Result<Self> {
        plate.validate()?;
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("angular frequency {omega}")));
        }
        Ok(Self {
            k: wavenumber_from_omega(&plate, omega, mode),
            omega,
            plate,
            mode,
        })
    }

    /// `1 / (8 k^2)`
    #[inline]
    pub fn prefactor(&self) -> f64 {
        1.0 / (8.0 * self.k * self.k)
    }

    /// Green's function value at coincident points, `i / (8 k^2)`.
    pub fn self_term(&self) -> Complex64 {
        Complex64::new(0.0, self.prefactor())
    }
}

/// `G(x_a, x_b) = gbar(k |x_a - x_b|) / (8 k^2)`.
pub fn greens(ctx: &WaveContext, x_a: Point, x_b: Point) -> Complex64 {
    let r = distance(x_a, x_b);
    // gbar only fails on non-finite input
    specfun::gbar(ctx.k * r).unwrap_or(Complex64::new(f64::NAN, f64::NAN)) * ctx.prefactor()
}

/// Gradient of `G(x_a, x_b)` with respect to `x_a`.
pub fn greens_grad(ctx: &WaveContext, x_a: Point, x_b: Point) -> Result<[Complex64; 2]> {
    let dx = [x_a[0] - x_b[0], x_a[1] - x_b[1]];
    let r = dx[0].hypot(dx[1]);
    if r == 0.0 {
        return Err(Error::DegenerateDistance);
    }
    let radial = specfun::gbar_prime(ctx.k * r)? * (ctx.prefactor() * ctx.k / r);
    Ok([radial * dx[0], radial * dx[1]])
}

/// `G` and its gradient with respect to `x_a` from one kernel evaluation.
fn greens_with_grad_analytic(
    ctx: &WaveContext,
    x_a: Point,
    x_b: Point,
) -> Result<(Complex64, [Complex64; 2])> {
    let dx = [x_a[0] - x_b[0], x_a[1] - x_b[1]];
    let r = dx[0].hypot(dx[1]);
    if r == 0.0 {
        return Err(Error::DegenerateDistance);
    }
    let (g, gp) = specfun::gbar_with_derivative(ctx.k * r)?;
    let radial = gp * (ctx.prefactor() * ctx.k / r);
    Ok((g * ctx.prefactor(), [radial * dx[0], radial * dx[1]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplineKind {
    Incident,
    Scattering,
}

/// Tolerance margin applied to both ends of every fit domain.
pub const SPLINE_MARGIN: f64 = 1.5;
const LOG_KNOTS: usize = 1500;
const LOG_KNOT_MIN: f64 = 1e-5;
const MIN_UNIFORM_KNOTS: usize = 5000;
const EDGE_PAD_KNOTS: usize = 24;
/// Largest uniform knot spacing in `k r`; keeps the interpolation error of
/// the oscillatory kernel near 1e-7 relative over long fit domains.
const MAX_UNIFORM_SPACING: f64 = 0.05;

/// Splines of `gbar` and `gbar'` over the scaled radius `k r`.
#[derive(Debug, Clone)]
pub struct GreensSpline {
    pub kind: SplineKind,
    pub fit_domain: (f64, f64),
    pub margin: f64,
    spline_real: CubicSpline,
    spline_imag: CubicSpline,
    deriv_real: CubicSpline,
    deriv_imag: CubicSpline,
}

impl GreensSpline {
    pub fn fit(kind: SplineKind, r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min >= 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "spline fit domain [{r_min}, {r_max}] is empty"
            )));
        }
        let knots = knot_vector(r_min, r_max);
        let n = knots.len();
        let (mut gr, mut gi, mut dr, mut di) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for &r in &knots {
            let (g, gp) = specfun::gbar_with_derivative(r)?;
            gr.push(g.re);
            gi.push(g.im);
            dr.push(gp.re);
            di.push(gp.im);
        }
        Ok(Self {
            kind,
            fit_domain: (r_min, r_max),
            margin: SPLINE_MARGIN,
            spline_real: CubicSpline::natural(knots.clone(), gr)?,
            spline_imag: CubicSpline::natural(knots.clone(), gi)?,
            deriv_real: CubicSpline::natural(knots.clone(), dr)?,
            deriv_imag: CubicSpline::natural(knots, di)?,
        })
    }

    pub fn n_knots(&self) -> usize {
        self.spline_real.n_knots()
    }

    fn check(&self, r: f64) -> Result<()> {
        let (lo, hi) = self.fit_domain;
        let slack = 1e-12 * hi;
        if r.is_finite() && r >= lo - slack && r <= hi + slack {
            Ok(())
        } else {
            Err(Error::OutOfDomain { value: r, lo, hi })
        }
    }

    /// Spline approximation of `gbar(r)`.
    pub fn eval_scaled(&self, r: f64) -> Result<Complex64> {
        self.check(r)?;
        Ok(Complex64::new(self.spline_real.eval(r), self.spline_imag.eval(r)))
    }

    /// Spline approximation of `gbar'(r)`.
    pub fn eval_scaled_prime(&self, r: f64) -> Result<Complex64> {
        self.check(r)?;
        Ok(Complex64::new(self.deriv_real.eval(r), self.deriv_imag.eval(r)))
    }
}

fn knot_vector(r_min: f64, r_max: f64) -> Vec<f64> {
    let mut knots = Vec::new();
    if r_min < 1.0 {
        let top = r_max.min(1.0);
        if r_min == 0.0 {
            knots.push(0.0);
        }
        let start = r_min.max(LOG_KNOT_MIN).min(top);
        if r_min > 0.0 && r_min < start {
            knots.push(r_min);
        }
        if top > start {
            let (a, b) = (start.ln(), top.ln());
            for i in 0..LOG_KNOTS {
                knots.push((a + (b - a) * i as f64 / (LOG_KNOTS - 1) as f64).exp());
            }
        } else {
            knots.push(start);
        }
    }
    if r_max > 1.0 {
        let lo = r_min.max(1.0);
        let count = MIN_UNIFORM_KNOTS.max(((r_max - lo) / MAX_UNIFORM_SPACING).ceil() as usize + 1);
        let step = (r_max - lo) / (count - 1) as f64;
        // the natural end condition is wrong for gbar; padding knots push its
        // error out of the fit domain
        let below = if r_min >= 1.0 { EDGE_PAD_KNOTS as i64 } else { 0 };
        for i in -below..(count + EDGE_PAD_KNOTS) as i64 {
            let r = lo + step * i as f64;
            if r >= 0.0 && knots.last().is_none_or(|&last| r > last) {
                knots.push(r);
            }
        }
    } else if let Some(last) = knots.last_mut() {
        *last = r_max;
    }
    knots
}

/// Extents that determine the distances a problem instance can produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineGeometry {
    /// Observable window.
    pub window: Rect,
    /// Box containing every admissible scatterer position.
    pub scatter_box: Rect,
    /// Box containing every admissible forcing location.
    pub source_box: Rect,
    /// Smallest and largest wavenumber the splines must serve.
    pub k_range: (f64, f64),
}

/// Fits the incident and scattering splines for every `k` in the geometry's
/// wavenumber range, each with a `SPLINE_MARGIN` tolerance on both ends.
pub fn fit_greens_splines(geometry: &SplineGeometry) -> Result<(GreensSpline, GreensSpline)> {
    let (k_lo, k_hi) = geometry.k_range;
    if !(k_lo > 0.0 && k_hi >= k_lo) {
        return Err(Error::InvalidGeometry(format!(
            "wavenumber range [{k_lo}, {k_hi}]"
        )));
    }
    geometry.window.validate()?;
    geometry.scatter_box.validate()?;
    geometry.source_box.validate()?;
    let targets = geometry.window.union(&geometry.scatter_box);
    let near = geometry
        .source_box
        .min_distance(&geometry.window)
        .min(geometry.source_box.min_distance(&geometry.scatter_box));
    let far = geometry.source_box.max_distance(&targets);
    let incident = GreensSpline::fit(
        SplineKind::Incident,
        k_lo * near / SPLINE_MARGIN,
        SPLINE_MARGIN * k_hi * far,
    )?;
    let reach = geometry
        .scatter_box
        .max_distance(&geometry.window)
        .max(geometry.scatter_box.diameter());
    let scattering = GreensSpline::fit(SplineKind::Scattering, 0.0, SPLINE_MARGIN * k_hi * reach)?;
    Ok((incident, scattering))
}

/// `(S_r(k r) + i S_i(k r)) / (8 k^2)`.
pub fn greens_spline_eval(
    spline: &GreensSpline,
    ctx: &WaveContext,
    x_a: Point,
    x_b: Point,
) -> Result<Complex64> {
    Ok(spline.eval_scaled(ctx.k * distance(x_a, x_b))? * ctx.prefactor())
}

pub fn greens_spline_grad(
    spline: &GreensSpline,
    ctx: &WaveContext,
    x_a: Point,
    x_b: Point,
) -> Result<[Complex64; 2]> {
    let dx = [x_a[0] - x_b[0], x_a[1] - x_b[1]];
    let r = dx[0].hypot(dx[1]);
    if r == 0.0 {
        return Err(Error::DegenerateDistance);
    }
    let radial = spline.eval_scaled_prime(ctx.k * r)? * (ctx.prefactor() * ctx.k / r);
    Ok([radial * dx[0], radial * dx[1]])
}

/// The pair of splines serving one problem class.
#[derive(Debug, Clone)]
pub struct GreensSplines {
    pub incident: GreensSpline,
    pub scattering: GreensSpline,
}

impl GreensSplines {
    pub fn fit(geometry: &SplineGeometry) -> Result<Self> {
        let (incident, scattering) = fit_greens_splines(geometry)?;
        Ok(Self {
            incident,
            scattering,
        })
    }
}

/// How Green's function values are obtained.
#[derive(Debug, Clone, Default)]
pub enum GreensRoute {
    #[default]
    Analytic,
    Spline(Arc<GreensSplines>),
}

impl GreensRoute {
    fn pick(&self, kind: SplineKind) -> Option<&GreensSpline> {
        match self {
            GreensRoute::Analytic => None,
            GreensRoute::Spline(s) => Some(match kind {
                SplineKind::Incident => &s.incident,
                SplineKind::Scattering => &s.scattering,
            }),
        }
    }

    /// `G(x_a, x_b)` where the pair is of the given kind.
    pub fn value(
        &self,
        kind: SplineKind,
        ctx: &WaveContext,
        x_a: Point,
        x_b: Point,
    ) -> Result<Complex64> {
        match self.pick(kind) {
            None => Ok(greens(ctx, x_a, x_b)),
            Some(s) => greens_spline_eval(s, ctx, x_a, x_b),
        }
    }

    /// Gradient of `G(x_a, x_b)` with respect to `x_a`.
    pub fn grad(
        &self,
        kind: SplineKind,
        ctx: &WaveContext,
        x_a: Point,
        x_b: Point,
    ) -> Result<[Complex64; 2]> {
        match self.pick(kind) {
            None => greens_grad(ctx, x_a, x_b),
            Some(s) => greens_spline_grad(s, ctx, x_a, x_b),
        }
    }

    pub fn value_and_grad(
        &self,
        kind: SplineKind,
        ctx: &WaveContext,
        x_a: Point,
        x_b: Point,
    ) -> Result<(Complex64, [Complex64; 2])> {
        match self.pick(kind) {
            None => greens_with_grad_analytic(ctx, x_a, x_b),
            Some(s) => Ok((
                greens_spline_eval(s, ctx, x_a, x_b)?,
                greens_spline_grad(s, ctx, x_a, x_b)?,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ctx(k: f64) -> WaveContext {
        WaveContext::from_wavenumber(PlateSpec::default(), k, DispersionMode::Printed).unwrap()
    }

    #[test]
    fn unit_dispersion() {
        // D = 1 with rho' H = 1
        let plate = PlateSpec {
            youngs_modulus: 12.0 * (1.0 - 0.09) / 1.0,
            poisson: 0.3,
            thickness: 1.0,
            areal_density: 1.0,
        };
        assert!((plate.rigidity() - 1.0).abs() < 1e-15);
        assert!((wavenumber_from_omega(&plate, 1.0, DispersionMode::Printed) - 1.0).abs() < 1e-15);
        let steel = PlateSpec::default();
        for mode in [DispersionMode::Printed, DispersionMode::Consistent] {
            let k1 = wavenumber_from_omega(&steel, 3.0, mode);
            let k4 = wavenumber_from_omega(&steel, 12.0, mode);
            assert!((k4 - 2.0 * k1).abs() < 1e-14 * k4);
            let k = PI / 10.0;
            let w = omega_from_wavenumber(&steel, k, mode);
            assert!((wavenumber_from_omega(&steel, w, mode) - k).abs() <= 1e-12 * k);
        }
    }

    #[test]
    fn coincident_value_and_symmetry() {
        let c = ctx(PI / 10.0);
        let g = greens(&c, [1.0, 2.0], [1.0, 2.0]);
        assert_eq!(g.re, 0.0);
        assert!((g.im - 1.266_514_795_529_222).abs() < 1e-12);
        let (a, b) = ([0.3, -7.0], [12.5, 4.25]);
        assert_eq!(greens(&c, a, b), greens(&c, b, a));
        assert!(greens(&c, a, [1e6, 0.0]).norm() < 1e-2 * greens(&c, a, b).norm());
    }

    #[test]
    fn gradient_properties() {
        let c = ctx(0.4);
        let g = greens_grad(&c, [3.0, 1.0], [-2.0, 1.0]).unwrap();
        assert_eq!(g[1], Complex64::new(0.0, 0.0));
        let (a, b) = ([1.5, -2.0], [-4.0, 3.5]);
        let ga = greens_grad(&c, a, b).unwrap();
        let gb = greens_grad(&c, b, a).unwrap();
        assert_eq!(ga[0], -gb[0]);
        assert_eq!(ga[1], -gb[1]);
        let h = 1e-6;
        for d in 0..2 {
            let (mut p, mut m) = (a, a);
            p[d] += h;
            m[d] -= h;
            let fd = (greens(&c, p, b) - greens(&c, m, b)) / (2.0 * h);
            assert!((fd - ga[d]).norm() <= 1e-6 * ga[d].norm());
        }
        assert!(matches!(greens_grad(&c, a, a), Err(Error::DegenerateDistance)));
    }

    #[test]
    fn spline_accuracy_and_domain() {
        let s = GreensSpline::fit(SplineKind::Scattering, 0.0, 60.0).unwrap();
        assert!((s.eval_scaled(0.0).unwrap() - Complex64::new(0.0, 1.0)).norm() < 1e-8);
        let mut worst: f64 = 0.0;
        for i in 0..4000 {
            let r = 1e-5 * (6e6f64).powf(i as f64 / 3999.0);
            let exact = specfun::gbar(r).unwrap();
            worst = worst.max((s.eval_scaled(r).unwrap() - exact).norm() / exact.norm());
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
        assert!(matches!(s.eval_scaled(61.0), Err(Error::OutOfDomain { .. })));
        assert!(GreensSpline::fit(SplineKind::Incident, 5.0, 5.0).is_err());
    }
}
