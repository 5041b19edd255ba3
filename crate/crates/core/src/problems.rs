//! The three problem classes, Latin-hypercube instance sampling, synthetic
//! target fields, normalization statistics and dataset splitting.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point, Rect};
use crate::grid::{ChannelKind, FieldGrid, GridSpec};
use crate::plate::{
    DispersionMode, GreensRoute, GreensSplines, PlateSpec, SplineGeometry, WaveContext,
};
use crate::scatter::{Cluster, ForwardModel, IncidentForce, OscillatorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "lowercase")]
pub enum ProblemClass {
    NearFar,
    Downstream,
    Incident,
}

impl ProblemClass {
    pub const ALL: [ProblemClass; 3] = [
        ProblemClass::NearFar,
        ProblemClass::Downstream,
        ProblemClass::Incident,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemClass::NearFar => "nearfar",
            ProblemClass::Downstream => "downstream",
            ProblemClass::Incident => "incident",
        }
    }
}

impl std::str::FromStr for ProblemClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearfar" => Ok(ProblemClass::NearFar),
            "downstream" => Ok(ProblemClass::Downstream),
            "incident" => Ok(ProblemClass::Incident),
            _ => Err(Error::InvalidParameter(format!("unknown problem class '{s}'"))),
        }
    }
}

/// Where scatterers may be placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScatterDomain {
    /// One scatterer per equal angular sector of a disc, radius uniform in
    /// area over `[inner_radius, radius]`.
    Sectors {
        center: Point,
        radius: f64,
        inner_radius: f64,
        count: usize,
    },
    /// A nominal rectangular lattice, each site perturbed within a box.
    Lattice {
        center: Point,
        rows: usize,
        cols: usize,
        /// Site spacing along x and y.
        spacing: [f64; 2],
        /// Half-width of the per-site perturbation box along x and y.
        perturbation: [f64; 2],
    },
}

impl ScatterDomain {
    pub fn count(&self) -> usize {
        match self {
            ScatterDomain::Sectors { count, .. } => *count,
            ScatterDomain::Lattice { rows, cols, .. } => rows * cols,
        }
    }

    /// Nominal lattice sites, row-major with rows along y.
    pub fn lattice_sites(&self) -> Vec<Point> {
        match self {
            ScatterDomain::Lattice {
                center,
                rows,
                cols,
                spacing,
                ..
            } => {
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..*rows {
                    for c in 0..*cols {
                        out.push([
                            center[0] + (c as f64 - 0.5 * (*cols as f64 - 1.0)) * spacing[0],
                            center[1] + (r as f64 - 0.5 * (*rows as f64 - 1.0)) * spacing[1],
                        ]);
                    }
                }
                out
            }
            ScatterDomain::Sectors { .. } => Vec::new(),
        }
    }

    /// Box containing every admissible position.
    pub fn bounding_box(&self) -> Rect {
        match self {
            ScatterDomain::Sectors { center, radius, .. } => {
                Rect::centered(*center, 2.0 * radius, 2.0 * radius)
            }
            ScatterDomain::Lattice { perturbation, .. } => {
                let sites = self.lattice_sites();
                let mut b = Rect::point(sites[0]);
                for s in &sites {
                    b = b.union(&Rect::point(*s));
                }
                Rect::new(
                    b.x_min - perturbation[0],
                    b.x_max + perturbation[0],
                    b.y_min - perturbation[1],
                    b.y_max + perturbation[1],
                )
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ScatterDomain::Sectors {
                radius,
                inner_radius,
                count,
                ..
            } => *count > 0 && *radius > 0.0 && *inner_radius >= 0.0 && inner_radius < radius,
            // neighbouring perturbation boxes may overlap
            ScatterDomain::Lattice {
                rows,
                cols,
                spacing,
                perturbation,
                ..
            } => {
                rows * cols > 0
                    && perturbation.iter().chain(spacing).all(|p| *p >= 0.0 && p.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidGeometry(format!("infeasible scatterer domain {self:?}")))
        }
    }

    /// Maps a point of the unit cube (two coordinates per scatterer) to positions.
    pub fn realize(&self, u: &[f64]) -> Vec<Point> {
        match self {
            ScatterDomain::Sectors {
                center,
                radius,
                inner_radius,
                count,
            } => (0..*count)
                .map(|j| {
                    let width = 2.0 * PI / *count as f64;
                    let theta = (j as f64 + u[2 * j]) * width;
                    let r2 = inner_radius * inner_radius
                        + u[2 * j + 1] * (radius * radius - inner_radius * inner_radius);
                    let r = r2.sqrt();
                    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
                })
                .collect(),
            ScatterDomain::Lattice { perturbation, .. } => self
                .lattice_sites()
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    [
                        s[0] + (2.0 * u[2 * j] - 1.0) * perturbation[0],
                        s[1] + (2.0 * u[2 * j + 1] - 1.0) * perturbation[1],
                    ]
                })
                .collect(),
        }
    }

    /// Moves each scatterer to the nearest point of its own admissible region.
    pub fn project(&self, positions: &mut [Point]) {
        match self {
            ScatterDomain::Sectors {
                center,
                radius,
                inner_radius,
                count,
            } => {
                let width = 2.0 * PI / *count as f64;
                for (j, p) in positions.iter_mut().enumerate() {
                    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                    let mut theta = dy.atan2(dx);
                    let lo = j as f64 * width;
                    let hi = lo + width;
                    // bring the angle into the sector's winding, then clamp
                    let mid = lo + 0.5 * width;
                    while theta < mid - PI {
                        theta += 2.0 * PI;
                    }
                    while theta > mid + PI {
                        theta -= 2.0 * PI;
                    }
                    let theta = theta.clamp(lo, hi);
                    let r = dx.hypot(dy).clamp(*inner_radius, *radius);
                    *p = [center[0] + r * theta.cos(), center[1] + r * theta.sin()];
                }
            }
            ScatterDomain::Lattice { perturbation, .. } => {
                for (p, s) in positions.iter_mut().zip(self.lattice_sites()) {
                    p[0] = p[0].clamp(s[0] - perturbation[0], s[0] + perturbation[0]);
                    p[1] = p[1].clamp(s[1] - perturbation[1], s[1] + perturbation[1]);
                }
            }
        }
    }

    /// True if every scatterer lies in its admissible region (with slack).
    pub fn admits(&self, positions: &[Point], slack: f64) -> bool {
        if positions.len() != self.count() {
            return false;
        }
        let mut projected = positions.to_vec();
        self.project(&mut projected);
        projected
            .iter()
            .zip(positions)
            .all(|(a, b)| distance(*a, *b) <= slack)
    }
}

/// Forcing location rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct ForcingRule {
    pub nominal: Point,
    /// Standard deviation of the Gaussian jitter applied to each coordinate, m.
    pub jitter_std: f64,
    /// Jitter is truncated at this many standard deviations.
    pub jitter_clip: f64,
    /// N
    pub amplitude: f64,
}

impl ForcingRule {
    fn jitter_bound(&self) -> f64 {
        self.jitter_std * self.jitter_clip
    }

    pub fn source_box(&self) -> Rect {
        Rect::point(self.nominal).expand(self.jitter_bound())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub class: ProblemClass,
    /// Observable window.
    pub window: Rect,
    pub scatter_domain: ScatterDomain,
    pub forcing: ForcingRule,
    /// `[k_lo, k_hi]` in 1/m.
    pub k_range: [f64; 2],
    /// Raster width and height.
    pub resolution: [usize; 2],
    #[serde(default)]
    pub oscillator: OscillatorParams,
    #[serde(default)]
    pub plate: PlateSpec,
    #[serde(default)]
    pub dispersion: DispersionMode,
}

pub const DEFAULT_RESOLUTION: usize = 64;
pub const DEFAULT_AMPLITUDE: f64 = 100.0;

/// Published geometry of each problem class.
pub fn preset(class: ProblemClass) -> ProblemSpec {
    let forcing = |nominal: Point, jitter_std: f64| ForcingRule {
        nominal,
        jitter_std,
        jitter_clip: 5.0,
        amplitude: DEFAULT_AMPLITUDE,
    };
    let (window, scatter_domain, forcing, k_range) = match class {
        ProblemClass::NearFar => (
            Rect::new(-60.0, 60.0, -60.0, 60.0),
            ScatterDomain::Sectors {
                center: [0.0, 0.0],
                radius: 30.0,
                inner_radius: 0.5,
                count: 5,
            },
            forcing([0.0, 0.0], 5.0f64.sqrt()),
            [PI / 10.0, PI / 5.0],
        ),
        ProblemClass::Downstream => (
            Rect::new(0.0, 100.0, -50.0, 50.0),
            ScatterDomain::Lattice {
                center: [-65.0, 0.0],
                rows: 6,
                cols: 3,
                spacing: [20.0, 10.0],
                perturbation: [8.0, 8.0],
            },
            forcing([-125.0, 0.0], 0.0),
            [PI / 16.0, PI / 8.0],
        ),
        ProblemClass::Incident => (
            Rect::new(-30.0, 30.0, -30.0, 30.0),
            ScatterDomain::Lattice {
                center: [0.0, 0.0],
                rows: 4,
                cols: 4,
                spacing: [11.0, 11.0],
                perturbation: [1.0, 1.0],
            },
            forcing([-1e5, 0.0], 0.0),
            [PI / 10.0, PI / 10.0],
        ),
    };
    ProblemSpec {
        class,
        window,
        scatter_domain,
        forcing,
        k_range,
        resolution: [DEFAULT_RESOLUTION, DEFAULT_RESOLUTION],
        oscillator: OscillatorParams::default(),
        plate: PlateSpec::default(),
        dispersion: DispersionMode::default(),
    }
}

/// One realized problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub k: f64,
    pub cluster: Cluster,
    pub force: IncidentForce,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.scatter_domain.validate()?;
        self.plate.validate()?;
        let [k_lo, k_hi] = self.k_range;
        if !(k_lo > 0.0 && k_hi >= k_lo && k_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("wavenumber range {:?}", self.k_range)));
        }
        if self.forcing.amplitude == 0.0
            || !self.forcing.amplitude.is_finite()
            || self.forcing.jitter_std < 0.0
            || self.forcing.jitter_clip <= 0.0
        {
            return Err(Error::InvalidParameter(format!("forcing {:?}", self.forcing)));
        }
        GridSpec::new(self.window, self.resolution[0], self.resolution[1])?;
        Ok(())
    }

    pub fn n_scatterers(&self) -> usize {
        self.scatter_domain.count()
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.window, self.resolution[0], self.resolution[1])
    }

    /// Dimension of the sampling design: two per scatterer, then `k`, then
    /// the forcing jitter in x and y.
    pub fn design_dim(&self) -> usize {
        2 * self.n_scatterers() + 3
    }

    pub fn context(&self, k: f64) -> Result<WaveContext> {
        WaveContext::from_wavenumber(self.plate, k, self.dispersion)
    }

    pub fn spline_geometry(&self) -> SplineGeometry {
        SplineGeometry {
            window: self.window,
            scatter_box: self.scatter_domain.bounding_box(),
            source_box: self.forcing.source_box(),
            k_range: (self.k_range[0], self.k_range[1]),
        }
    }

    /// Fits the Green's splines serving every instance of this problem.
    pub fn spline_route(&self) -> Result<GreensRoute> {
        Ok(GreensRoute::Spline(Arc::new(GreensSplines::fit(
            &self.spline_geometry(),
        )?)))
    }

    pub fn model(&self, k: f64, route: &GreensRoute) -> Result<ForwardModel> {
        Ok(ForwardModel::new(self.context(k)?, route.clone()))
    }

    /// Maps a point of the unit design cube to an instance. The centre of the
    /// cube gives the nominal geometry, the middle wavenumber and the nominal
    /// forcing location.
    pub fn realize(&self, u: &[f64]) -> Result<Instance> {
        if u.len() != self.design_dim() {
            return Err(Error::Shape(format!(
                "design point of length {} (expected {})",
                u.len(),
                self.design_dim()
            )));
        }
        let n = self.n_scatterers();
        let positions = self.scatter_domain.realize(&u[..2 * n]);
        let [k_lo, k_hi] = self.k_range;
        let k = k_lo + u[2 * n] * (k_hi - k_lo);
        let mut x0 = self.forcing.nominal;
        if self.forcing.jitter_std > 0.0 {
            let normal = Normal::standard();
            for d in 0..2 {
                let q = u[2 * n + 1 + d].clamp(1e-300, 1.0 - 1e-16);
                let z = normal.inverse_cdf(q).clamp(-self.forcing.jitter_clip, self.forcing.jitter_clip);
                x0[d] += self.forcing.jitter_std * z;
            }
        }
        let ctx = self.context(k)?;
        Ok(Instance {
            k,
            cluster: Cluster::tuned(&positions, &self.oscillator, ctx.omega)?,
            force: IncidentForce::new(x0, self.forcing.amplitude)?,
        })
    }

    /// The same oscillator recipe at wavenumber `k` placed at new positions.
    pub fn cluster_at(&self, k: f64, positions: &[Point]) -> Result<Cluster> {
        let ctx = self.context(k)?;
        Cluster::tuned(positions, &self.oscillator, ctx.omega)
    }
}

/// Latin hypercube over `[0,1]^dim` with `n` points. The stratum
/// permutations come from stream 0 of the seed; point `i` draws its
/// within-stratum offsets from stream `i + 1`, so any point can be
/// regenerated on its own.
#[derive(Debug, Clone)]
pub struct LatinHypercube {
    seed: u64,
    n: usize,
    /// `perms[d][i]` is the stratum of point `i` in dimension `d`.
    perms: Vec<Vec<usize>>,
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl LatinHypercube {
    pub fn new(dim: usize, n: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let perms = (0..dim)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        Self { seed, n, perms }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut rng = stream_rng(self.seed, i as u64 + 1);
        self.perms
            .iter()
            .map(|p| (p[i] as f64 + rng.random::<f64>()) / self.n as f64)
            .collect()
    }
}

/// A uniformly random instance of the problem.
pub fn sample_cluster<R: Rng>(spec: &ProblemSpec, rng: &mut R) -> Result<Instance> {
    let u: Vec<f64> = (0..spec.design_dim()).map(|_| rng.random::<f64>()).collect();
    spec.realize(&u)
}

/// One solved instance with its observable channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub k: f64,
    pub x0: Point,
    pub f0: f64,
    /// Flattened true positions.
    pub positions: Vec<f64>,
    pub incident: FieldGrid,
    pub amplitude: FieldGrid,
}

impl SampleRecord {
    pub fn points(&self) -> Vec<Point> {
        self.positions.chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    pub fn force(&self) -> Result<IncidentForce> {
        IncidentForce::new(self.x0, self.f0)
    }
}

pub fn solve_instance(
    spec: &ProblemSpec,
    route: &GreensRoute,
    instance: &Instance,
) -> Result<SampleRecord> {
    let model = spec.model(instance.k, route)?;
    let (incident, amplitude) =
        model.eval_field_grid(&instance.cluster, &instance.force, &spec.grid()?)?;
    Ok(SampleRecord {
        k: instance.k,
        x0: instance.force.location,
        f0: instance.force.amplitude,
        positions: instance.cluster.flat_positions(),
        incident,
        amplitude,
    })
}

/// Forward-solves `n` Latin-hypercube instances in parallel. Records are in
/// index order and independent of the thread count.
pub fn generate_samples(
    spec: &ProblemSpec,
    n: usize,
    seed: u64,
    route: &GreensRoute,
) -> Result<Vec<SampleRecord>> {
    spec.validate()?;
    let lhs = LatinHypercube::new(spec.design_dim(), n, seed);
    (0..n)
        .into_par_iter()
        .map(|i| {
            spec.realize(&lhs.point(i))
                .and_then(|inst| solve_instance(spec, route, &inst))
                .map_err(|e| e.at_sample(i))
        })
        .collect()
}

/// Default harmonic order of the downstream synthetic target.
pub const SYNTH_HARMONICS: usize = 40;
pub const SYNTH_DOWNSTREAM_ORIGIN: Point = [-60.0, 0.0];
pub const SYNTH_CHANNEL_RADIUS: f64 = 5.0;
pub const SYNTH_CHANNEL_EXPONENT: f64 = 4.0;

/// `|sum_{h=0}^{H} exp(i h (arg(x - x_sc) - phi))|` sampled on the grid.
pub fn synth_downstream(phi: f64, x_sc: Point, harmonics: usize, grid: &GridSpec) -> FieldGrid {
    FieldGrid::from_fn(*grid, ChannelKind::Synthetic, |x| {
        if x == x_sc {
            return (harmonics + 1) as f64;
        }
        downstream_sum((x[1] - x_sc[1]).atan2(x[0] - x_sc[0]) - phi, harmonics)
    })
}

fn downstream_sum(delta: f64, harmonics: usize) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for h in 0..=harmonics {
        let (s, c) = (h as f64 * delta).sin_cos();
        re += c;
        im += s;
    }
    re.hypot(im)
}

/// `sum_j [1 - 1/(1 + (R/|x - c_j|)^M)]`, equal to 1 at each channel centre.
pub fn synth_incident(channels: &[Point], radius: f64, exponent: f64, grid: &GridSpec) -> Result<FieldGrid> {
    if channels.is_empty() || channels.len() > 9 || !(radius > 0.0) || !(exponent > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{} channels, radius {radius}, exponent {exponent}",
            channels.len()
        )));
    }
    Ok(FieldGrid::from_fn(*grid, ChannelKind::Synthetic, |x| {
        channels.iter().map(|&c| channel_profile(distance(x, c), radius, exponent)).sum()
    }))
}

pub fn channel_profile(d: f64, radius: f64, exponent: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    1.0 - 1.0 / (1.0 + (radius / d).powf(exponent))
}

/// Candidate channel centres for the incident class: the nine cells of the
/// nominal lattice interior.
pub fn incident_channel_sites() -> Vec<Point> {
    let mut out = Vec::with_capacity(9);
    for y in [-11.0, 0.0, 11.0] {
        for x in [-11.0, 0.0, 11.0] {
            out.push([x, y]);
        }
    }
    out
}

/// A synthetic target field with its generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTarget {
    pub description: String,
    pub field: FieldGrid,
}

/// Random synthetic targets for the downstream (`phi` in `[-pi/8, pi/8]`)
/// or incident (1 to 9 channels) class.
pub fn random_synthetic(
    class: ProblemClass,
    grid: &GridSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<SyntheticTarget>> {
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64 + 1);
            match class {
                ProblemClass::Downstream => {
                    let phi = rng.random_range(-PI / 8.0..=PI / 8.0);
                    Ok(SyntheticTarget {
                        description: format!("downstream phi={phi:.6}"),
                        field: synth_downstream(phi, SYNTH_DOWNSTREAM_ORIGIN, SYNTH_HARMONICS, grid),
                    })
                }
                ProblemClass::Incident => {
                    let n = rng.random_range(1..=9usize);
                    let mut sites = incident_channel_sites();
                    sites.shuffle(&mut rng);
                    sites.truncate(n);
                    Ok(SyntheticTarget {
                        description: format!("incident channels={n}"),
                        field: synth_incident(&sites, SYNTH_CHANNEL_RADIUS, SYNTH_CHANNEL_EXPONENT, grid)?,
                    })
                }
                ProblemClass::NearFar => Err(Error::InvalidParameter(
                    "synthetic targets are defined for the downstream and incident classes".into(),
                )),
            }
        })
        .collect()
}

/// Channel z-statistics and the coordinate affine map of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Mean of the incident and amplitude channels.
    pub channel_mean: [f64; 2],
    pub channel_std: [f64; 2],
    /// Per-coordinate centre and half-range of the true positions.
    pub coord_center: Vec<f64>,
    pub coord_half_range: Vec<f64>,
}

pub fn compute_norm_stats(records: &[&SampleRecord]) -> Result<NormStats> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidParameter("normalization of an empty dataset".into()))?;
    let mut mean = [0.0; 2];
    let mut std = [0.0; 2];
    for (c, m) in mean.iter_mut().enumerate() {
        let mut count = 0usize;
        let mut acc = 0.0;
        for r in records {
            let g = if c == 0 { &r.incident } else { &r.amplitude };
            acc += g.values.iter().sum::<f64>();
            count += g.values.len();
        }
        *m = acc / count as f64;
        let mut var = 0.0;
        for r in records {
            let g = if c == 0 { &r.incident } else { &r.amplitude };
            var += g.values.iter().map(|v| (v - *m).powi(2)).sum::<f64>();
        }
        std[c] = (var / count as f64).sqrt();
        if !(std[c] > 1e-300) {
            return Err(Error::DegenerateChannel(c));
        }
    }
    let dim = first.positions.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for r in records {
        if r.positions.len() != dim {
            return Err(Error::Shape("records with different scatterer counts".into()));
        }
        for (d, v) in r.positions.iter().enumerate() {
            lo[d] = lo[d].min(*v);
            hi[d] = hi[d].max(*v);
        }
    }
    let coord_center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let coord_half_range = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| {
            let h = 0.5 * (b - a);
            if h > 0.0 {
                h
            } else {
                1.0
            }
        })
        .collect();
    Ok(NormStats {
        channel_mean: mean,
        channel_std: std,
        coord_center,
        coord_half_range,
    })
}

impl NormStats {
    pub fn apply_norm(&self, channel: usize, values: &[f64]) -> Vec<f64> {
        let (m, s) = (self.channel_mean[channel], self.channel_std[channel]);
        values.iter().map(|v| (v - m) / s).collect()
    }

    pub fn unapply_norm(&self, channel: usize, values: &[f64]) -> Vec<f64> {
        let (m, s) = (self.channel_mean[channel], self.channel_std[channel]);
        values.iter().map(|v| v * s + m).collect()
    }

    /// The two normalized channels concatenated, incident first.
    pub fn model_input(&self, incident: &[f64], amplitude: &[f64]) -> Vec<f64> {
        let mut v = self.apply_norm(0, incident);
        v.extend(self.apply_norm(1, amplitude));
        v
    }

    pub fn coords_to_normalized(&self, physical: &[f64]) -> Vec<f64> {
        physical
            .iter()
            .zip(self.coord_center.iter().zip(&self.coord_half_range))
            .map(|(x, (c, h))| (x - c) / h)
            .collect()
    }

    pub fn coords_to_physical(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .zip(self.coord_center.iter().zip(&self.coord_half_range))
            .map(|(z, (c, h))| z * h + c)
            .collect()
    }
}

/// Deterministic shuffle split; the training part has `ceil(fraction n)` indices.
pub fn train_test_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 0));
    let n_train = ((fraction * n as f64).ceil() as usize).min(n);
    let validation = idx.split_off(n_train);
    (idx, validation)
}

pub const CIRCLE_RADII: [f64; 3] = [20.0, 50.0, 70.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleSample {
    pub angle: f64,
    pub point: Point,
    pub scattered_abs: f64,
    pub total_abs: f64,
}

/// `|psi_s|` and `|psi|` at `n_angles` equally spaced angles on the circle
/// of the given radius about `center`.
pub fn eval_on_circle(
    model: &ForwardModel,
    cluster: &Cluster,
    force: &IncidentForce,
    center: Point,
    radius: f64,
    n_angles: usize,
) -> Result<Vec<CircleSample>> {
    if !(radius > 0.0) || n_angles == 0 {
        return Err(Error::InvalidParameter(format!(
            "circle of radius {radius} with {n_angles} angles"
        )));
    }
    let angles: Vec<f64> = (0..n_angles).map(|i| 2.0 * PI * i as f64 / n_angles as f64).collect();
    let points: Vec<Point> = angles
        .iter()
        .map(|a| [center[0] + radius * a.cos(), center[1] + radius * a.sin()])
        .collect();
    let sol = model.solve_forces(cluster, force)?;
    let parts = model.eval_field_parts(cluster, force, &sol, &points)?;
    Ok(angles
        .iter()
        .zip(&points)
        .zip(&parts)
        .map(|((&angle, &point), s)| CircleSample {
            angle,
            point,
            scattered_abs: s.scattered.norm(),
            total_abs: s.total().norm(),
        })
        .collect())
}
