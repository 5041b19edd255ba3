//! Configuration files and their resolution against a problem preset.

use std::path::Path;

use flexscatter::hyperopt::HyperSpace;
use flexscatter::inverse::{DirectConfig, StartMode, SurrogateArch, TrainConfig};
use flexscatter::losses::LossWeights;
use flexscatter::plate::{GreensRoute, PlateSpec};
use flexscatter::problems::{preset, ProblemClass, ProblemSpec, CIRCLE_RADII};
use flexscatter::scatter::OscillatorParams;
use flexscatter::Point;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// How the plate Green's function is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Greens {
    Analytic,
    #[default]
    Spline,
}

/// Whether training rescales the physics losses by their magnitude at a
/// 1 m perturbation before the weights are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum LossScaling {
    #[default]
    Normalize,
    None,
}

/// An explicit cluster and forcing for `solve` and `circle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ClusterInput {
    pub positions: Vec<Point>,
    /// Defaults to the middle of the preset wavenumber range.
    #[serde(default)]
    pub k: Option<f64>,
    /// Defaults to the nominal forcing location.
    #[serde(default)]
    pub x0: Option<Point>,
    #[serde(default)]
    pub f0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs_stage1: Option<usize>,
    pub epochs_stage2: Option<usize>,
    pub epochs_transfer: Option<usize>,
    pub lr_stage1: Option<f64>,
    pub lr_stage2: Option<f64>,
    pub lr_transfer: Option<f64>,
    pub batch_size: Option<usize>,
    pub weights: Option<LossWeights>,
    pub sparse_points: Option<usize>,
    pub loss_scaling: Option<LossScaling>,
    pub architecture: Option<SurrogateArch>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DirectOverrides {
    pub starts: Option<usize>,
    pub iterations: Option<usize>,
    pub lr: Option<f64>,
    pub tolerance: Option<f64>,
    pub patience: Option<usize>,
    pub sparse_points: Option<usize>,
    pub weight_sparse: Option<f64>,
    pub weight_force: Option<f64>,
    /// Start uniformly within this radius of the true cluster, which must
    /// be known.
    pub start_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct HyperoptOverrides {
    pub epochs_stage1: Option<usize>,
    pub epochs_stage2: Option<usize>,
    pub space: Option<HyperSpace>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CircleOverrides {
    pub center: Option<Point>,
    pub radii: Option<Vec<f64>>,
    pub angles: Option<usize>,
}

/// A configuration file. Every key is optional; command-line flags take
/// precedence over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<ProblemClass>,
    /// A complete problem definition in place of a preset.
    pub problem: Option<ProblemSpec>,
    pub seed: Option<u64>,
    pub resolution: Option<[usize; 2]>,
    pub greens: Option<Greens>,
    pub oscillator: Option<OscillatorParams>,
    pub plate: Option<PlateSpec>,
    pub cluster: Option<ClusterInput>,
    pub train: Option<TrainOverrides>,
    pub direct: Option<DirectOverrides>,
    pub hyperopt: Option<HyperoptOverrides>,
    pub circle: Option<CircleOverrides>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct HyperoptSettings {
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Replaces the default space of the stage.
    pub space: Option<HyperSpace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CircleSettings {
    /// Defaults to the centre of the scatterer domain.
    pub center: Option<Point>,
    pub radii: Vec<f64>,
    pub angles: usize,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub seed: u64,
    pub greens: Greens,
    pub cluster: Option<ClusterInput>,
    pub train: TrainConfig,
    pub loss_scaling: LossScaling,
    pub architecture: Option<SurrogateArch>,
    pub direct: DirectConfig,
    pub direct_start_radius: Option<f64>,
    pub hyperopt: HyperoptSettings,
    pub circle: CircleSettings,
}

pub const DEFAULT_SEED: u64 = 0;
pub const HYPEROPT_EPOCHS: (usize, usize) = (4, 2);
pub const CIRCLE_ANGLES: usize = 360;

/// Command-line values that override the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<ProblemClass>,
    pub seed: Option<u64>,
    pub resolution: Option<[usize; 2]>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    pub fn resolve(file: ConfigFile, cli: &Overrides) -> CliResult<Self> {
        let mut problem = match (cli.preset.or(file.preset), file.problem) {
            (Some(_), Some(_)) if cli.preset.is_none() => {
                return Err(CliError::Config("give either `preset` or `problem`, not both".into()))
            }
            (Some(class), _) => preset(class),
            (None, Some(p)) => p,
            (None, None) => preset(ProblemClass::NearFar),
        };
        set(&mut problem.resolution, cli.resolution.or(file.resolution));
        set(&mut problem.oscillator, file.oscillator);
        set(&mut problem.plate, file.plate);
        problem.validate()?;
        let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);

        let t = file.train.unwrap_or_default();
        let mut train = TrainConfig::preset(problem.class);
        train.seed = seed;
        set(&mut train.epochs_stage1, t.epochs_stage1);
        set(&mut train.epochs_stage2, t.epochs_stage2);
        set(&mut train.epochs_transfer, t.epochs_transfer);
        set(&mut train.lr_stage1, t.lr_stage1);
        set(&mut train.lr_stage2, t.lr_stage2);
        set(&mut train.lr_transfer, t.lr_transfer);
        set(&mut train.batch_size, t.batch_size);
        set(&mut train.weights, t.weights);
        set(&mut train.sparse_points, t.sparse_points);
        train.validate()?;
        if let Some(a) = &t.architecture {
            a.validate()?;
        }

        let d = file.direct.unwrap_or_default();
        let mut direct = DirectConfig {
            seed,
            ..DirectConfig::default()
        };
        set(&mut direct.starts, d.starts);
        set(&mut direct.iterations, d.iterations);
        set(&mut direct.lr, d.lr);
        set(&mut direct.tolerance, d.tolerance);
        set(&mut direct.patience, d.patience);
        if d.sparse_points.is_some() {
            direct.sparse_points = d.sparse_points;
        }
        set(&mut direct.weight_sparse, d.weight_sparse);
        set(&mut direct.weight_force, d.weight_force);
        direct.validate()?;
        if let Some(r) = d.start_radius {
            if !(r >= 0.0) {
                return Err(CliError::Config(format!("start radius {r}")));
            }
        }

        let h = file.hyperopt.unwrap_or_default();
        if let Some(s) = &h.space {
            s.validate()?;
        }
        let c = file.circle.unwrap_or_default();
        let circle = CircleSettings {
            center: c.center,
            radii: c.radii.unwrap_or_else(|| CIRCLE_RADII.to_vec()),
            angles: c.angles.unwrap_or(CIRCLE_ANGLES),
        };
        if circle.angles == 0 || circle.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(CliError::Config("circle radii must be positive with at least one angle".into()));
        }
        Ok(Self {
            problem,
            seed,
            greens: file.greens.unwrap_or_default(),
            cluster: file.cluster,
            train,
            loss_scaling: t.loss_scaling.unwrap_or_default(),
            architecture: t.architecture,
            direct,
            direct_start_radius: d.start_radius,
            hyperopt: HyperoptSettings {
                epochs_stage1: h.epochs_stage1.unwrap_or(HYPEROPT_EPOCHS.0),
                epochs_stage2: h.epochs_stage2.unwrap_or(HYPEROPT_EPOCHS.1),
                space: h.space,
            },
            circle,
        })
    }

    /// Starting-point rule for direct inversion given the true positions,
    /// when known.
    pub fn direct_for(&self, truth: Option<&[f64]>) -> CliResult<DirectConfig> {
        let mut cfg = self.direct.clone();
        if let Some(radius) = self.direct_start_radius {
            let center = truth
                .ok_or_else(|| CliError::Config("start_radius needs a target with a known cluster".into()))?
                .to_vec();
            cfg.start = StartMode::Around { center, radius };
        }
        Ok(cfg)
    }

    pub fn route(&self) -> CliResult<GreensRoute> {
        route_for(&self.problem, self.greens)
    }
}

pub fn route_for(spec: &ProblemSpec, greens: Greens) -> CliResult<GreensRoute> {
    Ok(match greens {
        Greens::Analytic => GreensRoute::Analytic,
        Greens::Spline => spec.spline_route()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = ConfigFile {
            preset: Some(ProblemClass::Incident),
            seed: Some(3),
            resolution: Some([16, 16]),
            ..Default::default()
        };
        let cli = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(file, &cli).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.problem.class, ProblemClass::Incident);
        assert_eq!(cfg.problem.resolution, [16, 16]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ConfigFile>(r#"{"preset": "nearfar", "colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("colour"));
        let err = serde_json::from_str::<ConfigFile>(r#"{"train": {"epochs": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("epochs"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::resolve(ConfigFile::default(), &Overrides::default()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let file = ConfigFile {
            resolution: Some([1, 64]),
            ..Default::default()
        };
        let err = RunConfig::resolve(file, &Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit::CONFIG);
    }
}
