//! Command-line surface and the serializable form of each command.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flexscatter::hyperopt::HyperStage;
use flexscatter::problems::ProblemClass;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "flexscatter", version, about = "Flexural-wave multiple scattering: forward solves, inverse design and surrogate training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution(pub [usize; 2]);

impl FromStr for Resolution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("resolution '{s}': {e}"));
        match s.split_once(['x', 'X']) {
            Some((w, h)) => Ok(Resolution([parse(w)?, parse(h)?])),
            None => {
                let n = parse(s)?;
                Ok(Resolution([n, n]))
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Problem class: nearfar, downstream or incident.
    #[arg(long)]
    pub preset: Option<ProblemClass>,
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Raster size, `N` or `WxH`.
    #[arg(long)]
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Forward-solve one cluster and write its field channels.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: SolveArgs,
    },
    /// Generate a Latin-hypercube training set.
    Dataset {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: DatasetArgs,
    },
    /// Rasterize synthetic target fields.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: SynthArgs,
    },
    /// Train the surrogate, or transfer-learn an existing one.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Recover scatterer positions from a target field.
    Invert {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: InvertArgs,
    },
    /// Bayesian hyperparameter search for one stage.
    Hyperopt {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: HyperoptArgs,
    },
    /// Compare every analytic gradient with central differences.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: GradcheckArgs,
    },
    /// Field magnitudes on circles about a point.
    Circle {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: CircleArgs,
    },
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SolveArgs {
    /// JSON cluster file; otherwise the configuration's cluster or a random instance.
    #[arg(long)]
    pub cluster: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DatasetArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum SynthType {
    Downstream,
    Incident,
}

impl SynthType {
    pub fn class(self) -> ProblemClass {
        match self {
            SynthType::Downstream => ProblemClass::Downstream,
            SynthType::Incident => ProblemClass::Incident,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SynthArgs {
    #[arg(long = "type", value_enum)]
    pub kind: SynthType,
    /// Number of focusing channels (incident only); random when omitted.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Number of targets.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum TrainStage {
    /// Stage I then stage II from a fresh model.
    Full,
    /// Sparse-loss training of a stage-II model on synthetic targets.
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset directory or manifest (full training).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    pub stage: TrainStage,
    /// Model checkpoint to continue from (transfer).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Synthetic targets used for transfer learning.
    #[arg(long, default_value_t = 8)]
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum InvertMode {
    Direct,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct InvertArgs {
    #[arg(long, value_enum, default_value = "direct")]
    pub mode: InvertMode,
    /// Output directory of a `solve` run; a random solved instance otherwise.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Model checkpoint (surrogate mode).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct HyperoptArgs {
    /// cae, mlp or joint.
    #[arg(long)]
    pub stage: HyperStage,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Samples in the dataset each trial trains on.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GradcheckArgs {
    /// Random instances per problem class.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Classes checked: the preset if one was given, all otherwise.
    #[arg(skip)]
    pub classes: Vec<ProblemClass>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CircleArgs {
    #[arg(long)]
    pub cluster: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    /// A manifest file or the directory holding one.
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fail unless every output matches the recorded digest.
    #[arg(long)]
    pub check: bool,
}

/// A command as recorded in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve(SolveArgs),
    Dataset(DatasetArgs),
    Synth(SynthArgs),
    Train(TrainArgs),
    Invert(InvertArgs),
    Hyperopt(HyperoptArgs),
    Gradcheck(GradcheckArgs),
    Circle(CircleArgs),
}

fn absolute(p: &mut Option<PathBuf>) -> CliResult<()> {
    if let Some(path) = p {
        *path = std::path::absolute(&*path).map_err(|e| CliError::io(&*path, e))?;
    }
    Ok(())
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Dataset(_) => "dataset",
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Invert(_) => "invert",
            Command::Hyperopt(_) => "hyperopt",
            Command::Gradcheck(_) => "gradcheck",
            Command::Circle(_) => "circle",
        }
    }

    /// Makes every input path absolute so a manifest can be replayed from
    /// any working directory.
    pub fn absolutize(&mut self) -> CliResult<()> {
        match self {
            Command::Solve(a) => absolute(&mut a.cluster),
            Command::Circle(a) => absolute(&mut a.cluster),
            Command::Train(a) => {
                absolute(&mut a.dataset)?;
                absolute(&mut a.model)
            }
            Command::Invert(a) => {
                absolute(&mut a.target)?;
                absolute(&mut a.model)
            }
            Command::Dataset(_) | Command::Synth(_) | Command::Hyperopt(_) | Command::Gradcheck(_) => Ok(()),
        }
    }

    /// Problem class implied by the command's inputs, used when neither
    /// the flags nor the configuration name one.
    pub fn implied_class(&self) -> CliResult<Option<ProblemClass>> {
        match self {
            Command::Synth(a) => Ok(Some(a.kind.class())),
            Command::Train(TrainArgs {
                dataset: Some(d),
                stage: TrainStage::Full,
                ..
            }) => {
                let m = flexscatter::dataset::Dataset::load_manifest(d)?;
                Ok(Some(m.spec.class))
            }
            Command::Invert(InvertArgs { target: Some(t), .. }) => Ok(Some(crate::run::read_sidecar(t)?.class)),
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_forms() {
        assert_eq!("64".parse::<Resolution>().unwrap(), Resolution([64, 64]));
        assert_eq!("32x16".parse::<Resolution>().unwrap(), Resolution([32, 16]));
        assert!("wide".parse::<Resolution>().is_err());
    }

    #[test]
    fn parses_every_command() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "flexscatter", "synth", "--type", "incident", "--channels", "1", "--out", "o", "--resolution", "65",
        ])
        .unwrap();
        match cli.command {
            CliCommand::Synth { common, args } => {
                assert_eq!(args.channels, Some(1));
                assert_eq!(common.resolution, Some(Resolution([65, 65])));
            }
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["flexscatter", "hyperopt", "--stage", "joint", "--trials", "3", "--out", "o"]).unwrap();
        assert!(matches!(cli.command, CliCommand::Hyperopt { args: HyperoptArgs { stage: HyperStage::Joint, trials: 3, .. }, .. }));
        assert!(Cli::try_parse_from(["flexscatter", "invert", "--mode", "psychic", "--out", "o"]).is_err());
    }

    #[test]
    fn command_round_trips() {
        let c = Command::Synth(SynthArgs {
            kind: SynthType::Incident,
            channels: Some(2),
            count: 3,
        });
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"synth":{"kind":"incident","channels":2,"count":3}}"#);
        assert_eq!(serde_json::from_str::<Command>(&s).unwrap(), c);
    }
}
