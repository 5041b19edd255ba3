//! Command-line front end: configuration, run manifests and the commands.

pub mod command;
pub mod config;
pub mod error;
pub mod manifest;
pub mod run;
pub mod schema;

use std::path::Path;

use flexscatter::problems::ProblemClass;

use command::{Cli, CliCommand, Command, CommonArgs, RerunArgs};
use config::{ConfigFile, Overrides, RunConfig};
use error::{CliError, CliResult};
use manifest::{hash_file, RunManifest, TOOL};
pub use run::{execute, GRADCHECK_TOLERANCE};

fn split(c: CliCommand) -> Result<(CommonArgs, Command), RerunArgs> {
    Ok(match c {
        CliCommand::Solve { common, args } => (common, Command::Solve(args)),
        CliCommand::Dataset { common, args } => (common, Command::Dataset(args)),
        CliCommand::Synth { common, args } => (common, Command::Synth(args)),
        CliCommand::Train { common, args } => (common, Command::Train(args)),
        CliCommand::Invert { common, args } => (common, Command::Invert(args)),
        CliCommand::Hyperopt { common, args } => (common, Command::Hyperopt(args)),
        CliCommand::Gradcheck { common, args } => (common, Command::Gradcheck(args)),
        CliCommand::Circle { common, args } => (common, Command::Circle(args)),
        CliCommand::Rerun(a) => return Err(a),
    })
}

/// Resolves the flags and configuration file of a command into the form
/// recorded in its manifest.
pub fn prepare(common: &CommonArgs, mut cmd: Command) -> CliResult<(Command, RunConfig)> {
    cmd.absolutize()?;
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let named = common.preset.or(file.preset).is_some() || file.problem.is_some();
    let mut ov = Overrides {
        preset: common.preset,
        seed: common.seed,
        resolution: common.resolution.map(|r| r.0),
    };
    if !named {
        ov.preset = cmd.implied_class()?;
    }
    let cfg = RunConfig::resolve(file, &ov)?;
    if let Command::Gradcheck(g) = &mut cmd {
        g.classes = if named { vec![cfg.problem.class] } else { ProblemClass::ALL.to_vec() };
    }
    Ok((cmd, cfg))
}

/// Turns a completed run's verdict into an error where the command has one.
fn verdict(m: &RunManifest) -> CliResult<()> {
    if let Command::Gradcheck(_) = m.command {
        let worst = m.summary["worst_rel_error"].as_f64().unwrap_or(f64::INFINITY);
        if !(worst <= GRADCHECK_TOLERANCE) {
            return Err(CliError::Gradcheck {
                worst,
                tolerance: GRADCHECK_TOLERANCE,
            });
        }
    }
    Ok(())
}

/// Repeats the run recorded in a manifest. Inputs must be unchanged; with
/// `check`, every output must reproduce its recorded digest.
pub fn rerun(manifest: &Path, out: &Path, check: bool) -> CliResult<RunManifest> {
    let old = RunManifest::load(manifest)?;
    if old.tool != TOOL {
        return Err(CliError::Config(format!("manifest written by '{}'", old.tool)));
    }
    for input in &old.inputs {
        if hash_file(Path::new(&input.path))? != input.sha256 {
            return Err(CliError::Config(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let new = execute(&old.command, &old.config, out)?;
    if check {
        let mut diffs: Vec<String> = old
            .outputs
            .iter()
            .filter(|o| !new.outputs.contains(o))
            .map(|o| o.path.clone())
            .collect();
        diffs.extend(
            new.outputs
                .iter()
                .filter(|n| !old.outputs.iter().any(|o| o.path == n.path))
                .map(|n| n.path.clone()),
        );
        if !diffs.is_empty() {
            return Err(CliError::Mismatch(diffs));
        }
    }
    verdict(&new)?;
    Ok(new)
}

/// Runs one parsed command line.
pub fn dispatch(cli: Cli) -> CliResult<RunManifest> {
    match split(cli.command) {
        Err(a) => rerun(&a.manifest, &a.out, a.check),
        Ok((common, cmd)) => {
            let (cmd, cfg) = prepare(&common, cmd)?;
            let m = execute(&cmd, &cfg, &common.out)?;
            verdict(&m)?;
            Ok(m)
        }
    }
}
