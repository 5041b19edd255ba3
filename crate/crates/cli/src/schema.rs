//! JSON schemas of the configuration file and the run manifest.
//!
//! The committed copies under `schema/` are regenerated with
//! `UPDATE_SCHEMAS=1 cargo test -p flexscatter-cli schema`.

use schemars::schema_for;

use crate::config::ConfigFile;
use crate::manifest::RunManifest;

pub const CONFIG_SCHEMA_FILE: &str = "config.schema.json";
pub const MANIFEST_SCHEMA_FILE: &str = "manifest.schema.json";

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("schema serializes");
    s.push('\n');
    s
}

pub fn config_schema() -> String {
    pretty(&schema_for!(ConfigFile))
}

pub fn manifest_schema() -> String {
    pretty(&schema_for!(RunManifest))
}
