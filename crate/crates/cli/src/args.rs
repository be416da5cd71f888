//! Flags, and their merge with the optional TOML config file.
//!
//! Every flag has a config key of the same name with `_` for `-`, under a
//! table named after the subcommand. Flags given on the command line win.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "adaptive-survey", version, about = "Adaptive political questionnaire with synthetic pre-training")]
pub struct Cli {
    /// TOML file whose `[<command>]` table supplies values for flags not given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ask an LLM (or a mock/replay transport) to answer the questionnaire as each party.
    Generate(GenerateArgs),
    /// Build party means, party vertices or Dirichlet voters from a generated dataset.
    Derive(DeriveArgs),
    /// Simulate users answering adaptively under one initialisation.
    Simulate(SimulateArgs),
    /// Simulate several initialisations with paired seeds and report break-even points.
    Compare(CompareArgs),
    /// Break-even points of coldstart against a pre-trained condition for several K.
    Sweep(SweepArgs),
    /// Gradual replacement of GPT training rows for several gamma values.
    Replacement(ReplacementArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a small planted dataset (questionnaire, candidates, voters, vote shares).
    DemoData(DemoArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Comma-separated party names, or a file with one party per line.
    #[arg(long)]
    pub parties: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Trials per party and temperature.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    /// live, mock or replay.
    #[arg(long)]
    pub transport: Option<String>,
    /// Fixture log to replay from (replay transport).
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Responses CSV whose party means the mock transport answers around.
    #[arg(long)]
    pub mock_profiles: Option<PathBuf>,
    #[arg(long)]
    pub mock_noise: Option<f64>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DeriveArgs {
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Generated dataset CSV.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// means, vertices or voters.
    #[arg(long)]
    pub what: Option<String>,
    /// `party,fraction` vote shares (voters only).
    #[arg(long)]
    pub alpha: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by the simulation commands.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimArgs {
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub voters: Option<PathBuf>,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Questions answered per user.
    #[arg(long)]
    pub k: Option<usize>,
    /// Users per refit.
    #[arg(long)]
    pub u: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid_resolution: Option<usize>,
    #[arg(long)]
    pub k_neighbours: Option<usize>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimArgs,
    /// coldstart, gpt, gpt-means, gpt-voters or candidates.
    #[arg(long)]
    pub init: Option<String>,
    /// Training rows for the gpt* conditions.
    #[arg(long)]
    pub init_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_delimiter = ',')]
    pub conditions: Option<Vec<String>>,
    #[arg(long)]
    pub gpt: Option<PathBuf>,
    #[arg(long)]
    pub gpt_means: Option<PathBuf>,
    #[arg(long)]
    pub gpt_voters: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimArgs,
    /// The pre-trained condition compared with coldstart.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub init_data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ReplacementArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimArgs,
    /// GPT training rows that get replaced.
    #[arg(long)]
    pub init_data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub gamma_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub init_data: Option<PathBuf>,
    /// Questions per session.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub u: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub abandon_after_secs: Option<u64>,
    #[arg(long)]
    pub staleness_budget_secs: Option<u64>,
    #[arg(long)]
    pub cors_origin: Option<String>,
    #[arg(long)]
    pub k_neighbours: Option<usize>,
    #[arg(long)]
    pub preview: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DemoArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_questions: Option<usize>,
    #[arg(long)]
    pub n_parties: Option<usize>,
    #[arg(long)]
    pub candidates_per_party: Option<usize>,
    #[arg(long)]
    pub n_voters: Option<usize>,
}

pub const SECTIONS: [&str; 8] = ["generate", "derive", "simulate", "compare", "sweep", "replacement", "serve", "demo-data"];

pub fn read_config(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(bad) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(CliError::Usage(format!("{}: unknown section [{bad}]", path.display())));
    }
    Ok(table)
}

/// Overlays the flags that were given onto the `[section]` table of the config file.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(flags: &T, config: Option<&toml::Table>, section: &str) -> Result<T> {
    let known: BTreeSet<String> = match serde_json::to_value(T::default())? {
        serde_json::Value::Object(m) => m.into_iter().map(|(k, _)| k).collect(),
        _ => unreachable!("argument structs serialize as maps"),
    };
    let mut merged = serde_json::Map::new();
    if let Some(table) = config.and_then(|c| c.get(section)) {
        let serde_json::Value::Object(file) = serde_json::to_value(table)? else {
            return Err(CliError::Usage(format!("config entry {section} must be a table")));
        };
        if let Some(bad) = file.keys().find(|k| !known.contains(*k)) {
            return Err(CliError::Usage(format!("unknown key {bad:?} in [{section}]")));
        }
        merged.extend(file);
    }
    if let serde_json::Value::Object(given) = serde_json::to_value(flags)? {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(serde_json::Value::Object(merged)).map_err(|e| CliError::Usage(format!("[{section}]: {e}")))
}

pub fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value.clone().ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}
