//! Config file layer. Every field is optional; anything given on the command
//! line wins.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use storeloc::evaluation::{Method, Nn3Weighting};
use storeloc::solver::SolverConfig;
use storeloc::synth::SynthConfig;
use storeloc::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub region: Option<String>,
    pub origin_lat: Option<f64>,
    pub origin_lon: Option<f64>,
    pub theta: Option<f64>,
    pub min_customers: Option<usize>,
    pub strict_loo: Option<bool>,
    pub nn3_weighting: Option<Nn3Weighting>,
    pub methods: Option<Vec<Method>>,
    pub workers: Option<usize>,
    pub r_edges: Option<Vec<f64>>,
    pub m_bins: Option<usize>,
    pub smoothing_lambda: Option<f64>,
    pub smoothing_floor: Option<f64>,
    pub transactions: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub density: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report_csv: Option<PathBuf>,
    pub report_table: Option<PathBuf>,
    pub solver: Option<SolverConfig>,
    pub synth: Option<SynthConfig>,
    pub known_fraction: Option<f64>,
    pub split_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
