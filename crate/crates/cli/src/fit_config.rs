//! Fit settings: defaults, then the TOML file, then flags.

use std::path::Path;

use ringfit::gibbs::GibbsConfig;
use ringfit::online::OnlineConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};
use crate::FitOverrides;

pub const DEFAULT_INITIAL_RANK: usize = 5;

/// Contents of a `--config` file.
///
/// ```toml
/// initial_rank = 8
/// standardize = true
///
/// [gibbs]
/// burn_in = 1500
/// rank_adaption = { epsilon = 0.01 }
///
/// [online]
/// batch_size = 512
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Starting rank for the Gibbs sampler.
    pub initial_rank: Option<usize>,
    pub standardize: Option<bool>,
    pub gibbs: GibbsConfig,
    pub online: OnlineConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Everything `fit` needs after merging.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSettings {
    pub initial_rank: usize,
    pub standardize: bool,
    pub gibbs: GibbsConfig,
    pub online: OnlineConfig,
    pub select_rank: Vec<usize>,
    pub validation: f64,
}

pub fn merge(file: FileConfig, flags: &FitOverrides, parallel: bool) -> FitSettings {
    let mut gibbs = file.gibbs;
    let mut online = file.online;
    let mut initial_rank = file.initial_rank.unwrap_or(DEFAULT_INITIAL_RANK);

    if let Some(r) = flags.rank {
        initial_rank = r;
        online.rank = r;
    }
    if let Some(s) = flags.seed {
        gibbs.seed = s;
        online.seed = s;
    }
    if let Some(v) = flags.a0 {
        gibbs.a0 = v;
        online.a0 = v;
    }
    if let Some(v) = flags.alpha0 {
        gibbs.alpha0 = v;
        online.alpha0 = v;
    }
    if let Some(v) = flags.beta0 {
        gibbs.beta0 = v;
        online.beta0 = v;
    }
    if let Some(v) = flags.psi {
        gibbs.psi = v;
        online.psi = v;
    }
    if let Some(v) = flags.init_std {
        gibbs.init_std = v;
        online.init_std = v;
    }

    set(&mut gibbs.burn_in, flags.burn_in);
    set(&mut gibbs.n_samples, flags.samples);
    set(&mut gibbs.thin, flags.thin);
    let adapt = &mut gibbs.rank_adaption;
    if flags.no_adapt {
        adapt.enabled = false;
    }
    set(&mut adapt.epsilon, flags.epsilon);
    set(&mut adapt.kappa0, flags.kappa0);
    set(&mut adapt.kappa1, flags.kappa1);
    set(&mut adapt.min_rank, flags.min_rank);
    set(&mut adapt.max_rank, flags.max_rank);

    set(&mut online.batch_size, flags.batch_size);
    set(&mut online.epochs, flags.epochs);
    set(&mut online.step_size, flags.step_size);
    set(&mut online.step_decay, flags.step_decay);

    if !parallel {
        gibbs.parallel = false;
        online.parallel = false;
    }

    FitSettings {
        initial_rank,
        standardize: !flags.no_standardize && file.standardize.unwrap_or(true),
        gibbs,
        online,
        select_rank: flags.select_rank.clone(),
        validation: flags.validation,
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
