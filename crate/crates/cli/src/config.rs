//! Settings shared by the subcommands: TOML file, presets and flag overrides.
//!
//! Precedence is flag > config file > preset > built-in toy defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gapgp::gp::{FitOptions, FrozenMask, Hyperparameters, Model, ModelVariant, Optimizer};
use gapgp::{GreensConfig, KernelParams, MechanisticParams};
use serde::{Deserialize, Serialize};

/// Mechanistic constants (S, λ, D) estimated for the Becker gap-gene data.
pub const PRESETS: [(&str, [f64; 3]); 3] = [
    ("becker-kr", [0.0970, 0.0764, 0.0015]),
    ("becker-kni", [0.0783, 0.0770, 0.0125]),
    ("becker-gt", [0.1107, 0.1110, 0.0159]),
];

pub fn preset(name: &str) -> Result<[f64; 3]> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .with_context(|| format!("unknown preset {name:?}; known: becker-kr, becker-kni, becker-gt"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    UOnly,
    YOnly,
    Both,
}

impl Regime {
    pub fn uses(&self, ch: gapgp::Channel) -> bool {
        match self {
            Regime::UOnly => ch == gapgp::Channel::U,
            Regime::YOnly => ch == gapgp::Channel::Y,
            Regime::Both => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Mrna,
    Protein,
}

/// Keys accepted in the `--config` TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub n_terms: Option<usize>,
    pub domain_len: Option<f64>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub s_rate: Option<f64>,
    pub lambda: Option<f64>,
    pub diff: Option<f64>,
    pub sigma2: Option<f64>,
    pub theta_x: Option<f64>,
    pub theta_t: Option<f64>,
    pub nugget_u: Option<f64>,
    pub nugget_y: Option<f64>,
    pub freeze: Option<Vec<String>>,
    pub regime: Option<String>,
    pub train_frac: Option<f64>,
    pub seeds: Option<usize>,
    pub restarts: Option<usize>,
    pub max_iters: Option<u64>,
    pub optimizer: Option<String>,
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub t_max: Option<f64>,
    pub n_obs: Option<usize>,
    pub exclude_time: Option<[f64; 2]>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// Model and parameter flags common to every modelling subcommand.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// TOML file with any of the settings below (flags take precedence).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Number of Green's-function terms (GP-mRNA).
    #[arg(long)]
    pub n_terms: Option<usize>,
    /// Spatial domain length l.
    #[arg(long)]
    pub domain_len: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mechanistic preset: becker-kr, becker-kni or becker-gt.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub s_rate: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub diff: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub theta_x: Option<f64>,
    #[arg(long)]
    pub theta_t: Option<f64>,
    #[arg(long)]
    pub nugget_u: Option<f64>,
    #[arg(long)]
    pub nugget_y: Option<f64>,
}

/// Fully resolved model settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: FileConfig,
    pub model: Model,
    pub seed: u64,
    /// Nuggets given explicitly (flag or file); otherwise chosen from the data.
    pub nugget_u: Option<f64>,
    pub nugget_y: Option<f64>,
}

fn pick<T: Copy>(flag: Option<T>, file: Option<T>, fallback: T) -> T {
    flag.or(file).unwrap_or(fallback)
}

impl ModelArgs {
    pub fn resolve(&self, default_terms: usize) -> Result<Resolved> {
        let file = FileConfig::load(self.config.as_deref())?;
        let variant = match (self.model, &file.model) {
            (Some(ModelArg::Mrna), _) => ModelVariant::Mrna,
            (Some(ModelArg::Protein), _) => ModelVariant::Protein,
            (None, Some(m)) => m.parse()?,
            (None, None) => ModelVariant::Mrna,
        };
        let base = match self.preset.as_ref().or(file.preset.as_ref()) {
            Some(name) => preset(name)?,
            None => [1.0, 0.1, 0.01],
        };
        let mech = MechanisticParams::new(
            pick(self.s_rate, file.s_rate, base[0]),
            pick(self.lambda, file.lambda, base[1]),
            pick(self.diff, file.diff, base[2]),
        )?;
        let kernel = KernelParams::new(
            pick(self.sigma2, file.sigma2, 1.0),
            pick(self.theta_x, file.theta_x, 0.3),
            pick(self.theta_t, file.theta_t, 0.3),
        )?;
        let greens = GreensConfig::new(pick(self.domain_len, file.domain_len, 1.0), pick(self.n_terms, file.n_terms, default_terms))?;
        let nugget_u = self.nugget_u.or(file.nugget_u);
        let nugget_y = self.nugget_y.or(file.nugget_y);
        let mut hyper = Hyperparameters::new(mech, kernel);
        hyper.nugget_u = nugget_u.unwrap_or(0.0);
        hyper.nugget_y = nugget_y.unwrap_or(0.0);
        let freeze = file.freeze.clone().unwrap_or_default();
        hyper.frozen = frozen_mask(&freeze)?;
        hyper.validate()?;
        let seed = pick(self.seed, file.seed, 0);
        Ok(Resolved { model: Model::new(variant, hyper, greens), seed, nugget_u, nugget_y, file })
    }
}

/// Builds a mask from tokens: `mech`, `s-rate`, `lambda`, `diff`, `sigma2`,
/// `theta-x`, `theta-t`, `theta`, `nugget`, `none`. Nuggets stay frozen
/// unless `free-nugget` is given.
pub fn frozen_mask(tokens: &[String]) -> Result<FrozenMask> {
    let mut m = FrozenMask::default();
    for tok in tokens.iter().flat_map(|t| t.split(',')).map(|t| t.trim().to_ascii_lowercase().replace('_', "-")) {
        match tok.as_str() {
            "" | "none" => {}
            "mech" => {
                m.s_rate = true;
                m.lambda = true;
                m.diff = true;
            }
            "s-rate" | "s" => m.s_rate = true,
            "lambda" => m.lambda = true,
            "diff" | "d" => m.diff = true,
            "sigma2" => m.sigma2 = true,
            "theta-x" => m.theta_x = true,
            "theta-t" => m.theta_t = true,
            "theta" => {
                m.theta_x = true;
                m.theta_t = true;
            }
            "nugget" => {
                m.nugget_u = true;
                m.nugget_y = true;
            }
            "free-nugget" => {
                m.nugget_u = false;
                m.nugget_y = false;
            }
            other => bail!("unknown --freeze token {other:?}"),
        }
    }
    Ok(m)
}

/// Optimiser flags.
#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Parameters to hold fixed (comma separated), e.g. `mech`.
    #[arg(long)]
    pub freeze: Vec<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Iteration cap per start (early stopping).
    #[arg(long)]
    pub max_iters: Option<u64>,
    #[arg(long, value_parser = ["nelder-mead", "lbfgs"])]
    pub optimizer: Option<String>,
}

impl FitArgs {
    pub fn options(&self, file: &FileConfig, seed: u64) -> Result<FitOptions> {
        let d = FitOptions::default();
        let optimizer = match self.optimizer.as_ref().or(file.optimizer.as_ref()).map(String::as_str) {
            None | Some("nelder-mead") => Optimizer::NelderMead,
            Some("lbfgs") => Optimizer::Lbfgs,
            Some(o) => bail!("unknown optimizer {o:?}"),
        };
        Ok(FitOptions {
            optimizer,
            restarts: pick(self.restarts, file.restarts, d.restarts),
            max_iters: pick(self.max_iters, file.max_iters, d.max_iters),
            seed,
            ..d
        })
    }

    /// Flag tokens if any were given, else the file's `freeze` list.
    pub fn mask(&self, file: &FileConfig) -> Result<FrozenMask> {
        if self.freeze.is_empty() {
            frozen_mask(&file.freeze.clone().unwrap_or_default())
        } else {
            frozen_mask(&self.freeze)
        }
    }
}

pub fn parse_regime(flag: Option<Regime>, file: &FileConfig) -> Result<Regime> {
    match (flag, &file.regime) {
        (Some(r), _) => Ok(r),
        (None, Some(s)) => Regime::from_str(s, true).map_err(|e| anyhow::anyhow!("regime: {e}")),
        (None, None) => Ok(Regime::Both),
    }
}
