//! Run configuration: a JSON file merged with command-line flags.

use std::{fmt, fs, path::PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Deserialize;
use tridiag_susy::{
    models::{build_model, ModelDescriptor, ParamValue, Params},
    C64,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Bad input: unknown model, missing or malformed flags, inconsistent config.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Contents of a `--config` file. Every field is optional; flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    #[serde(default)]
    pub params: Params,
    pub n: Option<usize>,
    pub levels: Option<Vec<usize>>,
    pub energy: Option<[f64; 2]>,
    pub both_sides: Option<bool>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub verbosity: Option<u8>,
}

impl RunConfig {
    pub fn load(path: Option<&PathBuf>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Debug)]
pub struct Global {
    /// JSON run configuration; flags given on the command line take precedence
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Tolerance (normalization, residual, or a uniform verification threshold)
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Truncation size N (number of coefficients / matrix dimension)
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Diagnostics on stderr; repeat for more
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Model selection. Complex values are given as two tokens, `RE IM`.
#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// shifted_oscillator | shifted_square_well | squeezed | double_translation
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, num_args = 2, value_names = ["RE", "IM"], allow_negative_numbers = true)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["RE", "IM"], allow_negative_numbers = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["RE", "IM"], allow_negative_numbers = true)]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["RE", "IM"], allow_negative_numbers = true)]
    pub delta: Option<Vec<f64>>,
    /// Squeezing modulus
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    /// Squeezing phase
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
}

/// Everything a command needs after merging file and flags.
pub struct Resolved {
    pub model: ModelDescriptor,
    pub n: usize,
    pub levels: Vec<usize>,
    pub energy: Option<C64>,
    pub both_sides: bool,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub verbosity: u8,
}

pub struct Extra<'a> {
    pub levels: &'a [usize],
    pub energy: Option<&'a [f64]>,
    pub both_sides: bool,
    pub default_n: usize,
}

impl Extra<'_> {
    pub fn none(default_n: usize) -> Self {
        Extra { levels: &[], energy: None, both_sides: false, default_n }
    }
}

pub fn resolve(global: &Global, args: &ModelArgs, extra: Extra<'_>) -> anyhow::Result<Resolved> {
    let file = RunConfig::load(global.config.as_ref())?;
    let name = args
        .name
        .clone()
        .or(file.model)
        .ok_or_else(|| usage("no model given (use --name or \"model\" in --config)"))?;

    let mut params = file.params;
    for (key, value) in [("alpha", &args.alpha), ("beta", &args.beta), ("gamma", &args.gamma), ("delta", &args.delta)] {
        if let Some(v) = value {
            params.insert(key.to_owned(), ParamValue::Complex([v[0], v[1]]));
        }
    }
    for (key, value) in [("r", args.r), ("theta", args.theta)] {
        if let Some(v) = value {
            params.insert(key.to_owned(), ParamValue::Real(v));
        }
    }
    let model = build_model(&name, &params)?;

    let n = global.n.or(file.n).unwrap_or(extra.default_n);
    if n < model.h() + 1 {
        return Err(usage(format!("--n {n} is below h + 1 = {} for {}", model.h() + 1, model.name)));
    }
    let tol = global.tol.or(file.tol);
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(usage(format!("--tol must be positive, got {t}")));
        }
    }
    let levels = if extra.levels.is_empty() { file.levels.unwrap_or_else(|| vec![0]) } else { extra.levels.to_vec() };
    let energy = extra.energy.map(|e| C64::new(e[0], e[1])).or(file.energy.map(|[re, im]| C64::new(re, im)));

    Ok(Resolved {
        model,
        n,
        levels,
        energy,
        both_sides: extra.both_sides || file.both_sides.unwrap_or(false),
        tol,
        out: global.out.clone().or(file.out),
        format: global.format.or(file.format).unwrap_or_default(),
        verbosity: global.verbose.max(file.verbosity.unwrap_or(0)),
    })
}
