//! Parameter resolution: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use privdyn_core::{
    logistic_constants, sigma_from_multiplier, AccountingParams, Neighboring, RawParams,
};
use serde::Deserialize;

use crate::CliError;

/// Hyperparameter flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// TOML file with any of the parameter keys below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset size.
    #[arg(long)]
    pub n: Option<u64>,
    /// Mini-batch size.
    #[arg(long)]
    pub b: Option<u64>,
    /// Step size.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Number of epochs K.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Noise scale σ.
    #[arg(long, conflicts_with = "sigma_mul")]
    pub sigma: Option<f64>,
    /// Noise multiplier; converted to σ through η, b and the sensitivity.
    #[arg(long)]
    pub sigma_mul: Option<f64>,
    /// Strong convexity constant (0 for merely convex losses).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Smoothness constant.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Gradient sensitivity S_g.
    #[arg(long)]
    pub sensitivity: Option<f64>,
    /// Feature clip norm; with --clip-gradient derives β and S_g for logistic regression.
    #[arg(long, requires = "clip_gradient")]
    pub clip_feature: Option<f64>,
    /// Gradient clip norm for logistic regression.
    #[arg(long, requires = "clip_feature")]
    pub clip_gradient: Option<f64>,
    /// Neighboring notion of the reported guarantee (change-one or remove-one).
    #[arg(long)]
    pub neighboring: Option<Neighboring>,
    /// Drop the remainder when b does not divide n.
    #[arg(long)]
    pub truncate_last_batch: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    n: Option<u64>,
    b: Option<u64>,
    eta: Option<f64>,
    epochs: Option<u64>,
    sigma: Option<f64>,
    sigma_mul: Option<f64>,
    lambda: Option<f64>,
    beta: Option<f64>,
    sensitivity: Option<f64>,
    clip_feature: Option<f64>,
    clip_gradient: Option<f64>,
    neighboring: Option<String>,
    truncate_last_batch: Option<bool>,
}

fn read_file(path: &Path) -> Result<ParamFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input("ConfigUnreadable", format!("{}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::input("ConfigInvalid", format!("{}: {e}", path.display())))
}

/// Flag values after merging with the config file.
#[derive(Debug, Clone, Default)]
pub struct Merged {
    pub n: Option<u64>,
    pub b: Option<u64>,
    pub eta: Option<f64>,
    pub epochs: Option<u64>,
    pub sigma: Option<f64>,
    pub sigma_mul: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub sensitivity: Option<f64>,
    pub clip_feature: Option<f64>,
    pub clip_gradient: Option<f64>,
    pub neighboring: Neighboring,
    pub truncate_last_batch: bool,
}

impl ParamArgs {
    pub fn merge(&self) -> Result<Merged, CliError> {
        let file = match &self.config {
            Some(path) => read_file(path)?,
            None => ParamFile::default(),
        };
        let neighboring = match (self.neighboring, file.neighboring) {
            (Some(n), _) => n,
            (None, Some(text)) => text
                .parse()
                .map_err(|e: privdyn_core::AccountingError| CliError::from(e))?,
            (None, None) => Neighboring::ChangeOne,
        };
        Ok(Merged {
            n: self.n.or(file.n),
            b: self.b.or(file.b),
            eta: self.eta.or(file.eta),
            epochs: self.epochs.or(file.epochs),
            sigma: self.sigma.or(file.sigma),
            sigma_mul: self.sigma_mul.or(if self.sigma.is_some() { None } else { file.sigma_mul }),
            lambda: self.lambda.or(file.lambda),
            beta: self.beta.or(file.beta),
            sensitivity: self.sensitivity.or(file.sensitivity),
            clip_feature: self.clip_feature.or(file.clip_feature),
            clip_gradient: self.clip_gradient.or(file.clip_gradient),
            neighboring,
            truncate_last_batch: self.truncate_last_batch || file.truncate_last_batch.unwrap_or(false),
        })
    }
}

fn required<T>(value: Option<T>, flag: &'static str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::input(
            "MissingArgument",
            format!("--{flag} is required (flag or `{}` in --config)", flag.replace('-', "_")),
        )
    })
}

impl Merged {
    /// Validated parameters. The defaults stand in for a missing `σ` or `K`
    /// when the caller solves for that quantity.
    pub fn params(
        &self,
        default_sigma: Option<f64>,
        default_epochs: Option<u64>,
    ) -> Result<AccountingParams, CliError> {
        let n = required(self.n, "n")?;
        let b = required(self.b, "b")?;
        let eta = required(self.eta, "eta")?;
        let lambda = required(self.lambda, "lambda")?;
        let (beta, sensitivity) = match (self.clip_feature, self.clip_gradient) {
            (Some(feature), Some(grad)) => {
                let c = logistic_constants(feature, lambda, grad)?;
                (c.effective_smoothness(), c.sensitivity)
            }
            _ => (
                required(self.beta, "beta")?,
                required(self.sensitivity, "sensitivity")?,
            ),
        };
        let sigma = match (self.sigma, self.sigma_mul) {
            (Some(s), _) => s,
            (None, Some(mul)) => sigma_from_multiplier(eta, b, sensitivity, mul)?,
            (None, None) => match default_sigma {
                Some(s) => s,
                None => required(None, "sigma")?,
            },
        };
        Ok(RawParams {
            n,
            b,
            eta,
            epochs: required(self.epochs.or(default_epochs), "epochs")?,
            sigma,
            lambda,
            beta,
            sensitivity,
            neighboring: self.neighboring,
            truncate_last_batch: self.truncate_last_batch,
        }
        .validate()?)
    }
}
