//! RDP to `(ε, δ)` conversion, neighboring-notion translation, and the
//! regularized logistic regression constants.

use serde::Serialize;

use crate::error::{AccountingError, Result};
use crate::params::{
    positive, sigma_from_multiplier, AccountingParams, Neighboring, RawParams, RdpPoint,
};
use crate::sampling::bound_shuffle;

/// Environment variable that replaces the default order grid.
pub const ALPHA_GRID_ENV: &str = "ACCOUNTANT_ALPHA_GRID";

/// `{1.25, 1.5, 2, 3, …, 64, 128, 256}`.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut grid = vec![1.25, 1.5];
    grid.extend((2..=64).map(f64::from));
    grid.extend([128.0, 256.0]);
    grid
}

/// Parses a comma-separated list of orders, each strictly above 1.
pub fn parse_alpha_grid(text: &str) -> Result<Vec<f64>> {
    let grid = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let alpha: f64 = s.parse().map_err(|_| AccountingError::UnknownVariant {
                what: "alpha grid entry",
                value: s.to_string(),
            })?;
            crate::params::check_order(alpha)?;
            Ok(alpha)
        })
        .collect::<Result<Vec<f64>>>()?;
    if grid.is_empty() {
        return Err(AccountingError::EmptyInput);
    }
    Ok(grid)
}

/// The grid from [`ALPHA_GRID_ENV`] if set, otherwise [`default_alpha_grid`].
pub fn alpha_grid_from_env() -> Result<Vec<f64>> {
    match std::env::var(ALPHA_GRID_ENV) {
        Ok(text) => parse_alpha_grid(&text),
        Err(_) => Ok(default_alpha_grid()),
    }
}

/// An `(ε, δ)`-DP guarantee and the order it was read off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DpGuarantee {
    pub eps: f64,
    pub delta: f64,
    pub neighboring: Neighboring,
    pub alpha_star: f64,
}

/// `ε = min_α [ε_α + ln(1/δ)/(α-1)]`, smallest order on ties.
///
/// The result is stated for change-one neighbors, the notion every dynamics
/// bound is proved under.
pub fn rdp_to_dp(points: &[RdpPoint], delta: f64) -> Result<DpGuarantee> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(AccountingError::InvalidDelta { delta });
    }
    let log_inv_delta = -delta.ln();
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        crate::params::check_order(p.alpha)?;
        let eps = p.eps + log_inv_delta / (p.alpha - 1.0);
        let better = match best {
            None => true,
            Some((e, a)) => eps < e || (eps == e && p.alpha < a),
        };
        if better {
            best = Some((eps, p.alpha));
        }
    }
    let (eps, alpha_star) = best.ok_or(AccountingError::EmptyInput)?;
    Ok(DpGuarantee {
        eps,
        delta,
        neighboring: Neighboring::ChangeOne,
        alpha_star,
    })
}

/// Restates `g` under another neighboring notion.
///
/// Remove-one to change-one doubles `ε` at the same `δ`. Change-one to
/// remove-one keeps `ε` unchanged: the reported value is never shrunk.
pub fn translate_neighboring(g: &DpGuarantee, to: Neighboring) -> DpGuarantee {
    let eps = match (g.neighboring, to) {
        (Neighboring::RemoveOne, Neighboring::ChangeOne) => 2.0 * g.eps,
        _ => g.eps,
    };
    DpGuarantee {
        eps,
        neighboring: to,
        ..*g
    }
}

/// Regularity constants of multi-class logistic regression on clipped features
/// with a clipped unregularized gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticConstants {
    pub clip_feature: f64,
    /// `√(2(L² + 1))`.
    pub lipschitz: f64,
    /// Smoothness of the unregularized loss, `(L² + 1)/2`.
    pub beta: f64,
    pub lambda: f64,
    /// `2 ·` gradient clip norm.
    pub sensitivity: f64,
}

impl LogisticConstants {
    /// Upper Lipschitz constant of the clipped regularized gradient, `β + λ`.
    pub fn effective_smoothness(&self) -> f64 {
        self.beta + self.lambda
    }
}

pub fn logistic_constants(clip_feature: f64, lambda: f64, grad_clip: f64) -> Result<LogisticConstants> {
    if !(clip_feature >= 0.0 && clip_feature.is_finite()) {
        return Err(AccountingError::NonPositive {
            field: "clip_feature",
            value: clip_feature,
        });
    }
    positive("lambda", lambda)?;
    positive("clip_gradient", grad_clip)?;
    let norm_sq = clip_feature * clip_feature + 1.0;
    Ok(LogisticConstants {
        clip_feature,
        lipschitz: (2.0 * norm_sq).sqrt(),
        beta: norm_sq / 2.0,
        lambda,
        sensitivity: 2.0 * grad_clip,
    })
}

/// Inputs of the shuffle bound specialised to regularized logistic regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticSetup {
    pub n: u64,
    pub b: u64,
    pub eta: f64,
    pub epochs: u64,
    pub lambda: f64,
    pub clip_feature: f64,
    pub clip_gradient: f64,
    pub sigma_mul: f64,
    /// RDP cost of feature normalization, added as is.
    pub eps_norm: f64,
    pub truncate_last_batch: bool,
}

impl LogisticSetup {
    /// Accounting parameters: smoothness `β + λ`, sensitivity `2·clip`, and the
    /// noise scale equivalent to `sigma_mul`.
    pub fn params(&self) -> Result<AccountingParams> {
        let consts = logistic_constants(self.clip_feature, self.lambda, self.clip_gradient)?;
        let sigma = sigma_from_multiplier(self.eta, self.b, consts.sensitivity, self.sigma_mul)?;
        RawParams {
            n: self.n,
            b: self.b,
            eta: self.eta,
            epochs: self.epochs,
            sigma,
            lambda: self.lambda,
            beta: consts.effective_smoothness(),
            sensitivity: consts.sensitivity,
            neighboring: Neighboring::ChangeOne,
            truncate_last_batch: self.truncate_last_batch,
        }
        .validate()
    }
}

/// `2α / σ_mul²`: the per-step base loss once `σ` is expressed through the multiplier.
pub fn multiplier_step_loss(alpha: f64, sigma_mul: f64) -> f64 {
    2.0 * alpha / (sigma_mul * sigma_mul)
}

/// `ε_norm +` the shuffle bound on the derived parameters.
pub fn corollary_logistic_bound(setup: &LogisticSetup, alpha: f64) -> Result<f64> {
    if !(setup.eps_norm >= 0.0) {
        return Err(AccountingError::NonPositive {
            field: "eps_norm",
            value: setup.eps_norm,
        });
    }
    let params = setup.params()?;
    Ok(setup.eps_norm + bound_shuffle(&params, alpha)?.eps)
}
