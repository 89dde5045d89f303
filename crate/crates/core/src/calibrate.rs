//! Inverse problems: the smallest noise, or the largest epoch count, that
//! keeps a bound within an `(ε, δ)` budget.

use serde::Serialize;

use crate::bound::{evaluate_dp, limit, BoundKind};
use crate::convert::rdp_to_dp;
use crate::error::{AccountingError, Result};
use crate::params::{AccountingParams, RdpPoint};
use crate::sampling::{SampWoRecursion, SampWoState};

/// Search settings for [`calibrate_noise`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationOptions {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    /// Relative width of the final bracket.
    pub rel_tol: f64,
    pub max_iterations: u32,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            sigma_lo: 1e-6,
            sigma_hi: 1e6,
            rel_tol: 1e-6,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseCalibration {
    pub sigma: f64,
    /// Converted `ε` at the returned `σ`; never above the target.
    pub eps: f64,
    pub alpha_star: f64,
    pub iterations: u32,
}

/// Smallest `σ` (to `rel_tol`) whose converted guarantee meets `target_eps`.
///
/// Bisects in `ln σ`; the returned value is the feasible end of the final
/// bracket, so ties resolve toward more noise.
pub fn calibrate_noise(
    params: &AccountingParams,
    grid: &[f64],
    target_eps: f64,
    delta: f64,
    kind: BoundKind,
    opts: &CalibrationOptions,
) -> Result<NoiseCalibration> {
    if !(target_eps > 0.0) {
        return Err(AccountingError::NonPositive {
            field: "target_eps",
            value: target_eps,
        });
    }
    let (mut lo, mut hi) = (opts.sigma_lo, opts.sigma_hi);
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(AccountingError::BracketTooNarrow { lo, hi });
    }
    let eval = |sigma: f64| evaluate_dp(kind, &params.with_sigma(sigma)?, grid, delta);

    let at_lo = eval(lo)?;
    if at_lo.eps <= target_eps {
        return Ok(NoiseCalibration {
            sigma: lo,
            eps: at_lo.eps,
            alpha_star: at_lo.alpha_star,
            iterations: 0,
        });
    }
    let mut best = eval(hi)?;
    if best.eps > target_eps {
        return Err(AccountingError::Unsatisfiable {
            target: target_eps,
            lo,
            hi,
        });
    }
    let mut iterations = 0;
    while hi / lo - 1.0 > opts.rel_tol && iterations < opts.max_iterations {
        let mid = (lo * hi).sqrt();
        let g = eval(mid)?;
        if g.eps <= target_eps {
            hi = mid;
            best = g;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(NoiseCalibration {
        sigma: hi,
        eps: best.eps,
        alpha_star: best.alpha_star,
        iterations,
    })
}

/// Largest admissible number of epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochBudget {
    Finite(u64),
    /// The bound converges below the budget: any number of epochs is allowed.
    Unbounded,
}

/// Epoch counts beyond this are treated as numerically converged.
const EPOCH_SEARCH_CAP: u64 = 1 << 40;
/// Incremental scans (sampling without replacement) stop here.
const EPOCH_SCAN_CAP: u64 = 10_000_000;

/// Largest `K` whose converted guarantee stays within `target_eps`.
pub fn max_epochs(
    params: &AccountingParams,
    grid: &[f64],
    target_eps: f64,
    delta: f64,
    kind: BoundKind,
) -> Result<EpochBudget> {
    if !(target_eps > 0.0) {
        return Err(AccountingError::NonPositive {
            field: "target_eps",
            value: target_eps,
        });
    }
    // Orders whose bound diverges in K do not constrain the minimum.
    let mut converged = Vec::new();
    for &alpha in grid {
        if let Some(eps) = limit(kind, params, alpha)? {
            converged.push(RdpPoint::new(alpha, eps)?);
        }
    }
    if !converged.is_empty() && rdp_to_dp(&converged, delta)?.eps <= target_eps {
        return Ok(EpochBudget::Unbounded);
    }

    if kind == BoundKind::SampWo {
        return scan_samp_wo(params, grid, target_eps, delta);
    }

    let within = |k: u64| -> Result<bool> {
        Ok(evaluate_dp(kind, &params.with_epochs(k), grid, delta)?.eps <= target_eps)
    };
    if !within(1)? {
        return Ok(EpochBudget::Finite(0));
    }
    let mut lo = 1;
    let mut hi = 2;
    while within(hi)? {
        lo = hi;
        if hi >= EPOCH_SEARCH_CAP {
            return Ok(EpochBudget::Unbounded);
        }
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if within(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EpochBudget::Finite(lo))
}

fn scan_samp_wo(
    params: &AccountingParams,
    grid: &[f64],
    target_eps: f64,
    delta: f64,
) -> Result<EpochBudget> {
    let recursions = grid
        .iter()
        .map(|&alpha| SampWoRecursion::from_params(params, alpha))
        .collect::<Result<Vec<_>>>()?;
    let mut states = vec![SampWoState::default(); grid.len()];
    for k in 1..=EPOCH_SCAN_CAP {
        let mut moved = false;
        for (rec, state) in recursions.iter().zip(states.iter_mut()) {
            let before = state.log_s;
            for _ in 0..params.steps_per_epoch() {
                rec.step(state)?;
            }
            moved |= state.log_s != before;
        }
        let points = grid
            .iter()
            .zip(recursions.iter().zip(&states))
            .map(|(&alpha, (rec, state))| RdpPoint::new(alpha, rec.eps(state)))
            .collect::<Result<Vec<_>>>()?;
        if rdp_to_dp(&points, delta)?.eps > target_eps {
            return Ok(EpochBudget::Finite(k - 1));
        }
        if !moved {
            break;
        }
    }
    Ok(EpochBudget::Unbounded)
}
