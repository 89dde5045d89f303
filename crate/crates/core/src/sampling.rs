//! Amplification from mini-batch randomness: shuffle-and-partition and
//! sampling without replacement.

use serde::Serialize;

use crate::dynamics::strongly_convex_first_term;
use crate::error::{AccountingError, Result};
use crate::numerics::{log_add_exp, log_mean_exp, log_sum_exp};
use crate::params::{check_order, AccountingParams, ConvexityClass, RdpCurve};

/// Bound for a single shuffle-and-partition realization drawn uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShuffleBound {
    pub params: AccountingParams,
    pub alpha: f64,
    /// Identical to the first term of the fixed last-batch bound.
    pub first_term: f64,
    /// `1/(α-1) · ln Avg_{j0} exp((α-1) ε₀^{m-j0})`.
    pub avg_term: f64,
    pub eps: f64,
}

/// Shuffle-and-partition bound: the fixed-batch bound with its last-epoch term
/// averaged over the random position of the differing record.
pub fn bound_shuffle(params: &AccountingParams, alpha: f64) -> Result<ShuffleBound> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    check_order(alpha)?;
    if params.epochs() == 0 {
        return Ok(ShuffleBound {
            params: *params,
            alpha,
            first_term: 0.0,
            avg_term: 0.0,
            eps: 0.0,
        });
    }
    let first_term = strongly_convex_first_term(params, alpha);
    let avg_term = shuffle_avg_term(params, alpha)?;
    Ok(ShuffleBound {
        params: *params,
        alpha,
        first_term,
        avg_term,
        eps: first_term + avg_term,
    })
}

pub(crate) fn shuffle_avg_term(params: &AccountingParams, alpha: f64) -> Result<f64> {
    let m = params.steps_per_epoch();
    let scaled = (1..=m)
        .map(|j| Ok((alpha - 1.0) * crate::dynamics::eps0_term(params, alpha, j)?))
        .collect::<Result<Vec<f64>>>()?;
    // log_mean_exp factors out the largest exponent, (α-1)·ε₀¹.
    Ok(log_mean_exp(&scaled) / (alpha - 1.0))
}

/// `K → ∞` value of [`bound_shuffle`].
pub fn shuffle_limit(params: &AccountingParams, alpha: f64) -> Result<f64> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    check_order(alpha)?;
    Ok(crate::dynamics::strongly_convex_first_term_limit(params, alpha)
        + shuffle_avg_term(params, alpha)?)
}

/// Log-domain state `ℓ = ln S` of the sampling-without-replacement recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampWoState {
    pub log_s: f64,
    pub steps: u64,
}

impl Default for SampWoState {
    fn default() -> Self {
        Self {
            log_s: 0.0,
            steps: 0,
        }
    }
}

/// `S ← q e^{(α-1)ε₁} S + (1-q) S^r`, carried as `ln S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampWoRecursion {
    alpha: f64,
    q: f64,
    contraction: f64,
    growth: f64,
    log_q: f64,
    log_rest: f64,
}

impl SampWoRecursion {
    /// `q` sampling ratio, `contraction` = `(1-ηλ)²`, `step_loss` = `ε₁` at `alpha`.
    pub fn new(q: f64, contraction: f64, step_loss: f64, alpha: f64) -> Result<Self> {
        check_order(alpha)?;
        if !(q > 0.0 && q <= 1.0) {
            return Err(AccountingError::NonPositive {
                field: "q",
                value: q,
            });
        }
        if !(contraction > 0.0 && contraction <= 1.0) {
            return Err(AccountingError::InvalidRegularity(format!(
                "contraction {contraction} outside (0, 1]"
            )));
        }
        if !(step_loss >= 0.0) {
            return Err(AccountingError::NonPositive {
                field: "step_loss",
                value: step_loss,
            });
        }
        Ok(Self {
            alpha,
            q,
            contraction,
            growth: (alpha - 1.0) * step_loss,
            log_q: q.ln(),
            log_rest: (-q).ln_1p(),
        })
    }

    pub fn from_params(params: &AccountingParams, alpha: f64) -> Result<Self> {
        Self::new(
            params.sampling_ratio(),
            params.contraction(),
            params.step_loss(alpha),
            alpha,
        )
    }

    pub fn step(&self, state: &mut SampWoState) -> Result<()> {
        let fresh = self.log_q + self.growth + state.log_s;
        let reused = self.log_rest + self.contraction * state.log_s;
        let next = log_add_exp(fresh, reused);
        if !next.is_finite() {
            return Err(AccountingError::Overflow);
        }
        state.log_s = next;
        state.steps += 1;
        Ok(())
    }

    pub fn run(&self, steps: u64) -> Result<SampWoState> {
        let mut state = SampWoState::default();
        for _ in 0..steps {
            self.step(&mut state)?;
        }
        Ok(state)
    }

    pub fn eps(&self, state: &SampWoState) -> f64 {
        state.log_s / (self.alpha - 1.0)
    }

    /// Linear-domain values `S` after each of `steps` updates; overflows to `inf`
    /// long before the log-domain carrier does.
    pub fn linear_trace(&self, steps: u64) -> Vec<f64> {
        let boost = self.q * self.growth.exp();
        let mut s = 1.0f64;
        (0..steps)
            .map(|_| {
                s = boost * s + (1.0 - self.q) * s.powf(self.contraction);
                s
            })
            .collect()
    }

    /// Fixed point of the recursion as `ln S*`, when it exists.
    ///
    /// For `r < 1` and `q e^{(α-1)ε₁} < 1` the map has the unique fixed point
    /// `S*^{1-r} = (1-q) / (1 - q e^{(α-1)ε₁})`, approached monotonically from `S = 1`.
    pub fn limit_log_s(&self) -> Option<f64> {
        if self.contraction >= 1.0 {
            return None;
        }
        let log_boost = self.log_q + self.growth;
        if log_boost >= 0.0 {
            return None;
        }
        let log_denominator = (-log_boost.exp()).ln_1p();
        Some((self.log_rest - log_denominator) / (1.0 - self.contraction))
    }
}

/// Sampling-without-replacement bound after `K·m` steps.
pub fn bound_samp_wo_replacement(params: &AccountingParams, alpha: f64) -> Result<f64> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    let rec = SampWoRecursion::from_params(params, alpha)?;
    let state = rec.run(params.total_steps())?;
    Ok(rec.eps(&state))
}

/// Curve `K = 1..=max_epochs` in one pass over the recursion.
pub fn samp_wo_curve(params: &AccountingParams, alpha: f64, max_epochs: u64) -> Result<RdpCurve> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    let rec = SampWoRecursion::from_params(params, alpha)?;
    let mut state = SampWoState::default();
    let mut curve = RdpCurve::new(alpha);
    for k in 1..=max_epochs {
        for _ in 0..params.steps_per_epoch() {
            rec.step(&mut state)?;
        }
        curve.push(k, rec.eps(&state));
    }
    Ok(curve)
}

/// `K → ∞` value of the sampling-without-replacement bound, if it converges.
pub fn samp_wo_limit(params: &AccountingParams, alpha: f64) -> Result<Option<f64>> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    let rec = SampWoRecursion::from_params(params, alpha)?;
    Ok(rec.limit_log_s().map(|l| l / (alpha - 1.0)))
}

/// `1/(α-1) · ln Σ_i w_i exp((α-1) ε_i)`: the order-α combination of mixture
/// components' divergences.
pub fn mixture_bound(mixtures: &[(f64, f64)], alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    if mixtures.is_empty() {
        return Err(AccountingError::EmptyInput);
    }
    let sum: f64 = mixtures.iter().map(|(w, _)| w).sum();
    if (sum - 1.0).abs() > 1e-9 || mixtures.iter().any(|(w, _)| !(*w >= 0.0)) {
        return Err(AccountingError::WeightsNotNormalized { sum });
    }
    if let Some(&(_, e)) = mixtures.iter().find(|(_, e)| !(*e >= 0.0)) {
        return Err(AccountingError::NonPositive {
            field: "eps_component",
            value: e,
        });
    }
    let terms: Vec<f64> = mixtures
        .iter()
        .map(|&(w, e)| w.ln() + (alpha - 1.0) * e)
        .collect();
    Ok(log_sum_exp(&terms) / (alpha - 1.0))
}

/// Checks `exp((α-1) ε_mix) <= Σ w_i exp((α-1) ε_i)` for the log-avg-exp
/// combination, returning `true` when it holds to rounding.
pub fn check_joint_convexity(mixtures: &[(f64, f64)], alpha: f64) -> Result<bool> {
    let combined = mixture_bound(mixtures, alpha)?;
    let lhs = ((alpha - 1.0) * combined).exp();
    let rhs: f64 = mixtures
        .iter()
        .map(|&(w, e)| w * ((alpha - 1.0) * e).exp())
        .sum();
    Ok(lhs <= rhs * (1.0 + 1e-12))
}
