//! Fixed mini-batch privacy dynamics.
//!
//! Mini-batches `B^0, …, B^{m-1}` are fixed for the whole run and the differing
//! record sits in batch `j0`. Between visits to that batch the Rényi divergence
//! contracts multiplicatively (the parameter law satisfies a log-Sobolev
//! inequality whose constant shrinks along the run); a visit adds the per-step
//! base loss `ε₁ = α η S_g² / (4σ²b²)`. Solving that recursion gives converging
//! bounds in the number of epochs for strongly convex losses.

use serde::Serialize;

use crate::error::{AccountingError, Result};
use crate::numerics::geometric_sum_log;
use crate::params::{check_order, AccountingParams, ConvexityClass};

/// Log-Sobolev constant of the parameter law at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LsiConstant {
    /// The point-mass initialization, before any noise has been added.
    Infinite,
    Finite(f64),
}

impl LsiConstant {
    pub fn value(&self) -> f64 {
        match self {
            Self::Infinite => f64::INFINITY,
            Self::Finite(c) => *c,
        }
    }
}

/// One step of the divergence recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecursionStep {
    /// The step touches the differing record: add this much.
    Add(f64),
    /// The step does not: multiply by this factor in `[0, 1)`.
    Scale(f64),
}

impl RecursionStep {
    pub fn apply(&self, eps: f64) -> f64 {
        match self {
            Self::Add(inc) => eps + inc,
            Self::Scale(f) => eps * f,
        }
    }
}

/// Bound for records in one fixed batch position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedBatchBound {
    pub params: AccountingParams,
    pub alpha: f64,
    pub j0: u64,
    /// Contribution of all epochs before the last one.
    pub first_term: f64,
    /// Contribution of the last epoch's visit to batch `j0`.
    pub last_term: f64,
    pub eps: f64,
}

/// LSI constant of `θ_k^j`, iteration `t = k·m + j`.
///
/// Convex: `1 / (2ησ² t)`. Strongly convex: `1 / (2ησ² Σ_{s<t} r^s)`.
pub fn lsi_constant(params: &AccountingParams, k: u64, j: u64) -> Result<LsiConstant> {
    let m = params.steps_per_epoch();
    if j > m {
        return Err(AccountingError::IndexOutOfRange {
            index: j,
            lo: 0,
            hi: m,
        });
    }
    let t = k * m + j;
    if t == 0 {
        return Ok(LsiConstant::Infinite);
    }
    let noise = 2.0 * params.eta() * params.sigma() * params.sigma();
    let accumulated = match params.class() {
        ConvexityClass::Convex => t as f64,
        ConvexityClass::StronglyConvex => params.contraction_sum(t),
    };
    Ok(LsiConstant::Finite(1.0 / (noise * accumulated)))
}

/// Upper bound on the divergence `j` steps after a single visit that started
/// from identical laws at a point-mass initialization, `ε₀ʲ(α)` for `j ∈ [1, m]`.
///
/// Strongly convex: `ε₁ r^{j-1} (1-r) / (1-r^j)`. Convex: `ε₁ / j`.
pub fn eps0_term(params: &AccountingParams, alpha: f64, j: u64) -> Result<f64> {
    check_order(alpha)?;
    let m = params.steps_per_epoch();
    if j < 1 || j > m {
        return Err(AccountingError::IndexOutOfRange {
            index: j,
            lo: 1,
            hi: m,
        });
    }
    Ok(eps0_unchecked(params, alpha, j))
}

fn eps0_unchecked(params: &AccountingParams, alpha: f64, j: u64) -> f64 {
    let eps1 = params.step_loss(alpha);
    match params.class() {
        ConvexityClass::Convex => eps1 / j as f64,
        ConvexityClass::StronglyConvex => {
            let decay = ((j - 1) as f64 * params.log_contraction()).exp();
            eps1 * decay / params.contraction_sum(j)
        }
    }
}

/// Half-epoch split `h = ⌊m/2⌋` used by the multi-epoch bounds.
pub(crate) fn half_split(params: &AccountingParams) -> u64 {
    params.steps_per_epoch() / 2
}

/// First term of the strongly convex fixed-batch bound: everything accumulated
/// before the final epoch. Zero for `K <= 1`.
pub(crate) fn strongly_convex_first_term(params: &AccountingParams, alpha: f64) -> f64 {
    let epochs = params.epochs();
    if epochs <= 1 {
        return 0.0;
    }
    let m = params.steps_per_epoch();
    let h = half_split(params);
    let per_epoch_log_ratio = (m - h) as f64 * params.log_contraction();
    eps0_unchecked(params, alpha, h) * geometric_sum_log(per_epoch_log_ratio, (epochs - 1) as f64)
}

/// `K → ∞` value of [`strongly_convex_first_term`].
pub(crate) fn strongly_convex_first_term_limit(params: &AccountingParams, alpha: f64) -> f64 {
    let m = params.steps_per_epoch();
    let h = half_split(params);
    let per_epoch_log_ratio = (m - h) as f64 * params.log_contraction();
    eps0_unchecked(params, alpha, h) / -per_epoch_log_ratio.exp_m1()
}

fn check_j0(params: &AccountingParams, j0: u64) -> Result<()> {
    let m = params.steps_per_epoch();
    if j0 >= m {
        return Err(AccountingError::IndexOutOfRange {
            index: j0,
            lo: 0,
            hi: m - 1,
        });
    }
    Ok(())
}

/// Strongly convex fixed-batch bound for records in batch `j0`:
///
/// `ε₀^h · (1 - r^{(K-1)(m-h)}) / (1 - r^{m-h}) + ε₀^{m-j0}` with `h = ⌊m/2⌋`.
pub fn bound_strongly_convex_fixed(
    params: &AccountingParams,
    alpha: f64,
    j0: u64,
) -> Result<FixedBatchBound> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    check_order(alpha)?;
    check_j0(params, j0)?;
    let (first_term, last_term) = if params.epochs() == 0 {
        (0.0, 0.0)
    } else {
        let m = params.steps_per_epoch();
        (
            strongly_convex_first_term(params, alpha),
            eps0_unchecked(params, alpha, m - j0),
        )
    };
    Ok(FixedBatchBound {
        params: *params,
        alpha,
        j0,
        first_term,
        last_term,
        eps: first_term + last_term,
    })
}

/// Convex fixed-batch bound: `ε₁ (K-1)/m + ε₁ / (m - j0)`.
pub fn bound_convex_fixed(params: &AccountingParams, alpha: f64, j0: u64) -> Result<FixedBatchBound> {
    params.require_class(ConvexityClass::Convex)?;
    check_order(alpha)?;
    check_j0(params, j0)?;
    let m = params.steps_per_epoch();
    let eps1 = params.step_loss(alpha);
    let (first_term, last_term) = match params.epochs() {
        0 => (0.0, 0.0),
        k => (
            eps1 * (k - 1) as f64 / m as f64,
            eps1 / (m - j0) as f64,
        ),
    };
    Ok(FixedBatchBound {
        params: *params,
        alpha,
        j0,
        first_term,
        last_term,
        eps: first_term + last_term,
    })
}

/// Fixed-batch bound for whichever convexity class `params` carries.
pub fn bound_fixed(params: &AccountingParams, alpha: f64, j0: u64) -> Result<FixedBatchBound> {
    match params.class() {
        ConvexityClass::Convex => bound_convex_fixed(params, alpha, j0),
        ConvexityClass::StronglyConvex => bound_strongly_convex_fixed(params, alpha, j0),
    }
}

/// `K → ∞` value of the strongly convex fixed-batch bound.
pub fn strongly_convex_fixed_limit(params: &AccountingParams, alpha: f64, j0: u64) -> Result<f64> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    check_order(alpha)?;
    check_j0(params, j0)?;
    let m = params.steps_per_epoch();
    Ok(strongly_convex_first_term_limit(params, alpha) + eps0_unchecked(params, alpha, m - j0))
}

/// Baseline that ignores amplification between visits:
/// `α S_g² / (λ σ² b²) · (1 - e^{-ληK/2})`.
pub fn bound_naive_baseline(params: &AccountingParams, alpha: f64) -> Result<f64> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    check_order(alpha)?;
    let scale = naive_limit_unchecked(params, alpha);
    let exponent = -params.lambda() * params.eta() * params.epochs() as f64 / 2.0;
    Ok(scale * -exponent.exp_m1())
}

/// `K → ∞` value of [`bound_naive_baseline`].
pub fn naive_limit(params: &AccountingParams, alpha: f64) -> Result<f64> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    check_order(alpha)?;
    Ok(naive_limit_unchecked(params, alpha))
}

fn naive_limit_unchecked(params: &AccountingParams, alpha: f64) -> f64 {
    let b = params.b() as f64;
    let sigma = params.sigma();
    alpha * params.sensitivity().powi(2) / (params.lambda() * sigma * sigma * b * b)
}

/// The recursion step at iteration `(k, j)`.
///
/// A step through the differing batch adds `ε₁`; any other step scales by
/// `(1 + c · 2ησ² / L²)^{-1}` with `c` the LSI constant of the current law and
/// `L` the Lipschitz constant of the gradient map (`1` convex, `1 - ηλ`
/// strongly convex).
pub fn recursion_coefficients(
    params: &AccountingParams,
    alpha: f64,
    k: u64,
    j: u64,
    in_batch: bool,
) -> Result<RecursionStep> {
    check_order(alpha)?;
    if in_batch {
        return Ok(RecursionStep::Add(params.step_loss(alpha)));
    }
    let lipschitz_sq = match params.class() {
        ConvexityClass::Convex => 1.0,
        ConvexityClass::StronglyConvex => params.contraction(),
    };
    match lsi_constant(params, k, j)? {
        // Divergence between identical point masses is zero; any factor works.
        LsiConstant::Infinite => Ok(RecursionStep::Scale(0.0)),
        LsiConstant::Finite(c) => {
            let noise = 2.0 * params.eta() * params.sigma() * params.sigma();
            Ok(RecursionStep::Scale(1.0 / (1.0 + c * noise / lipschitz_sq)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::fixtures::{sample_params, sample_raw};
    use crate::params::RawParams;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn with_lambda(lambda: f64, epochs: u64) -> AccountingParams {
        RawParams {
            lambda,
            epochs,
            ..sample_raw()
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn lsi_constant_examples() {
        let p = sample_params(1);
        assert_eq!(lsi_constant(&p, 0, 0).unwrap(), LsiConstant::Infinite);
        assert!((lsi_constant(&p, 0, 1).unwrap().value() - 6.25).abs() < 1e-12);
        let c = with_lambda(0.0, 1);
        assert!((lsi_constant(&c, 0, 10).unwrap().value() - 0.625).abs() < 1e-12);
        // k·m + j indexing: (1, 0) equals (0, m)
        assert_eq!(
            lsi_constant(&p, 1, 0).unwrap(),
            lsi_constant(&p, 0, 25).unwrap()
        );
        assert!(lsi_constant(&p, 0, 26).is_err());
    }

    #[test]
    fn lsi_constant_is_nonincreasing_along_iterations() {
        for p in [sample_params(1), with_lambda(0.0, 1)] {
            let mut prev = f64::INFINITY;
            for k in 0..4 {
                for j in 0..25 {
                    let c = lsi_constant(&p, k, j).unwrap().value();
                    assert!(c <= prev);
                    assert!(c > 0.0);
                    prev = c;
                }
            }
        }
    }

    #[test]
    fn eps0_term_examples() {
        let p = sample_params(1);
        assert!((eps0_term(&p, 10.0, 1).unwrap() - 0.05).abs() < 1e-15);
        assert!((eps0_term(&p, 10.0, 2).unwrap() - 0.024_495_001_020_199_96).abs() < 1e-6);
        let c = with_lambda(0.0, 1);
        assert!((eps0_term(&c, 10.0, 25).unwrap() - 0.002).abs() < 1e-15);
        assert!(matches!(
            eps0_term(&p, 10.0, 0),
            Err(AccountingError::IndexOutOfRange { .. })
        ));
        assert!(eps0_term(&p, 10.0, 26).is_err());
    }

    #[test]
    fn eps0_term_strictly_decreasing_for_strong_convexity() {
        let p = sample_params(1);
        for j in 1..25 {
            assert!(eps0_term(&p, 10.0, j + 1).unwrap() < eps0_term(&p, 10.0, j).unwrap());
        }
    }

    #[test]
    fn recursion_reproduces_eps0_term_within_one_epoch() {
        for p in [sample_params(1), with_lambda(0.0, 1), with_lambda(0.3, 1)] {
            let alpha = 10.0;
            let mut eps = recursion_coefficients(&p, alpha, 0, 0, true)
                .unwrap()
                .apply(0.0);
            for j in 1..=25 {
                let closed = eps0_term(&p, alpha, j).unwrap();
                assert!(rel(eps, closed) < 1e-12, "j={j}: {eps} vs {closed}");
                if j < 25 {
                    eps = recursion_coefficients(&p, alpha, 0, j, false)
                        .unwrap()
                        .apply(eps);
                }
            }
        }
    }

    #[test]
    fn recursion_coefficient_examples() {
        let p = sample_params(1);
        assert_eq!(
            recursion_coefficients(&p, 10.0, 0, 3, true).unwrap(),
            RecursionStep::Add(p.step_loss(10.0))
        );
        let RecursionStep::Scale(f) = recursion_coefficients(&p, 10.0, 0, 1, false).unwrap() else {
            panic!("expected a scale step");
        };
        let r = p.contraction();
        assert!((f - r / (1.0 + r)).abs() < 1e-14);
        assert!((f - 0.489_900_020_403_999_2).abs() < 1e-6);
        let c = with_lambda(0.0, 1);
        assert_eq!(
            recursion_coefficients(&c, 10.0, 0, 1, false).unwrap(),
            RecursionStep::Scale(0.5)
        );
    }

    #[test]
    fn strongly_convex_fixed_examples() {
        // K = 1, last batch: just ε₁
        let p = sample_params(1);
        let b = bound_strongly_convex_fixed(&p, 10.0, 24).unwrap();
        assert_eq!(b.first_term, 0.0);
        assert!((b.eps - 0.05).abs() < 1e-15);

        // limit in K
        let lim = strongly_convex_fixed_limit(&p, 10.0, 24).unwrap();
        assert!((lim - 0.058_086_415_525_332_66).abs() < 1e-12);
        let far = bound_strongly_convex_fixed(&sample_params(2000), 10.0, 24).unwrap();
        assert!((far.eps - lim).abs() < 1e-14);

        // first-batch value at α=30, K=10 (50-digit reference)
        let b = bound_strongly_convex_fixed(&sample_params(10), 30.0, 0).unwrap();
        assert!(rel(b.eps, 0.027_586_966_632_252_78) < 1e-12);
    }

    #[test]
    fn strongly_convex_fixed_is_monotone_and_converges_geometrically() {
        let base = sample_params(1);
        let m = 25;
        let h = 12;
        let r = base.contraction();
        let eps0_h = eps0_term(&base, 30.0, h).unwrap();
        let mut prev = 0.0;
        for k in 1..200u64 {
            let cur = bound_strongly_convex_fixed(&base.with_epochs(k), 30.0, 24)
                .unwrap()
                .eps;
            assert!(cur >= prev);
            if k >= 2 {
                let next = bound_strongly_convex_fixed(&base.with_epochs(k + 1), 30.0, 24)
                    .unwrap()
                    .eps;
                let gap = eps0_h * r.powf(((k - 1) * (m - h)) as f64);
                assert!(next - cur <= gap * (1.0 + 1e-9) + 1e-15);
            }
            prev = cur;
        }
    }

    #[test]
    fn strongly_convex_fixed_nonincreasing_in_j0() {
        for k in [1, 2, 10] {
            let p = sample_params(k);
            let mut prev = f64::INFINITY;
            for j0 in 0..25 {
                let e = bound_strongly_convex_fixed(&p, 10.0, j0).unwrap().eps;
                // later batches see fewer contracting steps afterwards
                if j0 > 0 {
                    assert!(e >= prev, "later batch should not be better protected");
                }
                prev = e;
            }
        }
    }

    #[test]
    fn convex_fixed_examples() {
        let c1 = with_lambda(0.0, 1);
        assert!((bound_convex_fixed(&c1, 10.0, 0).unwrap().eps - 0.002).abs() < 1e-15);
        let c2 = with_lambda(0.0, 2);
        assert!((bound_convex_fixed(&c2, 10.0, 24).unwrap().eps - 0.052).abs() < 1e-15);
        // b = 1, K = 1 reduces to ε₁ / (n - j0)
        let single = RawParams {
            b: 1,
            lambda: 0.0,
            ..sample_raw()
        }
        .validate()
        .unwrap();
        for j0 in [0u64, 7, 49] {
            let eps1 = single.step_loss(10.0);
            let got = bound_convex_fixed(&single, 10.0, j0).unwrap().eps;
            assert!(rel(got, eps1 / (50 - j0) as f64) < 1e-15);
        }
    }

    #[test]
    fn class_mismatch_is_reported() {
        let c = with_lambda(0.0, 1);
        assert!(matches!(
            bound_strongly_convex_fixed(&c, 10.0, 0),
            Err(AccountingError::ClassMismatch { .. })
        ));
        assert!(matches!(
            bound_convex_fixed(&sample_params(1), 10.0, 0),
            Err(AccountingError::ClassMismatch { .. })
        ));
        assert!(bound_naive_baseline(&c, 10.0).is_err());
    }

    #[test]
    fn naive_baseline_examples() {
        let p = sample_params(10);
        assert!((bound_naive_baseline(&p, 30.0).unwrap() - 2.854_877_458_921_213).abs() < 1e-12);
        assert_eq!(bound_naive_baseline(&sample_params(0), 30.0).unwrap(), 0.0);
        assert!((naive_limit(&p, 30.0).unwrap() - 30.0).abs() < 1e-12);
        let far = bound_naive_baseline(&sample_params(100_000), 30.0).unwrap();
        assert!((far - 30.0).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_give_zero() {
        let p = sample_params(0);
        assert_eq!(bound_strongly_convex_fixed(&p, 10.0, 3).unwrap().eps, 0.0);
        assert_eq!(bound_convex_fixed(&with_lambda(0.0, 0), 10.0, 3).unwrap().eps, 0.0);
    }

    #[test]
    fn strongly_convex_pieces_approach_convex_as_lambda_vanishes() {
        let convex = with_lambda(0.0, 1);
        for lambda in [1e-3, 1e-6] {
            let strong = with_lambda(lambda, 1);
            for j in 1..=25 {
                let a = eps0_term(&strong, 10.0, j).unwrap();
                let b = eps0_term(&convex, 10.0, j).unwrap();
                assert!(rel(a, b) < 1e-3);
                let ca = lsi_constant(&strong, 0, j).unwrap().value();
                let cb = lsi_constant(&convex, 0, j).unwrap().value();
                assert!(rel(ca, cb) < 1e-3);
            }
            for j0 in [0, 12, 24] {
                let a = bound_strongly_convex_fixed(&strong, 10.0, j0).unwrap().eps;
                let b = bound_convex_fixed(&convex, 10.0, j0).unwrap().eps;
                assert!(rel(a, b) < 1e-3);
            }
        }
    }

    #[test]
    fn multi_epoch_first_term_keeps_the_half_split_as_lambda_vanishes() {
        // The strongly convex bound charges each earlier epoch ε₁/⌊m/2⌋, the convex
        // one ε₁/m, so their first terms differ by m/⌊m/2⌋ in the λ → 0 limit.
        let strong = with_lambda(1e-6, 10);
        let convex = with_lambda(0.0, 10);
        let a = bound_strongly_convex_fixed(&strong, 10.0, 0).unwrap().first_term;
        let b = bound_convex_fixed(&convex, 10.0, 0).unwrap().first_term;
        assert!(rel(a, b * 25.0 / 12.0) < 1e-3);
    }
}
