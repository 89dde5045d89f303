//! Composition-based comparison bounds.
//!
//! The subsampled Gaussian mechanism (SGM) composed over every step, and the
//! single-epoch mixing-and-diffusion bound composed across epochs.

use serde::Serialize;
use statrs::function::factorial::ln_binomial;

use crate::error::{AccountingError, Result};
use crate::numerics::{log_add_exp, log_sum_exp};
use crate::params::{check_order, positive, AccountingParams, ConvexityClass, RdpCurve};

/// Parameters of the subsampled Gaussian mechanism matching one noisy step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SgmParams {
    /// Sampling ratio `b/n`.
    pub q: f64,
    /// Noise standard deviation over per-step sensitivity, `√(2ησ²) / (η S_g / b)`.
    pub sigma_eff: f64,
    /// Total steps `K·m`.
    pub steps: u64,
}

impl SgmParams {
    pub fn from_params(params: &AccountingParams) -> Self {
        let noise_std = (2.0 * params.eta()).sqrt() * params.sigma();
        let step_sensitivity = params.eta() * params.sensitivity() / params.b() as f64;
        Self {
            q: params.sampling_ratio(),
            sigma_eff: noise_std / step_sensitivity,
            steps: params.total_steps(),
        }
    }
}

/// Per-step SGM value at a real order, with the integer order actually used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SgmEval {
    pub eps: f64,
    pub order_used: u64,
    /// True when `alpha` was not an integer and was rounded up.
    pub rounded: bool,
}

/// `ln(e^x - 1)` for `x > 0`.
fn ln_expm1(x: f64) -> f64 {
    if x > 40.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Integer-order RDP of one subsampled Gaussian step:
///
/// `1/(α-1) · ln Σ_{k=0}^{α} C(α,k) (1-q)^{α-k} q^k exp(k(k-1) / (2σ²))`.
///
/// The binomial weights sum to one, so the moment is evaluated as
/// `1 + Σ_{k>=2} C(α,k)(1-q)^{α-k} q^k (e^{k(k-1)/(2σ²)} - 1)` in log space.
pub fn sgm_rdp_per_step(q: f64, sigma_eff: f64, order: u64) -> Result<f64> {
    if order < 2 {
        return Err(AccountingError::NonIntegerOrder {
            alpha: order as f64,
        });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(AccountingError::NonPositive {
            field: "q",
            value: q,
        });
    }
    positive("sigma_eff", sigma_eff)?;
    let alpha = order as f64;
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return Ok(alpha / (2.0 * sigma_eff * sigma_eff));
    }
    let log_q = q.ln();
    let log_rest = (-q).ln_1p();
    let two_var = 2.0 * sigma_eff * sigma_eff;
    let terms: Vec<f64> = (2..=order)
        .map(|k| {
            let kf = k as f64;
            ln_binomial(order, k)
                + (alpha - kf) * log_rest
                + kf * log_q
                + ln_expm1(kf * (kf - 1.0) / two_var)
        })
        .collect();
    let log_excess = log_sum_exp(&terms);
    Ok(log_add_exp(0.0, log_excess) / (alpha - 1.0))
}

/// [`sgm_rdp_per_step`] at a real order; non-integer orders are rounded up
/// to the next integer (at least 2), which can only increase the value.
pub fn sgm_rdp(q: f64, sigma_eff: f64, alpha: f64) -> Result<SgmEval> {
    check_order(alpha)?;
    let order = (alpha.ceil() as u64).max(2);
    Ok(SgmEval {
        eps: sgm_rdp_per_step(q, sigma_eff, order)?,
        order_used: order,
        rounded: order as f64 != alpha,
    })
}

/// Composed SGM value after `params.epochs()` epochs, `K·m · per-step`.
pub fn sgm_composition(params: &AccountingParams, alpha: f64) -> Result<SgmEval> {
    let sgm = SgmParams::from_params(params);
    let per_step = sgm_rdp(sgm.q, sgm.sigma_eff, alpha)?;
    Ok(SgmEval {
        eps: sgm.steps as f64 * per_step.eps,
        ..per_step
    })
}

/// SGM composition curve for `K = 1..=max_epochs`.
pub fn sgm_composition_curve(
    params: &AccountingParams,
    alpha: f64,
    max_epochs: u64,
) -> Result<RdpCurve> {
    let sgm = SgmParams::from_params(params);
    let per_step = sgm_rdp(sgm.q, sgm.sigma_eff, alpha)?.eps;
    let m = params.steps_per_epoch() as f64;
    let mut curve = RdpCurve::new(alpha);
    for k in 1..=max_epochs {
        curve.push(k, k as f64 * m * per_step);
    }
    Ok(curve)
}

/// Small-`q` shorthand `(b/n) · ε₁ · K` for the SGM composition curve.
pub fn sgm_approximation(params: &AccountingParams, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    Ok(params.sampling_ratio() * params.step_loss(alpha) * params.epochs() as f64)
}

/// Per-epoch slope of the mixing-and-diffusion bound,
/// `α η S_g² / (4 (m-1) b² σ²) · (1 - 2ηβλ/(β+λ))^{m/2}`.
pub fn mixing_diffusion_slope(params: &AccountingParams, alpha: f64) -> Result<f64> {
    params.require_class(ConvexityClass::StronglyConvex)?;
    check_order(alpha)?;
    let m = params.steps_per_epoch() as f64;
    let (eta, beta, lambda) = (params.eta(), params.beta(), params.lambda());
    let mixing = 1.0 - 2.0 * eta * beta * lambda / (beta + lambda);
    Ok(params.step_loss(alpha) / (m - 1.0) * mixing.powf(m / 2.0))
}

/// Mixing-and-diffusion bound composed over `K` epochs, first batch: `slope · K`.
pub fn mixing_diffusion_first_batch(params: &AccountingParams, alpha: f64) -> Result<f64> {
    Ok(mixing_diffusion_slope(params, alpha)? * params.epochs() as f64)
}

/// Last batch: `min(2K ε₁, slope · (K-1) + ε₁)`.
pub fn mixing_diffusion_last_batch(params: &AccountingParams, alpha: f64) -> Result<f64> {
    let slope = mixing_diffusion_slope(params, alpha)?;
    let k = params.epochs();
    if k == 0 {
        return Ok(0.0);
    }
    let eps1 = params.step_loss(alpha);
    Ok((2.0 * k as f64 * eps1).min(slope * (k - 1) as f64 + eps1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::fixtures::sample_params;

    /// Direct linear-domain binomial sum with exact integer coefficients.
    fn sgm_direct(q: f64, sigma: f64, order: u64) -> f64 {
        let mut binom: u128 = 1;
        let mut sum = 0.0;
        for k in 0..=order {
            if k > 0 {
                binom = binom * (order - k + 1) as u128 / k as u128;
            }
            let kf = k as f64;
            sum += binom as f64
                * (1.0 - q).powi((order - k) as i32)
                * q.powi(k as i32)
                * (kf * (kf - 1.0) / (2.0 * sigma * sigma)).exp();
        }
        sum.ln() / (order as f64 - 1.0)
    }

    #[test]
    fn sgm_matches_direct_binomial_sum() {
        for &q in &[0.01, 0.04, 0.2, 0.5, 0.9] {
            for &sigma in &[1.0, 4.0, 10.0] {
                for order in [2u64, 3, 10, 32, 64] {
                    let a = sgm_rdp_per_step(q, sigma, order).unwrap();
                    let b = sgm_direct(q, sigma, order);
                    if !b.is_finite() {
                        // e^{k(k-1)/2σ²} overflows in the linear domain
                        assert!(a.is_finite());
                        continue;
                    }
                    assert!(
                        ((a - b) / b).abs() < 1e-9,
                        "q={q} sigma={sigma} order={order}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn sgm_reference_value() {
        // 50-digit evaluation of the full binomial moment sum.
        let v = sgm_rdp_per_step(0.04, 10.0, 10).unwrap();
        assert!((v - 8.065_067_318_860_849e-5).abs() < 1e-13);
    }

    #[test]
    fn sgm_full_batch_is_the_gaussian_mechanism() {
        assert_eq!(sgm_rdp_per_step(1.0, 10.0, 10).unwrap(), 0.05);
        assert_eq!(sgm_rdp_per_step(1.0, 2.0, 7).unwrap(), 7.0 / 8.0);
        assert_eq!(sgm_rdp_per_step(0.0, 2.0, 7).unwrap(), 0.0);
        assert!(sgm_rdp_per_step(1e-12, 10.0, 10).unwrap() < 1e-20);
    }

    #[test]
    fn sgm_monotonicity_over_grid() {
        let qs = [0.01, 0.04, 0.2, 1.0];
        let sigmas = [1.0, 4.0, 10.0];
        for order in 2..=64u64 {
            for &s in &sigmas {
                let mut prev = 0.0;
                for &q in &qs {
                    let v = sgm_rdp_per_step(q, s, order).unwrap();
                    assert!(v >= prev);
                    assert!(v <= order as f64 / (2.0 * s * s) * (1.0 + 1e-12));
                    prev = v;
                }
            }
            for &q in &qs {
                let mut prev = f64::INFINITY;
                for &s in &sigmas {
                    let v = sgm_rdp_per_step(q, s, order).unwrap();
                    assert!(v < prev);
                    prev = v;
                }
                if order > 2 {
                    for &s in &sigmas {
                        assert!(
                            sgm_rdp_per_step(q, s, order).unwrap()
                                >= sgm_rdp_per_step(q, s, order - 1).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn sgm_large_orders_stay_finite() {
        let v = sgm_rdp_per_step(0.04, 1.0, 10_000).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert!(v <= 10_000.0 / 2.0);
    }

    #[test]
    fn fractional_orders_round_up() {
        let e = sgm_rdp(0.04, 10.0, 1.25).unwrap();
        assert_eq!(e.order_used, 2);
        assert!(e.rounded);
        let e = sgm_rdp(0.04, 10.0, 10.0).unwrap();
        assert_eq!(e.order_used, 10);
        assert!(!e.rounded);
        assert!(matches!(
            sgm_rdp_per_step(0.04, 10.0, 1),
            Err(AccountingError::NonIntegerOrder { .. })
        ));
    }

    #[test]
    fn sample_params_noise_is_multiplier_ten() {
        let s = SgmParams::from_params(&sample_params(40));
        assert!((s.sigma_eff - 10.0).abs() < 1e-12);
        assert!((s.q - 0.04).abs() < 1e-15);
        assert_eq!(s.steps, 1000);
    }

    #[test]
    fn sgm_composition_is_linear_in_steps() {
        let p = sample_params(40);
        let c = sgm_composition(&p, 10.0).unwrap();
        assert!((c.eps - 0.080_650_673_188_608_5).abs() < 1e-12);
        assert_eq!(sgm_composition(&sample_params(0), 10.0).unwrap().eps, 0.0);
        let curve = sgm_composition_curve(&p, 10.0, 40).unwrap();
        let unit = curve.eps_at(1).unwrap();
        for &(k, e) in curve.points() {
            assert!((e - k as f64 * unit).abs() < 1e-15 * k as f64);
        }
        // The small-q shorthand slightly undershoots the exact sum here.
        let approx = sgm_approximation(&p, 10.0).unwrap();
        assert!((approx - 0.08).abs() < 1e-15);
        assert!(approx < c.eps);
    }

    #[test]
    fn mixing_diffusion_examples() {
        assert_eq!(mixing_diffusion_first_batch(&sample_params(0), 30.0).unwrap(), 0.0);
        assert_eq!(mixing_diffusion_last_batch(&sample_params(0), 30.0).unwrap(), 0.0);
        let p1 = sample_params(1);
        assert!((mixing_diffusion_last_batch(&p1, 30.0).unwrap() - 0.15).abs() < 1e-15);
        let slope = mixing_diffusion_slope(&p1, 30.0).unwrap();
        assert!((slope - 0.004_162_190_788_194_342).abs() < 1e-15);
        for k in 1..30u64 {
            let v = mixing_diffusion_first_batch(&sample_params(k), 30.0).unwrap();
            assert!((v - slope * k as f64).abs() < 1e-15);
        }
    }
}
