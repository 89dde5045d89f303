//! Accounting inputs: hyperparameters, loss regularity, and the RDP value types
//! every bound produces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AccountingError, Result};
use crate::numerics::geometric_sum_log;

/// Convexity class of the per-example loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvexityClass {
    Convex,
    StronglyConvex,
}

/// Dataset adjacency notion.
///
/// Dynamics bounds are always stated for [`Neighboring::ChangeOne`]; the other
/// notion only enters through [`crate::convert::translate_neighboring`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Neighboring {
    #[default]
    ChangeOne,
    RemoveOne,
}

impl FromStr for Neighboring {
    type Err = AccountingError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "change-one" | "change" | "replace" | "bounded" => Ok(Self::ChangeOne),
            "remove-one" | "remove" | "add-remove" | "unbounded" => Ok(Self::RemoveOne),
            _ => Err(AccountingError::UnknownVariant {
                what: "neighboring",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Neighboring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ChangeOne => "change-one",
            Self::RemoveOne => "remove-one",
        })
    }
}

/// Convexity class plus the regularity constants the bounds consume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRegularity {
    class: ConvexityClass,
    lambda: f64,
    beta: f64,
    sensitivity: f64,
}

impl LossRegularity {
    pub fn strongly_convex(lambda: f64, beta: f64, sensitivity: f64) -> Result<Self> {
        let reg = Self {
            class: ConvexityClass::StronglyConvex,
            lambda,
            beta,
            sensitivity,
        };
        reg.check()?;
        Ok(reg)
    }

    pub fn convex(beta: f64, sensitivity: f64) -> Result<Self> {
        let reg = Self {
            class: ConvexityClass::Convex,
            lambda: 0.0,
            beta,
            sensitivity,
        };
        reg.check()?;
        Ok(reg)
    }

    /// Picks the class from `lambda`: zero means convex, positive means strongly convex.
    pub fn from_lambda(lambda: f64, beta: f64, sensitivity: f64) -> Result<Self> {
        if lambda == 0.0 {
            Self::convex(beta, sensitivity)
        } else {
            Self::strongly_convex(lambda, beta, sensitivity)
        }
    }

    fn check(&self) -> Result<()> {
        positive("beta", self.beta)?;
        positive("sensitivity", self.sensitivity)?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(AccountingError::InvalidRegularity(format!(
                "lambda must be a nonnegative finite number, got {}",
                self.lambda
            )));
        }
        if self.lambda > self.beta {
            return Err(AccountingError::InvalidRegularity(format!(
                "lambda {} exceeds beta {}",
                self.lambda, self.beta
            )));
        }
        match self.class {
            ConvexityClass::StronglyConvex if self.lambda == 0.0 => Err(
                AccountingError::InvalidRegularity("strongly convex loss needs lambda > 0".into()),
            ),
            ConvexityClass::Convex if self.lambda != 0.0 => Err(
                AccountingError::InvalidRegularity("convex class carries lambda = 0".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn class(&self) -> ConvexityClass {
        self.class
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// Largest admissible step size (exclusive).
    pub fn max_stepsize(&self) -> f64 {
        match self.class {
            ConvexityClass::StronglyConvex => 2.0 / (self.lambda + self.beta),
            ConvexityClass::Convex => 2.0 / self.beta,
        }
    }
}

/// Unvalidated hyperparameters, as read from flags or a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub n: u64,
    pub b: u64,
    pub eta: f64,
    pub epochs: u64,
    pub sigma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub sensitivity: f64,
    #[serde(default)]
    pub neighboring: Neighboring,
    #[serde(default)]
    pub truncate_last_batch: bool,
}

impl RawParams {
    pub fn validate(&self) -> Result<AccountingParams> {
        AccountingParams::new(*self)
    }
}

/// Validated hyperparameters with their derived ratios.
///
/// Construct through [`RawParams::validate`]; all fields are read-only afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccountingParams {
    n: u64,
    b: u64,
    eta: f64,
    epochs: u64,
    sigma: f64,
    regularity: LossRegularity,
    neighboring: Neighboring,
    truncate_last_batch: bool,
    steps_per_epoch: u64,
    contraction: f64,
    base_coefficient: f64,
}

impl AccountingParams {
    fn new(raw: RawParams) -> Result<Self> {
        if raw.n == 0 {
            return Err(AccountingError::NonPositive {
                field: "n",
                value: 0.0,
            });
        }
        if raw.b == 0 {
            return Err(AccountingError::NonPositive {
                field: "b",
                value: 0.0,
            });
        }
        positive("eta", raw.eta)?;
        positive("sigma", raw.sigma)?;
        let regularity = LossRegularity::from_lambda(raw.lambda, raw.beta, raw.sensitivity)?;

        if raw.b > raw.n {
            return Err(AccountingError::BatchCountTooSmall { steps: 0 });
        }
        if !raw.n.is_multiple_of(raw.b) && !raw.truncate_last_batch {
            return Err(AccountingError::NonDividingBatch { n: raw.n, b: raw.b });
        }
        let steps_per_epoch = raw.n / raw.b;
        if regularity.class() == ConvexityClass::StronglyConvex && steps_per_epoch < 2 {
            return Err(AccountingError::BatchCountTooSmall {
                steps: steps_per_epoch,
            });
        }

        let limit = regularity.max_stepsize();
        if raw.eta >= limit {
            return Err(AccountingError::StepsizeTooLarge {
                eta: raw.eta,
                limit,
            });
        }

        let shrink = 1.0 - raw.eta * regularity.lambda();
        let contraction = shrink * shrink;
        let b = raw.b as f64;
        let base_coefficient =
            raw.eta * regularity.sensitivity().powi(2) / (4.0 * raw.sigma * raw.sigma * b * b);

        Ok(Self {
            n: raw.n,
            b: raw.b,
            eta: raw.eta,
            epochs: raw.epochs,
            sigma: raw.sigma,
            regularity,
            neighboring: raw.neighboring,
            truncate_last_batch: raw.truncate_last_batch,
            steps_per_epoch,
            contraction,
            base_coefficient,
        })
    }

    /// The raw tuple this was validated from.
    pub fn raw(&self) -> RawParams {
        RawParams {
            n: self.n,
            b: self.b,
            eta: self.eta,
            epochs: self.epochs,
            sigma: self.sigma,
            lambda: self.regularity.lambda(),
            beta: self.regularity.beta(),
            sensitivity: self.regularity.sensitivity(),
            neighboring: self.neighboring,
            truncate_last_batch: self.truncate_last_batch,
        }
    }

    pub fn validate(&self) -> Result<Self> {
        self.raw().validate()
    }

    pub fn with_epochs(&self, epochs: u64) -> Self {
        Self { epochs, ..*self }
    }

    /// Same hyperparameters with a different noise scale.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        RawParams {
            sigma,
            ..self.raw()
        }
        .validate()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn regularity(&self) -> &LossRegularity {
        &self.regularity
    }

    pub fn class(&self) -> ConvexityClass {
        self.regularity.class()
    }

    pub fn lambda(&self) -> f64 {
        self.regularity.lambda()
    }

    pub fn beta(&self) -> f64 {
        self.regularity.beta()
    }

    pub fn sensitivity(&self) -> f64 {
        self.regularity.sensitivity()
    }

    pub fn neighboring(&self) -> Neighboring {
        self.neighboring
    }

    pub fn truncate_last_batch(&self) -> bool {
        self.truncate_last_batch
    }

    /// Number of mini-batches per epoch, `⌊n/b⌋`.
    pub fn steps_per_epoch(&self) -> u64 {
        self.steps_per_epoch
    }

    /// Total number of noisy updates, `K · ⌊n/b⌋`.
    pub fn total_steps(&self) -> u64 {
        self.epochs * self.steps_per_epoch
    }

    /// Squared per-step Lipschitz constant of the gradient map, `(1 - ηλ)²`.
    pub fn contraction(&self) -> f64 {
        self.contraction
    }

    /// `ln r`, computed as `2 ln(1 - ηλ)` without forming `r`.
    pub fn log_contraction(&self) -> f64 {
        2.0 * (-self.eta * self.regularity.lambda()).ln_1p()
    }

    /// `η S_g² / (4 σ² b²)`: the per-step base loss without its order factor.
    pub fn base_coefficient(&self) -> f64 {
        self.base_coefficient
    }

    /// Per-step base loss `α η S_g² / (4 σ² b²)` at order `alpha`.
    pub fn step_loss(&self, alpha: f64) -> f64 {
        alpha * self.base_coefficient
    }

    /// Sampling ratio `b/n`.
    pub fn sampling_ratio(&self) -> f64 {
        self.b as f64 / self.n as f64
    }

    /// `Σ_{s=0}^{terms-1} r^s` for this parameter set's contraction `r`.
    pub fn contraction_sum(&self, terms: u64) -> f64 {
        geometric_sum_log(self.log_contraction(), terms as f64)
    }

    pub(crate) fn require_class(&self, class: ConvexityClass) -> Result<()> {
        if self.class() == class {
            Ok(())
        } else {
            Err(AccountingError::ClassMismatch {
                required: match class {
                    ConvexityClass::Convex => "convex",
                    ConvexityClass::StronglyConvex => "strongly convex",
                },
            })
        }
    }
}

/// An `(α, ε)` Rényi DP statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpPoint {
    pub alpha: f64,
    pub eps: f64,
}

impl RdpPoint {
    pub fn new(alpha: f64, eps: f64) -> Result<Self> {
        check_order(alpha)?;
        if !(eps >= 0.0) {
            return Err(AccountingError::NonPositive {
                field: "eps",
                value: eps,
            });
        }
        Ok(Self { alpha, eps })
    }
}

/// RDP values over increasing epoch counts at a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    pub alpha: f64,
    points: Vec<(u64, f64)>,
}

impl RdpCurve {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            points: Vec::new(),
        }
    }

    /// Appends `(epochs, eps)`.
    ///
    /// # Panics
    /// If `epochs` does not strictly exceed the last recorded epoch count.
    pub fn push(&mut self, epochs: u64, eps: f64) {
        if let Some(&(last, _)) = self.points.last() {
            assert!(epochs > last, "epoch counts must strictly increase");
        }
        self.points.push((epochs, eps));
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn eps_at(&self, epochs: u64) -> Option<f64> {
        self.points
            .binary_search_by_key(&epochs, |&(k, _)| k)
            .ok()
            .map(|i| self.points[i].1)
    }
}

/// `σ = √(η/2) · (1/b) · σ_mul · (S_g/2)`: the noise scale equivalent to a
/// noise multiplier applied to gradients clipped at `S_g/2`.
pub fn sigma_from_multiplier(eta: f64, b: u64, sensitivity: f64, sigma_mul: f64) -> Result<f64> {
    positive("eta", eta)?;
    positive("sensitivity", sensitivity)?;
    positive("sigma_mul", sigma_mul)?;
    if b == 0 {
        return Err(AccountingError::NonPositive {
            field: "b",
            value: 0.0,
        });
    }
    Ok((eta / 2.0).sqrt() * sigma_mul * (sensitivity / 2.0) / b as f64)
}

/// Inverse of [`sigma_from_multiplier`].
pub fn multiplier_from_sigma(eta: f64, b: u64, sensitivity: f64, sigma: f64) -> Result<f64> {
    positive("eta", eta)?;
    positive("sensitivity", sensitivity)?;
    positive("sigma", sigma)?;
    if b == 0 {
        return Err(AccountingError::NonPositive {
            field: "b",
            value: 0.0,
        });
    }
    Ok(sigma * b as f64 / ((eta / 2.0).sqrt() * (sensitivity / 2.0)))
}

pub(crate) fn positive(field: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AccountingError::NonPositive { field, value })
    }
}

pub(crate) fn check_order(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(AccountingError::InvalidOrder { alpha })
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sample_params_parameters_validate_with_expected_derivations() {
        let p = sample_params(10);
        assert_eq!(p.steps_per_epoch(), 25);
        assert!((p.contraction() - 0.9604).abs() < 1e-15);
        assert!((p.step_loss(10.0) - 0.05).abs() < 1e-15);
        assert_eq!(p.class(), ConvexityClass::StronglyConvex);
    }

    #[test]
    fn stepsize_at_or_above_limit_is_rejected() {
        let raw = RawParams {
            eta: 0.5,
            ..sample_raw()
        };
        assert!(matches!(
            raw.validate(),
            Err(AccountingError::StepsizeTooLarge { .. })
        ));
        let raw = RawParams {
            eta: 0.4,
            ..sample_raw()
        };
        assert!(matches!(
            raw.validate(),
            Err(AccountingError::StepsizeTooLarge { .. })
        ));
        // convex limit is 2/β
        let raw = RawParams {
            lambda: 0.0,
            eta: 0.45,
            ..sample_raw()
        };
        assert!(raw.validate().is_ok());
        let raw = RawParams {
            lambda: 0.0,
            eta: 0.5,
            ..sample_raw()
        };
        assert!(matches!(
            raw.validate(),
            Err(AccountingError::StepsizeTooLarge { .. })
        ));
    }

    #[test]
    fn single_batch_per_epoch_is_rejected_for_strong_convexity() {
        let raw = RawParams {
            b: 30,
            truncate_last_batch: true,
            ..sample_raw()
        };
        assert_eq!(
            raw.validate(),
            Err(AccountingError::BatchCountTooSmall { steps: 1 })
        );
    }

    #[test]
    fn non_dividing_batch_needs_truncation_flag() {
        let raw = RawParams {
            b: 3,
            ..sample_raw()
        };
        assert_eq!(
            raw.validate(),
            Err(AccountingError::NonDividingBatch { n: 50, b: 3 })
        );
        let p = RawParams {
            b: 3,
            truncate_last_batch: true,
            ..sample_raw()
        }
        .validate()
        .unwrap();
        assert_eq!(p.steps_per_epoch(), 16);
    }

    #[test]
    fn nonpositive_fields_are_named() {
        let raw = RawParams {
            sigma: 0.0,
            ..sample_raw()
        };
        assert_eq!(
            raw.validate(),
            Err(AccountingError::NonPositive {
                field: "sigma",
                value: 0.0
            })
        );
        let raw = RawParams {
            n: 0,
            ..sample_raw()
        };
        assert!(matches!(
            raw.validate(),
            Err(AccountingError::NonPositive { field: "n", .. })
        ));
        let raw = RawParams {
            sensitivity: -1.0,
            ..sample_raw()
        };
        assert!(matches!(
            raw.validate(),
            Err(AccountingError::NonPositive {
                field: "sensitivity",
                ..
            })
        ));
    }

    #[test]
    fn lambda_above_beta_is_invalid() {
        let raw = RawParams {
            lambda: 5.0,
            eta: 0.01,
            ..sample_raw()
        };
        assert!(matches!(
            raw.validate(),
            Err(AccountingError::InvalidRegularity(_))
        ));
    }

    #[test]
    fn sigma_from_multiplier_examples() {
        assert!((sigma_from_multiplier(2.0, 1, 2.0, 3.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((sigma_from_multiplier(0.02, 2, 4.0, 10.0).unwrap() - 1.0).abs() < 1e-15);
        for x in [0.5, 1.0, 5.0] {
            let s = sigma_from_multiplier(0.02, 2, 4.0, x).unwrap();
            let back = multiplier_from_sigma(0.02, 2, 4.0, s).unwrap();
            assert!((back - x).abs() < 1e-14 * x);
        }
        assert!(sigma_from_multiplier(0.02, 2, 4.0, 0.0).is_err());
    }

    #[test]
    fn contraction_sum_matches_direct_summation_up_to_a_million_terms() {
        let p = sample_params(1);
        let r = p.contraction();
        let mut direct = 0.0;
        let mut term = 1.0;
        let mut checkpoints = [1u64, 2, 25, 1000, 1_000_000].into_iter().peekable();
        for j in 1..=1_000_000u64 {
            direct += term;
            term *= r;
            if checkpoints.peek() == Some(&j) {
                checkpoints.next();
                let closed = p.contraction_sum(j);
                assert!(((closed - direct) / direct).abs() < 1e-12, "j={j}");
            }
        }
    }

    #[test]
    #[should_panic(expected = "strictly increase")]
    fn curve_rejects_non_increasing_epochs() {
        let mut c = RdpCurve::new(10.0);
        c.push(2, 0.1);
        c.push(2, 0.2);
    }

    proptest! {
        #[test]
        fn validate_is_idempotent(
            n in 4u64..500,
            b in 1u64..8,
            eta_frac in 0.01f64..0.99,
            lambda in 0.0f64..2.0,
            extra in 0.0f64..5.0,
            sigma in 0.1f64..10.0,
            sg in 0.1f64..10.0,
            epochs in 0u64..100,
        ) {
            let beta = lambda + extra + 0.1;
            let eta = eta_frac * 2.0 / (lambda + beta);
            let raw = RawParams {
                n, b, eta, epochs, sigma, lambda, beta, sensitivity: sg,
                neighboring: Neighboring::ChangeOne, truncate_last_batch: true,
            };
            if let Ok(p) = raw.validate() {
                prop_assert_eq!(p.validate().unwrap(), p);
                if p.class() == ConvexityClass::StronglyConvex {
                    prop_assert!(p.contraction() > 0.0 && p.contraction() < 1.0);
                }
            }
        }

        #[test]
        fn sigma_is_linear_and_increasing_in_multiplier_and_sensitivity(
            eta in 0.001f64..1.0, b in 1u64..64, sg in 0.01f64..10.0, mul in 0.01f64..50.0,
        ) {
            let s = sigma_from_multiplier(eta, b, sg, mul).unwrap();
            let s2 = sigma_from_multiplier(eta, b, sg, 2.0 * mul).unwrap();
            let s3 = sigma_from_multiplier(eta, b, 3.0 * sg, mul).unwrap();
            prop_assert!((s2 - 2.0 * s).abs() <= 1e-12 * s2);
            prop_assert!((s3 - 3.0 * s).abs() <= 1e-12 * s3);
            prop_assert!(s2 > s && s3 > s);
        }
    }
}
