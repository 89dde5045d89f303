//! Exact ground truth on 1-D quadratic losses.
//!
//! With `ℓ(θ; x) = (λ/2)(θ - x)²` the noisy update
//! `θ ← (1 - ηλ)θ + ηλ·mean(batch) + N(0, 2ησ²)` is affine, so starting from a
//! point mass the parameter law stays Gaussian and both neighboring runs share
//! the same variance. The last-iterate Rényi divergence is then
//! `α Δμ² / (2v)` in closed form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynamics::bound_strongly_convex_fixed;
use crate::error::{AccountingError, Result};
use crate::numerics::log_mean_exp;
use crate::params::{check_order, positive, AccountingParams, ConvexityClass, Neighboring, RawParams};
use crate::sampling::bound_shuffle;

/// Slack below which a bound is reported as violated.
pub const DOMINANCE_TOLERANCE: f64 = 1e-12;
/// Monte-Carlo agreement threshold in standard errors.
pub const MONTE_CARLO_Z: f64 = 5.0;
pub const MIN_SAMPLES: u64 = 10_000;

/// A pair of neighboring 1-D datasets run through a fixed batch schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticInstance {
    lambda: f64,
    eta: f64,
    sigma: f64,
    epochs: u64,
    b: usize,
    sensitivity: f64,
    data: Vec<f64>,
    data_prime: Vec<f64>,
    schedule: Vec<Vec<usize>>,
    theta0: f64,
}

/// Law of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianLaw {
    pub mean: f64,
    pub variance: f64,
}

impl QuadraticInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda: f64,
        eta: f64,
        sigma: f64,
        epochs: u64,
        sensitivity: f64,
        data: Vec<f64>,
        data_prime: Vec<f64>,
        schedule: Vec<Vec<usize>>,
        theta0: f64,
    ) -> Result<Self> {
        positive("lambda", lambda)?;
        positive("eta", eta)?;
        positive("sigma", sigma)?;
        positive("sensitivity", sensitivity)?;
        if eta >= 1.0 / lambda {
            return Err(AccountingError::StepsizeTooLarge {
                eta,
                limit: 1.0 / lambda,
            });
        }
        let n = data.len();
        if n == 0 || data_prime.len() != n {
            return Err(AccountingError::InvalidInstance(format!(
                "datasets have lengths {} and {}",
                n,
                data_prime.len()
            )));
        }
        let b = schedule.first().map_or(0, Vec::len);
        if b == 0 || schedule.iter().any(|batch| batch.len() != b) {
            return Err(AccountingError::InvalidInstance(
                "batches must be non-empty and of equal size".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &i in schedule.iter().flatten() {
            if i >= n || seen[i] {
                return Err(AccountingError::InvalidInstance(format!(
                    "schedule is not a partition of 0..{n} (index {i})"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(AccountingError::InvalidInstance(format!(
                "schedule does not cover 0..{n}"
            )));
        }
        let differing: Vec<usize> = (0..n).filter(|&i| data[i] != data_prime[i]).collect();
        match differing.as_slice() {
            [_] => {}
            [] => {}
            _ => {
                return Err(AccountingError::InvalidInstance(format!(
                    "datasets differ in {} records",
                    differing.len()
                )))
            }
        }
        if let Some(&i0) = differing.first() {
            let gap = (data[i0] - data_prime[i0]).abs();
            let allowed = sensitivity / lambda;
            if gap > allowed * (1.0 + 1e-12) {
                return Err(AccountingError::SensitivityViolated {
                    actual: gap,
                    allowed,
                });
            }
        }
        Ok(Self {
            lambda,
            eta,
            sigma,
            epochs,
            b,
            sensitivity,
            data,
            data_prime,
            schedule,
            theta0,
        })
    }

    /// The extremal instance for `params`: zero data, the differing record at
    /// full sensitivity gap in batch `j0` of an in-order partition.
    ///
    /// The loss has `β = λ`; only `λ, η, σ, S_g, n, b, K` are taken from `params`.
    pub fn extremal(params: &AccountingParams, j0: u64) -> Result<Self> {
        params.require_class(ConvexityClass::StronglyConvex)?;
        let (n, b) = (params.n() as usize, params.b() as usize);
        let m = n / b;
        if j0 as usize >= m {
            return Err(AccountingError::IndexOutOfRange {
                index: j0,
                lo: 0,
                hi: m as u64 - 1,
            });
        }
        let data = vec![0.0; m * b];
        let mut data_prime = data.clone();
        data_prime[j0 as usize * b] = params.sensitivity() / params.lambda();
        let schedule = (0..m).map(|j| (j * b..(j + 1) * b).collect()).collect();
        Self::new(
            params.lambda(),
            params.eta(),
            params.sigma(),
            params.epochs(),
            params.sensitivity(),
            data,
            data_prime,
            schedule,
            0.0,
        )
    }

    /// Same instance with the differing value scaled toward the shared one.
    pub fn with_gap_fraction(&self, fraction: f64) -> Result<Self> {
        let mut data_prime = self.data_prime.clone();
        if let Some(i0) = self.differing_index() {
            data_prime[i0] = self.data[i0] + fraction * (self.data_prime[i0] - self.data[i0]);
        }
        Self::new(
            self.lambda,
            self.eta,
            self.sigma,
            self.epochs,
            self.sensitivity,
            self.data.clone(),
            data_prime,
            self.schedule.clone(),
            self.theta0,
        )
    }

    pub fn with_epochs(&self, epochs: u64) -> Self {
        Self {
            epochs,
            ..self.clone()
        }
    }

    /// Same data with the differing record swapped into batch `j`.
    pub fn relocated(&self, j: usize) -> Result<Self> {
        let mut out = self.clone();
        let Some(i0) = self.differing_index() else {
            return Ok(out);
        };
        if j >= self.schedule.len() {
            return Err(AccountingError::IndexOutOfRange {
                index: j as u64,
                lo: 0,
                hi: self.schedule.len() as u64 - 1,
            });
        }
        let (from, pos) = self.position(i0);
        if from != j {
            let other = out.schedule[j][0];
            out.schedule[j][0] = i0;
            out.schedule[from][pos] = other;
        }
        Ok(out)
    }

    pub fn differing_index(&self) -> Option<usize> {
        (0..self.data.len()).find(|&i| self.data[i] != self.data_prime[i])
    }

    /// Batch containing the differing record.
    pub fn differing_batch(&self) -> Option<usize> {
        self.differing_index().map(|i| self.position(i).0)
    }

    fn position(&self, i: usize) -> (usize, usize) {
        for (j, batch) in self.schedule.iter().enumerate() {
            if let Some(p) = batch.iter().position(|&x| x == i) {
                return (j, p);
            }
        }
        unreachable!("schedule is a validated partition")
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.schedule.len()
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    /// Accounting parameters this instance realizes (with `β = λ`).
    pub fn to_params(&self) -> Result<AccountingParams> {
        RawParams {
            n: self.data.len() as u64,
            b: self.b as u64,
            eta: self.eta,
            epochs: self.epochs,
            sigma: self.sigma,
            lambda: self.lambda,
            beta: self.lambda,
            sensitivity: self.sensitivity,
            neighboring: Neighboring::ChangeOne,
            truncate_last_batch: false,
        }
        .validate()
    }

    fn batch_means(&self, data: &[f64]) -> Vec<f64> {
        self.schedule
            .iter()
            .map(|batch| batch.iter().map(|&i| data[i]).sum::<f64>() / self.b as f64)
            .collect()
    }

    /// Last-iterate laws under `data` and `data'`.
    pub fn final_laws(&self) -> (GaussianLaw, GaussianLaw) {
        let means = self.batch_means(&self.data);
        let means_prime = self.batch_means(&self.data_prime);
        let shrink = 1.0 - self.eta * self.lambda;
        let pull = self.eta * self.lambda;
        let fresh = 2.0 * self.eta * self.sigma * self.sigma;
        let (mut mu, mut mu_prime, mut v) = (self.theta0, self.theta0, 0.0);
        for _ in 0..self.epochs {
            for (g, g_prime) in means.iter().zip(&means_prime) {
                mu = shrink * mu + pull * g;
                mu_prime = shrink * mu_prime + pull * g_prime;
                v = shrink * shrink * v + fresh;
            }
        }
        (
            GaussianLaw { mean: mu, variance: v },
            GaussianLaw {
                mean: mu_prime,
                variance: v,
            },
        )
    }
}

/// Rényi divergence of order `alpha` between the two last-iterate laws.
pub fn exact_renyi(instance: &QuadraticInstance, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    let (p, q) = instance.final_laws();
    let gap = p.mean - q.mean;
    if gap == 0.0 {
        return Ok(0.0);
    }
    Ok(alpha * gap * gap / (2.0 * p.variance))
}

/// Which bound an instance is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleBound {
    /// Fixed batches, at the instance's own differing batch.
    FixedBatch,
    /// Shuffle and partition: the instance is relocated to every batch and
    /// the exact values are averaged the way the mixture bound averages.
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceReport {
    pub kind: OracleBound,
    pub alpha: f64,
    pub j0: Option<u64>,
    pub exact: f64,
    pub bound: f64,
    pub slack: f64,
    pub params: AccountingParams,
    pub seed: Option<u64>,
}

/// Checks `exact ≤ bound` for one instance.
pub fn verify_dominance(
    instance: &QuadraticInstance,
    alpha: f64,
    kind: OracleBound,
) -> Result<DominanceReport> {
    let params = instance.to_params()?;
    let j0 = instance.differing_batch().unwrap_or(0) as u64;
    let (exact, bound) = match kind {
        OracleBound::FixedBatch => (
            exact_renyi(instance, alpha)?,
            bound_strongly_convex_fixed(&params, alpha, j0)?.eps,
        ),
        OracleBound::Shuffle => {
            let scaled = (0..instance.steps_per_epoch())
                .map(|j| Ok((alpha - 1.0) * exact_renyi(&instance.relocated(j)?, alpha)?))
                .collect::<Result<Vec<_>>>()?;
            (
                log_mean_exp(&scaled) / (alpha - 1.0),
                bound_shuffle(&params, alpha)?.eps,
            )
        }
    };
    let slack = bound - exact;
    if slack < -DOMINANCE_TOLERANCE {
        return Err(AccountingError::DominanceViolated { exact, bound });
    }
    Ok(DominanceReport {
        kind,
        alpha,
        j0: (kind == OracleBound::FixedBatch).then_some(j0),
        exact,
        bound,
        slack,
        params,
        seed: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub samples: u64,
    pub seed: u64,
    pub expected: GaussianLaw,
    pub empirical: GaussianLaw,
    pub mean_z: f64,
    pub variance_z: f64,
}

/// Simulates the noisy updates on `data` and compares the last iterate's
/// sample mean and variance with [`QuadraticInstance::final_laws`].
pub fn monte_carlo_check(
    instance: &QuadraticInstance,
    samples: u64,
    seed: u64,
) -> Result<MonteCarloReport> {
    if samples < MIN_SAMPLES {
        return Err(AccountingError::InvalidInstance(format!(
            "at least {MIN_SAMPLES} samples are required, got {samples}"
        )));
    }
    let expected = instance.final_laws().0;
    let means = instance.batch_means(&instance.data);
    let shrink = 1.0 - instance.eta * instance.lambda;
    let pull = instance.eta * instance.lambda;
    let noise_sd = (2.0 * instance.eta).sqrt() * instance.sigma;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut count, mut mean, mut m2) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let mut theta = instance.theta0;
        for _ in 0..instance.epochs {
            for g in &means {
                let z: f64 = StandardNormal.sample(&mut rng);
                theta = shrink * theta + pull * g + noise_sd * z;
            }
        }
        count += 1.0;
        let delta = theta - mean;
        mean += delta / count;
        m2 += delta * (theta - mean);
    }
    let variance = m2 / (count - 1.0);
    let empirical = GaussianLaw { mean, variance };

    let mean_z = z_score(mean - expected.mean, (expected.variance / count).sqrt());
    let variance_z = z_score(
        variance - expected.variance,
        (2.0 * expected.variance * expected.variance / (count - 1.0)).sqrt(),
    );
    for (statistic, z, emp, exp) in [
        ("mean", mean_z, mean, expected.mean),
        ("variance", variance_z, variance, expected.variance),
    ] {
        if z.abs() > MONTE_CARLO_Z {
            return Err(AccountingError::StatisticalMismatch {
                statistic,
                empirical: emp,
                expected: exp,
                z_score: z,
            });
        }
    }
    Ok(MonteCarloReport {
        samples,
        seed,
        expected,
        empirical,
        mean_z,
        variance_z,
    })
}

fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::eps0_term;
    use crate::params::fixtures::{sample_params, sample_raw};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn first_batch_single_epoch_meets_the_bound() {
        let p = sample_params(1);
        let inst = QuadraticInstance::extremal(&p, 0).unwrap();
        for alpha in [2.0, 10.0, 30.0] {
            let exact = exact_renyi(&inst, alpha).unwrap();
            assert!(rel(exact, eps0_term(&p, alpha, 25).unwrap()) < 1e-12);
            let r = verify_dominance(&inst, alpha, OracleBound::FixedBatch).unwrap();
            assert!(r.slack.abs() <= 1e-9 * r.bound);
        }
    }

    #[test]
    fn identical_datasets_have_zero_divergence() {
        let inst = QuadraticInstance::extremal(&sample_params(5), 3)
            .unwrap()
            .with_gap_fraction(0.0)
            .unwrap();
        assert_eq!(inst.differing_index(), None);
        assert_eq!(exact_renyi(&inst, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn divergence_is_quadratic_in_gap_and_linear_in_order() {
        let inst = QuadraticInstance::extremal(&sample_params(3), 7).unwrap();
        let full = exact_renyi(&inst, 10.0).unwrap();
        let half = exact_renyi(&inst.with_gap_fraction(0.5).unwrap(), 10.0).unwrap();
        assert!(rel(half, full / 4.0) < 1e-12);
        assert!(rel(exact_renyi(&inst, 20.0).unwrap(), 2.0 * full) < 1e-12);
    }

    #[test]
    fn multi_epoch_bound_is_strictly_loose() {
        for j0 in [0, 12, 24] {
            let inst = QuadraticInstance::extremal(&sample_params(10), j0).unwrap();
            let r = verify_dominance(&inst, 10.0, OracleBound::FixedBatch).unwrap();
            assert!(r.slack > 0.0, "j0={j0}");
        }
    }

    #[test]
    fn shuffle_dominates_relocated_average() {
        for k in [1, 5, 40] {
            let inst = QuadraticInstance::extremal(&sample_params(k), 0).unwrap();
            for alpha in [2.0, 30.0] {
                let r = verify_dominance(&inst, alpha, OracleBound::Shuffle).unwrap();
                assert!(r.slack >= 0.0);
            }
        }
    }

    #[test]
    fn instance_validation() {
        let p = sample_params(1);
        let inst = QuadraticInstance::extremal(&p, 0).unwrap();
        let mut too_far = inst.data_prime.clone();
        too_far[0] = 4.5;
        assert!(matches!(
            QuadraticInstance::new(1.0, 0.02, 2.0, 1, 4.0, inst.data.clone(), too_far, inst.schedule.clone(), 0.0),
            Err(AccountingError::SensitivityViolated { .. })
        ));
        let mut two = inst.data_prime.clone();
        two[1] = 1.0;
        assert!(QuadraticInstance::new(1.0, 0.02, 2.0, 1, 4.0, inst.data.clone(), two, inst.schedule.clone(), 0.0).is_err());
        let mut bad = inst.schedule.clone();
        bad[0][0] = 1;
        assert!(QuadraticInstance::new(1.0, 0.02, 2.0, 1, 4.0, inst.data.clone(), inst.data_prime.clone(), bad, 0.0).is_err());
        assert!(matches!(
            QuadraticInstance::new(1.0, 1.0, 2.0, 1, 4.0, inst.data.clone(), inst.data_prime.clone(), inst.schedule.clone(), 0.0),
            Err(AccountingError::StepsizeTooLarge { .. })
        ));
    }

    #[test]
    fn full_batch_instance_is_rejected_for_bounds() {
        let data = vec![0.0, 0.0];
        let inst = QuadraticInstance::new(1.0, 0.02, 2.0, 1, 4.0, data, vec![4.0, 0.0], vec![vec![0, 1]], 0.0)
            .unwrap();
        assert!(exact_renyi(&inst, 2.0).unwrap() > 0.0);
        assert!(matches!(
            verify_dominance(&inst, 2.0, OracleBound::FixedBatch),
            Err(AccountingError::BatchCountTooSmall { .. })
        ));
    }

    #[test]
    fn relocation_moves_only_the_differing_record() {
        let inst = QuadraticInstance::extremal(&sample_params(1), 0).unwrap();
        let moved = inst.relocated(9).unwrap();
        assert_eq!(moved.differing_batch(), Some(9));
        assert_eq!(moved.to_params().unwrap(), inst.to_params().unwrap());
    }

    #[test]
    fn noiseless_limit_tracks_the_mean_recursion() {
        let raw = RawParams {
            sigma: 1e-9,
            n: 4,
            ..sample_raw()
        };
        let inst = QuadraticInstance::extremal(&raw.validate().unwrap(), 1)
            .unwrap()
            .with_epochs(2);
        let report = monte_carlo_check(&inst, 10_000, 3).unwrap();
        assert!((report.empirical.mean - report.expected.mean).abs() < 1e-8);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_checks_sample_count() {
        let inst = QuadraticInstance::extremal(&sample_params(1), 0).unwrap();
        let a = serde_json::to_string(&monte_carlo_check(&inst, 10_000, 11).unwrap()).unwrap();
        let b = serde_json::to_string(&monte_carlo_check(&inst, 10_000, 11).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_check(&inst, 9_999, 11).is_err());
    }
}
