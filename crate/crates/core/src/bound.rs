//! Uniform dispatch over every bound family.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::baselines::{
    mixing_diffusion_first_batch, mixing_diffusion_last_batch, sgm_composition,
    sgm_composition_curve,
};
use crate::convert::{rdp_to_dp, DpGuarantee};
use crate::dynamics::{bound_fixed, naive_limit, strongly_convex_fixed_limit, bound_naive_baseline};
use crate::error::{AccountingError, Result};
use crate::params::{AccountingParams, ConvexityClass, RdpCurve, RdpPoint};
use crate::sampling::{bound_samp_wo_replacement, bound_shuffle, samp_wo_curve, samp_wo_limit, shuffle_limit};

/// Which bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// Fixed batches, differing record in the first batch.
    FixedFirst,
    /// Fixed batches, differing record in the last batch (the worst position).
    FixedLast,
    /// Fixed batches, differing record in batch `j0`.
    Fixed(u64),
    Shuffle,
    SampWo,
    Naive,
    Sgm,
    MixingDiffusionFirst,
    MixingDiffusionLast,
}

impl BoundKind {
    /// Every kind with a canonical name, in a stable order.
    pub const NAMED: [BoundKind; 8] = [
        BoundKind::FixedFirst,
        BoundKind::FixedLast,
        BoundKind::Shuffle,
        BoundKind::SampWo,
        BoundKind::Naive,
        BoundKind::Sgm,
        BoundKind::MixingDiffusionFirst,
        BoundKind::MixingDiffusionLast,
    ];

    fn batch_index(&self, params: &AccountingParams) -> Option<u64> {
        match self {
            Self::FixedFirst => Some(0),
            Self::FixedLast => Some(params.steps_per_epoch() - 1),
            Self::Fixed(j0) => Some(*j0),
            _ => None,
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FixedFirst => f.write_str("improved-first"),
            Self::FixedLast => f.write_str("improved-last"),
            Self::Fixed(j0) => write!(f, "fixed:{j0}"),
            Self::Shuffle => f.write_str("shuffle"),
            Self::SampWo => f.write_str("samp-wo"),
            Self::Naive => f.write_str("naive"),
            Self::Sgm => f.write_str("sgm"),
            Self::MixingDiffusionFirst => f.write_str("mixing-diffusion-first"),
            Self::MixingDiffusionLast => f.write_str("mixing-diffusion-last"),
        }
    }
}

impl FromStr for BoundKind {
    type Err = AccountingError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        if let Some(idx) = key.strip_prefix("fixed:") {
            return idx
                .parse()
                .map(Self::Fixed)
                .map_err(|_| AccountingError::UnknownVariant {
                    what: "bound kind",
                    value: s.to_string(),
                });
        }
        Ok(match key.as_str() {
            "improved-first" | "fixed-first" | "first" => Self::FixedFirst,
            "improved-last" | "fixed-last" | "last" => Self::FixedLast,
            "shuffle" => Self::Shuffle,
            "samp-wo" | "sampling-without-replacement" => Self::SampWo,
            "naive" => Self::Naive,
            "sgm" | "sgm-composition" | "composition" => Self::Sgm,
            "mixing-diffusion-first" => Self::MixingDiffusionFirst,
            "mixing-diffusion-last" => Self::MixingDiffusionLast,
            _ => {
                return Err(AccountingError::UnknownVariant {
                    what: "bound kind",
                    value: s.to_string(),
                })
            }
        })
    }
}

impl Serialize for BoundKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// RDP value of `kind` at order `alpha` for `params.epochs()` epochs.
pub fn evaluate(kind: BoundKind, params: &AccountingParams, alpha: f64) -> Result<f64> {
    if let Some(j0) = kind.batch_index(params) {
        return Ok(bound_fixed(params, alpha, j0)?.eps);
    }
    match kind {
        BoundKind::Shuffle => Ok(bound_shuffle(params, alpha)?.eps),
        BoundKind::SampWo => bound_samp_wo_replacement(params, alpha),
        BoundKind::Naive => bound_naive_baseline(params, alpha),
        BoundKind::Sgm => Ok(sgm_composition(params, alpha)?.eps),
        BoundKind::MixingDiffusionFirst => mixing_diffusion_first_batch(params, alpha),
        BoundKind::MixingDiffusionLast => mixing_diffusion_last_batch(params, alpha),
        BoundKind::FixedFirst | BoundKind::FixedLast | BoundKind::Fixed(_) => unreachable!(),
    }
}

/// `K → ∞` value, or `None` when the bound grows without limit.
pub fn limit(kind: BoundKind, params: &AccountingParams, alpha: f64) -> Result<Option<f64>> {
    if let Some(j0) = kind.batch_index(params) {
        return match params.class() {
            ConvexityClass::StronglyConvex => strongly_convex_fixed_limit(params, alpha, j0).map(Some),
            ConvexityClass::Convex => {
                bound_fixed(params, alpha, j0)?;
                Ok(None)
            }
        };
    }
    match kind {
        BoundKind::Shuffle => shuffle_limit(params, alpha).map(Some),
        BoundKind::SampWo => samp_wo_limit(params, alpha),
        BoundKind::Naive => naive_limit(params, alpha).map(Some),
        BoundKind::Sgm | BoundKind::MixingDiffusionFirst | BoundKind::MixingDiffusionLast => {
            evaluate(kind, params, alpha)?;
            Ok(None)
        }
        BoundKind::FixedFirst | BoundKind::FixedLast | BoundKind::Fixed(_) => unreachable!(),
    }
}

/// Curve over `K = 1..=max_epochs`; `params.epochs()` is ignored.
pub fn curve(kind: BoundKind, params: &AccountingParams, alpha: f64, max_epochs: u64) -> Result<RdpCurve> {
    match kind {
        BoundKind::SampWo => samp_wo_curve(params, alpha, max_epochs),
        BoundKind::Sgm => sgm_composition_curve(params, alpha, max_epochs),
        _ => {
            let mut c = RdpCurve::new(alpha);
            for k in 1..=max_epochs {
                c.push(k, evaluate(kind, &params.with_epochs(k), alpha)?);
            }
            Ok(c)
        }
    }
}

/// RDP points of `kind` over an order grid.
pub fn rdp_points(kind: BoundKind, params: &AccountingParams, grid: &[f64]) -> Result<Vec<RdpPoint>> {
    grid.iter()
        .map(|&alpha| RdpPoint::new(alpha, evaluate(kind, params, alpha)?))
        .collect()
}

/// Best `(ε, δ)` guarantee of `kind` over an order grid.
pub fn evaluate_dp(
    kind: BoundKind,
    params: &AccountingParams,
    grid: &[f64],
    delta: f64,
) -> Result<DpGuarantee> {
    rdp_to_dp(&rdp_points(kind, params, grid)?, delta)
}
