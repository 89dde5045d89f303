//! Last-iterate Rényi DP accounting for noisy mini-batch gradient descent.
//!
//! The bounds follow the privacy dynamics of the hidden parameter state:
//! divergence is added when a step touches the differing record and contracts
//! on every other step. Fixed batches, shuffle-and-partition and sampling
//! without replacement each get a bound; composition baselines, `(ε, δ)`
//! conversion, calibration and an exact Gaussian oracle sit alongside.
//!
//! ```
//! use privdyn_core::{bound_shuffle, RawParams, Neighboring};
//!
//! let params = RawParams {
//!     n: 50, b: 2, eta: 0.02, epochs: 40, sigma: 2.0,
//!     lambda: 1.0, beta: 4.0, sensitivity: 4.0,
//!     neighboring: Neighboring::ChangeOne, truncate_last_batch: false,
//! }
//! .validate()
//! .unwrap();
//! let eps = bound_shuffle(&params, 10.0).unwrap().eps;
//! assert!(eps > 0.0 && eps < 0.02);
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bound;
pub mod calibrate;
pub mod convert;
pub mod dynamics;
pub mod error;
pub mod numerics;
pub mod oracle;
pub mod params;
pub mod sampling;

pub use baselines::{
    mixing_diffusion_first_batch, mixing_diffusion_last_batch, mixing_diffusion_slope,
    sgm_approximation, sgm_composition, sgm_composition_curve, sgm_rdp, sgm_rdp_per_step,
    SgmEval, SgmParams,
};
pub use bound::{curve, evaluate, evaluate_dp, limit, rdp_points, BoundKind};
pub use calibrate::{calibrate_noise, max_epochs, CalibrationOptions, EpochBudget, NoiseCalibration};
pub use convert::{
    alpha_grid_from_env, corollary_logistic_bound, default_alpha_grid, logistic_constants,
    multiplier_step_loss, parse_alpha_grid, rdp_to_dp, translate_neighboring, DpGuarantee,
    LogisticConstants, LogisticSetup, ALPHA_GRID_ENV,
};
pub use dynamics::{
    bound_convex_fixed, bound_fixed, bound_naive_baseline, bound_strongly_convex_fixed,
    eps0_term, lsi_constant, naive_limit, recursion_coefficients, strongly_convex_fixed_limit,
    FixedBatchBound, LsiConstant, RecursionStep,
};
pub use error::{AccountingError, Result};
pub use oracle::{
    exact_renyi, monte_carlo_check, verify_dominance, DominanceReport, GaussianLaw,
    MonteCarloReport, OracleBound, QuadraticInstance,
};
pub use params::{
    multiplier_from_sigma, sigma_from_multiplier, AccountingParams, ConvexityClass,
    LossRegularity, Neighboring, RawParams, RdpCurve, RdpPoint,
};
pub use sampling::{
    bound_samp_wo_replacement, bound_shuffle, check_joint_convexity, mixture_bound,
    samp_wo_curve, samp_wo_limit, shuffle_limit, SampWoRecursion, SampWoState, ShuffleBound,
};
