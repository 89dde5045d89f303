//! Small numerically careful helpers shared by the bound families.

/// `ln(Σ exp(v))` with the maximum factored out before exponentiating.
///
/// Empty input yields `-inf`; any `+inf` entry yields `+inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi.is_infinite() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(mean(exp(v)))`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// `Σ_{s=0}^{terms-1} ratio^s` in closed form.
///
/// `ratio == 1` returns `terms` exactly. The closed form `(1 - ratio^terms) / (1 - ratio)`
/// is evaluated with `expm1`/`ln_1p`-style primitives to keep precision when `ratio`
/// is close to one.
pub fn geometric_sum(ratio: f64, terms: f64) -> f64 {
    if ratio == 1.0 {
        return terms;
    }
    geometric_sum_log(ratio.ln(), terms)
}

/// [`geometric_sum`] with the ratio given as its natural log, so that ratios like
/// `r^13` never have to be formed explicitly.
pub fn geometric_sum_log(log_ratio: f64, terms: f64) -> f64 {
    if terms == 0.0 {
        return 0.0;
    }
    if log_ratio == 0.0 {
        return terms;
    }
    // 1 - ratio^terms = -expm1(terms * ln ratio)
    let numer = -(terms * log_ratio).exp_m1();
    let denom = -log_ratio.exp_m1();
    numer / denom
}
