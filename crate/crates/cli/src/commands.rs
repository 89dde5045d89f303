use std::path::PathBuf;

use clap::{Args, ValueEnum};
use privdyn_core::{
    alpha_grid_from_env, calibrate_noise, curve as bound_curve, evaluate, evaluate_dp,
    exact_renyi, max_epochs, monte_carlo_check, multiplier_from_sigma, parse_alpha_grid,
    rdp_to_dp, sgm_composition, translate_neighboring, verify_dominance, AccountingError,
    AccountingParams, BoundKind, CalibrationOptions, DominanceReport, DpGuarantee, EpochBudget,
    MonteCarloReport, Neighboring, OracleBound, QuadraticInstance, RdpCurve, RdpPoint,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Merged, ParamArgs};
use crate::output::{print_json, quiet_pipe, timestamp, write_csv};
use crate::CliError;

fn alpha_grid(alphas: Option<&str>, alpha: Option<f64>) -> Result<Vec<f64>, CliError> {
    Ok(match (alphas, alpha) {
        (Some(text), _) => parse_alpha_grid(text)?,
        (None, Some(a)) => vec![a],
        (None, None) => alpha_grid_from_env()?,
    })
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Bound to evaluate, e.g. shuffle, improved-last, fixed:3, samp-wo, sgm.
    #[arg(long, default_value = "shuffle")]
    kind: BoundKind,
    /// Batch index of the differing record; shorthand for `--kind fixed:<j0>`.
    #[arg(long)]
    j0: Option<u64>,
    /// Rényi order.
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated order grid for the (ε, δ) conversion.
    #[arg(long)]
    alphas: Option<String>,
    /// Report an (ε, δ) guarantee at this δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Add a generation time to the record.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Debug, Serialize)]
struct BoundRecord {
    bound_kind: BoundKind,
    alpha: f64,
    eps_rdp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sgm_order_used: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_dp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    neighboring: Option<Neighboring>,
    params: AccountingParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
}

pub fn bound(args: BoundArgs) -> Result<(), CliError> {
    let params = args.params.merge()?.params(None, None)?;
    let kind = args.j0.map_or(args.kind, BoundKind::Fixed);
    let dp = match args.delta {
        Some(delta) => {
            let grid = alpha_grid(args.alphas.as_deref(), args.alpha)?;
            let g = evaluate_dp(kind, &params, &grid, delta)?;
            Some(translate_neighboring(&g, params.neighboring()))
        }
        None => None,
    };
    let alpha = match (args.alpha, dp) {
        (Some(a), _) => a,
        (None, Some(g)) => g.alpha_star,
        (None, None) => {
            return Err(CliError::input(
                "MissingArgument",
                "--alpha is required unless --delta is given",
            ))
        }
    };
    let eps_rdp = evaluate(kind, &params, alpha)?;
    let sgm_order_used = match kind {
        BoundKind::Sgm => Some(sgm_composition(&params, alpha)?.order_used),
        _ => None,
    };
    print_json(&BoundRecord {
        bound_kind: kind,
        alpha,
        eps_rdp,
        sgm_order_used,
        eps_dp: dp.map(|g| g.eps),
        delta: dp.map(|g| g.delta),
        alpha_star: dp.map(|g| g.alpha_star),
        neighboring: dp.map(|g| g.neighboring),
        params,
        generated_at: timestamp(args.timestamp),
    })
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Comma-separated bound kinds.
    #[arg(long, value_delimiter = ',', default_value = "shuffle")]
    kinds: Vec<BoundKind>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated orders; one curve per (kind, order).
    #[arg(long)]
    alphas: Option<String>,
    /// Largest epoch count; defaults to --epochs.
    #[arg(long)]
    epochs_max: Option<u64>,
    /// Write one `<kind>_alpha<α>.csv` file per curve here instead of stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn curve_file_name(kind: BoundKind, alpha: f64) -> String {
    format!("{}_alpha{alpha}.csv", kind.to_string().replace(':', "-"))
}

pub fn curve(args: CurveArgs) -> Result<(), CliError> {
    let merged = args.params.merge()?;
    let k_max = args.epochs_max.or(merged.epochs).ok_or_else(|| {
        CliError::input("MissingArgument", "--epochs-max (or --epochs) is required")
    })?;
    let params = merged.params(None, Some(k_max))?;
    if args.alphas.is_none() && args.alpha.is_none() {
        return Err(CliError::input("MissingArgument", "--alpha or --alphas is required"));
    }
    let grid = alpha_grid(args.alphas.as_deref(), args.alpha)?;
    let jobs: Vec<(BoundKind, f64)> = args
        .kinds
        .iter()
        .flat_map(|&k| grid.iter().map(move |&a| (k, a)))
        .collect();

    let curves: Vec<Result<RdpCurve, AccountingError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(kind, alpha)| s.spawn(move || bound_curve(kind, &params, alpha, k_max)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("curve worker panicked"))
            .collect()
    });

    let io_err = |e: std::io::Error| CliError::input("OutputFailed", e.to_string());
    match &args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err)?;
            for (&(kind, alpha), c) in jobs.iter().zip(curves) {
                let path = dir.join(curve_file_name(kind, alpha));
                let mut file = std::fs::File::create(&path).map_err(io_err)?;
                write_csv(&mut file, &c?).map_err(io_err)?;
            }
        }
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            let mut text = Vec::new();
            for (i, (&(kind, alpha), c)) in jobs.iter().zip(curves).enumerate() {
                if i > 0 {
                    writeln!(text).map_err(io_err)?;
                }
                writeln!(text, "# kind={kind} alpha={alpha}").map_err(io_err)?;
                write_csv(&mut text, &c?).map_err(io_err)?;
            }
            out.write_all(&text).or_else(quiet_pipe)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solve {
    Sigma,
    Epochs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value = "shuffle")]
    kind: BoundKind,
    #[arg(long)]
    target_eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    alphas: Option<String>,
    /// Quantity to solve for.
    #[arg(long, value_enum, default_value = "sigma")]
    solve: Solve,
    #[arg(long, default_value_t = 1e-6)]
    sigma_lo: f64,
    #[arg(long, default_value_t = 1e6)]
    sigma_hi: f64,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    #[arg(long)]
    timestamp: bool,
}

pub fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let merged = args.params.merge()?;
    let grid = alpha_grid(args.alphas.as_deref(), None)?;
    let record = match args.solve {
        Solve::Sigma => {
            let base = merged.params(Some(1.0), None)?;
            let opts = CalibrationOptions {
                sigma_lo: args.sigma_lo,
                sigma_hi: args.sigma_hi,
                rel_tol: args.rel_tol,
                ..Default::default()
            };
            let cal = calibrate_noise(&base, &grid, args.target_eps, args.delta, args.kind, &opts)?;
            let params = base.with_sigma(cal.sigma)?;
            json!({
                "bound_kind": args.kind,
                "solve": "sigma",
                "target_eps": args.target_eps,
                "delta": args.delta,
                "sigma": cal.sigma,
                "sigma_mul": multiplier_from_sigma(params.eta(), params.b(), params.sensitivity(), cal.sigma)?,
                "eps_dp": cal.eps,
                "alpha_star": cal.alpha_star,
                "iterations": cal.iterations,
                "params": params,
            })
        }
        Solve::Epochs => {
            let params = merged.params(None, Some(1))?;
            let budget = match max_epochs(&params, &grid, args.target_eps, args.delta, args.kind)? {
                EpochBudget::Finite(k) => json!(k),
                EpochBudget::Unbounded => json!("unbounded"),
            };
            json!({
                "bound_kind": args.kind,
                "solve": "epochs",
                "target_eps": args.target_eps,
                "delta": args.delta,
                "max_epochs": budget,
                "params": params,
            })
        }
    };
    print_json(&with_timestamp(record, args.timestamp))
}

fn with_timestamp(mut record: Value, enabled: bool) -> Value {
    if let (Some(t), Some(map)) = (timestamp(enabled), record.as_object_mut()) {
        map.insert("generated_at".into(), json!(t));
    }
    record
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Rényi order of the input guarantee; omit to translate an (ε, δ) guarantee.
    #[arg(long)]
    alpha: Option<f64>,
    /// RDP ε at --alpha, or the DP ε when --alpha is omitted.
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    /// Neighboring notion of the input.
    #[arg(long, default_value = "change-one")]
    from: Neighboring,
    /// Neighboring notion of the output; defaults to --from.
    #[arg(long)]
    to: Option<Neighboring>,
}

pub fn convert(args: ConvertArgs) -> Result<(), CliError> {
    let g = match args.alpha {
        Some(alpha) => DpGuarantee {
            neighboring: args.from,
            ..rdp_to_dp(&[RdpPoint::new(alpha, args.eps)?], args.delta)?
        },
        None => {
            if !(args.delta > 0.0 && args.delta <= 1.0) {
                return Err(AccountingError::InvalidDelta { delta: args.delta }.into());
            }
            if !(args.eps >= 0.0) {
                return Err(AccountingError::NonPositive {
                    field: "eps",
                    value: args.eps,
                }
                .into());
            }
            DpGuarantee {
                eps: args.eps,
                delta: args.delta,
                neighboring: args.from,
                alpha_star: f64::NAN,
            }
        }
    };
    let out = translate_neighboring(&g, args.to.unwrap_or(args.from));
    let mut record = json!({
        "eps": out.eps,
        "delta": out.delta,
        "neighboring": out.neighboring,
    });
    if args.alpha.is_some() {
        record["alpha_star"] = json!(out.alpha_star);
    }
    print_json(&record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Dominance,
    Tightness,
    Montecarlo,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Instance parameters; unset values default to n=50, b=2, η=0.02, σ=2, λ=1, S_g=4.
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    /// Orders checked.
    #[arg(long, default_value = "2,10,30")]
    alphas: String,
    /// Comma-separated epoch counts for the dominance grid.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,40")]
    epochs_grid: Vec<u64>,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include every dominance report, not just the tightest one.
    #[arg(long)]
    all_reports: bool,
    #[arg(long)]
    timestamp: bool,
}

fn oracle_defaults(m: Merged) -> Merged {
    let lambda = m.lambda.or(Some(1.0));
    Merged {
        n: m.n.or(Some(50)),
        b: m.b.or(Some(2)),
        eta: m.eta.or(Some(0.02)),
        epochs: m.epochs.or(Some(1)),
        sigma: m.sigma.or(if m.sigma_mul.is_some() { None } else { Some(2.0) }),
        lambda,
        // the quadratic oracle loss has β = λ
        beta: lambda,
        sensitivity: m.sensitivity.or(Some(4.0)),
        clip_feature: None,
        clip_gradient: None,
        ..m
    }
}

#[derive(Debug, Default, Serialize)]
struct VerifyRecord {
    suite: String,
    passed: bool,
    checks: usize,
    failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tightest_dominance: Option<DominanceReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    dominance: Vec<DominanceReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    tightness: Vec<DominanceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    montecarlo: Option<MonteCarloReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
}

/// Sorts a library result into pass, recorded failure, or hard input error.
fn record_check<T>(
    result: Result<T, AccountingError>,
    context: impl FnOnce() -> String,
    failures: &mut Vec<String>,
) -> Result<Option<T>, CliError> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e) => match CliError::from(e) {
            CliError::Verification { name, message } => {
                failures.push(format!("{}: {name}: {message}", context()));
                Ok(None)
            }
            input => Err(input),
        },
    }
}

pub fn verify(args: VerifyArgs) -> Result<(), CliError> {
    let merged = oracle_defaults(args.params.merge()?);
    let base = merged.params(None, None)?;
    let alphas = parse_alpha_grid(&args.alphas)?;
    let m = base.steps_per_epoch();
    let positions = {
        let mut p = vec![0, m / 2, m - 1];
        p.dedup();
        p
    };
    let mut rec = VerifyRecord {
        suite: format!("{:?}", args.suite).to_lowercase(),
        generated_at: timestamp(args.timestamp),
        ..Default::default()
    };
    let wants = |s: Suite| args.suite == s || args.suite == Suite::All;

    if wants(Suite::Dominance) {
        for &k in &args.epochs_grid {
            for &j0 in &positions {
                let inst = QuadraticInstance::extremal(&base.with_epochs(k), j0)?;
                for &alpha in &alphas {
                    for kind in [OracleBound::FixedBatch, OracleBound::Shuffle] {
                        rec.checks += 1;
                        let report = record_check(
                            verify_dominance(&inst, alpha, kind),
                            || format!("dominance K={k} j0={j0} alpha={alpha} {kind:?}"),
                            &mut rec.failures,
                        )?;
                        if let Some(r) = report {
                            let tighter = rec.tightest_dominance.is_none_or(|t| r.slack < t.slack);
                            if tighter {
                                rec.tightest_dominance = Some(r);
                            }
                            if args.all_reports {
                                rec.dominance.push(r);
                            }
                        }
                    }
                }
            }
        }
    }

    if wants(Suite::Tightness) {
        let inst = QuadraticInstance::extremal(&base.with_epochs(1), 0)?;
        for &alpha in &alphas {
            rec.checks += 1;
            let exact = exact_renyi(&inst, alpha)?;
            let r = record_check(
                verify_dominance(&inst, alpha, OracleBound::FixedBatch),
                || format!("tightness alpha={alpha}"),
                &mut rec.failures,
            )?;
            if let Some(r) = r {
                if r.slack.abs() > 1e-9 * r.bound {
                    rec.failures.push(format!(
                        "tightness alpha={alpha}: exact {exact} vs bound {} (slack {})",
                        r.bound, r.slack
                    ));
                }
                rec.tightness.push(r);
            }
        }
    }

    if wants(Suite::Montecarlo) {
        rec.checks += 1;
        let inst = QuadraticInstance::extremal(&base, 0)?;
        rec.montecarlo = record_check(
            monte_carlo_check(&inst, args.samples, args.seed),
            || format!("montecarlo seed={}", args.seed),
            &mut rec.failures,
        )?;
    }

    rec.passed = rec.failures.is_empty();
    print_json(&rec)?;
    if rec.passed {
        Ok(())
    } else {
        Err(CliError::Verification {
            name: "VerificationFailed".into(),
            message: format!("{} of {} checks failed", rec.failures.len(), rec.checks),
        })
    }
}
