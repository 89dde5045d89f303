use std::io::Write;

use privdyn_core::RdpCurve;
use serde::Serialize;

use crate::CliError;

/// Decimal rendering with 17 significant digits, switching to exponent
/// notation outside `[1e-5, 1e17)`.
pub fn sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..17).contains(&exponent) {
        let decimals = (16 - exponent).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_csv(out: &mut impl Write, curve: &RdpCurve) -> std::io::Result<()> {
    writeln!(out, "k,eps")?;
    for &(k, eps) in curve.points() {
        writeln!(out, "{k},{}", sig17(eps))?;
    }
    Ok(())
}

pub fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::input("SerializationFailed", e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").or_else(quiet_pipe)
}

/// Maps an output error to [`CliError`], treating a closed pipe as success.
pub fn quiet_pipe(e: std::io::Error) -> Result<(), CliError> {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        Ok(())
    } else {
        Err(CliError::input("OutputFailed", e.to_string()))
    }
}

/// Seconds since the Unix epoch, only when `--timestamp` is set.
pub fn timestamp(enabled: bool) -> Option<u64> {
    enabled.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    })
}
