//! CSV emission.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::experiment::SimulationResult;

pub const HEADER: [&str; 9] = [
    "application",
    "policy",
    "T",
    "replications",
    "mean_rel_regret_pct",
    "std_rel_regret_pct",
    "mean_switches",
    "mean_waiting_periods",
    "wall_clock_s",
];

pub const CURVE_HEADER: [&str; 3] = ["t", "mean_rel_regret_pct", "std_rel_regret_pct"];

/// Six significant digits, `%g` style: fixed notation for exponents in
/// `[-5, 6)`, scientific otherwise, trailing zeros dropped.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn emit_csv(result: &SimulationResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in &result.rows {
        w.write_record([
            result.application.clone(),
            r.policy.clone(),
            r.horizon.to_string(),
            r.replications.to_string(),
            sig6(r.mean_rel_regret_pct),
            sig6(r.std_rel_regret_pct),
            sig6(r.mean_switches),
            sig6(r.mean_waiting_periods),
            sig6(r.wall_clock_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Path of the curve file for `(policy, T)` next to `out`.
pub fn curve_path(out: &Path, policy: &str, horizon: u64) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let safe: String = policy
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    out.with_file_name(format!("{stem}.{safe}.T{horizon}.curve.csv"))
}

/// Writes one curve file per `(policy, T)` that carries a curve; returns
/// the paths written.
pub fn emit_curves(result: &SimulationResult, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for r in &result.rows {
        let Some(curve) = &r.curve else { continue };
        let path = curve_path(out, &r.policy, r.horizon);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(CURVE_HEADER)?;
        for (t, (mean, std)) in curve.iter().enumerate() {
            w.write_record([(t + 1).to_string(), sig6(*mean), sig6(*std)])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(10.0), "10");
        assert_eq!(sig6(1.23456789), "1.23457");
        assert_eq!(sig6(-2.5), "-2.5");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e+06");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(0.0000012345), "1.2345e-06");
        assert_eq!(sig6(9.9999996), "10");
        assert_eq!(sig6(999999.6), "1e+06");
        assert_eq!(sig6(f64::NAN), "NaN");
    }

    #[test]
    fn curve_names_are_sanitized() {
        let p = curve_path(Path::new("/tmp/out/res.csv"), "SGD 0.5/x", 100);
        assert_eq!(p, Path::new("/tmp/out/res.SGD_0.5_x.T100.curve.csv"));
    }
}
