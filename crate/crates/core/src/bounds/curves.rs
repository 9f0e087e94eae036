use std::io::Write;

use super::rates::{rate, RatePoint, RateSource};
use crate::error::{invalid, Error, Result};

/// Evenly spaced interior grid `i / (n + 1)` for `i = 1..=n`.
pub fn theta_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

/// One row per `(theta, source)`, theta-major.
pub fn emit_curves(rho: f64, theta_grid: &[f64], sources: &[RateSource]) -> Result<Vec<RatePoint>> {
    let mut rows = Vec::with_capacity(theta_grid.len() * sources.len());
    for &theta in theta_grid {
        for &src in sources {
            rows.push(rate(src, theta, rho)?);
        }
    }
    Ok(rows)
}

/// `%.12g` formatting.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_curves_csv<W: Write>(out: W, rows: &[RatePoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
    w.write_record(["theta", "rho", "source", "rate"]).map_err(io)?;
    for r in rows {
        w.write_record([
            format_sig12(r.theta),
            format_sig12(r.rho),
            r.source.name().to_string(),
            format_sig12(r.rate),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| invalid(format!("csv flush failed: {e}")))
}

pub fn curves_csv_string(rows: &[RatePoint]) -> Result<String> {
    let mut buf = Vec::new();
    write_curves_csv(&mut buf, rows)?;
    String::from_utf8(buf).map_err(|e| invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12() {
        assert_eq!(format_sig12(0.5), "0.5");
        assert_eq!(format_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig12(2.0 / 3.0 * 10.0), "6.66666666667");
        assert_eq!(format_sig12(1e-4), "0.0001");
        assert_eq!(format_sig12(1.5e-5), "1.5e-05");
        assert_eq!(format_sig12(123456789012345.0), "1.23456789012e+14");
        assert_eq!(format_sig12(0.01), "0.01");
        assert_eq!(format_sig12(9.9999999999999e-1), "1");
    }

    #[test]
    fn empty_grid() {
        assert!(emit_curves(0.11, &[], &RateSource::ALL).unwrap().is_empty());
        let csv = curves_csv_string(&[]).unwrap();
        assert_eq!(csv, "theta,rho,source,rate\n");
    }

    #[test]
    fn converse_below_refined() {
        let rows = emit_curves(
            0.11,
            &theta_grid(19),
            &[RateSource::ConverseSym, RateSource::AchRefined],
        )
        .unwrap();
        for pair in rows.chunks(2) {
            assert!(pair[0].rate <= pair[1].rate + 1e-9);
        }
    }
}
