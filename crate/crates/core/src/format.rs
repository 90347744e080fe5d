//! Text output helpers: C-style `%.17g` number formatting and a minimal CSV writer.

use std::io::{self, Write};

/// Formats `v` like C's `printf("%.17g", v)`: 17 significant digits, trailing
/// zeros stripped, exponent form when the decimal exponent is `< -4` or `>= 17`.
pub fn fmt_g17(v: f64) -> String {
    fmt_g(v, 17)
}

/// C-style `%.{precision}g`.
pub fn fmt_g(v: f64, precision: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let p = precision.max(1);
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // exponent after rounding to p significant digits
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let x: i32 = exp.parse().expect("integer exponent");
    if x >= -4 && x < p as i32 {
        let decimals = (p as i32 - 1 - x) as usize;
        strip_zeros(&format!("{:.*}", decimals, v)).to_string()
    } else {
        let m = strip_zeros(mantissa);
        let sign = if x < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", x.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes a header line followed by rows of `%.17g` numbers, comma separated.
pub fn write_csv<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
