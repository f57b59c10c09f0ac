//! Number rendering shared by the text formats.

use std::fmt::Write;

/// Renders `v` like C's `%.17g`, which round-trips every finite `f64`.
pub fn g17(v: f64) -> String {
    let mut s = String::new();
    push_g17(&mut s, v);
    s
}

pub fn push_g17(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("nan");
        return;
    }
    if v.is_infinite() {
        out.push_str(if v > 0.0 { "inf" } else { "-inf" });
        return;
    }
    if v == 0.0 {
        out.push_str(if v.is_sign_negative() { "-0" } else { "0" });
        return;
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if (-4..17).contains(&exp) {
        let start = out.len();
        let _ = write!(out, "{:.*}", (16 - exp) as usize, v);
        strip_fraction_zeros(out, start);
    } else {
        let start = out.len();
        out.push_str(mantissa);
        strip_fraction_zeros(out, start);
        let _ = write!(out, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
}

fn strip_fraction_zeros(s: &mut String, start: usize) {
    if s[start..].contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}

pub fn parse_f64(field: &str) -> Option<f64> {
    field.trim().parse().ok()
}
