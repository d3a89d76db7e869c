//! Number rendering for CSV output: six significant digits, `%g` style.

/// Formats `v` with six significant digits, switching to exponent notation
/// outside `[1e-4, 1e6)`, trailing zeros removed. Infinities render as
/// `inf` / `-inf`, NaN as `nan`.
pub fn sig6(v: f64) -> String {
    sig(v, 6)
}

pub fn sig(v: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Rounded mantissa and exponent come from the exponent formatter so the
    // fixed-point branch cannot round differently.
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (20.172, "20.172"),
            (20.17167411, "20.1717"),
            (0.5, "0.5"),
            (1.0, "1"),
            (8.0, "8"),
            (123456.4, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001234567, "0.000123457"),
            (0.00001234567, "1.23457e-05"),
            (-2.5, "-2.5"),
            (999999.5, "1e+06"),
            (0.0, "0"),
            (f64::INFINITY, "inf"),
        ];
        for (v, s) in cases {
            assert_eq!(sig6(v), s, "{v}");
        }
    }
}
