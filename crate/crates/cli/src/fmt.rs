/// Formats like C's `%.6g`: six significant digits, trailing zeros removed.
pub fn g6(x: f64) -> String {
    const P: i32 = 6;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // Round first so the exponent reflects the rounded value.
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= P {
        let m = trim(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::g6;

    #[test]
    fn matches_printf_g() {
        assert_eq!(g6(4.0), "4");
        assert_eq!(g6(0.606_530_659_7), "0.606531");
        assert_eq!(g6(100.0), "100");
        assert_eq!(g6(1234567.0), "1.23457e+06");
        assert_eq!(g6(0.000_012_345_67), "1.23457e-05");
        assert_eq!(g6(-2.5), "-2.5");
        assert_eq!(g6(999_999.5), "1e+06");
        assert_eq!(g6(0.0001), "0.0001");
    }
}
