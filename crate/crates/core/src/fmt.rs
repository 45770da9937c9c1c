//! `%.9g`-style float rendering used in every emitted log and file.

use alloc::format;
use alloc::string::{String, ToString};

/// Render `x` with 9 significant digits, trailing zeros trimmed, switching
/// to exponent form outside `[1e-5, 1e9)`.
pub fn g9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{}e{}{:02}", m, sign, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
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
    use super::g9;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(g9(0.1), "0.1");
        assert_eq!(g9(0.4625), "0.4625");
        assert_eq!(g9(1.0 / 3.0), "0.333333333");
        assert_eq!(g9(2.0), "2");
        assert_eq!(g9(-0.316060279414), "-0.316060279");
        assert_eq!(g9(123456789.4), "123456789");
        assert_eq!(g9(1.5e-7), "1.5e-07");
        assert_eq!(g9(2.5e12), "2.5e+12");
        assert_eq!(g9(0.0), "0");
        assert_eq!(g9(59.9), "59.9");
    }

    #[test]
    fn reparses_within_nine_digits() {
        for x in [0.462512345678, 1.925, 3.14159265358979, 1e-4 * 7.0] {
            let back: f64 = g9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9);
        }
    }
}
