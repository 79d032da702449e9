//! Text formats shared by the CLI and the CSV writers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Format like C's `printf("%.17g", v)`.
pub fn fmt_g17(v: f64) -> String {
    const PRECISION: i32 = 17;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parse `a`, `bi`, `a+bi` or `a-bi` (also `i`, `-i`, `a+i`).
pub fn parse_complex(text: &str) -> Result<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::InvalidParameter(format!("cannot parse complex number {text:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix('i') else {
        return s
            .parse::<f64>()
            .map(|re| Complex64::new(re, 0.0))
            .map_err(|_| bad());
    };
    // split at the last sign that is not the leading sign or an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re_text, im_text) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im_text {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => t.parse::<f64>().map_err(|_| bad())?,
    };
    let re = re_text.parse::<f64>().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}

/// Shortest round-trip rendering in the `a+bi` syntax accepted by
/// [`parse_complex`]; purely real values print without an imaginary part.
pub fn fmt_complex(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.im < 0.0 {
        format!("{}-{}i", c.re, -c.im)
    } else {
        format!("{}+{}i", c.re, c.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g17_matches_printf() {
        // Expected strings produced by Python's '%.17g' operator.
        let cases = [
            (0.1, "0.10000000000000001"),
            (-3.5, "-3.5"),
            (1.0, "1"),
            (1e-5, "1.0000000000000001e-05"),
            (123456789012345678.0, "1.2345678901234568e+17"),
            (0.054871772852192469, "0.054871772852192469"),
            (1e22, "1e+22"),
            (0.0001, "0.0001"),
            (2.5e-300, "2.5e-300"),
            (12345678901234567.0, "12345678901234568"),
        ];
        for (v, s) in cases {
            assert_eq!(fmt_g17(v), s, "value {v:e}");
        }
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(f64::NAN), "nan");
    }

    #[test]
    fn complex_literals() {
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(parse_complex("1.5").unwrap(), c(1.5, 0.0));
        assert_eq!(parse_complex("0.3+0.4i").unwrap(), c(0.3, 0.4));
        assert_eq!(parse_complex("0.3-0.4i").unwrap(), c(0.3, -0.4));
        assert_eq!(parse_complex("-0.3-0.4i").unwrap(), c(-0.3, -0.4));
        assert_eq!(parse_complex("0.4i").unwrap(), c(0.0, 0.4));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("2+i").unwrap(), c(2.0, 1.0));
        assert_eq!(parse_complex("1e-3+2e-1i").unwrap(), c(1e-3, 0.2));
        assert_eq!(parse_complex("-1e-3-2e+1i").unwrap(), c(-1e-3, -20.0));
        for bad in ["", "i+", "abc", "1+2", "1++2i"] {
            assert!(parse_complex(bad).is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn g17_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            prop_assert_eq!(fmt_g17(v).parse::<f64>().unwrap(), v);
        }

        #[test]
        fn complex_round_trips(re in -1e6f64..1e6, im in -1e6f64..1e6) {
            let c = Complex64::new(re, im);
            prop_assert_eq!(parse_complex(&fmt_complex(c)).unwrap(), c);
        }
    }
}
