//! Number formatting for CSV output: 15 significant digits, shortest form.

/// Formats like C's `%.15g`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.14e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{}e{}{:02}", m, if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(14.0606), "14.0606");
        assert_eq!(fmt_num(-28.164), "-28.164");
        assert_eq!(fmt_num(0.00047), "0.00047");
        assert_eq!(fmt_num(1e-7), "1e-07");
        assert_eq!(fmt_num(1.5e20), "1.5e+20");
        assert_eq!(fmt_num(100.0), "100");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333333");
        assert_eq!(fmt_num(123456789012345.0), "123456789012345");
    }

    proptest! {
        #[test]
        fn round_trip_at_15_digits(x in proptest::num::f64::NORMAL) {
            let back: f64 = fmt_num(x).parse().unwrap();
            prop_assert!(((back - x) / x).abs() <= 5e-15);
            // Formatting the parsed value again is a fixed point.
            prop_assert_eq!(fmt_num(back), fmt_num(x));
        }
    }
}
