//! Fixed-point rendering of exact rationals (round half up).

use num::bigint::BigInt;
use num::{BigRational, Signed, ToPrimitive, Zero};

/// Renders `num / den` with `places` decimals, rounding half up.
///
/// `den == 0` renders as `"n/a"`.
pub fn ratio_u128(num: u128, den: u128, places: u32) -> String {
    if den == 0 {
        return "n/a".to_string();
    }
    let scale = 10u128.pow(places);
    let scaled = (num * scale * 2 + den) / (den * 2);
    with_point(scaled.to_string(), places)
}

/// Renders a (possibly negative) big rational with `places` decimals, rounding
/// half away from zero.
pub fn big(value: &BigRational, places: u32) -> String {
    let neg = value.is_negative();
    let abs = value.abs();
    let scale = BigInt::from(10u32).pow(places);
    let scaled = abs * BigRational::from_integer(scale);
    let rounded = (scaled + BigRational::new(1.into(), 2.into())).floor().to_integer();
    let body = with_point(rounded.to_string(), places);
    if neg && !rounded.is_zero() {
        format!("-{body}")
    } else {
        body
    }
}

/// A value in `[0, 1]` rendered as a percentage with one decimal (`0.798` -> `"79.8"`).
pub fn percent(value: &BigRational) -> String {
    big(&(value * BigRational::from_integer(100.into())), 1)
}

pub fn to_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

fn with_point(digits: String, places: u32) -> String {
    if places == 0 {
        return digits;
    }
    let places = places as usize;
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int, frac) = padded.split_at(padded.len() - places);
    format!("{int}.{frac}")
}
