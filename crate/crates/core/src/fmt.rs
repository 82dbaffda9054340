// SPDX-License-Identifier: MIT OR Apache-2.0

//! Decimal rendering used at report boundaries.
//!
//! Internally scores stay as exact rationals or `f64`; they are rounded only
//! when written out.

use num_rational::Ratio;

/// Renders `value` with `places` decimals, rounding half away from zero.
///
/// Rounding operates on the shortest round-trip decimal form of `value`, so
/// `0.29165` rounds to `0.2917` even though its binary value sits just below
/// the midpoint.
pub fn round_half_up(value: f64, places: usize) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    let negative = value.is_sign_negative() && value != 0.0;
    let repr = format!("{}", value.abs());
    let (int_part, frac_part) = match repr.split_once('.') {
        Some((i, f)) => (i.to_string(), f.to_string()),
        None => (repr.clone(), String::new()),
    };
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let int_len = digits.len();
    let mut frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    let round_up = frac.len() > places && frac[places] >= 5;
    frac.resize(places, 0);
    digits.extend_from_slice(&frac);
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let mut out = String::with_capacity(digits.len() + 2);
    let all_zero = digits.iter().all(|&d| d == 0);
    if negative && !all_zero {
        out.push('-');
    }
    for d in &digits[..split] {
        out.push((b'0' + d) as char);
    }
    debug_assert!(split >= int_len);
    if places > 0 {
        out.push('.');
        for d in &digits[split..] {
            out.push((b'0' + d) as char);
        }
    }
    out
}

/// Renders a non-negative rational with `places` decimals, half-up, exactly.
pub fn ratio_half_up(value: Ratio<u32>, places: usize) -> String {
    let scale = 10u128.pow(places as u32);
    let numer = u128::from(*value.numer());
    let denom = u128::from(*value.denom());
    let scaled = (2 * numer * scale + denom) / (2 * denom);
    let int = scaled / scale;
    let frac = scaled % scale;
    if places == 0 {
        int.to_string()
    } else {
        format!("{int}.{frac:0places$}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up_on_shortest_repr() {
        assert_eq!(round_half_up(0.29165, 4), "0.2917");
        assert_eq!(round_half_up(0.58333333, 4), "0.5833");
        assert_eq!(round_half_up(2.0 / 3.0, 4), "0.6667");
        assert_eq!(round_half_up(0.99995, 4), "1.0000");
        assert_eq!(round_half_up(1.0, 4), "1.0000");
        assert_eq!(round_half_up(0.0, 4), "0.0000");
        assert_eq!(round_half_up(-0.20273, 3), "-0.203");
        assert_eq!(round_half_up(-0.00001, 3), "0.000");
        assert_eq!(round_half_up(12.5, 0), "13");
    }

    #[test]
    fn ratio_rendering() {
        assert_eq!(ratio_half_up(Ratio::new(2, 9), 3), "0.222");
        assert_eq!(ratio_half_up(Ratio::new(7, 9), 3), "0.778");
        assert_eq!(ratio_half_up(Ratio::new(1, 8), 2), "0.13");
        assert_eq!(ratio_half_up(Ratio::new(1, 1), 3), "1.000");
        assert_eq!(ratio_half_up(Ratio::new(0, 1), 3), "0.000");
    }
}
