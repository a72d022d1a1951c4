//! SPICE magnitude-suffix parsing and value formatting.
//!
//! Suffixes follow SPICE convention: `meg` = 1e6, `m` = 1e-3, case-insensitive.
//! Trailing unit letters after the multiplier (`10kOhm`, `5pF`) are ignored,
//! matching how simulators treat element values.

/// Parses a SPICE value token such as `10k`, `4.7meg`, `2.2uF`, `1e-9`.
pub fn parse_spice_value(token: &str) -> Option<f64> {
    let t = token.trim();
    if t.is_empty() {
        return None;
    }
    // Split into the leading numeric part and the trailing alphabetic part.
    let mut split = t.len();
    for (i, ch) in t.char_indices() {
        if ch.is_ascii_digit() || ch == '.' || ch == '+' || ch == '-' {
            continue;
        }
        if (ch == 'e' || ch == 'E') && i > 0 {
            // Scientific notation only if followed by a digit or sign.
            let rest = &t[i + 1..];
            let ok = rest
                .chars()
                .next()
                .map(|c| c.is_ascii_digit() || c == '+' || c == '-')
                .unwrap_or(false);
            if ok {
                continue;
            }
        }
        split = i;
        break;
    }
    let (num, suffix) = t.split_at(split);
    let base: f64 = num.parse().ok()?;
    let s = suffix.to_ascii_lowercase();
    let exp10: i32 = if s.is_empty() {
        0
    } else if s.starts_with("meg") {
        6
    } else if s.starts_with("mil") {
        return Some(base * 25.4e-6);
    } else {
        match s.as_bytes()[0] {
            b'f' => -15,
            b'p' => -12,
            b'n' => -9,
            b'u' => -6,
            b'm' => -3,
            b'k' => 3,
            b'g' => 9,
            b't' => 12,
            // Unit letters with no multiplier, e.g. `5V`, `3A`, `2Ohm`.
            b'v' | b'a' | b'h' | b's' | b'o' | b'c' => 0,
            _ => return None,
        }
    };
    if exp10 == 0 {
        return Some(base);
    }
    // Splice the exponent into the decimal string so `5u` parses to exactly
    // the same f64 as `5e-6`.
    if num.contains(['e', 'E']) {
        return Some(base * 10f64.powi(exp10));
    }
    format!("{num}e{exp10}").parse().ok()
}

/// Formats a value so it parses back to the identical f64.
pub fn format_spice_value(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes_match_scientific_spelling() {
        let cases = [
            ("10k", 1e4),
            ("10K", 1e4),
            ("4.7meg", 4.7e6),
            ("4.7MEG", 4.7e6),
            ("100u", 1e-4),
            ("10n", 1e-8),
            ("2p", 2e-12),
            ("1f", 1e-15),
            ("3m", 3e-3),
            ("2g", 2e9),
            ("1t", 1e12),
            ("5", 5.0),
            ("1e-9", 1e-9),
            ("1.5E6", 1.5e6),
            ("-2.5", -2.5),
        ];
        for (tok, want) in cases {
            let got = parse_spice_value(tok).unwrap();
            assert!(
                (got - want).abs() <= want.abs() * 1e-12,
                "{tok}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn trailing_unit_letters_ignored() {
        assert_eq!(parse_spice_value("10kOhm").unwrap(), 1e4);
        assert_eq!(parse_spice_value("2.2uF").unwrap(), 2.2e-6);
        assert_eq!(parse_spice_value("5V").unwrap(), 5.0);
        assert_eq!(parse_spice_value("100pF").unwrap(), 100e-12);
    }

    #[test]
    fn garbage_rejected() {
        assert_eq!(parse_spice_value("abc"), None);
        assert_eq!(parse_spice_value(""), None);
        assert_eq!(parse_spice_value("k10"), None);
    }

    #[test]
    fn format_roundtrips_exactly() {
        for v in [1e-15, 0.045e-6, 22.5e-6, 1.0 / 3.0, 6.02e23, -2.5e-3] {
            assert_eq!(parse_spice_value(&format_spice_value(v)).unwrap(), v);
        }
    }
}
