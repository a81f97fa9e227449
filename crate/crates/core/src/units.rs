//! Engineering-notation values (`2.5f`, `100p`, `1meg`) and their inverse.

/// Parses a number with an optional SPICE engineering suffix.
///
/// Accepted suffixes (case-insensitive): `f p n u m k meg`. Anything else
/// trailing the number is rejected rather than ignored.
pub fn parse_value(text: &str) -> Result<f64, String> {
    let lower = text.trim().to_ascii_lowercase();
    if lower.is_empty() {
        return Err("empty value".into());
    }
    let (number, exp) = if let Some(n) = lower.strip_suffix("meg") {
        (n, 6)
    } else {
        match lower.chars().last() {
            Some('f') => (&lower[..lower.len() - 1], -15),
            Some('p') => (&lower[..lower.len() - 1], -12),
            Some('n') => (&lower[..lower.len() - 1], -9),
            Some('u') => (&lower[..lower.len() - 1], -6),
            Some('m') => (&lower[..lower.len() - 1], -3),
            Some('k') => (&lower[..lower.len() - 1], 3),
            _ => (lower.as_str(), 0),
        }
    };
    // f64::from_str also takes "inf", "nan" and "infinity"
    if !number
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | '+' | '-'))
    {
        return Err(format!("malformed number `{text}`"));
    }
    let malformed = || format!("malformed number `{text}`");
    // folding the suffix into the exponent keeps "2.5f" == 2.5e-15 exactly
    let scaled: f64 = if exp == 0 {
        number.parse().map_err(|_| malformed())?
    } else if number.contains('e') {
        number.parse::<f64>().map_err(|_| malformed())? * 10f64.powi(exp)
    } else {
        format!("{number}e{exp}").parse().map_err(|_| malformed())?
    };
    if !scaled.is_finite() {
        return Err(format!("value `{text}` is not finite"));
    }
    Ok(scaled)
}

/// Formats a value so that [`parse_value`] recovers it bit-for-bit.
pub fn format_value(value: f64) -> String {
    let a = value.abs();
    if a == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{value}")
    } else {
        format!("{value:e}")
    }
}
