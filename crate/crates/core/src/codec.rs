//! Small helpers shared by the strict text formats.

/// Decimal with no sign and no leading zeros (except "0" itself).
pub(crate) fn parse_canonical_u64(s: &str) -> Result<u64, String> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
        return Err(format!("non-canonical integer {s:?}"));
    }
    s.parse::<u64>().map_err(|e| format!("integer {s:?}: {e}"))
}

/// Splits `key=value` and checks the key.
pub(crate) fn expect_field<'a>(part: Option<&'a str>, key: &str) -> Result<&'a str, String> {
    let part = part.ok_or_else(|| format!("missing field {key}"))?;
    part.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| format!("expected {key}=..., found {part:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_integers() {
        assert_eq!(parse_canonical_u64("0"), Ok(0));
        assert_eq!(parse_canonical_u64("120"), Ok(120));
        assert!(parse_canonical_u64("012").is_err());
        assert!(parse_canonical_u64("+1").is_err());
        assert!(parse_canonical_u64("").is_err());
        assert!(parse_canonical_u64("99999999999999999999").is_err());
    }

    #[test]
    fn fields() {
        assert_eq!(expect_field(Some("height=3"), "height"), Ok("3"));
        assert!(expect_field(Some("heights=3"), "height").is_err());
        assert!(expect_field(None, "height").is_err());
    }
}
