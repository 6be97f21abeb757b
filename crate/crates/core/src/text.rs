//! Shared text helpers: the lexical tokenizer used by retrieval and the
//! detector, and the value normalization used for scoring and agreement.

/// Lowercases and splits on every non-alphanumeric character.
///
/// Digit-bearing tokens are kept as-is, so `Zn(NO3)2·6H2O` becomes
/// `["zn", "no3", "2", "6h2o"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Case-folds and collapses internal whitespace runs to one space.
pub fn normalize_value(value: &str) -> String {
    value
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Collapses whitespace without changing case.
pub fn collapse_whitespace(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_keeps_formula_fragments() {
        assert_eq!(
            tokenize("Zn(NO3)2·6H2O in DMF,  120 °C"),
            vec!["zn", "no3", "2", "6h2o", "in", "dmf", "120", "c"]
        );
        assert!(tokenize("  ,;  ").is_empty());
    }

    #[test]
    fn normalization_folds_case_and_space() {
        assert_eq!(normalize_value("  Zinc\tNitrate \n"), "zinc nitrate");
        assert_eq!(collapse_whitespace(" A  b "), "A b");
    }
}
