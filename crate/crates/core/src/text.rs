//! Text folding and tokenization shared by the prep, cohort and reconciliation code.

use unicode_normalization::UnicodeNormalization;

/// Lowercases and strips combining diacritics ("Comunicação" -> "comunicacao").
pub fn fold(text: &str) -> String {
    text.nfd()
        .filter(|c| !unicode_normalization::char::is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Splits folded text into word tokens: maximal runs of alphanumerics and `_`.
pub fn tokens(text: &str) -> Vec<String> {
    fold(text)
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// True for tokens that look like equipment error codes: letters followed by digits
/// (`fm300`, `fm1209`) or bare numbers.
pub fn is_code_token(token: &str) -> bool {
    let has_digit = token.chars().any(|c| c.is_ascii_digit());
    if !has_digit {
        return false;
    }
    let letters = token.chars().take_while(|c| c.is_alphabetic()).count();
    let rest = &token[token.char_indices().nth(letters).map_or(token.len(), |(i, _)| i)..];
    letters <= 4 && rest.chars().all(|c| c.is_ascii_digit() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_strips_case_and_accents() {
        assert_eq!(fold("Falha de Comunicação"), "falha de comunicacao");
        assert_eq!(fold("CONVERSOR"), "conversor");
    }

    #[test]
    fn tokens_keep_underscored_codes() {
        assert_eq!(
            tokens("[FM:Q8_BREAKER] Disjuntor não fecha!"),
            vec!["fm", "q8_breaker", "disjuntor", "nao", "fecha"]
        );
    }

    #[test]
    fn code_tokens() {
        assert!(is_code_token("fm300"));
        assert!(is_code_token("1209"));
        assert!(!is_code_token("breaker"));
        assert!(!is_code_token("q8_breaker"));
    }
}
