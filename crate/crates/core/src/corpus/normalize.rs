/// Canonical form used for grouping, hashing and comparing responses.
///
/// Whitespace of any kind becomes a single ASCII space, other control
/// characters are dropped, the text is case-folded with Unicode default case
/// folding, and leading/trailing space is trimmed. The function is total and
/// idempotent.
pub fn normalize_text(raw: &str) -> String {
    let mut cleaned = String::with_capacity(raw.len());
    for ch in raw.chars() {
        if ch.is_whitespace() {
            cleaned.push(' ');
        } else if !ch.is_control() {
            cleaned.push(ch);
        }
    }
    let folded = caseless::default_case_fold_str(&cleaned);

    let mut out = String::with_capacity(folded.len());
    for word in folded.split(' ').filter(|w| !w.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collapses_and_trims_whitespace() {
        assert_eq!(normalize_text("  Hello   World "), "hello world");
        assert_eq!(normalize_text("a\t\nb"), "a b");
        assert_eq!(normalize_text("\u{3000}wide\u{a0}space"), "wide space");
    }

    #[test]
    fn empty_stays_empty() {
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("   \t "), "");
    }

    #[test]
    fn punctuation_preserved_case_folded() {
        assert_eq!(normalize_text("Var[X]=35/12"), "var[x]=35/12");
    }

    #[test]
    fn control_characters_removed() {
        assert_eq!(normalize_text("lo\u{7}op\u{0}"), "loop");
    }

    #[test]
    fn full_case_folding() {
        assert_eq!(normalize_text("STRASSE"), normalize_text("straße"));
    }

    proptest! {
        #[test]
        fn idempotent(s in any::<String>()) {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn idempotent_on_mixed_scripts(s in "[ \\t\\nA-Za-zÀ-ɏͰ-ϿЀ-ӿ\u{1E00}-\u{1EFF}ß\u{130}\u{FB00}-\u{FB06}\u{0}-\u{1f}]{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
            prop_assert!(!once.contains("  "));
            prop_assert!(!once.chars().any(char::is_control));
        }
    }
}
