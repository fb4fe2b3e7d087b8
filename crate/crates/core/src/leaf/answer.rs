//! Strict binary-answer parsing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Language;

/// The model's reply did not normalize to a lexicon token.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("ambiguous answer: {raw:?}")]
pub struct AmbiguousAnswer {
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerLexicon {
    affirmative: BTreeSet<String>,
    negative: BTreeSet<String>,
}

impl AnswerLexicon {
    /// Builds a lexicon; the two token sets must be disjoint.
    pub fn new<A, N>(affirmative: A, negative: N) -> Result<Self, String>
    where
        A: IntoIterator,
        A::Item: Into<String>,
        N: IntoIterator,
        N::Item: Into<String>,
    {
        let affirmative: BTreeSet<String> = affirmative.into_iter().map(Into::into).collect();
        let negative: BTreeSet<String> = negative.into_iter().map(Into::into).collect();
        if let Some(t) = affirmative.intersection(&negative).next() {
            return Err(format!("token '{t}' is both affirmative and negative"));
        }
        Ok(AnswerLexicon {
            affirmative,
            negative,
        })
    }

    pub fn for_language(lang: Language) -> Self {
        match lang {
            Language::De => Self::new(["ja", "j", "yes", "y"], ["nein", "n", "no"]),
            Language::En => Self::new(["yes", "y"], ["no", "n"]),
        }
        .expect("built-in lexicons are disjoint")
    }

    pub fn lookup(&self, token: &str) -> Option<bool> {
        if self.affirmative.contains(token) {
            Some(true)
        } else if self.negative.contains(token) {
            Some(false)
        } else {
            None
        }
    }
}

/// Final non-empty line, trimmed, lowercased, terminal punctuation removed.
pub fn normalize_answer(text: &str) -> String {
    let line = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .last()
        .unwrap_or("");
    line.to_lowercase()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c == '…')
        .trim()
        .to_owned()
}

pub fn parse_binary_answer(text: &str, lexicon: &AnswerLexicon) -> Result<bool, AmbiguousAnswer> {
    lexicon
        .lookup(&normalize_answer(text))
        .ok_or_else(|| AmbiguousAnswer {
            raw: text.to_owned(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn de() -> AnswerLexicon {
        AnswerLexicon::for_language(Language::De)
    }

    #[test]
    fn examples() {
        assert_eq!(parse_binary_answer("Ja.", &de()), Ok(true));
        assert_eq!(parse_binary_answer("nein", &de()), Ok(false));
        assert!(parse_binary_answer("Das kommt darauf an", &de()).is_err());
    }

    #[test]
    fn final_line_wins() {
        let text = "Der Beitrag richtet sich gegen eine Gruppe.\n\n  Nein!  \n\n";
        assert_eq!(parse_binary_answer(text, &de()), Ok(false));
        assert!(parse_binary_answer("Ja\nvielleicht", &de()).is_err());
    }

    #[test]
    fn english_lexicon_rejects_german() {
        let en = AnswerLexicon::for_language(Language::En);
        assert_eq!(parse_binary_answer("YES", &en), Ok(true));
        assert!(parse_binary_answer("ja", &en).is_err());
    }

    #[test]
    fn overlapping_lexicon_rejected() {
        assert!(AnswerLexicon::new(["y"], ["y", "n"]).is_err());
    }

    #[test]
    fn empty_is_ambiguous() {
        let err = parse_binary_answer("  \n", &de()).unwrap_err();
        assert_eq!(err.raw, "  \n");
    }

    proptest! {
        #[test]
        fn only_lexicon_tokens_map_to_values(s in "\\PC{0,24}") {
            let lex = de();
            match parse_binary_answer(&s, &lex) {
                Ok(v) => prop_assert_eq!(lex.lookup(&normalize_answer(&s)), Some(v)),
                Err(e) => prop_assert_eq!(e.raw, s),
            }
        }

        #[test]
        fn decorated_tokens_still_parse(
            tok in prop::sample::select(vec!["ja", "Ja", "JA", "nein", "Nein", "n", "y"]),
            punct in "[.!?]{0,3}",
            prefix in "[a-z ]{0,20}\n",
        ) {
            let text = format!("{prefix}  {tok}{punct}  ");
            let expected = matches!(tok.to_lowercase().as_str(), "ja" | "y");
            prop_assert_eq!(parse_binary_answer(&text, &de()), Ok(expected));
        }
    }
}
