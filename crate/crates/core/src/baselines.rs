//! Prompt-only comparison methods: a one-line instruction prompt
//! (zero-context) and a statute-pack prompt with free reasoning
//! (long-context). Neither consults a rulemap.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::leaf::{normalize_answer, AmbiguousAnswer, CaseRecord};
use crate::llm::{cache_key, ChatClient, ChatRequest, ClientError, DecodingConfig};

/// The zero-context system prompt, byte for byte.
pub const ZERO_CONTEXT_SYSTEM: &str = include_str!("../assets/zero_context_system.txt");

/// sha256 of [`ZERO_CONTEXT_SYSTEM`].
pub const ZERO_CONTEXT_SYSTEM_SHA256: &str =
    "6db84247dfd48457c0149ccc55262099308f74bda7f933721caa9ab42980361a";

/// Marker the long-context prompt asks for on the last line.
pub const FINAL_MARKER: &str = "ANTWORT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    ZeroContext,
    LongContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDefinition {
    pub name: String,
    pub definition: String,
}

/// Statutory material for the long-context prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatutePack {
    pub statute_text: String,
    pub element_definitions: Vec<ElementDefinition>,
    pub logic_prose: String,
    pub style_instruction: String,
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("case text is empty")]
    EmptyCaseText,
    #[error(transparent)]
    Ambiguous(#[from] AmbiguousAnswer),
    #[error(transparent)]
    Client(#[from] ClientError),
}

impl StatutePack {
    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BaselineError::Config(format!("cannot read statute pack {}: {e}", path.display()))
        })?;
        let pack: StatutePack = serde_json::from_str(&text)
            .map_err(|e| BaselineError::Config(format!("statute pack {}: {e}", path.display())))?;
        pack.check()?;
        Ok(pack)
    }

    /// Every field must be non-empty.
    pub fn check(&self) -> Result<(), BaselineError> {
        let empty = |name: &str| {
            Err(BaselineError::Config(format!(
                "statute pack field '{name}' is empty"
            )))
        };
        if self.statute_text.trim().is_empty() {
            return empty("statute_text");
        }
        if self.logic_prose.trim().is_empty() {
            return empty("logic_prose");
        }
        if self.style_instruction.trim().is_empty() {
            return empty("style_instruction");
        }
        if self.element_definitions.is_empty() {
            return empty("element_definitions");
        }
        for (i, d) in self.element_definitions.iter().enumerate() {
            if d.name.trim().is_empty() || d.definition.trim().is_empty() {
                return empty(&format!("element_definitions[{i}]"));
            }
        }
        Ok(())
    }
}

pub fn zero_context_system_sha256() -> String {
    hex::encode(Sha256::digest(ZERO_CONTEXT_SYSTEM.as_bytes()))
}

pub fn build_zero_context_request(
    case: &CaseRecord,
    decoding: &DecodingConfig,
) -> Result<ChatRequest, BaselineError> {
    if case.text.trim().is_empty() {
        return Err(BaselineError::EmptyCaseText);
    }
    Ok(ChatRequest {
        system: ZERO_CONTEXT_SYSTEM.to_owned(),
        user: case.text.clone(),
        decoding: decoding.clone(),
    })
}

/// The final non-empty line must be `y` or `n`.
pub fn parse_zero_context_answer(text: &str) -> Result<bool, AmbiguousAnswer> {
    match normalize_answer(text).as_str() {
        "y" => Ok(true),
        "n" => Ok(false),
        _ => Err(AmbiguousAnswer {
            raw: text.to_owned(),
        }),
    }
}

pub fn long_context_system(pack: &StatutePack) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", pack.style_instruction.trim_end());
    let _ = writeln!(s, "\nGesetzestext:\n{}", pack.statute_text.trim_end());
    s.push_str("\nTatbestandsmerkmale:\n");
    for (i, d) in pack.element_definitions.iter().enumerate() {
        let _ = writeln!(s, "{}. {}: {}", i + 1, d.name.trim(), d.definition.trim());
    }
    let _ = writeln!(s, "\nLogische Struktur:\n{}", pack.logic_prose.trim_end());
    let _ = write!(
        s,
        "\nDu darfst deine Prüfung frei formulieren. Die letzte Zeile deiner Antwort muss \
         genau \"{FINAL_MARKER}: y\" (strafbar) oder \"{FINAL_MARKER}: n\" (nicht strafbar) lauten."
    );
    s
}

pub fn build_long_context_request(
    case: &CaseRecord,
    pack: &StatutePack,
    decoding: &DecodingConfig,
) -> Result<ChatRequest, BaselineError> {
    pack.check()?;
    if case.text.trim().is_empty() {
        return Err(BaselineError::EmptyCaseText);
    }
    Ok(ChatRequest {
        system: long_context_system(pack),
        user: case.text.clone(),
        decoding: decoding.clone(),
    })
}

fn marker_value(line: &str) -> Option<bool> {
    let line = line
        .trim()
        .trim_matches(|c| c == '*' || c == '_' || c == '#')
        .trim();
    if line.len() < FINAL_MARKER.len() || !line.is_char_boundary(FINAL_MARKER.len()) {
        return None;
    }
    let (head, rest) = line.split_at(FINAL_MARKER.len());
    if !head.eq_ignore_ascii_case(FINAL_MARKER) {
        return None;
    }
    let rest = rest.trim_start().strip_prefix(':')?;
    let value = rest
        .trim()
        .trim_matches(|c| c == '*' || c == '"' || c == '\'')
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim()
        .to_lowercase();
    match value.as_str() {
        "y" => Some(true),
        "n" => Some(false),
        _ => None,
    }
}

/// Last `ANTWORT: y|n` line wins; otherwise the final line is read as a
/// zero-context answer.
pub fn extract_final_label(text: &str) -> Result<bool, AmbiguousAnswer> {
    if let Some(v) = text.lines().rev().find_map(marker_value) {
        return Ok(v);
    }
    parse_zero_context_answer(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselinePrediction {
    pub case_id: String,
    pub label: bool,
    pub raw_output: String,
    pub method: BaselineMethod,
    pub request_digest: String,
    pub notes: Vec<String>,
}

/// A prediction attempt that produced output but no label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlabeledOutput {
    pub raw_output: String,
    pub request_digest: String,
}

pub fn predict(
    method: BaselineMethod,
    case: &CaseRecord,
    client: &dyn ChatClient,
    pack: Option<&StatutePack>,
    decoding: &DecodingConfig,
) -> Result<BaselinePrediction, (BaselineError, Option<UnlabeledOutput>)> {
    let request = match method {
        BaselineMethod::ZeroContext => build_zero_context_request(case, decoding),
        BaselineMethod::LongContext => match pack {
            Some(p) => build_long_context_request(case, p, decoding),
            None => Err(BaselineError::Config(
                "long-context method needs a statute pack".into(),
            )),
        },
    }
    .map_err(|e| (e, None))?;
    let digest = cache_key(&request).0;
    let response = client.complete(&request).map_err(|e| (e.into(), None))?;
    let parsed = match method {
        BaselineMethod::ZeroContext => parse_zero_context_answer(&response.text),
        BaselineMethod::LongContext => extract_final_label(&response.text),
    };
    let notes = if response.dropped_params.is_empty() {
        Vec::new()
    } else {
        vec![format!(
            "decoding parameters not sent: {}",
            response.dropped_params.join(", ")
        )]
    };
    match parsed {
        Ok(label) => Ok(BaselinePrediction {
            case_id: case.id.clone(),
            label,
            raw_output: response.text,
            method,
            request_digest: digest,
            notes,
        }),
        Err(amb) => Err((
            amb.into(),
            Some(UnlabeledOutput {
                raw_output: response.text,
                request_digest: digest,
            }),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pack() -> StatutePack {
        StatutePack {
            statute_text: "Wer ... zum Hass aufstachelt ...".into(),
            element_definitions: vec![
                ElementDefinition {
                    name: "Aufstacheln zum Hass".into(),
                    definition: "Einwirken auf Sinne und Gefühle".into(),
                },
                ElementDefinition {
                    name: "Eignung".into(),
                    definition: "konkrete Gefahr für den öffentlichen Frieden".into(),
                },
            ],
            logic_prose: "Die Tathandlungen sind alternativ, die übrigen Merkmale kumulativ."
                .into(),
            style_instruction: "Prüfe im Gutachtenstil.".into(),
        }
    }

    #[test]
    fn frozen_prompt_hash() {
        assert_eq!(zero_context_system_sha256(), ZERO_CONTEXT_SYSTEM_SHA256);
        assert!(!ZERO_CONTEXT_SYSTEM.ends_with('\n'));
    }

    #[test]
    fn zero_context_request() {
        let c = CaseRecord::new("1", "Ein Beitrag");
        let a = build_zero_context_request(&c, &DecodingConfig::default()).unwrap();
        assert_eq!(a.user, "Ein Beitrag");
        assert_eq!(a.system, ZERO_CONTEXT_SYSTEM);
        let b = build_zero_context_request(
            &CaseRecord::new("2", "Ein Beitrag"),
            &DecodingConfig::default(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_context_parsing() {
        assert_eq!(parse_zero_context_answer("y"), Ok(true));
        assert_eq!(parse_zero_context_answer("N."), Ok(false));
        assert!(parse_zero_context_answer("punishable").is_err());
        assert!(parse_zero_context_answer("ja").is_err());
    }

    #[test]
    fn long_context_order() {
        let p = pack();
        let s = long_context_system(&p);
        let pos = |needle: &str| s.find(needle).unwrap_or_else(|| panic!("missing {needle}"));
        assert!(pos(&p.style_instruction) < pos(&p.statute_text));
        assert!(pos(&p.statute_text) < pos("Aufstacheln zum Hass"));
        assert!(pos("Aufstacheln zum Hass") < pos("Eignung"));
        assert!(pos("Eignung") < pos(&p.logic_prose));
        assert!(pos(&p.logic_prose) < pos("ANTWORT: y"));
    }

    #[test]
    fn empty_pack_field_is_config_error() {
        let mut p = pack();
        p.logic_prose = " ".into();
        let err =
            build_long_context_request(&CaseRecord::new("1", "t"), &p, &DecodingConfig::default())
                .unwrap_err();
        assert!(matches!(err, BaselineError::Config(m) if m.contains("logic_prose")));
        let mut p = pack();
        p.element_definitions.clear();
        assert!(p.check().is_err());
    }

    #[test]
    fn final_label_extraction() {
        assert_eq!(extract_final_label("Gutachten ...\nANTWORT: n"), Ok(false));
        assert_eq!(extract_final_label("ANTWORT: y\nANTWORT: n"), Ok(false));
        assert_eq!(extract_final_label("**Antwort: Y**\n"), Ok(true));
        assert_eq!(extract_final_label("ANTWORT: n\nDanke."), Ok(false));
        assert_eq!(extract_final_label("Ergebnis\ny"), Ok(true));
        assert!(extract_final_label("Gründe ...\nvielleicht").is_err());
        assert!(extract_final_label("ANTWORT: vielleicht").is_err());
    }
}
