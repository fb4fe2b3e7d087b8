//! Leaf prompt templates and the constrained model call.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::llm::{cache_key, ChatClient, ChatRequest, ClientError, DecodingConfig};
use crate::model::{Language, Leaf};

use super::answer::{parse_binary_answer, AnswerLexicon};
use super::{CaseRecord, EvaluatorKind, LeafFailure, LeafFailureKind, LeafResult};

pub const DEFAULT_TEMPLATE_ID: &str = "leaf-de-v1";

const DEFAULT_USER_TEMPLATE: &str = "{case_text}";

/// Prompt skeleton with `{question}`, `{context}`, `{case_text}` and
/// `{binary_instruction}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn builtin(id: &str) -> Option<Self> {
        let system = match id {
            "leaf-de-v1" => include_str!("../../assets/leaf-de-v1.system.txt"),
            "leaf-en-v1" => include_str!("../../assets/leaf-en-v1.system.txt"),
            _ => return None,
        };
        Some(PromptTemplate {
            id: id.to_owned(),
            system: system.to_owned(),
            user: DEFAULT_USER_TEMPLATE.to_owned(),
        })
    }

    /// Loads `<id>.system.txt` (required) and `<id>.user.txt` (optional)
    /// from `dir`, falling back to the built-in template of that id.
    pub fn load(dir: Option<&Path>, id: &str) -> std::io::Result<Self> {
        if let Some(dir) = dir {
            let system_path = dir.join(format!("{id}.system.txt"));
            if system_path.is_file() {
                let system = fs::read_to_string(&system_path)?;
                let user_path = dir.join(format!("{id}.user.txt"));
                let user = if user_path.is_file() {
                    fs::read_to_string(user_path)?
                } else {
                    DEFAULT_USER_TEMPLATE.to_owned()
                };
                return Ok(PromptTemplate {
                    id: id.to_owned(),
                    system,
                    user,
                });
            }
        }
        Self::builtin(id).ok_or_else(|| {
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("prompt template '{id}' not found"),
            )
        })
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::builtin(DEFAULT_TEMPLATE_ID).expect("default template is built in")
    }
}

pub fn binary_instruction(lang: Language) -> &'static str {
    match lang {
        Language::De => "Beantworte die Prüffrage mit genau einem Wort: ja oder nein.",
        Language::En => "Answer the question with exactly one word: yes or no.",
    }
}

/// Appended to the system message when re-asking after an ambiguous reply.
pub fn retry_reminder(lang: Language) -> &'static str {
    match lang {
        Language::De => "Antworte ausschließlich mit ja oder nein.",
        Language::En => "Answer exclusively with yes or no.",
    }
}

/// Single-pass `{name}` substitution; substituted text is never rescanned.
pub fn render(template: &str, vars: &BTreeMap<&str, &str>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if vars.contains_key(&after[..end]) => {
                out.push_str(vars[&after[..end]]);
                rest = &after[end + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn build_leaf_prompt(
    leaf: &Leaf,
    case: &CaseRecord,
    template: &PromptTemplate,
    decoding: &DecodingConfig,
) -> ChatRequest {
    let vars: BTreeMap<&str, &str> = [
        ("question", leaf.question.as_str()),
        ("context", leaf.context.as_str()),
        ("case_text", case.text.as_str()),
        (
            "binary_instruction",
            binary_instruction(leaf.answer_language),
        ),
    ]
    .into_iter()
    .collect();
    ChatRequest {
        system: render(&template.system, &vars),
        user: render(&template.user, &vars),
        decoding: decoding.clone(),
    }
}

fn with_reminder(base: &ChatRequest, lang: Language) -> ChatRequest {
    ChatRequest {
        system: format!("{}\n\n{}", base.system, retry_reminder(lang)),
        ..base.clone()
    }
}

pub fn evaluate_llm_leaf(
    node_id: &str,
    leaf: &Leaf,
    case: &CaseRecord,
    client: &dyn ChatClient,
    template: &PromptTemplate,
    decoding: &DecodingConfig,
) -> Result<LeafResult, LeafFailure> {
    let fail = |attempts: u32, kind: LeafFailureKind| LeafFailure {
        node_id: node_id.to_owned(),
        evaluator: Some(EvaluatorKind::Llm),
        attempts,
        kind,
    };
    let retry_limit = match leaf.binding {
        crate::model::LeafBinding::Llm { retry_limit } => retry_limit,
        crate::model::LeafBinding::Symbolic { .. } => {
            return Err(fail(0, LeafFailureKind::WrongBinding))
        }
    };
    if case.text.trim().is_empty() {
        return Err(fail(0, LeafFailureKind::EmptyCaseText));
    }

    let lexicon = AnswerLexicon::for_language(leaf.answer_language);
    let base = build_leaf_prompt(leaf, case, template, decoding);
    let reminder = with_reminder(&base, leaf.answer_language);
    let mut notes = Vec::new();

    for attempt in 1..=retry_limit + 1 {
        let request = if attempt == 1 { &base } else { &reminder };
        let response = client.complete(request).map_err(|e| {
            fail(
                attempt,
                match e {
                    ClientError::CacheMiss(key) => LeafFailureKind::CacheMiss(key.0),
                    other => LeafFailureKind::Transport(other.to_string()),
                },
            )
        })?;
        if !response.dropped_params.is_empty() {
            notes.push(format!(
                "decoding parameters not sent: {}",
                response.dropped_params.join(", ")
            ));
        }
        match parse_binary_answer(&response.text, &lexicon) {
            Ok(value) => {
                return Ok(LeafResult {
                    value,
                    raw_answer: response.text,
                    attempts: attempt,
                    evaluator: EvaluatorKind::Llm,
                    request_digest: Some(cache_key(request).0),
                    notes,
                })
            }
            Err(amb) if attempt <= retry_limit => {
                notes.push(format!("attempt {attempt} ambiguous: {:?}", amb.raw));
            }
            Err(amb) => return Err(fail(attempt, LeafFailureKind::Ambiguous { raw: amb.raw })),
        }
    }
    unreachable!("loop returns on the final attempt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatResponse, Usage};
    use std::sync::Mutex;

    /// Answers from a fixed script, one reply per call.
    struct Scripted(Mutex<Vec<&'static str>>, Mutex<Vec<ChatRequest>>);

    impl Scripted {
        fn new(replies: &[&'static str]) -> Self {
            let mut v = replies.to_vec();
            v.reverse();
            Scripted(Mutex::new(v), Mutex::new(Vec::new()))
        }
    }

    impl ChatClient for Scripted {
        fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
            self.1.lock().unwrap().push(req.clone());
            let text = self.0.lock().unwrap().pop().expect("script exhausted");
            Ok(ChatResponse {
                text: text.into(),
                usage: Usage::default(),
                latency_ms: None,
                dropped_params: vec![],
            })
        }
    }

    fn leaf() -> Leaf {
        let mut l = Leaf::llm("Ist der Beitrag zur Störung des öffentlichen Friedens geeignet?");
        l.context = "Eignung: konkrete Gefährdung des Rechtsfriedens.".into();
        l
    }

    fn case() -> CaseRecord {
        CaseRecord::new("c", "Ein Beitrag.")
    }

    #[test]
    fn prompt_is_pure_and_user_is_case_text() {
        let t = PromptTemplate::default();
        let d = DecodingConfig::default();
        let a = build_leaf_prompt(&leaf(), &case(), &t, &d);
        let b = build_leaf_prompt(&leaf(), &case(), &t, &d);
        assert_eq!(a, b);
        assert_eq!(cache_key(&a), cache_key(&b));
        assert_eq!(a.user, "Ein Beitrag.");
        assert!(a.system.contains(&leaf().question));
        assert!(a.system.contains(&leaf().context));
        assert!(a.system.ends_with(binary_instruction(Language::De)));
    }

    #[test]
    fn empty_context_still_builds() {
        let mut l = leaf();
        l.context.clear();
        let r = build_leaf_prompt(
            &l,
            &case(),
            &PromptTemplate::default(),
            &DecodingConfig::default(),
        );
        assert!(!r.user.is_empty());
    }

    #[test]
    fn render_is_single_pass() {
        let vars: BTreeMap<&str, &str> = [("question", "{context}"), ("context", "C")]
            .into_iter()
            .collect();
        assert_eq!(
            render("{question}|{context}|{other}|{", &vars),
            "{context}|C|{other}|{"
        );
    }

    #[test]
    fn first_answer() {
        let client = Scripted::new(&["ja"]);
        let r = evaluate_llm_leaf(
            "s",
            &leaf(),
            &case(),
            &client,
            &PromptTemplate::default(),
            &DecodingConfig::default(),
        )
        .unwrap();
        assert!(r.value);
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn retry_after_ambiguous() {
        let client = Scripted::new(&["Das kommt darauf an", "nein"]);
        let r = evaluate_llm_leaf(
            "s",
            &leaf(),
            &case(),
            &client,
            &PromptTemplate::default(),
            &DecodingConfig::default(),
        )
        .unwrap();
        assert!(!r.value);
        assert_eq!(r.attempts, 2);
        let reqs = client.1.lock().unwrap();
        assert!(reqs[1].system.ends_with(retry_reminder(Language::De)));
        assert_eq!(
            r.request_digest.as_deref(),
            Some(cache_key(&reqs[1]).0.as_str())
        );
    }

    #[test]
    fn zero_retries_fails_immediately() {
        let mut l = leaf();
        l.binding = crate::model::LeafBinding::Llm { retry_limit: 0 };
        let client = Scripted::new(&["vielleicht"]);
        let err = evaluate_llm_leaf(
            "s",
            &l,
            &case(),
            &client,
            &PromptTemplate::default(),
            &DecodingConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.attempts, 1);
        assert!(matches!(err.kind, LeafFailureKind::Ambiguous { .. }));
    }

    #[test]
    fn retries_exhausted() {
        let client = Scripted::new(&["hm", "hm", "hm"]);
        let err = evaluate_llm_leaf(
            "s",
            &leaf(),
            &case(),
            &client,
            &PromptTemplate::default(),
            &DecodingConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.attempts, 3);
    }

    #[test]
    fn empty_case_text_rejected() {
        let client = Scripted::new(&[]);
        let err = evaluate_llm_leaf(
            "s",
            &leaf(),
            &CaseRecord::new("c", "  "),
            &client,
            &PromptTemplate::default(),
            &DecodingConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.kind, LeafFailureKind::EmptyCaseText);
    }
}
