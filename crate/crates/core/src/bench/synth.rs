//! Synthetic, schema-compatible benchmark data and a deterministic model
//! stand-in that answers from the facts encoded in the synthetic texts.
//!
//! Texts are short German case summaries assembled from fixed phrases, so the
//! facts of a case can be read back with [`CaseFacts::from_text`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::dataset::DatasetRow;
use crate::baselines::ZERO_CONTEXT_SYSTEM;
use crate::llm::{cache_key, ChatClient, ChatRequest, ChatResponse, ClientError, Usage};

pub const DEFAULT_SEED: u64 = 640;

/// Row counts of the generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub rows: usize,
    pub disagreements: usize,
    /// Lay-consensus rows labelled positive by both annotators.
    pub consensus_positives: usize,
    /// Expert rows drawn from the consensus-positive, consensus-negative and
    /// disagreement strata.
    pub expert_strata: [usize; 3],
    /// Expert positives within each stratum.
    pub expert_positives: [usize; 3],
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            rows: 1000,
            disagreements: 132,
            consensus_positives: 95,
            expert_strata: [10, 78, 14],
            expert_positives: [7, 0, 2],
        }
    }
}

impl SynthSpec {
    pub fn check(&self) -> Result<(), String> {
        let consensus = self
            .rows
            .checked_sub(self.disagreements)
            .ok_or("more disagreements than rows")?;
        let negatives = consensus
            .checked_sub(self.consensus_positives)
            .ok_or("more consensus positives than consensus rows")?;
        let avail = [self.consensus_positives, negatives, self.disagreements];
        for i in 0..3 {
            if self.expert_strata[i] > avail[i] {
                return Err(format!("expert stratum {i} larger than its pool"));
            }
            if self.expert_positives[i] > self.expert_strata[i] {
                return Err(format!("expert stratum {i} has more positives than rows"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    National,
    Racial,
    Religious,
    Ethnic,
    Section,
    Individual,
    Unprotected,
}

impl Target {
    const PROTECTED: [Target; 6] = [
        Target::National,
        Target::Racial,
        Target::Religious,
        Target::Ethnic,
        Target::Section,
        Target::Individual,
    ];

    fn phrase(self) -> &'static str {
        match self {
            Target::National => "Menschen einer bestimmten Staatsangehörigkeit",
            Target::Racial => "Menschen, denen eine bestimmte Herkunft zugeschrieben wird",
            Target::Religious => "Angehörige einer Glaubensgemeinschaft",
            Target::Ethnic => "Angehörige einer Volksgruppe",
            Target::Section => "einen abgrenzbaren Teil der Bevölkerung",
            Target::Individual => "eine einzelne Person wegen ihrer Gruppenzugehörigkeit",
            Target::Unprotected => "die Verkehrspolitik der Stadtverwaltung",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Incitement,
    Violence,
    Arbitrary,
    Disparaging,
    Factual,
}

impl Act {
    fn sentence(self, target: &str) -> String {
        match self {
            Act::Incitement => format!("Der Beitrag stachelt gezielt zum Hass gegen {target} auf."),
            Act::Violence => {
                format!("Der Verfasser verlangt, gegen {target} gewaltsam vorzugehen.")
            }
            Act::Arbitrary => format!("Der Verfasser fordert, {target} willkürlich zu entrechten."),
            Act::Disparaging => {
                format!("Der Verfasser äußert sich abfällig, aber ohne Aufforderung über {target}.")
            }
            Act::Factual => format!("Der Beitrag kritisiert sachlich {target}."),
        }
    }

    fn is_attack(self) -> bool {
        matches!(self, Act::Incitement | Act::Violence | Act::Arbitrary)
    }
}

const PEACE_YES: &str =
    "Der Beitrag wurde breit geteilt und ist geeignet, ein Klima der Bedrohung zu schaffen.";
const PEACE_NO: &str = "Der Beitrag blieb in einem kleinen privaten Kreis ohne erkennbare Wirkung.";

const FRAMES: [&str; 6] = [
    "Kommentar in einem sozialen Netzwerk",
    "Antwort in einem Diskussionsforum",
    "Beitrag in einer öffentlichen Gruppe",
    "Kurznachricht auf einer Videoplattform",
    "Kommentar unter einem Zeitungsartikel",
    "Beitrag in einem Messenger-Kanal",
];

/// The legally relevant facts a synthetic text encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseFacts {
    pub act: Act,
    pub target: Target,
    pub peace: bool,
}

impl CaseFacts {
    pub fn punishable(&self) -> bool {
        self.act.is_attack() && self.target != Target::Unprotected && self.peace
    }

    pub fn text(&self, frame: &str) -> String {
        let peace = if self.peace { PEACE_YES } else { PEACE_NO };
        format!(
            "{frame}. {} {peace}",
            self.act.sentence(self.target.phrase())
        )
    }

    /// Reads the facts back from a generated text.
    pub fn from_text(text: &str) -> Option<CaseFacts> {
        let target = Target::PROTECTED
            .into_iter()
            .chain([Target::Unprotected])
            .find(|t| text.contains(t.phrase()))?;
        let act = [
            Act::Incitement,
            Act::Violence,
            Act::Arbitrary,
            Act::Disparaging,
            Act::Factual,
        ]
        .into_iter()
        .find(|a| text.contains(&a.sentence(target.phrase())))?;
        let peace = if text.contains(PEACE_YES) {
            true
        } else if text.contains(PEACE_NO) {
            false
        } else {
            return None;
        };
        Some(CaseFacts { act, target, peace })
    }

    /// Whether the statutory element named by a leaf question holds. The
    /// question is matched on keywords; unknown questions are answered `false`.
    pub fn element(&self, question: &str) -> bool {
        let q = question.to_lowercase();
        let has = |k: &str| q.contains(k);
        if has("hass") {
            self.act == Act::Incitement
        } else if has("gewalt") {
            self.act == Act::Violence
        } else if has("willkür") {
            self.act == Act::Arbitrary
        } else if has("frieden") {
            self.peace
        } else if has("national") {
            self.target == Target::National
        } else if has("rassisch") {
            self.target == Target::Racial
        } else if has("religiös") {
            self.target == Target::Religious
        } else if has("völkisch") || has("ethnisch") {
            self.target == Target::Ethnic
        } else if has("teil der bevölkerung") || has("bevölkerungsteil") {
            self.target == Target::Section
        } else if has("einzel") {
            self.target == Target::Individual
        } else {
            false
        }
    }
}

fn facts_for(rng: &mut ChaCha20Rng, positive: bool) -> CaseFacts {
    if positive {
        return CaseFacts {
            act: *[Act::Incitement, Act::Violence, Act::Arbitrary]
                .choose(rng)
                .expect("non-empty"),
            target: *Target::PROTECTED.choose(rng).expect("non-empty"),
            peace: true,
        };
    }
    loop {
        let f = CaseFacts {
            act: *[
                Act::Incitement,
                Act::Violence,
                Act::Arbitrary,
                Act::Disparaging,
                Act::Factual,
            ]
            .choose(rng)
            .expect("non-empty"),
            target: **Target::PROTECTED
                .iter()
                .chain([Target::Unprotected, Target::Unprotected].iter())
                .collect::<Vec<_>>()
                .choose(rng)
                .expect("non-empty"),
            peace: rng.gen_bool(0.5),
        };
        if !f.punishable() {
            return f;
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stratum {
    ConsensusPositive,
    ConsensusNegative,
    Disagreement,
}

/// Generates the dataset described by `spec`, deterministically in `seed`.
///
/// # Panics
/// If `spec` is inconsistent (see [`SynthSpec::check`]).
pub fn generate(spec: &SynthSpec, seed: u64) -> Vec<DatasetRow> {
    spec.check().expect("consistent synth spec");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let consensus_negatives = spec.rows - spec.disagreements - spec.consensus_positives;
    let mut strata: Vec<Stratum> = std::iter::repeat(Stratum::ConsensusPositive)
        .take(spec.consensus_positives)
        .chain(std::iter::repeat(Stratum::ConsensusNegative).take(consensus_negatives))
        .chain(std::iter::repeat(Stratum::Disagreement).take(spec.disagreements))
        .collect();
    strata.shuffle(&mut rng);

    // expert labels: per stratum, pick which rows get one and which are positive
    let mut expert: Vec<Option<bool>> = vec![None; spec.rows];
    for (si, s) in [
        Stratum::ConsensusPositive,
        Stratum::ConsensusNegative,
        Stratum::Disagreement,
    ]
    .into_iter()
    .enumerate()
    {
        let mut idx: Vec<usize> = (0..spec.rows).filter(|i| strata[*i] == s).collect();
        idx.shuffle(&mut rng);
        idx.truncate(spec.expert_strata[si]);
        for (k, i) in idx.into_iter().enumerate() {
            expert[i] = Some(k < spec.expert_positives[si]);
        }
    }

    let width = spec.rows.to_string().len().max(4);
    (0..spec.rows)
        .map(|i| {
            let (lay1, lay2, facts_positive) = match strata[i] {
                Stratum::ConsensusPositive => (true, true, true),
                Stratum::ConsensusNegative => (false, false, false),
                Stratum::Disagreement => {
                    let first = rng.gen_bool(0.5);
                    (
                        first,
                        !first,
                        expert[i].unwrap_or_else(|| rng.gen_bool(0.5)),
                    )
                }
            };
            let facts_positive = expert[i].unwrap_or(facts_positive);
            let facts = facts_for(&mut rng, facts_positive);
            let frame = FRAMES.choose(&mut rng).expect("non-empty");
            DatasetRow {
                id: format!("c{:0width$}", i + 1),
                text: facts.text(frame),
                lay1,
                lay2,
                expert: expert[i],
            }
        })
        .collect()
}

/// The first `n` consensus rows, alternating positives and negatives while
/// both last, in dataset order.
pub fn mini(rows: &[DatasetRow], n: usize) -> Vec<DatasetRow> {
    let pos = rows.iter().filter(|r| r.lay1 && r.lay2);
    let neg = rows.iter().filter(|r| !r.lay1 && !r.lay2);
    let want_pos = n / 3;
    let mut out: Vec<DatasetRow> = pos
        .take(want_pos)
        .chain(neg.take(n - want_pos))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Deterministic stand-in for a chat model over synthetic texts.
///
/// Leaf prompts are answered from the element the question names, the
/// zero-context prompt from the overall label, and any other prompt as a
/// long-context request ending in an `ANTWORT:` line. A per-model fraction of
/// answers is flipped, keyed on the request hash, so the methods disagree in a
/// reproducible way.
#[derive(Debug, Clone)]
pub struct SyntheticResponder {
    /// Flip probability for leaf answers, zero-context and long-context.
    pub error_rates: [f64; 3],
}

impl Default for SyntheticResponder {
    fn default() -> Self {
        SyntheticResponder {
            error_rates: [0.03, 0.15, 0.08],
        }
    }
}

fn unit(req: &ChatRequest, salt: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(cache_key(req).0.as_bytes());
    h.update(salt.as_bytes());
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64
}

fn model_factor(model: &str) -> f64 {
    // stronger "models" by name, so different models score differently
    match model {
        m if m.contains("mini") => 2.0,
        m if m.contains("mistral") => 1.5,
        _ => 1.0,
    }
}

fn leaf_question(system: &str) -> Option<&str> {
    let start = system
        .find("Prüffrage:\n")
        .map(|i| i + "Prüffrage:\n".len())
        .or_else(|| system.find("Question:\n").map(|i| i + "Question:\n".len()))?;
    let rest = &system[start..];
    Some(rest.split("\n\n").next().unwrap_or(rest))
}

impl SyntheticResponder {
    pub fn answer(&self, req: &ChatRequest) -> String {
        let facts = CaseFacts::from_text(&req.user);
        let f = model_factor(&req.decoding.model);
        let flip = |rate: f64| unit(req, "flip") < (rate * f).min(0.5);
        if req.system == ZERO_CONTEXT_SYSTEM {
            let v = facts.map(|x| x.punishable()).unwrap_or(false) ^ flip(self.error_rates[1]);
            return if v { "y" } else { "n" }.to_owned();
        }
        if let Some(q) = leaf_question(&req.system) {
            let english = req.system.contains("Question:\n");
            let v = facts.map(|x| x.element(q)).unwrap_or(false) ^ flip(self.error_rates[0]);
            return match (english, v) {
                (false, true) => "Ja",
                (false, false) => "Nein",
                (true, true) => "Yes",
                (true, false) => "No",
            }
            .to_owned();
        }
        let v = facts.map(|x| x.punishable()).unwrap_or(false) ^ flip(self.error_rates[2]);
        format!(
            "Prüfung der Tatbestandsmerkmale anhand des Sachverhalts.\nErgebnis: {}.\nANTWORT: {}",
            if v { "strafbar" } else { "nicht strafbar" },
            if v { "y" } else { "n" }
        )
    }
}

impl ChatClient for SyntheticResponder {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let text = self.answer(req);
        Ok(ChatResponse {
            usage: Usage {
                prompt_tokens: ((req.system.len() + req.user.len()) / 4) as u64,
                completion_tokens: (text.len() / 4).max(1) as u64,
            },
            text,
            latency_ms: None,
            dropped_params: Vec::new(),
        })
    }
}
