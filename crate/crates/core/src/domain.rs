//! Core vocabulary shared by every stage of the negotiation pipeline.
//!
//! Everything here is an immutable value: labels and label spaces, dataset
//! examples, in-context demonstrations, parsed agent responses, turns,
//! transcripts and their outcomes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A canonical sentiment label, e.g. `positive`.
///
/// Values are lowercase words. Membership in a particular [`LabelSpace`] is
/// checked where labels enter the system (parsing, ingestion, demo building).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentimentLabel(String);

impl SentimentLabel {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(value: impl Into<String>) -> Self {
        Self(value.into())
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("no label of {space:?} found in {text:?}")]
    NoMatch { text: String, space: Vec<String> },
    #[error("{text:?} mentions more than one label: {found:?}")]
    Ambiguous { text: String, found: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("label space must not be empty")]
    EmptyLabelSpace,
    #[error("label {0:?} appears twice in the label space")]
    DuplicateLabel(String),
    #[error("label {0:?} must be lowercase and trimmed")]
    NonCanonicalLabel(String),
    #[error("a two-label space must be exactly [positive, negative], got {0:?}")]
    NonStandardBinary(Vec<String>),
    #[error("example text must not be empty (id {0:?})")]
    EmptyText(String),
    #[error("example id must not be empty")]
    EmptyId,
    #[error("explanation must not be empty")]
    EmptyExplanation,
    #[error("attitude yes requires the discriminator decision to equal {expected}, got {got}")]
    AttitudeMismatch {
        expected: SentimentLabel,
        got: SentimentLabel,
    },
    #[error("invalid negotiation config: {0}")]
    InvalidConfig(String),
    #[error("malformed transcript: {0}")]
    MalformedTranscript(String),
}

/// The ordered set of admissible labels for a task.
///
/// Order matters: it is the last tie-break when votes are counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<SentimentLabel>,
}

impl LabelSpace {
    pub fn new<I, S>(labels: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(DomainError::EmptyLabelSpace);
        }
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() || label.trim() != label || label.to_lowercase() != *label {
                return Err(DomainError::NonCanonicalLabel(label.clone()));
            }
            if labels[..i].contains(label) {
                return Err(DomainError::DuplicateLabel(label.clone()));
            }
        }
        if labels.len() == 2 && labels != ["positive", "negative"] {
            return Err(DomainError::NonStandardBinary(labels));
        }
        Ok(Self {
            labels: labels.into_iter().map(SentimentLabel).collect(),
        })
    }

    /// `[positive, negative]`
    pub fn binary() -> Self {
        Self::new(["positive", "negative"]).expect("static space")
    }

    /// `[positive, negative, neutral]`
    pub fn ternary() -> Self {
        Self::new(["positive", "negative", "neutral"]).expect("static space")
    }

    pub fn labels(&self) -> &[SentimentLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &SentimentLabel) -> bool {
        self.labels.contains(label)
    }

    /// Exact lookup of a canonical label string.
    pub fn get(&self, value: &str) -> Option<SentimentLabel> {
        self.labels.iter().find(|l| l.0 == value).cloned()
    }

    pub fn position(&self, label: &SentimentLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn canonicalize(&self, text: &str) -> Result<SentimentLabel, LabelError> {
        canonicalize_label(text, self)
    }

    /// Comma-separated listing used in prompts: `positive, negative`.
    pub fn listing(&self) -> String {
        self.labels
            .iter()
            .map(SentimentLabel::as_str)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = DomainError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.labels.into_iter().map(|l| l.0).collect()
    }
}

/// Maps free text to the single label of `space` it denotes.
///
/// The text is lowercased, trimmed and stripped of terminal punctuation, then
/// scanned for whole-word occurrences of each label.
pub fn canonicalize_label(text: &str, space: &LabelSpace) -> Result<SentimentLabel, LabelError> {
    let lowered = text.trim().to_lowercase();
    let cleaned = lowered.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    let words: Vec<&str> = cleaned
        .split(|c: char| !c.is_alphanumeric() && c != '-' && c != '_')
        .filter(|w| !w.is_empty())
        .collect();
    let found: Vec<&SentimentLabel> = space
        .labels
        .iter()
        .filter(|label| words.iter().any(|w| *w == label.as_str()))
        .collect();
    match found.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(LabelError::NoMatch {
            text: text.to_string(),
            space: space.labels.iter().map(|l| l.0.clone()).collect(),
        }),
        many => Err(LabelError::Ambiguous {
            text: text.to_string(),
            found: many.iter().map(|l| l.0.clone()).collect(),
        }),
    }
}

/// One dataset item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<SentimentLabel>,
    /// Target topic for topic-conditioned benchmarks (Twitter).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl Example {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, DomainError> {
        let id = id.into();
        let text = text.into();
        if id.trim().is_empty() {
            return Err(DomainError::EmptyId);
        }
        if text.trim().is_empty() {
            return Err(DomainError::EmptyText(id));
        }
        Ok(Self {
            id,
            text,
            gold: None,
            topic: None,
        })
    }

    pub fn with_gold(mut self, gold: SentimentLabel) -> Self {
        self.gold = Some(gold);
        self
    }

    pub fn with_topic(mut self, topic: impl Into<String>) -> Self {
        self.topic = Some(topic.into());
        self
    }
}

/// Generator-side demonstration: (input, reasoning steps, decision).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorDemo {
    pub input: String,
    pub reasoning: Vec<String>,
    pub decision: SentimentLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attitude {
    Yes,
    No,
}

impl Attitude {
    pub fn as_str(self) -> &'static str {
        match self {
            Attitude::Yes => "yes",
            Attitude::No => "no",
        }
    }
}

/// Discriminator-side demonstration: the generator triplet plus the
/// discriminator's attitude, explanation and own decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorDemo {
    pub input: String,
    pub reasoning: Vec<String>,
    pub decision: SentimentLabel,
    pub attitude: Attitude,
    pub explanation: String,
    pub disc_decision: SentimentLabel,
}

impl DiscriminatorDemo {
    pub fn new(
        base: GeneratorDemo,
        attitude: Attitude,
        explanation: impl Into<String>,
        disc_decision: SentimentLabel,
    ) -> Result<Self, DomainError> {
        let explanation = explanation.into();
        if explanation.trim().is_empty() {
            return Err(DomainError::EmptyExplanation);
        }
        if attitude == Attitude::Yes && disc_decision != base.decision {
            return Err(DomainError::AttitudeMismatch {
                expected: base.decision,
                got: disc_decision,
            });
        }
        Ok(Self {
            input: base.input,
            reasoning: base.reasoning,
            decision: base.decision,
            attitude,
            explanation,
            disc_decision,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub decision: SentimentLabel,
    pub reasoning: Vec<String>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorResponse {
    pub attitude: Attitude,
    pub explanation: String,
    pub decision: SentimentLabel,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Discriminator,
}

impl Role {
    /// Role of the turn at 1-based `index`.
    pub fn for_index(index: u32) -> Role {
        if index % 2 == 1 {
            Role::Generator
        } else {
            Role::Discriminator
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnResponse {
    Generator(GeneratorResponse),
    Discriminator(DiscriminatorResponse),
}

impl TurnResponse {
    pub fn raw(&self) -> &str {
        match self {
            TurnResponse::Generator(r) => &r.raw,
            TurnResponse::Discriminator(r) => &r.raw,
        }
    }

    pub fn decision(&self) -> &SentimentLabel {
        match self {
            TurnResponse::Generator(r) => &r.decision,
            TurnResponse::Discriminator(r) => &r.decision,
        }
    }

    pub fn role(&self) -> Role {
        match self {
            TurnResponse::Generator(_) => Role::Generator,
            TurnResponse::Discriminator(_) => Role::Discriminator,
        }
    }
}

/// One agent response within a negotiation, with the prompt that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub index: u32,
    pub agent_id: String,
    pub prompt: String,
    pub response: TurnResponse,
}

impl Turn {
    pub fn role(&self) -> Role {
        self.response.role()
    }

    pub fn decision(&self) -> &SentimentLabel {
        self.response.decision()
    }
}

/// Terminal state of one negotiation. `turns_used` counts every agent
/// response, including the terminal one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "OutcomeRecord", into = "OutcomeRecord")]
pub enum NegotiationOutcome {
    Consensus {
        decision: SentimentLabel,
        turns_used: u32,
    },
    NoConsensus {
        turns_used: u32,
    },
}

impl NegotiationOutcome {
    pub fn consensus(decision: SentimentLabel, turns_used: u32) -> Self {
        Self::Consensus {
            decision,
            turns_used,
        }
    }

    pub fn no_consensus(turns_used: u32) -> Self {
        Self::NoConsensus { turns_used }
    }

    pub fn decision(&self) -> Option<&SentimentLabel> {
        match self {
            Self::Consensus { decision, .. } => Some(decision),
            Self::NoConsensus { .. } => None,
        }
    }

    pub fn turns_used(&self) -> u32 {
        match self {
            Self::Consensus { turns_used, .. } | Self::NoConsensus { turns_used } => *turns_used,
        }
    }

    pub fn is_consensus(&self) -> bool {
        matches!(self, Self::Consensus { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Consensus,
    NoConsensus,
}

/// Wire form of [`NegotiationOutcome`]: `{kind, decision, turns_used}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub kind: OutcomeKind,
    pub decision: Option<SentimentLabel>,
    pub turns_used: u32,
}

impl From<NegotiationOutcome> for OutcomeRecord {
    fn from(outcome: NegotiationOutcome) -> Self {
        match outcome {
            NegotiationOutcome::Consensus {
                decision,
                turns_used,
            } => Self {
                kind: OutcomeKind::Consensus,
                decision: Some(decision),
                turns_used,
            },
            NegotiationOutcome::NoConsensus { turns_used } => Self {
                kind: OutcomeKind::NoConsensus,
                decision: None,
                turns_used,
            },
        }
    }
}

impl TryFrom<OutcomeRecord> for NegotiationOutcome {
    type Error = DomainError;

    fn try_from(record: OutcomeRecord) -> Result<Self, Self::Error> {
        if record.turns_used == 0 {
            return Err(DomainError::MalformedTranscript("turns_used must be >= 1".into()));
        }
        match (record.kind, record.decision) {
            (OutcomeKind::Consensus, Some(decision)) => Ok(Self::consensus(decision, record.turns_used)),
            (OutcomeKind::NoConsensus, None) => Ok(Self::no_consensus(record.turns_used)),
            (OutcomeKind::Consensus, None) => Err(DomainError::MalformedTranscript(
                "consensus outcome without a decision".into(),
            )),
            (OutcomeKind::NoConsensus, Some(_)) => Err(DomainError::MalformedTranscript(
                "no_consensus outcome carries a decision".into(),
            )),
        }
    }
}

pub const DEFAULT_TASK_GENERATOR: &str = "Please determine the overall sentiment of test input.";
pub const DEFAULT_TASK_DISCRIMINATOR: &str = "Please determine whether the decision is correct.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NegotiationConfig {
    pub max_turns: u32,
    pub k_demos: usize,
    pub reasoning_enabled: bool,
    pub temperature: f64,
    pub task_description_gen: String,
    pub task_description_disc: String,
}

impl Default for NegotiationConfig {
    fn default() -> Self {
        Self {
            max_turns: 3,
            k_demos: 5,
            reasoning_enabled: true,
            temperature: 0.0,
            task_description_gen: DEFAULT_TASK_GENERATOR.to_string(),
            task_description_disc: DEFAULT_TASK_DISCRIMINATOR.to_string(),
        }
    }
}

impl NegotiationConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.max_turns < 1 {
            return Err(DomainError::InvalidConfig("max_turns must be >= 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(DomainError::InvalidConfig(format!(
                "temperature must be a finite non-negative number, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// The audit trail of one generator/discriminator negotiation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegotiationTranscript {
    pub input: Example,
    pub gen_agent: String,
    pub disc_agent: String,
    pub turns: Vec<Turn>,
    pub outcome: NegotiationOutcome,
}

impl NegotiationTranscript {
    /// Builds a transcript, checking turn alternation, agent assignment and
    /// that the outcome is consistent with the final turns.
    pub fn new(
        input: Example,
        gen_agent: impl Into<String>,
        disc_agent: impl Into<String>,
        turns: Vec<Turn>,
        outcome: NegotiationOutcome,
    ) -> Result<Self, DomainError> {
        let transcript = Self {
            input,
            gen_agent: gen_agent.into(),
            disc_agent: disc_agent.into(),
            turns,
            outcome,
        };
        transcript.check()?;
        Ok(transcript)
    }

    fn check(&self) -> Result<(), DomainError> {
        let bad = |m: String| Err(DomainError::MalformedTranscript(m));
        if self.turns.is_empty() {
            return bad("transcript has no turns".into());
        }
        for (pos, turn) in self.turns.iter().enumerate() {
            let expected_index = pos as u32 + 1;
            if turn.index != expected_index {
                return bad(format!("turn at position {pos} has index {}", turn.index));
            }
            let role = Role::for_index(turn.index);
            if turn.role() != role {
                return bad(format!("turn {} should be a {role:?} turn", turn.index));
            }
            let expected_agent = match role {
                Role::Generator => &self.gen_agent,
                Role::Discriminator => &self.disc_agent,
            };
            if &turn.agent_id != expected_agent {
                return bad(format!(
                    "turn {} was taken by {} but the {role:?} is {expected_agent}",
                    turn.index, turn.agent_id
                ));
            }
        }
        if self.outcome.turns_used() as usize != self.turns.len() {
            return bad(format!(
                "outcome reports {} turns but the transcript has {}",
                self.outcome.turns_used(),
                self.turns.len()
            ));
        }
        if let NegotiationOutcome::Consensus { decision, .. } = &self.outcome {
            let last = self.turns.last().expect("non-empty");
            if last.decision() != decision {
                return bad("consensus decision differs from the last turn".into());
            }
            if self.turns.len() >= 2 {
                let prev = &self.turns[self.turns.len() - 2];
                if prev.decision() != decision {
                    return bad("consensus reached without the last two decisions agreeing".into());
                }
            }
        }
        Ok(())
    }

    /// Decision of the opening generator turn.
    pub fn first_decision(&self) -> &SentimentLabel {
        self.turns[0].decision()
    }

    pub fn to_record(&self) -> TranscriptRecord {
        TranscriptRecord {
            input_id: self.input.id.clone(),
            gen_agent: self.gen_agent.clone(),
            disc_agent: self.disc_agent.clone(),
            turns: self.turns.iter().map(TurnRecord::from).collect(),
            outcome: self.outcome.clone(),
        }
    }

    /// Rebuilds a transcript from its wire form. `input.id` must match.
    pub fn from_record(input: Example, record: TranscriptRecord) -> Result<Self, DomainError> {
        if input.id != record.input_id {
            return Err(DomainError::MalformedTranscript(format!(
                "record belongs to {} not {}",
                record.input_id, input.id
            )));
        }
        let turns = record
            .turns
            .into_iter()
            .map(Turn::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(input, record.gen_agent, record.disc_agent, turns, record.outcome)
    }
}

/// Serialized transcript: `{input_id, gen_agent, disc_agent, turns, outcome}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub input_id: String,
    pub gen_agent: String,
    pub disc_agent: String,
    pub turns: Vec<TurnRecord>,
    pub outcome: NegotiationOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: u32,
    pub role: Role,
    pub agent_id: String,
    pub prompt: String,
    pub response_raw: String,
    pub parsed: ParsedResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParsedResponse {
    Discriminator {
        attitude: Attitude,
        explanation: String,
        decision: SentimentLabel,
    },
    Generator {
        decision: SentimentLabel,
        reasoning: Vec<String>,
    },
}

impl From<&Turn> for TurnRecord {
    fn from(turn: &Turn) -> Self {
        let parsed = match &turn.response {
            TurnResponse::Generator(r) => ParsedResponse::Generator {
                decision: r.decision.clone(),
                reasoning: r.reasoning.clone(),
            },
            TurnResponse::Discriminator(r) => ParsedResponse::Discriminator {
                attitude: r.attitude,
                explanation: r.explanation.clone(),
                decision: r.decision.clone(),
            },
        };
        Self {
            index: turn.index,
            role: turn.role(),
            agent_id: turn.agent_id.clone(),
            prompt: turn.prompt.clone(),
            response_raw: turn.response.raw().to_string(),
            parsed,
        }
    }
}

impl TryFrom<TurnRecord> for Turn {
    type Error = DomainError;

    fn try_from(record: TurnRecord) -> Result<Self, Self::Error> {
        let response = match (record.role, record.parsed) {
            (Role::Generator, ParsedResponse::Generator { decision, reasoning }) => {
                TurnResponse::Generator(GeneratorResponse {
                    decision,
                    reasoning,
                    raw: record.response_raw,
                })
            }
            (
                Role::Discriminator,
                ParsedResponse::Discriminator {
                    attitude,
                    explanation,
                    decision,
                },
            ) => TurnResponse::Discriminator(DiscriminatorResponse {
                attitude,
                explanation,
                decision,
                raw: record.response_raw,
            }),
            (role, _) => {
                return Err(DomainError::MalformedTranscript(format!(
                    "turn {} parsed payload does not match role {role:?}",
                    record.index
                )))
            }
        };
        Ok(Turn {
            index: record.index,
            agent_id: record.agent_id,
            prompt: record.prompt,
            response,
        })
    }
}

/// How the final decision of a session was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Both negotiations reached the same consensus.
    Agreement,
    /// Exactly one negotiation reached consensus (or the only negotiation run did).
    SingleConsensus,
    /// Majority vote over six negotiation outcomes.
    Vote,
    /// No usable consensus; first-generator decision (or configured fallback) taken.
    Fallback,
}

/// Consensus-vote counts over a set of negotiation outcomes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub counts: BTreeMap<SentimentLabel, usize>,
    /// Sum of `turns_used` over the negotiations supporting each label.
    pub turns: BTreeMap<SentimentLabel, u32>,
}

impl VoteTally {
    pub fn total_votes(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, label: &SentimentLabel) -> usize {
        self.counts.get(label).copied().unwrap_or(0)
    }
}

/// Everything produced for one input by a negotiation pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionResult {
    pub input: Example,
    pub primary: NegotiationTranscript,
    /// Role-flipped negotiation; absent for single-negotiation modes.
    pub flipped: Option<NegotiationTranscript>,
    /// The four third-agent negotiations; present iff `provenance` came from arbitration.
    pub arbitration: Option<Vec<NegotiationTranscript>>,
    pub tally: Option<VoteTally>,
    pub final_decision: SentimentLabel,
    pub provenance: Provenance,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(s: &str) -> SentimentLabel {
        SentimentLabel::new_unchecked(s)
    }

    #[test]
    fn canonicalize_examples() {
        let bin = LabelSpace::binary();
        assert_eq!(canonicalize_label("Positive", &bin).unwrap(), label("positive"));
        assert_eq!(canonicalize_label(" negative.", &bin).unwrap(), label("negative"));
        assert!(matches!(
            canonicalize_label("neutral", &bin),
            Err(LabelError::NoMatch { .. })
        ));
        assert!(matches!(
            canonicalize_label("positive or negative", &bin),
            Err(LabelError::Ambiguous { .. })
        ));
    }

    #[test]
    fn canonicalize_is_whole_word() {
        let bin = LabelSpace::binary();
        assert!(canonicalize_label("positively", &bin).is_err());
        assert_eq!(canonicalize_label("**NEGATIVE**!", &bin).unwrap(), label("negative"));
    }

    #[test]
    fn canonicalize_is_idempotent_on_labels() {
        for space in [LabelSpace::binary(), LabelSpace::ternary()] {
            for l in space.labels() {
                assert_eq!(&canonicalize_label(l.as_str(), &space).unwrap(), l);
            }
        }
    }

    #[test]
    fn label_space_validation() {
        assert_eq!(LabelSpace::new(Vec::<String>::new()), Err(DomainError::EmptyLabelSpace));
        assert!(matches!(LabelSpace::new(["positive", "positive", "x"]), Err(DomainError::DuplicateLabel(_))));
        assert!(matches!(LabelSpace::new(["Positive", "negative", "x"]), Err(DomainError::NonCanonicalLabel(_))));
        assert!(matches!(LabelSpace::new(["negative", "positive"]), Err(DomainError::NonStandardBinary(_))));
        assert_eq!(LabelSpace::ternary().listing(), "positive, negative, neutral");
    }

    #[test]
    fn discriminator_demo_yes_requires_same_decision() {
        let base = GeneratorDemo {
            input: "fine".into(),
            reasoning: vec![],
            decision: label("positive"),
        };
        let err = DiscriminatorDemo::new(base.clone(), Attitude::Yes, "ok", label("negative"));
        assert!(matches!(err, Err(DomainError::AttitudeMismatch { .. })));
        assert!(DiscriminatorDemo::new(base.clone(), Attitude::Yes, " ", label("positive")).is_err());
        assert!(DiscriminatorDemo::new(base, Attitude::No, "sarcasm", label("negative")).is_ok());
    }

    #[test]
    fn outcome_wire_form() {
        let c = NegotiationOutcome::consensus(label("positive"), 2);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"kind":"consensus","decision":"positive","turns_used":2}"#);
        let n = NegotiationOutcome::no_consensus(3);
        let json = serde_json::to_string(&n).unwrap();
        assert_eq!(json, r#"{"kind":"no_consensus","decision":null,"turns_used":3}"#);
        assert_eq!(serde_json::from_str::<NegotiationOutcome>(&json).unwrap(), n);
        assert!(serde_json::from_str::<NegotiationOutcome>(r#"{"kind":"consensus","decision":null,"turns_used":2}"#).is_err());
    }

    fn gen_turn(index: u32, agent: &str, d: &str) -> Turn {
        Turn {
            index,
            agent_id: agent.into(),
            prompt: "p".into(),
            response: TurnResponse::Generator(GeneratorResponse {
                decision: label(d),
                reasoning: vec![],
                raw: format!("The input contains {d} sentiment."),
            }),
        }
    }

    fn disc_turn(index: u32, agent: &str, attitude: Attitude, d: &str) -> Turn {
        Turn {
            index,
            agent_id: agent.into(),
            prompt: "p".into(),
            response: TurnResponse::Discriminator(DiscriminatorResponse {
                attitude,
                explanation: "e".into(),
                decision: label(d),
                raw: "raw".into(),
            }),
        }
    }

    #[test]
    fn transcript_checks_alternation_and_outcome() {
        let input = Example::new("x1", "text").unwrap();
        let ok = NegotiationTranscript::new(
            input.clone(),
            "a",
            "b",
            vec![gen_turn(1, "a", "positive"), disc_turn(2, "b", Attitude::Yes, "positive")],
            NegotiationOutcome::consensus(label("positive"), 2),
        );
        assert!(ok.is_ok());

        let swapped = NegotiationTranscript::new(
            input.clone(),
            "a",
            "b",
            vec![disc_turn(1, "b", Attitude::Yes, "positive")],
            NegotiationOutcome::consensus(label("positive"), 1),
        );
        assert!(swapped.is_err());

        let unsound = NegotiationTranscript::new(
            input.clone(),
            "a",
            "b",
            vec![gen_turn(1, "a", "positive"), disc_turn(2, "b", Attitude::No, "negative")],
            NegotiationOutcome::consensus(label("negative"), 2),
        );
        assert!(unsound.is_err());

        let wrong_agent = NegotiationTranscript::new(
            input,
            "a",
            "b",
            vec![gen_turn(1, "b", "positive")],
            NegotiationOutcome::consensus(label("positive"), 1),
        );
        assert!(wrong_agent.is_err());
    }

    #[test]
    fn transcript_record_round_trip() {
        let input = Example::new("x1", "text").unwrap();
        let t = NegotiationTranscript::new(
            input.clone(),
            "a",
            "b",
            vec![
                gen_turn(1, "a", "positive"),
                disc_turn(2, "b", Attitude::No, "negative"),
                gen_turn(3, "a", "positive"),
            ],
            NegotiationOutcome::no_consensus(3),
        )
        .unwrap();
        let json = serde_json::to_string(&t.to_record()).unwrap();
        let back: TranscriptRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(NegotiationTranscript::from_record(input, back).unwrap(), t);
    }

    #[test]
    fn config_validation() {
        assert!(NegotiationConfig::default().validate().is_ok());
        let bad = NegotiationConfig {
            max_turns: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = NegotiationConfig {
            temperature: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
