use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::domain::{
    Example, NegotiationTranscript, Provenance, SentimentLabel, SessionResult, TranscriptRecord, TurnRecord,
    VoteTally,
};
use crate::negotiation::{reconcile, AgentPair, NegotiationError, Negotiator, Reconciliation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    VanillaIcl,
    SelfNegotiation,
    DualNegotiation,
    DualWithArbitration,
}

impl ModeKind {
    pub const ALL: [ModeKind; 4] = [
        Self::VanillaIcl,
        Self::SelfNegotiation,
        Self::DualNegotiation,
        Self::DualWithArbitration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::VanillaIcl => "vanilla_icl",
            Self::SelfNegotiation => "self_negotiation",
            Self::DualNegotiation => "dual_negotiation",
            Self::DualWithArbitration => "dual_with_arbitration",
        }
    }

    pub fn agent_count(self) -> usize {
        match self {
            Self::VanillaIcl | Self::SelfNegotiation => 1,
            Self::DualNegotiation => 2,
            Self::DualWithArbitration => 3,
        }
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| EvalError::Mode(format!("unknown mode {s:?}")))
    }
}

/// A pipeline mode with the agents it runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineMode {
    kind: ModeKind,
    agents: Vec<String>,
}

impl PipelineMode {
    pub fn new(kind: ModeKind, agents: Vec<String>) -> Result<Self, EvalError> {
        if agents.len() != kind.agent_count() {
            return Err(EvalError::Mode(format!(
                "{kind} takes {} agent(s), got {}",
                kind.agent_count(),
                agents.len()
            )));
        }
        if kind == ModeKind::DualWithArbitration && (agents[2] == agents[0] || agents[2] == agents[1]) {
            return Err(EvalError::Mode("the arbitrating agent must differ from the other two".into()));
        }
        Ok(Self { kind, agents })
    }

    pub fn kind(&self) -> ModeKind {
        self.kind
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn plan(&self) -> SessionPlan {
        let a = |i: usize| self.agents[i].clone();
        match self.kind {
            ModeKind::VanillaIcl => SessionPlan::Vanilla(a(0)),
            ModeKind::SelfNegotiation => SessionPlan::Single(AgentPair::solo(a(0))),
            ModeKind::DualNegotiation => SessionPlan::Dual { a: a(0), b: a(1) },
            ModeKind::DualWithArbitration => SessionPlan::Arbitrated {
                a: a(0),
                b: a(1),
                third: a(2),
            },
        }
    }
}

/// What to run for each input. Modes map onto plans; ablations also use
/// single negotiations between two different agents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SessionPlan {
    Vanilla(String),
    Single(AgentPair),
    Dual { a: String, b: String },
    Arbitrated { a: String, b: String, third: String },
}

impl SessionPlan {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Vanilla(_) => "vanilla_icl",
            Self::Single(p) if p.generator == p.discriminator => "self_negotiation",
            Self::Single(_) => "single_negotiation",
            Self::Dual { .. } => "dual_negotiation",
            Self::Arbitrated { .. } => "dual_with_arbitration",
        }
    }

    pub fn agents(&self) -> Vec<String> {
        match self {
            Self::Vanilla(a) => vec![a.clone()],
            Self::Single(p) => vec![p.generator.clone(), p.discriminator.clone()],
            Self::Dual { a, b } => vec![a.clone(), b.clone()],
            Self::Arbitrated { a, b, third } => vec![a.clone(), b.clone(), third.clone()],
        }
    }
}

fn settled(primary: NegotiationTranscript, input: &Example) -> SessionResult {
    let (final_decision, provenance) = match primary.outcome.decision() {
        Some(d) => (d.clone(), Provenance::SingleConsensus),
        None => (primary.first_decision().clone(), Provenance::Fallback),
    };
    SessionResult {
        input: input.clone(),
        primary,
        flipped: None,
        arbitration: None,
        tally: None,
        final_decision,
        provenance,
    }
}

/// Runs one input through `plan`.
///
/// Without arbitration, conflicting consensus keeps the (A, B) negotiation's
/// decision and two failed negotiations keep its opening generator decision;
/// both are marked [`Provenance::Fallback`].
pub fn run_session(negotiator: &Negotiator, plan: &SessionPlan, input: &Example) -> Result<SessionResult, NegotiationError> {
    match plan {
        SessionPlan::Vanilla(agent) => Ok(settled(negotiator.run_vanilla(agent, input)?, input)),
        SessionPlan::Single(pair) => Ok(settled(negotiator.run_negotiation(pair, input)?, input)),
        SessionPlan::Dual { a, b } | SessionPlan::Arbitrated { a, b, .. } => {
            let dual = negotiator.run_dual(a, b, input);
            let (ab, ba) = (dual.ab?, dual.ba?);
            let third = match plan {
                SessionPlan::Arbitrated { third, .. } => Some(third),
                _ => None,
            };
            let (final_decision, provenance, arbitration, tally) = match (reconcile(&ab.outcome, &ba.outcome), third) {
                (Reconciliation::Final(label), _) => {
                    let both = ab.outcome.is_consensus() && ba.outcome.is_consensus();
                    let provenance = if both {
                        Provenance::Agreement
                    } else {
                        Provenance::SingleConsensus
                    };
                    (label, provenance, None, None)
                }
                (_, Some(third)) => {
                    let arb = negotiator.arbitrate(third, a, b, input, [&ab, &ba])?;
                    let provenance = if arb.vote.fallback_used {
                        Provenance::Fallback
                    } else {
                        Provenance::Vote
                    };
                    (arb.vote.label, provenance, Some(arb.transcripts), Some(arb.vote.tally))
                }
                (Reconciliation::Escalate, None) => {
                    let label = ab.outcome.decision().expect("escalation implies consensus").clone();
                    (label, Provenance::Fallback, None, None)
                }
                (Reconciliation::Unresolved, None) => (ab.first_decision().clone(), Provenance::Fallback, None, None),
            };
            Ok(SessionResult {
                input: input.clone(),
                primary: ab,
                flipped: Some(ba),
                arbitration,
                tally,
                final_decision,
                provenance,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub transport: bool,
    /// Turns completed before the failure.
    pub partial: Vec<TurnRecord>,
}

impl From<&NegotiationError> for ErrorRecord {
    fn from(e: &NegotiationError) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
            transport: e.is_transport(),
            partial: e.partial().iter().map(TurnRecord::from).collect(),
        }
    }
}

/// One line of `transcripts.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub input: Example,
    pub mode: String,
    pub agents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary: Option<TranscriptRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flipped: Option<TranscriptRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arbitration: Option<Vec<TranscriptRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tally: Option<VoteTally>,
    #[serde(rename = "final")]
    pub final_decision: Option<SentimentLabel>,
    pub provenance: Option<Provenance>,
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

impl SessionRecord {
    pub fn new(plan: &SessionPlan, input: &Example, result: &Result<SessionResult, NegotiationError>) -> Self {
        let mut record = Self {
            input: input.clone(),
            mode: plan.name().to_string(),
            agents: plan.agents(),
            primary: None,
            flipped: None,
            arbitration: None,
            tally: None,
            final_decision: None,
            provenance: None,
            correct: None,
            error: None,
        };
        match result {
            Ok(r) => {
                record.primary = Some(r.primary.to_record());
                record.flipped = r.flipped.as_ref().map(NegotiationTranscript::to_record);
                record.arbitration = r
                    .arbitration
                    .as_ref()
                    .map(|ts| ts.iter().map(NegotiationTranscript::to_record).collect());
                record.tally = r.tally.clone();
                record.final_decision = Some(r.final_decision.clone());
                record.provenance = Some(r.provenance);
                record.correct = input.gold.as_ref().map(|g| *g == r.final_decision);
            }
            Err(e) => {
                record.error = Some(e.into());
                record.correct = input.gold.as_ref().map(|_| false);
            }
        }
        record
    }

    /// Counted in accuracy: has a gold label and did not fail in transport.
    pub fn is_evaluated(&self) -> bool {
        self.input.gold.is_some() && !self.error.as_ref().is_some_and(|e| e.transport)
    }

    /// Correctness recomputed from the stored decision and gold label.
    pub fn is_correct(&self) -> bool {
        matches!((&self.final_decision, &self.input.gold), (Some(f), Some(g)) if f == g)
    }

    /// Every negotiation transcript in the record, primary first.
    pub fn transcripts(&self) -> impl Iterator<Item = &TranscriptRecord> {
        self.primary
            .iter()
            .chain(self.flipped.iter())
            .chain(self.arbitration.iter().flatten())
    }
}
