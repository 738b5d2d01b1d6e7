use crate::domain::{LabelSpace, NegotiationOutcome, SentimentLabel, VoteTally};

/// Result of comparing the two role-flipped negotiations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reconciliation {
    Final(SentimentLabel),
    /// Both reached consensus on different labels.
    Escalate,
    /// Neither reached consensus.
    Unresolved,
}

pub fn reconcile(ab: &NegotiationOutcome, ba: &NegotiationOutcome) -> Reconciliation {
    match (ab.decision(), ba.decision()) {
        (Some(x), Some(y)) if x == y => Reconciliation::Final(x.clone()),
        (Some(_), Some(_)) => Reconciliation::Escalate,
        (Some(x), None) | (None, Some(x)) => Reconciliation::Final(x.clone()),
        (None, None) => Reconciliation::Unresolved,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteResult {
    pub label: SentimentLabel,
    pub tally: VoteTally,
    /// True when no outcome reached consensus and `label` is the fallback.
    pub fallback_used: bool,
}

/// Plurality vote over consensus decisions. NoConsensus outcomes and labels
/// outside `space` cast no vote. Ties go to the label whose supporting
/// negotiations used fewer turns in total, then to the earlier label in
/// `space`. With no votes at all the result is `fallback`.
pub fn majority_vote(outcomes: &[NegotiationOutcome; 6], space: &LabelSpace, fallback: &SentimentLabel) -> VoteResult {
    let mut tally = VoteTally::default();
    for outcome in outcomes {
        if let NegotiationOutcome::Consensus { decision, turns_used } = outcome {
            if space.contains(decision) {
                *tally.counts.entry(decision.clone()).or_default() += 1;
                *tally.turns.entry(decision.clone()).or_default() += turns_used;
            }
        }
    }
    let winner = space
        .labels()
        .iter()
        .filter(|l| tally.count(l) > 0)
        .min_by_key(|l| (std::cmp::Reverse(tally.count(l)), tally.turns[*l], space.position(l)))
        .cloned();
    match winner {
        Some(label) => VoteResult {
            label,
            tally,
            fallback_used: false,
        },
        None => VoteResult {
            label: fallback.clone(),
            tally,
            fallback_used: true,
        },
    }
}
