use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::NegotiationOutcome;

/// Negotiation outcomes bucketed by kind and turn count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusHistogram {
    /// turns used -> negotiations that reached consensus in that many turns
    pub agree: BTreeMap<u32, usize>,
    /// turns used -> negotiations that ended without consensus
    pub disagree: BTreeMap<u32, usize>,
}

impl ConsensusHistogram {
    pub fn add(&mut self, outcome: &NegotiationOutcome) {
        let bucket = if outcome.is_consensus() {
            &mut self.agree
        } else {
            &mut self.disagree
        };
        *bucket.entry(outcome.turns_used()).or_default() += 1;
    }

    pub fn total(&self) -> usize {
        self.agree.values().sum::<usize>() + self.disagree_count()
    }

    pub fn disagree_count(&self) -> usize {
        self.disagree.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Share of all negotiations, as a fraction.
    pub fn fraction(&self, count: usize) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            count as f64 / self.total() as f64
        }
    }

    /// Rows in display order: every agree bucket by turns, then every disagree
    /// bucket, each with its count.
    pub fn rows(&self) -> Vec<(String, usize)> {
        self.agree
            .iter()
            .map(|(t, c)| (format!("{t} turns agree"), *c))
            .chain(self.disagree.iter().map(|(t, c)| (format!("{t} turns disagree"), *c)))
            .collect()
    }
}

pub fn consensus_stats<'a, I>(outcomes: I) -> ConsensusHistogram
where
    I: IntoIterator<Item = &'a NegotiationOutcome>,
{
    let mut hist = ConsensusHistogram::default();
    for outcome in outcomes {
        hist.add(outcome);
    }
    hist
}

/// Rounded whole percent, as printed in report tables.
pub fn percent(fraction: f64) -> String {
    format!("{:.0}%", fraction * 100.0)
}
