use super::report::{ConsensusColumn, ReasoningRow, RoleRow};
use super::run::{evaluate, EvalOptions, EvalRun};
use super::session::SessionPlan;
use super::EvalError;
use crate::domain::{Example, NegotiationConfig};
use crate::negotiation::{AgentPair, Negotiator};

/// Results of an ablation plus the runs behind them.
#[derive(Debug, Clone)]
pub struct Ablation<R> {
    pub rows: Vec<R>,
    pub runs: Vec<EvalRun>,
}

impl<R> Ablation<R> {
    pub fn cancelled(&self) -> bool {
        self.runs.iter().any(|r| r.cancelled)
    }
}

fn run_all(
    negotiator: &Negotiator,
    dataset: &str,
    plans: &[SessionPlan],
    examples: &[Example],
    options: &EvalOptions,
) -> Result<Vec<EvalRun>, EvalError> {
    let mut runs = Vec::with_capacity(plans.len());
    for plan in plans {
        let run = evaluate(negotiator, dataset, plan, examples, options, &mut |_| Ok(()))?;
        let stop = run.cancelled;
        runs.push(run);
        if stop {
            break;
        }
    }
    Ok(runs)
}

/// Every generator/discriminator assignment of two agents: each alone, each
/// negotiating with itself, and both cross pairings.
pub fn ablate_roles(
    negotiator: &Negotiator,
    a: &str,
    b: &str,
    dataset: &str,
    examples: &[Example],
    options: &EvalOptions,
) -> Result<Ablation<RoleRow>, EvalError> {
    let plans = [
        SessionPlan::Vanilla(a.into()),
        SessionPlan::Vanilla(b.into()),
        SessionPlan::Single(AgentPair::new(a, a)),
        SessionPlan::Single(AgentPair::new(a, b)),
        SessionPlan::Single(AgentPair::new(b, a)),
        SessionPlan::Single(AgentPair::new(b, b)),
    ];
    let runs = run_all(negotiator, dataset, &plans, examples, options)?;
    let rows = runs
        .iter()
        .map(|run| {
            let (generator, discriminator) = match &run.plan {
                SessionPlan::Single(p) => (p.generator.clone(), Some(p.discriminator.clone())),
                other => (other.agents()[0].clone(), None),
            };
            let stats = run.stats();
            RoleRow {
                dataset: dataset.into(),
                generator,
                discriminator,
                stats,
                accuracy: stats.accuracy(),
            }
        })
        .collect();
    Ok(Ablation { rows, runs })
}

fn setup_name(plan: &SessionPlan) -> String {
    match plan {
        SessionPlan::Vanilla(a) => format!("single {a}"),
        other => other.agents().join("+"),
    }
}

/// Each agent alone and the configured plan, with and without reasoning.
pub fn ablate_reasoning(
    negotiator: &Negotiator,
    plan: &SessionPlan,
    dataset: &str,
    examples: &[Example],
    options: &EvalOptions,
) -> Result<Ablation<ReasoningRow>, EvalError> {
    let mut setups: Vec<SessionPlan> = Vec::new();
    for agent in plan.agents() {
        let solo = SessionPlan::Vanilla(agent);
        if !setups.contains(&solo) {
            setups.push(solo);
        }
    }
    if !setups.contains(plan) {
        setups.push(plan.clone());
    }
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    'setups: for setup in &setups {
        for reasoning in [true, false] {
            let config = NegotiationConfig {
                reasoning_enabled: reasoning,
                ..negotiator.config().clone()
            };
            let n = negotiator.reconfigured(config)?;
            let run = evaluate(&n, dataset, setup, examples, options, &mut |_| Ok(()))?;
            let stats = run.stats();
            rows.push(ReasoningRow {
                dataset: dataset.into(),
                setup: setup_name(setup),
                reasoning,
                stats,
                accuracy: stats.accuracy(),
            });
            let stop = run.cancelled;
            runs.push(run);
            if stop {
                break 'setups;
            }
        }
    }
    Ok(Ablation { rows, runs })
}

/// Consensus histograms for both role orders of two agents.
pub fn ablate_consensus(
    negotiator: &Negotiator,
    a: &str,
    b: &str,
    dataset: &str,
    examples: &[Example],
    options: &EvalOptions,
) -> Result<Ablation<ConsensusColumn>, EvalError> {
    let plans = [SessionPlan::Dual { a: a.into(), b: b.into() }];
    let runs = run_all(negotiator, dataset, &plans, examples, options)?;
    let rows = runs.iter().flat_map(EvalRun::consensus).collect();
    Ok(Ablation { rows, runs })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::{Agent, AgentRegistry, LexiconBackend};
    use crate::domain::LabelSpace;
    use crate::prompting::{Prompter, Templates, RATIONALE_DELIMITER};
    use crate::retrieval::NoDemos;

    fn negotiator() -> Negotiator {
        let reg = AgentRegistry::new()
            .with(Agent::new("a", "lex", Arc::new(LexiconBackend::new())))
            .with(Agent::new("b", "lex", Arc::new(LexiconBackend::new())));
        let prompter = Prompter::new(LabelSpace::binary(), NegotiationConfig::default(), Templates::default());
        Negotiator::new(reg, prompter, Arc::new(NoDemos)).unwrap()
    }

    fn examples() -> Vec<Example> {
        let bin = LabelSpace::binary();
        [("great fun", "positive"), ("dull mess", "negative"), ("not bad at all", "positive")]
            .into_iter()
            .enumerate()
            .map(|(i, (t, g))| Example::new(format!("e{i}"), t).unwrap().with_gold(bin.get(g).unwrap()))
            .collect()
    }

    #[test]
    fn roles_cover_six_assignments() {
        let ab = ablate_roles(&negotiator(), "a", "b", "t", &examples(), &EvalOptions::default()).unwrap();
        let pairs: Vec<(String, Option<String>)> =
            ab.rows.iter().map(|r| (r.generator.clone(), r.discriminator.clone())).collect();
        let s = |x: &str| x.to_string();
        assert_eq!(
            pairs,
            vec![
                (s("a"), None),
                (s("b"), None),
                (s("a"), Some(s("a"))),
                (s("a"), Some(s("b"))),
                (s("b"), Some(s("a"))),
                (s("b"), Some(s("b"))),
            ]
        );
        assert!(ab.rows.iter().all(|r| r.accuracy.is_some()));
    }

    #[test]
    fn reasoning_rows_pair_up_and_drop_the_delimiter() {
        let plan = SessionPlan::Dual { a: "a".into(), b: "b".into() };
        let ab = ablate_reasoning(&negotiator(), &plan, "t", &examples(), &EvalOptions::default()).unwrap();
        let labels: Vec<(String, bool)> = ab.rows.iter().map(|r| (r.setup.clone(), r.reasoning)).collect();
        assert_eq!(labels.len(), 6);
        assert_eq!(labels[4], ("a+b".to_string(), true));
        assert_eq!(labels[5], ("a+b".to_string(), false));
        for (run, _) in ab.runs.iter().zip(&ab.rows).filter(|(_, row)| !row.reasoning) {
            for t in run.records.iter().flat_map(|r| r.transcripts()) {
                assert!(t.turns.iter().all(|turn| !turn.prompt.contains(RATIONALE_DELIMITER)));
            }
        }
    }

    #[test]
    fn consensus_has_both_orders() {
        let ab = ablate_consensus(&negotiator(), "a", "b", "t", &examples(), &EvalOptions::default()).unwrap();
        let setups: Vec<&str> = ab.rows.iter().map(|c| c.setup.as_str()).collect();
        assert_eq!(setups, vec!["Ga-Db", "Gb-Da"]);
        assert!(ab.rows.iter().all(|c| c.histogram.total() == 3));
    }
}
