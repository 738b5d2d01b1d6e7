//! The negotiation protocol: a generator/discriminator loop, role-flipped
//! dual runs, reconciliation and third-agent arbitration.

mod vote;

use std::sync::Arc;

use thiserror::Error;

use crate::backend::{Agent, AgentRegistry, BackendError};
use crate::domain::{
    Attitude, DiscriminatorDemo, DiscriminatorResponse, DomainError, Example, GeneratorResponse, LabelSpace,
    NegotiationConfig, NegotiationOutcome, NegotiationTranscript, Role, Turn, TurnResponse,
};
use crate::prompting::{PromptError, Prompter};
use crate::retrieval::{DemoSource, RetrievalError};

pub use vote::{majority_vote, reconcile, Reconciliation, VoteResult};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentPair {
    pub generator: String,
    pub discriminator: String,
}

impl AgentPair {
    pub fn new(generator: impl Into<String>, discriminator: impl Into<String>) -> Self {
        Self {
            generator: generator.into(),
            discriminator: discriminator.into(),
        }
    }

    /// One agent in both roles.
    pub fn solo(agent: impl Into<String>) -> Self {
        let agent = agent.into();
        Self::new(agent.clone(), agent)
    }

    pub fn flipped(&self) -> Self {
        Self::new(self.discriminator.clone(), self.generator.clone())
    }
}

#[derive(Debug, Error)]
pub enum NegotiationError {
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("arbiter {0:?} must differ from both negotiating agents")]
    InvalidArbiter(String),
    #[error(transparent)]
    Config(#[from] DomainError),
    #[error("turn {turn} ({agent}): {source}")]
    Backend {
        turn: u32,
        agent: String,
        #[source]
        source: BackendError,
        partial: Vec<Turn>,
    },
    #[error("turn {turn} ({agent}): unparseable response after one retry: {source}")]
    Parse {
        turn: u32,
        agent: String,
        #[source]
        source: PromptError,
        partial: Vec<Turn>,
    },
    #[error("turn {turn}: {source}")]
    Prompt {
        turn: u32,
        #[source]
        source: PromptError,
        partial: Vec<Turn>,
    },
    #[error("demonstrations for {agent}: {source}")]
    Demos {
        agent: String,
        #[source]
        source: RetrievalError,
        partial: Vec<Turn>,
    },
}

impl NegotiationError {
    /// Turns completed before the failure.
    pub fn partial(&self) -> &[Turn] {
        match self {
            Self::Backend { partial, .. }
            | Self::Parse { partial, .. }
            | Self::Prompt { partial, .. }
            | Self::Demos { partial, .. } => partial,
            _ => &[],
        }
    }

    /// Failures of the model endpoint itself rather than of its answers.
    pub fn is_transport(&self) -> bool {
        match self {
            Self::Backend { source, .. } => source.is_transport(),
            Self::Demos {
                source: RetrievalError::Backend(e),
                ..
            } => e.is_transport(),
            _ => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownAgent(_) | Self::InvalidArbiter(_) | Self::Config(_) => "config",
            Self::Backend { .. } => "backend",
            Self::Parse { .. } => "parse",
            Self::Prompt { .. } => "prompt",
            Self::Demos { .. } => "demos",
        }
    }
}

/// Both role orders for one input; each side fails independently.
#[derive(Debug)]
pub struct DualRun {
    pub ab: Result<NegotiationTranscript, NegotiationError>,
    pub ba: Result<NegotiationTranscript, NegotiationError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arbitration {
    /// (third, A), (A, third), (third, B), (B, third).
    pub transcripts: Vec<NegotiationTranscript>,
    pub vote: VoteResult,
}

/// Runs negotiations between registered agents under one prompter and
/// demonstration source.
#[derive(Clone)]
pub struct Negotiator {
    agents: AgentRegistry,
    prompter: Prompter,
    demos: Arc<dyn DemoSource>,
    parallel_duals: bool,
}

impl Negotiator {
    pub fn new(agents: AgentRegistry, prompter: Prompter, demos: Arc<dyn DemoSource>) -> Result<Self, NegotiationError> {
        prompter.config().validate()?;
        Ok(Self {
            agents,
            prompter,
            demos,
            parallel_duals: false,
        })
    }

    /// Run the two negotiations of a dual (and of each arbitration dual)
    /// concurrently. Off by default so that backends sharing a scripted
    /// queue see a fixed call order.
    pub fn with_parallel_duals(mut self, parallel: bool) -> Self {
        self.parallel_duals = parallel;
        self
    }

    pub fn config(&self) -> &NegotiationConfig {
        self.prompter.config()
    }

    /// The same agents, templates and demonstrations under another config.
    pub fn reconfigured(&self, config: NegotiationConfig) -> Result<Self, NegotiationError> {
        config.validate()?;
        Ok(Self {
            prompter: Prompter::new(self.space().clone(), config, self.prompter.templates().clone()),
            ..self.clone()
        })
    }

    pub fn space(&self) -> &LabelSpace {
        self.prompter.space()
    }

    pub fn prompter(&self) -> &Prompter {
        &self.prompter
    }

    pub fn agents(&self) -> &AgentRegistry {
        &self.agents
    }

    pub fn agent(&self, id: &str) -> Result<&Agent, NegotiationError> {
        self.agents.get(id).ok_or_else(|| NegotiationError::UnknownAgent(id.to_string()))
    }

    /// One negotiation of at most `max_turns` turns.
    pub fn run_negotiation(&self, pair: &AgentPair, input: &Example) -> Result<NegotiationTranscript, NegotiationError> {
        self.negotiate(pair, input, self.config().max_turns)
    }

    /// A single generator turn with demonstrations.
    pub fn run_vanilla(&self, agent: &str, input: &Example) -> Result<NegotiationTranscript, NegotiationError> {
        self.negotiate(&AgentPair::solo(agent), input, 1)
    }

    /// (G=A, D=B) and (G=B, D=A), independent of each other.
    pub fn run_dual(&self, a: &str, b: &str, input: &Example) -> DualRun {
        let ab = AgentPair::new(a, b);
        let ba = ab.flipped();
        let (ab, ba) = if self.parallel_duals {
            rayon::join(|| self.run_negotiation(&ab, input), || self.run_negotiation(&ba, input))
        } else {
            (self.run_negotiation(&ab, input), self.run_negotiation(&ba, input))
        };
        DualRun { ab, ba }
    }

    /// Dual negotiations of `third` with each of `a` and `b`, then a vote over
    /// those four outcomes plus the two originals. The third agent starts
    /// fresh and never sees the original transcripts.
    pub fn arbitrate(
        &self,
        third: &str,
        a: &str,
        b: &str,
        input: &Example,
        original: [&NegotiationTranscript; 2],
    ) -> Result<Arbitration, NegotiationError> {
        if third == a || third == b {
            return Err(NegotiationError::InvalidArbiter(third.to_string()));
        }
        self.agent(third)?;
        let with_a = self.run_dual(third, a, input);
        let with_b = self.run_dual(third, b, input);
        let transcripts = vec![with_a.ab?, with_a.ba?, with_b.ab?, with_b.ba?];
        let outcomes = [
            original[0].outcome.clone(),
            original[1].outcome.clone(),
            transcripts[0].outcome.clone(),
            transcripts[1].outcome.clone(),
            transcripts[2].outcome.clone(),
            transcripts[3].outcome.clone(),
        ];
        let vote = majority_vote(&outcomes, self.space(), original[0].first_decision());
        Ok(Arbitration { transcripts, vote })
    }

    fn negotiate(&self, pair: &AgentPair, input: &Example, max_turns: u32) -> Result<NegotiationTranscript, NegotiationError> {
        if max_turns == 0 {
            return Err(DomainError::InvalidConfig("max_turns must be >= 1".into()).into());
        }
        let generator = self.agent(&pair.generator)?;
        let discriminator = self.agent(&pair.discriminator)?;
        let config = self.config();
        let mut turns: Vec<Turn> = Vec::new();

        let gen_demos = self
            .demos
            .generator_demos(input, generator, config)
            .map_err(|source| NegotiationError::Demos {
                agent: generator.id.clone(),
                source,
                partial: Vec::new(),
            })?;
        let mut disc_demos: Option<Vec<DiscriminatorDemo>> = None;
        let mut last_gen: Option<GeneratorResponse> = None;
        let mut last_disc: Option<DiscriminatorResponse> = None;

        for index in 1..=max_turns {
            let (outcome, turn) = match Role::for_index(index) {
                Role::Generator => {
                    let prompt = self
                        .prompter
                        .generator_prompt(&gen_demos, input, last_disc.as_ref())
                        .map_err(|source| NegotiationError::Prompt {
                            turn: index,
                            source,
                            partial: turns.clone(),
                        })?;
                    let (prompt, response) =
                        self.ask_parsed(generator, prompt, index, Role::Generator, &turns, |raw| {
                            self.prompter.parse_generator(raw)
                        })?;
                    let agreed = max_turns == 1
                        || last_disc.as_ref().is_some_and(|d| d.decision == response.decision);
                    let outcome = agreed.then(|| NegotiationOutcome::consensus(response.decision.clone(), index));
                    last_gen = Some(response.clone());
                    (outcome, (prompt, TurnResponse::Generator(response), &generator.id))
                }
                Role::Discriminator => {
                    let gen = last_gen.as_ref().expect("a generator turn precedes every discriminator turn");
                    if disc_demos.is_none() {
                        disc_demos = Some(
                            self.demos
                                .discriminator_demos(input, generator, discriminator, config)
                                .map_err(|source| NegotiationError::Demos {
                                    agent: discriminator.id.clone(),
                                    source,
                                    partial: turns.clone(),
                                })?,
                        );
                    }
                    let demos = disc_demos.as_deref().unwrap_or_default();
                    let prompt = self
                        .prompter
                        .discriminator_prompt(demos, input, gen)
                        .map_err(|source| NegotiationError::Prompt {
                            turn: index,
                            source,
                            partial: turns.clone(),
                        })?;
                    let (prompt, response) =
                        self.ask_parsed(discriminator, prompt, index, Role::Discriminator, &turns, |raw| {
                            self.prompter.parse_discriminator(raw, &gen.decision)
                        })?;
                    let outcome = (response.attitude == Attitude::Yes)
                        .then(|| NegotiationOutcome::consensus(gen.decision.clone(), index));
                    last_disc = Some(response.clone());
                    (outcome, (prompt, TurnResponse::Discriminator(response), &discriminator.id))
                }
            };
            let (prompt, response, agent_id) = turn;
            turns.push(Turn {
                index,
                agent_id: agent_id.clone(),
                prompt,
                response,
            });
            if let Some(outcome) = outcome {
                return Ok(NegotiationTranscript::new(
                    input.clone(),
                    &pair.generator,
                    &pair.discriminator,
                    turns,
                    outcome,
                )?);
            }
        }
        Ok(NegotiationTranscript::new(
            input.clone(),
            &pair.generator,
            &pair.discriminator,
            turns,
            NegotiationOutcome::no_consensus(max_turns),
        )?)
    }

    /// Asks `agent`, parsing the answer; one unparseable answer earns a single
    /// re-prompt with a format reminder. Returns the prompt actually answered.
    fn ask_parsed<T>(
        &self,
        agent: &Agent,
        prompt: String,
        turn: u32,
        role: Role,
        partial: &[Turn],
        parse: impl Fn(&str) -> Result<T, PromptError>,
    ) -> Result<(String, T), NegotiationError> {
        let temperature = self.config().temperature;
        let ask = |p: &str| {
            agent.ask(p, temperature).map(|c| c.text).map_err(|source| NegotiationError::Backend {
                turn,
                agent: agent.id.clone(),
                source,
                partial: partial.to_vec(),
            })
        };
        let raw = ask(&prompt)?;
        match parse(&raw) {
            Ok(parsed) => Ok((prompt, parsed)),
            Err(e) if e.is_parse_failure() => {
                let retry_prompt = format!("{prompt}{}", self.prompter.format_reminder(role));
                let raw = ask(&retry_prompt)?;
                parse(&raw)
                    .map(|parsed| (retry_prompt, parsed))
                    .map_err(|source| NegotiationError::Parse {
                        turn,
                        agent: agent.id.clone(),
                        source,
                        partial: partial.to_vec(),
                    })
            }
            Err(source) => Err(NegotiationError::Prompt {
                turn,
                source,
                partial: partial.to_vec(),
            }),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockScript, ScriptedBackend};
    use crate::domain::SentimentLabel;
    use crate::prompting::Templates;
    use crate::retrieval::NoDemos;

    fn negotiator(script: MockScript, agents: &[&str], max_turns: u32) -> (Negotiator, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(script));
        let mut reg = AgentRegistry::new();
        for id in agents {
            reg.insert(Agent::new(*id, "m", backend.clone()));
        }
        let config = NegotiationConfig {
            max_turns,
            ..Default::default()
        };
        let prompter = Prompter::new(LabelSpace::binary(), config, Templates::default());
        (Negotiator::new(reg, prompter, Arc::new(NoDemos)).unwrap(), backend)
    }

    fn input() -> Example {
        Example::new("x1", "An uneven but charming film.").unwrap()
    }

    const POS: &str = "The input contains positive sentiment.";
    const NEG: &str = "The input contains negative sentiment.";
    const YES: &str = "Yes. The decision is right.";
    const NO_NEG: &str = "No. It is sarcastic. The input contains negative sentiment.";

    fn label(s: &str) -> SentimentLabel {
        LabelSpace::binary().get(s).unwrap()
    }

    #[test]
    fn immediate_agreement() {
        let (n, _) = negotiator(MockScript::new().with("g", [POS]).with("d", [YES]), &["g", "d"], 3);
        let t = n.run_negotiation(&AgentPair::new("g", "d"), &input()).unwrap();
        assert_eq!(t.outcome, NegotiationOutcome::consensus(label("positive"), 2));
    }

    #[test]
    fn generator_adopts_discriminator_label() {
        let (n, backend) = negotiator(MockScript::new().with("g", [POS, NEG]).with("d", [NO_NEG]), &["g", "d"], 3);
        let t = n.run_negotiation(&AgentPair::new("g", "d"), &input()).unwrap();
        assert_eq!(t.outcome, NegotiationOutcome::consensus(label("negative"), 3));
        assert!(t.turns[2].prompt.contains(&format!("Response from the last turn:\n{NO_NEG}")));
        assert_eq!(backend.call_count(), 3);
    }

    #[test]
    fn stubborn_generator_ends_without_consensus() {
        let (n, _) = negotiator(MockScript::new().with("g", [POS, POS]).with("d", [NO_NEG]), &["g", "d"], 3);
        let t = n.run_negotiation(&AgentPair::new("g", "d"), &input()).unwrap();
        assert_eq!(t.outcome, NegotiationOutcome::no_consensus(3));
    }

    #[test]
    fn single_turn_is_vanilla() {
        let (n, backend) = negotiator(MockScript::new().with("g", [NEG]), &["g"], 3);
        let t = n.run_vanilla("g", &input()).unwrap();
        assert_eq!(t.outcome, NegotiationOutcome::consensus(label("negative"), 1));
        assert_eq!(backend.call_count(), 1);
    }

    #[test]
    fn unparseable_answer_is_retried_once() {
        let (n, backend) = negotiator(
            MockScript::new().with("g", ["It's lovely!", POS]).with("d", [YES]),
            &["g", "d"],
            3,
        );
        let t = n.run_negotiation(&AgentPair::new("g", "d"), &input()).unwrap();
        assert!(t.outcome.is_consensus());
        assert_eq!(backend.call_count(), 3);
        assert!(t.turns[0].prompt.ends_with(&n.prompter().format_reminder(Role::Generator)));
    }

    #[test]
    fn second_parse_failure_carries_partial_transcript() {
        let (n, _) = negotiator(
            MockScript::new().with("g", [POS]).with("d", ["Hmm.", "Perhaps."]),
            &["g", "d"],
            3,
        );
        let err = n.run_negotiation(&AgentPair::new("g", "d"), &input()).unwrap_err();
        assert!(matches!(err, NegotiationError::Parse { turn: 2, .. }));
        assert_eq!(err.partial().len(), 1);
        assert!(!err.is_transport());
    }

    #[test]
    fn backend_failure_is_transport() {
        let (n, _) = negotiator(MockScript::new().with("g", [POS]), &["g", "d"], 3);
        let err = n.run_negotiation(&AgentPair::new("g", "d"), &input()).unwrap_err();
        assert!(err.is_transport());
        assert_eq!(err.partial().len(), 1);
    }

    #[test]
    fn dual_sides_are_independent() {
        let (n, _) = negotiator(
            MockScript::new().with("a", [POS]).with("b", [YES]),
            &["a", "b"],
            3,
        );
        let dual = n.run_dual("a", "b", &input());
        let ab = dual.ab.unwrap();
        assert_eq!((ab.gen_agent.as_str(), ab.disc_agent.as_str()), ("a", "b"));
        assert!(dual.ba.is_err());
    }

    #[test]
    fn self_pair_transcripts_name_one_agent() {
        let (n, _) = negotiator(MockScript::new().with("a", [POS, YES, POS, YES]), &["a"], 3);
        let dual = n.run_dual("a", "a", &input());
        for t in [dual.ab.unwrap(), dual.ba.unwrap()] {
            assert_eq!(t.gen_agent, "a");
            assert_eq!(t.disc_agent, "a");
        }
    }

    #[test]
    fn arbitration_votes_over_six() {
        let script = MockScript::new()
            .with("a", [POS, YES, YES, POS])
            .with("b", [YES, NEG, YES, NEG])
            .with("c", [POS, YES, POS, YES]);
        let (n, _) = negotiator(script, &["a", "b", "c"], 3);
        let dual = n.run_dual("a", "b", &input());
        let (ab, ba) = (dual.ab.unwrap(), dual.ba.unwrap());
        assert_eq!(reconcile(&ab.outcome, &ba.outcome), Reconciliation::Escalate);
        let arb = n.arbitrate("c", "a", "b", &input(), [&ab, &ba]).unwrap();
        assert_eq!(arb.transcripts.len(), 4);
        assert_eq!(arb.vote.tally.count(&label("positive")), 4);
        assert_eq!(arb.vote.label, label("positive"));
        assert!(matches!(
            n.arbitrate("a", "a", "b", &input(), [&ab, &ba]),
            Err(NegotiationError::InvalidArbiter(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn any_script_terminates_soundly(
            gen in proptest::collection::vec(0usize..3, 0..5),
            disc in proptest::collection::vec(0usize..4, 0..5),
            max_turns in 1u32..7,
        ) {
            const GEN: [&str; 3] = [POS, NEG, "Hard to say."];
            const DISC: [&str; 4] = [YES, NO_NEG, "No. The input contains positive sentiment.", "Maybe."];
            let script = MockScript::new()
                .with("g", gen.iter().map(|&i| GEN[i]))
                .with("d", disc.iter().map(|&i| DISC[i]));
            let (n, _) = negotiator(script, &["g", "d"], max_turns);
            match n.run_negotiation(&AgentPair::new("g", "d"), &input()) {
                Ok(t) => {
                    proptest::prop_assert!(t.turns.len() as u32 <= max_turns);
                    proptest::prop_assert_eq!(t.turns.len() as u32, t.outcome.turns_used());
                    for (i, turn) in t.turns.iter().enumerate() {
                        proptest::prop_assert_eq!(turn.index, i as u32 + 1);
                        proptest::prop_assert_eq!(turn.role(), Role::for_index(turn.index));
                    }
                    if let Some(decision) = t.outcome.decision() {
                        let k = t.turns.len();
                        proptest::prop_assert_eq!(t.turns[k - 1].decision(), decision);
                        if k > 1 {
                            proptest::prop_assert_eq!(t.turns[k - 2].decision(), decision);
                        }
                    } else {
                        proptest::prop_assert_eq!(t.turns.len() as u32, max_turns);
                    }
                }
                Err(e) => proptest::prop_assert!(matches!(e.kind(), "parse" | "backend")),
            }
        }
    }
}
