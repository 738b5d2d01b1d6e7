//! Turns retrieved (input, gold label) pairs into generator triplets and
//! discriminator six-element demonstrations by asking the agents themselves.

use super::RetrievalError;
use crate::backend::Agent;
use crate::domain::{Attitude, DiscriminatorDemo, Example, GeneratorDemo, NegotiationConfig, SentimentLabel};
use crate::prompting::{decision_statement, format_generator_response, parse_steps};

pub fn reasoning_prompt(input: &str, gold: &SentimentLabel) -> String {
    format!(
        "Input: {input}\nSentiment: {gold}\nExplain step by step why the input carries {gold} sentiment. Write each step on its own line as \"Step 1: ...\", \"Step 2: ...\"."
    )
}

pub fn explanation_prompt(demo: &GeneratorDemo) -> String {
    format!(
        "Input: {}\nDecision: {}\nExplain briefly why this decision is correct for the input.",
        demo.input,
        format_generator_response(&demo.decision, &demo.reasoning)
    )
}

const STEP_REMINDER: &str =
    "\n\nYour previous answer contained no steps. Number every step as \"Step 1: ...\", \"Step 2: ...\".";
const EXPLANATION_REMINDER: &str = "\n\nYour previous answer was empty. Give a one or two sentence explanation.";

/// Asks `generator` for a step-by-step rationale of each demo's gold label.
/// The gold label is kept as the triplet's decision whatever the model says.
pub fn infuse_reasoning(
    demos: &[Example],
    generator: &Agent,
    config: &NegotiationConfig,
) -> Result<Vec<GeneratorDemo>, RetrievalError> {
    demos
        .iter()
        .map(|ex| {
            let gold = ex
                .gold
                .clone()
                .ok_or_else(|| RetrievalError::MissingGold(ex.id.clone()))?;
            let reasoning = if config.reasoning_enabled {
                let prompt = reasoning_prompt(&ex.text, &gold);
                let mut steps = parse_steps(&generator.ask(prompt.clone(), config.temperature)?.text);
                if steps.is_empty() {
                    let retry = generator.ask(format!("{prompt}{STEP_REMINDER}"), config.temperature)?;
                    steps = parse_steps(&retry.text);
                }
                if steps.is_empty() {
                    return Err(RetrievalError::MalformedReasoning(ex.id.clone()));
                }
                steps
            } else {
                Vec::new()
            };
            Ok(GeneratorDemo {
                input: ex.text.clone(),
                reasoning,
                decision: gold,
            })
        })
        .collect()
}

/// Extends each triplet with a discriminator explanation of why its decision
/// is correct. All resulting demos carry attitude `yes`.
///
/// With reasoning disabled no model is asked; the explanation is the bare
/// decision statement.
pub fn build_discriminator_demos(
    gen_demos: &[GeneratorDemo],
    discriminator: &Agent,
    config: &NegotiationConfig,
) -> Result<Vec<DiscriminatorDemo>, RetrievalError> {
    if gen_demos.is_empty() {
        return Err(RetrievalError::EmptyDemos);
    }
    gen_demos
        .iter()
        .map(|demo| {
            let explanation = if config.reasoning_enabled {
                let prompt = explanation_prompt(demo);
                let mut text = discriminator.ask(prompt.clone(), config.temperature)?.text;
                if text.trim().is_empty() {
                    text = discriminator
                        .ask(format!("{prompt}{EXPLANATION_REMINDER}"), config.temperature)?
                        .text;
                }
                if text.trim().is_empty() {
                    return Err(RetrievalError::MalformedExplanation(demo.input.clone()));
                }
                text.trim().to_string()
            } else {
                decision_statement(&demo.decision)
            };
            let decision = demo.decision.clone();
            Ok(DiscriminatorDemo::new(demo.clone(), Attitude::Yes, explanation, decision)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::{MockScript, ScriptedBackend};
    use crate::domain::LabelSpace;

    fn agent(id: &str, script: MockScript) -> (Agent, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(script));
        (Agent::new(id, "m", backend.clone()), backend)
    }

    fn labeled(id: &str, text: &str, gold: &str) -> Example {
        Example::new(id, text).unwrap().with_gold(LabelSpace::binary().get(gold).unwrap())
    }

    #[test]
    fn disabled_reasoning_passes_through_without_calls() {
        let (g, backend) = agent("g", MockScript::new());
        let cfg = NegotiationConfig {
            reasoning_enabled: false,
            ..Default::default()
        };
        let out = infuse_reasoning(&[labeled("1", "nice", "positive")], &g, &cfg).unwrap();
        assert!(out[0].reasoning.is_empty());
        assert_eq!(backend.call_count(), 0);
    }

    #[test]
    fn scripted_steps_become_reasoning() {
        let (g, _) = agent("g", MockScript::new().with("g", ["Step 1: praises the cast. Step 2: upbeat ending."]));
        let out = infuse_reasoning(&[labeled("1", "great cast", "positive")], &g, &NegotiationConfig::default()).unwrap();
        assert_eq!(out[0].reasoning, vec!["praises the cast.", "upbeat ending."]);
        assert_eq!(out[0].decision.as_str(), "positive");
        assert_eq!(out[0].input, "great cast");
    }

    #[test]
    fn gold_label_wins_over_model_argument() {
        let (g, _) = agent(
            "g",
            MockScript::new().with("g", ["Step 1: actually this reads as negative. The input contains negative sentiment."]),
        );
        let out = infuse_reasoning(&[labeled("1", "fine", "positive")], &g, &NegotiationConfig::default()).unwrap();
        assert_eq!(out[0].decision.as_str(), "positive");
    }

    #[test]
    fn one_retry_then_malformed() {
        let (g, backend) = agent("g", MockScript::new().with("g", ["no steps", "Step 1: ok"]));
        let out = infuse_reasoning(&[labeled("1", "x", "positive")], &g, &NegotiationConfig::default()).unwrap();
        assert_eq!(out[0].reasoning, vec!["ok"]);
        assert_eq!(backend.call_count(), 2);
        assert!(backend.calls()[1].prompt.ends_with(STEP_REMINDER));

        let (g, _) = agent("g", MockScript::new().with("g", ["nothing", "still nothing"]));
        assert!(matches!(
            infuse_reasoning(&[labeled("1", "x", "positive")], &g, &NegotiationConfig::default()),
            Err(RetrievalError::MalformedReasoning(id)) if id == "1"
        ));
    }

    #[test]
    fn discriminator_demos_preserve_order_and_fields() {
        let (d, _) = agent(
            "d",
            MockScript::new().with("d", ["the phrase great cast is praising", "the word dull is criticism"]),
        );
        let bin = LabelSpace::binary();
        let gen_demos = vec![
            GeneratorDemo {
                input: "great cast".into(),
                reasoning: vec!["a".into(), "b".into()],
                decision: bin.get("positive").unwrap(),
            },
            GeneratorDemo {
                input: "dull".into(),
                reasoning: vec!["c".into()],
                decision: bin.get("negative").unwrap(),
            },
        ];
        let out = build_discriminator_demos(&gen_demos, &d, &NegotiationConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        for (g, dd) in gen_demos.iter().zip(&out) {
            assert_eq!(dd.input, g.input);
            assert_eq!(dd.reasoning, g.reasoning);
            assert_eq!(dd.decision, g.decision);
            assert_eq!(dd.disc_decision, g.decision);
            assert_eq!(dd.attitude, Attitude::Yes);
            assert!(!dd.explanation.is_empty());
        }
        assert_eq!(out[0].explanation, "the phrase great cast is praising");
    }

    #[test]
    fn empty_gen_demos_is_an_error() {
        let (d, _) = agent("d", MockScript::new());
        assert!(matches!(
            build_discriminator_demos(&[], &d, &NegotiationConfig::default()),
            Err(RetrievalError::EmptyDemos)
        ));
    }

    #[test]
    fn blank_explanation_twice_is_malformed() {
        let (d, _) = agent("d", MockScript::new().with("d", ["   ", "\n"]));
        let demo = GeneratorDemo {
            input: "x".into(),
            reasoning: vec![],
            decision: LabelSpace::binary().get("positive").unwrap(),
        };
        assert!(matches!(
            build_discriminator_demos(&[demo], &d, &NegotiationConfig::default()),
            Err(RetrievalError::MalformedExplanation(_))
        ));
    }
}
