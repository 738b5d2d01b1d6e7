//! The response grammar shared by prompts and parsers.
//!
//! ```text
//! generator:      The input contains <label> sentiment. [Rationale: Step 1: ... Step 2: ...]
//! discriminator:  Yes|No <explanation> [The input contains <label> sentiment.]
//! ```

use std::sync::LazyLock;

use regex::Regex;

use super::PromptError;
use crate::domain::{Attitude, DiscriminatorResponse, GeneratorResponse, LabelSpace, SentimentLabel};

pub const RATIONALE_DELIMITER: &str = "Rationale:";

static DECISION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)the\s+input\s+contains\s+[*_`'\x22]*([a-z][a-z_-]*)[*_`'\x22]*\s+sentiment")
        .expect("decision pattern")
});
static RATIONALE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)rationale\s*:").expect("rationale pattern"));
static STEP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)step\s*\d+\s*:").expect("step pattern"));

pub fn decision_statement(label: &SentimentLabel) -> String {
    format!("The input contains {label} sentiment.")
}

/// Serializes a generator answer under the grammar.
pub fn format_generator_response(decision: &SentimentLabel, reasoning: &[String]) -> String {
    let mut out = decision_statement(decision);
    if !reasoning.is_empty() {
        out.push('\n');
        out.push_str(RATIONALE_DELIMITER);
        for (i, step) in reasoning.iter().enumerate() {
            out.push_str(&format!("\nStep {}: {}", i + 1, step));
        }
    }
    out
}

/// Serializes a discriminator answer under the grammar.
pub fn format_discriminator_response(
    attitude: Attitude,
    explanation: Option<&str>,
    decision: &SentimentLabel,
) -> String {
    let head = match attitude {
        Attitude::Yes => "Yes.",
        Attitude::No => "No.",
    };
    match explanation {
        Some(e) if !e.trim().is_empty() => format!("{head} {} {}", e.trim(), decision_statement(decision)),
        _ => format!("{head} {}", decision_statement(decision)),
    }
}

/// Ordered `Step <n>:` segments of `text`. Text before the first marker is ignored.
pub fn parse_steps(text: &str) -> Vec<String> {
    let marks: Vec<_> = STEP.find_iter(text).collect();
    marks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let end = marks.get(i + 1).map_or(text.len(), |next| next.start());
            text[m.end()..end].trim().to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

fn first_decision(raw: &str, space: &LabelSpace) -> Result<SentimentLabel, PromptError> {
    let caps = DECISION.captures(raw).ok_or_else(|| PromptError::NoDecision {
        raw: raw.to_string(),
    })?;
    space
        .get(&caps[1].to_lowercase())
        .ok_or_else(|| PromptError::NoDecision { raw: raw.to_string() })
}

pub fn parse_generator_response(raw: &str, space: &LabelSpace) -> Result<GeneratorResponse, PromptError> {
    let decision = first_decision(raw, space)?;
    let reasoning = match RATIONALE.find(raw) {
        None => Vec::new(),
        Some(m) => {
            let rationale = raw[m.end()..].trim();
            let steps = parse_steps(rationale);
            if steps.is_empty() && !rationale.is_empty() {
                vec![rationale.to_string()]
            } else {
                steps
            }
        }
    };
    Ok(GeneratorResponse {
        decision,
        reasoning,
        raw: raw.to_string(),
    })
}

pub fn parse_discriminator_response(
    raw: &str,
    space: &LabelSpace,
    gen_decision: &SentimentLabel,
) -> Result<DiscriminatorResponse, PromptError> {
    let body = raw.trim_start_matches(|c: char| !c.is_alphanumeric());
    let token_end = body
        .find(|c: char| !c.is_alphabetic())
        .unwrap_or(body.len());
    let attitude = match body[..token_end].to_lowercase().as_str() {
        "yes" => Attitude::Yes,
        "no" => Attitude::No,
        _ => return Err(PromptError::NoAttitude { raw: raw.to_string() }),
    };
    let explanation = body[token_end..]
        .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ':' | ';' | '!' | '-' | '*'))
        .trim_end()
        .to_string();
    let decision = match attitude {
        Attitude::Yes => gen_decision.clone(),
        Attitude::No => first_decision(&explanation, space)?,
    };
    Ok(DiscriminatorResponse {
        attitude,
        explanation,
        decision,
        raw: raw.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l(s: &str) -> SentimentLabel {
        LabelSpace::ternary().get(s).unwrap()
    }

    #[test]
    fn generator_examples() {
        let bin = LabelSpace::binary();
        let r = parse_generator_response("The input contains positive sentiment. Rationale: Step 1: warm tone.", &bin).unwrap();
        assert_eq!(r.decision, l("positive"));
        assert_eq!(r.reasoning, vec!["warm tone."]);

        let r = parse_generator_response("the input contains NEGATIVE sentiment.", &bin).unwrap();
        assert_eq!(r.decision, l("negative"));
        assert!(r.reasoning.is_empty());

        assert!(matches!(
            parse_generator_response("I think it is good.", &bin),
            Err(PromptError::NoDecision { .. })
        ));
    }

    #[test]
    fn generator_takes_first_match_and_rejects_outside_labels() {
        let bin = LabelSpace::binary();
        let r = parse_generator_response(
            "The input contains negative sentiment. One could argue the input contains positive sentiment.",
            &bin,
        )
        .unwrap();
        assert_eq!(r.decision, l("negative"));
        assert!(parse_generator_response("The input contains neutral sentiment.", &bin).is_err());
        let r = parse_generator_response("The input contains **positive** sentiment.", &bin).unwrap();
        assert_eq!(r.decision, l("positive"));
    }

    #[test]
    fn rationale_without_step_markers_is_one_step() {
        let r = parse_generator_response(
            "The input contains positive sentiment.\nRationale: the reviewer praises it.",
            &LabelSpace::binary(),
        )
        .unwrap();
        assert_eq!(r.reasoning, vec!["the reviewer praises it."]);
    }

    #[test]
    fn discriminator_examples() {
        let bin = LabelSpace::binary();
        let r = parse_discriminator_response("Yes. The rationale correctly identifies praise.", &bin, &l("positive")).unwrap();
        assert_eq!(r.attitude, Attitude::Yes);
        assert_eq!(r.decision, l("positive"));
        assert_eq!(r.explanation, "The rationale correctly identifies praise.");

        let r = parse_discriminator_response(
            "No. The review is ironic. The input contains negative sentiment.",
            &bin,
            &l("positive"),
        )
        .unwrap();
        assert_eq!(r.attitude, Attitude::No);
        assert_eq!(r.decision, l("negative"));
        assert!(r.explanation.starts_with("The review is ironic."));

        assert!(matches!(
            parse_discriminator_response("Maybe.", &bin, &l("positive")),
            Err(PromptError::NoAttitude { .. })
        ));
        assert!(matches!(
            parse_discriminator_response("No, I disagree.", &bin, &l("positive")),
            Err(PromptError::NoDecision { .. })
        ));
    }

    #[test]
    fn yes_ignores_later_labels() {
        let r = parse_discriminator_response(
            "Yes. Though some might say the input contains negative sentiment.",
            &LabelSpace::binary(),
            &l("positive"),
        )
        .unwrap();
        assert_eq!(r.decision, l("positive"));
    }

    #[test]
    fn attitude_must_lead_as_a_whole_word() {
        let bin = LabelSpace::binary();
        assert!(parse_discriminator_response("Nope.", &bin, &l("positive")).is_err());
        assert!(parse_discriminator_response("Yesterday it was fine.", &bin, &l("positive")).is_err());
        let r = parse_discriminator_response("**Yes** - fine.", &bin, &l("positive")).unwrap();
        assert_eq!(r.attitude, Attitude::Yes);
    }

    #[test]
    fn steps_parse_in_order() {
        assert_eq!(parse_steps("Step 1: a\nStep 2: b"), vec!["a", "b"]);
        assert_eq!(parse_steps("preamble Step 1: a step 2:b"), vec!["a", "b"]);
        assert!(parse_steps("no markers here").is_empty());
    }

    fn step_text() -> impl Strategy<Value = String> {
        "[A-Za-z ,'.!?]{1,40}"
            .prop_map(|s| s.trim().to_string())
            .prop_filter("non-empty, free of grammar markers", |s| {
                let lower = s.to_lowercase();
                !s.is_empty() && !lower.contains("step") && !lower.contains("rationale")
            })
    }

    proptest! {
        #[test]
        fn generator_round_trip(
            label_idx in 0usize..3,
            steps in proptest::collection::vec(step_text(), 0..5),
        ) {
            let space = LabelSpace::ternary();
            let label = space.labels()[label_idx].clone();
            let raw = format_generator_response(&label, &steps);
            let parsed = parse_generator_response(&raw, &space).unwrap();
            prop_assert_eq!(parsed.decision, label);
            prop_assert_eq!(parsed.reasoning, steps);
        }

        #[test]
        fn discriminator_round_trip(
            agree in any::<bool>(),
            gen_idx in 0usize..3,
            disc_idx in 0usize..3,
            explanation in step_text(),
        ) {
            let space = LabelSpace::ternary();
            let gen = space.labels()[gen_idx].clone();
            let (attitude, decision) = if agree {
                (Attitude::Yes, gen.clone())
            } else {
                (Attitude::No, space.labels()[disc_idx].clone())
            };
            let raw = format_discriminator_response(attitude, Some(&explanation), &decision);
            let parsed = parse_discriminator_response(&raw, &space, &gen).unwrap();
            prop_assert_eq!(parsed.attitude, attitude);
            prop_assert_eq!(parsed.decision, decision);
        }
    }
}
