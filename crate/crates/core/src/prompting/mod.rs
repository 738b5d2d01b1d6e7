//! Prompt rendering and response parsing.

mod grammar;
mod template;

use thiserror::Error;

use crate::domain::{
    DiscriminatorDemo, DiscriminatorResponse, Example, GeneratorDemo, GeneratorResponse, LabelSpace,
    NegotiationConfig, Role, SentimentLabel,
};

pub use grammar::{
    decision_statement, format_discriminator_response, format_generator_response,
    parse_discriminator_response, parse_generator_response, parse_steps, RATIONALE_DELIMITER,
};
pub use template::{
    PromptTemplate, Section, Templates, DEFAULT_DISCRIMINATOR_TEMPLATE, DEFAULT_GENERATOR_TEMPLATE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("demonstration {index} is invalid: {reason}")]
    InvalidDemo { index: usize, reason: String },
    #[error("label {0} is not in the task label space")]
    LabelOutsideSpace(SentimentLabel),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("no decision found in response {raw:?}")]
    NoDecision { raw: String },
    #[error("response does not start with yes or no: {raw:?}")]
    NoAttitude { raw: String },
}

impl PromptError {
    /// True for failures to read a model answer (as opposed to bad inputs).
    pub fn is_parse_failure(&self) -> bool {
        matches!(self, PromptError::NoDecision { .. } | PromptError::NoAttitude { .. })
    }
}

/// Renders prompts for one task: label space, task descriptions, reasoning
/// switch and templates are fixed at construction.
#[derive(Debug, Clone)]
pub struct Prompter {
    space: LabelSpace,
    config: NegotiationConfig,
    templates: Templates,
}

impl Prompter {
    pub fn new(space: LabelSpace, config: NegotiationConfig, templates: Templates) -> Self {
        Self {
            space,
            config,
            templates,
        }
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn config(&self) -> &NegotiationConfig {
        &self.config
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    fn generator_task(&self) -> String {
        let format = if self.config.reasoning_enabled {
            format!(
                "Start your response with \"The input contains <sentiment> sentiment.\" Then write \"{RATIONALE_DELIMITER}\" followed by your step-by-step reasoning, one step per line, as \"Step 1: ...\", \"Step 2: ...\"."
            )
        } else {
            "Respond with exactly one sentence: \"The input contains <sentiment> sentiment.\"".to_string()
        };
        format!(
            "{}\nChoose one of: {}.\n{format}",
            self.config.task_description_gen,
            self.space.listing()
        )
    }

    fn discriminator_task(&self) -> String {
        let format = if self.config.reasoning_enabled {
            "Start your response with \"Yes\" if the decision is correct or \"No\" if it is not, then explain why. If you answer \"No\", finish with \"The input contains <sentiment> sentiment.\" naming the correct sentiment."
        } else {
            "Start your response with \"Yes\" if the decision is correct or \"No\" if it is not. If you answer \"No\", follow it with \"The input contains <sentiment> sentiment.\" naming the correct sentiment."
        };
        format!(
            "{}\nChoose one of: {}.\n{format}",
            self.config.task_description_disc,
            self.space.listing()
        )
    }

    fn input_section(input: &Example) -> String {
        match &input.topic {
            Some(topic) => format!("{}\nTopic: {topic}", input.text),
            None => input.text.clone(),
        }
    }

    fn check_demo(&self, index: usize, decision: &SentimentLabel, reasoning: &[String]) -> Result<(), PromptError> {
        if !self.space.contains(decision) {
            return Err(PromptError::InvalidDemo {
                index,
                reason: format!("decision {decision} is outside the label space"),
            });
        }
        if !self.config.reasoning_enabled && !reasoning.is_empty() {
            return Err(PromptError::InvalidDemo {
                index,
                reason: "carries reasoning while reasoning is disabled".into(),
            });
        }
        Ok(())
    }

    fn reasoning<'a>(&self, steps: &'a [String]) -> &'a [String] {
        if self.config.reasoning_enabled {
            steps
        } else {
            &[]
        }
    }

    pub fn generator_prompt(
        &self,
        demos: &[GeneratorDemo],
        input: &Example,
        last: Option<&DiscriminatorResponse>,
    ) -> Result<String, PromptError> {
        let mut rendered = Vec::with_capacity(demos.len());
        for (i, demo) in demos.iter().enumerate() {
            self.check_demo(i, &demo.decision, &demo.reasoning)?;
            rendered.push(format!(
                "Example {}:\nInput: {}\nResponse: {}",
                i + 1,
                demo.input,
                format_generator_response(&demo.decision, self.reasoning(&demo.reasoning))
            ));
        }
        let task = self.generator_task();
        let demos = rendered.join("\n\n");
        let input = Self::input_section(input);
        Ok(self.templates.generator.render([
            Some(&task),
            Some(&demos),
            Some(&input),
            last.map(|r| r.raw.as_str()),
        ]))
    }

    pub fn discriminator_prompt(
        &self,
        demos: &[DiscriminatorDemo],
        input: &Example,
        gen_response: &GeneratorResponse,
    ) -> Result<String, PromptError> {
        if !self.space.contains(&gen_response.decision) {
            return Err(PromptError::LabelOutsideSpace(gen_response.decision.clone()));
        }
        let mut rendered = Vec::with_capacity(demos.len());
        for (i, demo) in demos.iter().enumerate() {
            self.check_demo(i, &demo.decision, &demo.reasoning)?;
            if !self.space.contains(&demo.disc_decision) {
                return Err(PromptError::InvalidDemo {
                    index: i,
                    reason: format!("discriminator decision {} is outside the label space", demo.disc_decision),
                });
            }
            let explanation = self.config.reasoning_enabled.then_some(demo.explanation.as_str());
            rendered.push(format!(
                "Example {}:\nInput: {}\nGenerator response: {}\nDiscriminator response: {}",
                i + 1,
                demo.input,
                format_generator_response(&demo.decision, self.reasoning(&demo.reasoning)),
                format_discriminator_response(demo.attitude, explanation, &demo.disc_decision)
            ));
        }
        let task = self.discriminator_task();
        let demos = rendered.join("\n\n");
        let input = Self::input_section(input);
        Ok(self.templates.discriminator.render([
            Some(&task),
            Some(&demos),
            Some(&input),
            Some(&gen_response.raw),
        ]))
    }

    /// Appended to a prompt once after an unparseable answer.
    pub fn format_reminder(&self, role: Role) -> String {
        match role {
            Role::Generator => format!(
                "\n\nYour previous answer did not follow the required format. Begin with \"The input contains <sentiment> sentiment.\" where <sentiment> is one of: {}.",
                self.space.listing()
            ),
            Role::Discriminator => format!(
                "\n\nYour previous answer did not follow the required format. Begin with \"Yes\" or \"No\". If \"No\", include \"The input contains <sentiment> sentiment.\" where <sentiment> is one of: {}.",
                self.space.listing()
            ),
        }
    }

    pub fn parse_generator(&self, raw: &str) -> Result<GeneratorResponse, PromptError> {
        let mut parsed = parse_generator_response(raw, &self.space)?;
        if !self.config.reasoning_enabled {
            parsed.reasoning.clear();
        }
        Ok(parsed)
    }

    pub fn parse_discriminator(
        &self,
        raw: &str,
        gen_decision: &SentimentLabel,
    ) -> Result<DiscriminatorResponse, PromptError> {
        parse_discriminator_response(raw, &self.space, gen_decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Attitude;

    fn prompter(reasoning: bool) -> Prompter {
        Prompter::new(
            LabelSpace::binary(),
            NegotiationConfig {
                reasoning_enabled: reasoning,
                ..Default::default()
            },
            Templates::default(),
        )
    }

    fn pos() -> SentimentLabel {
        LabelSpace::binary().get("positive").unwrap()
    }

    fn input() -> Example {
        Example::new("t1", "A warm, funny film.").unwrap()
    }

    #[test]
    fn generator_sections_in_order() {
        let p = prompter(true);
        let demo = GeneratorDemo {
            input: "Great acting.".into(),
            reasoning: vec!["praise for acting".into()],
            decision: pos(),
        };
        let out = p.generator_prompt(&[demo], &input(), None).unwrap();
        let task = out.find("Please determine the overall sentiment").unwrap();
        let demos = out.find("Here are some demonstrations:").unwrap();
        let test = out.find("Test input:").unwrap();
        assert!(task < demos && demos < test);
        assert!(!out.contains("Response from the last turn"));
    }

    #[test]
    fn last_response_is_quoted_verbatim() {
        let p = prompter(true);
        let raw = "No.  The review is ironic!\nThe input contains negative sentiment.";
        let last = p.parse_discriminator(raw, &pos()).unwrap();
        let out = p.generator_prompt(&[], &input(), Some(&last)).unwrap();
        assert!(out.contains(&format!("Response from the last turn:\n{raw}\n")));
        assert!(!out.contains("Here are some demonstrations"));
    }

    #[test]
    fn reasoning_disabled_has_no_rationale_delimiter() {
        let p = prompter(false);
        let demo = GeneratorDemo {
            input: "Great acting.".into(),
            reasoning: vec![],
            decision: pos(),
        };
        let out = p.generator_prompt(&[demo.clone()], &input(), None).unwrap();
        assert!(!out.contains(RATIONALE_DELIMITER));
        assert!(!out.contains("Step"));
        let ddemo = DiscriminatorDemo::new(demo, Attitude::Yes, "The input contains positive sentiment.", pos()).unwrap();
        let gen = p.parse_generator("The input contains positive sentiment.").unwrap();
        let out = p.discriminator_prompt(&[ddemo], &input(), &gen).unwrap();
        assert!(!out.contains(RATIONALE_DELIMITER));
    }

    #[test]
    fn reasoning_disabled_rejects_demos_with_reasoning() {
        let p = prompter(false);
        let demo = GeneratorDemo {
            input: "x".into(),
            reasoning: vec!["a step".into()],
            decision: pos(),
        };
        assert!(matches!(
            p.generator_prompt(&[demo], &input(), None),
            Err(PromptError::InvalidDemo { index: 0, .. })
        ));
    }

    #[test]
    fn out_of_space_demo_is_invalid() {
        let p = prompter(true);
        let demo = GeneratorDemo {
            input: "x".into(),
            reasoning: vec![],
            decision: LabelSpace::ternary().get("neutral").unwrap(),
        };
        assert!(matches!(p.generator_prompt(&[demo], &input(), None), Err(PromptError::InvalidDemo { .. })));
    }

    #[test]
    fn discriminator_embeds_generator_raw_and_skips_empty_demos() {
        let p = prompter(true);
        let raw = "The input contains positive sentiment.\nRationale:\nStep 1: warm, funny.";
        let gen = p.parse_generator(raw).unwrap();
        let out = p.discriminator_prompt(&[], &input(), &gen).unwrap();
        assert!(out.contains("contains positive sentiment"));
        assert!(out.contains(raw));
        assert!(!out.contains("demonstrations"));
        assert!(out.starts_with("Please determine whether the decision is correct."));
    }

    #[test]
    fn topic_is_a_labeled_input_line() {
        let p = prompter(true);
        let ex = input().with_topic("Star Wars");
        let out = p.generator_prompt(&[], &ex, None).unwrap();
        assert!(out.contains("Test input:\nA warm, funny film.\nTopic: Star Wars"));
    }

    #[test]
    fn rendering_is_deterministic_and_input_sensitive() {
        let p = prompter(true);
        let a = p.generator_prompt(&[], &input(), None).unwrap();
        let b = p.generator_prompt(&[], &input(), None).unwrap();
        assert_eq!(a, b);
        let other = Example::new("t2", "A warm, funny film!").unwrap();
        assert_ne!(a, p.generator_prompt(&[], &other, None).unwrap());
    }
}
