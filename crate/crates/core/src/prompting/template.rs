use std::fs;
use std::path::Path;

use super::PromptError;

/// Section kinds, in the only order a template may place them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Section {
    Task,
    Demos,
    Input,
    LastResponse,
}

impl Section {
    pub const ALL: [Section; 4] = [Section::Task, Section::Demos, Section::Input, Section::LastResponse];

    pub fn placeholder(self) -> &'static str {
        match self {
            Section::Task => "{{task}}",
            Section::Demos => "{{demos}}",
            Section::Input => "{{input}}",
            Section::LastResponse => "{{last_response}}",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Block {
    text: String,
    section: Option<Section>,
}

/// A prompt template: blank-line separated blocks, each holding at most one
/// `{{section}}` placeholder. A block whose section is absent is dropped
/// whole, so headers travel with their section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    blocks: Vec<Block>,
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let normalized = source.replace("\r\n", "\n");
        let mut blocks = Vec::new();
        let mut seen = Vec::new();
        for raw in normalized.trim().split("\n\n") {
            let text = raw.trim_matches('\n');
            if text.is_empty() {
                continue;
            }
            let present: Vec<Section> = Section::ALL
                .into_iter()
                .filter(|s| text.contains(s.placeholder()))
                .collect();
            for s in &present {
                if text.matches(s.placeholder()).count() > 1 {
                    return Err(PromptError::InvalidTemplate(format!(
                        "{} appears more than once",
                        s.placeholder()
                    )));
                }
            }
            let stray = text.matches("{{").count() != present.len();
            if stray {
                return Err(PromptError::InvalidTemplate(format!(
                    "unknown placeholder in block {text:?}"
                )));
            }
            let section = match present.as_slice() {
                [] => None,
                [one] => Some(*one),
                _ => {
                    return Err(PromptError::InvalidTemplate(format!(
                        "block {text:?} holds more than one placeholder"
                    )))
                }
            };
            if let Some(s) = section {
                if seen.contains(&s) {
                    return Err(PromptError::InvalidTemplate(format!(
                        "{} appears more than once",
                        s.placeholder()
                    )));
                }
                seen.push(s);
            }
            blocks.push(Block {
                text: text.to_string(),
                section,
            });
        }
        if seen != Section::ALL {
            return Err(PromptError::InvalidTemplate(format!(
                "template must contain {{{{task}}}}, {{{{demos}}}}, {{{{input}}}}, {{{{last_response}}}} once each and in that order; found {seen:?}"
            )));
        }
        Ok(Self { blocks })
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let source = fs::read_to_string(path)
            .map_err(|e| PromptError::InvalidTemplate(format!("{}: {e}", path.display())))?;
        Self::parse(&source)
    }

    /// `values` is indexed like [`Section::ALL`]; `None` or empty drops the block.
    pub fn render(&self, values: [Option<&str>; 4]) -> String {
        let value_of = |s: Section| values[s as usize].filter(|v| !v.is_empty());
        self.blocks
            .iter()
            .filter_map(|block| match block.section {
                None => Some(block.text.clone()),
                Some(s) => value_of(s).map(|v| block.text.replace(s.placeholder(), v)),
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

pub const DEFAULT_GENERATOR_TEMPLATE: &str = include_str!("../../templates/generator.txt");
pub const DEFAULT_DISCRIMINATOR_TEMPLATE: &str = include_str!("../../templates/discriminator.txt");

/// The generator and discriminator templates in use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub generator: PromptTemplate,
    pub discriminator: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            generator: PromptTemplate::parse(DEFAULT_GENERATOR_TEMPLATE).expect("bundled template"),
            discriminator: PromptTemplate::parse(DEFAULT_DISCRIMINATOR_TEMPLATE)
                .expect("bundled template"),
        }
    }
}

impl Templates {
    /// Loads overrides; `None` keeps the bundled template for that role.
    pub fn load(generator: Option<&Path>, discriminator: Option<&Path>) -> Result<Self, PromptError> {
        let defaults = Self::default();
        Ok(Self {
            generator: generator.map(PromptTemplate::load).transpose()?.unwrap_or(defaults.generator),
            discriminator: discriminator
                .map(PromptTemplate::load)
                .transpose()?
                .unwrap_or(defaults.discriminator),
        })
    }
}
