//! Generator/discriminator negotiation for sentiment classification with
//! large language models.

pub mod backend;
pub mod domain;
pub mod prompting;
pub mod retrieval;
pub mod negotiation;
pub mod evaluation;
