pub mod analysis;
pub mod extraction;
pub mod llm;
pub mod par;
pub mod pipeline;
pub mod prompting;
pub mod reporting;
pub mod runner;
pub mod syntax;
