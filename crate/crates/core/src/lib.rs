pub mod cohort;
pub mod corpus;
pub mod eval;
pub mod exec;
pub mod extraction;
pub mod http;
pub mod plot;
pub mod report;
pub mod retrieval;
pub mod survival;
pub mod synth;
