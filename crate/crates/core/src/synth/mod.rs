//! Seeded synthetic data for offline runs and tests.

pub mod corpus;
pub mod weibull;
