//! Workbench for predicting 90-day modified Rankin Scale (mRS) outcomes from
//! free-text discharge summaries with a two-step chain-of-thought pipeline
//! (COPE), plus the baselines and the statistical evaluation layer that goes
//! with it.
//!
//! The crate is organized around the stages of an evaluation run:
//!
//! - [`corpus`] — patient records, ingestion, exclusion rules, the stratified
//!   exploration/test split, text utilities, and demographics summaries
//! - [`backends`] — chat-completion access (OpenAI-compatible HTTP or a
//!   deterministic in-process mock) with caching and retries
//! - [`pipeline`] — prompt templates, the two-step engine, the single-step
//!   baseline, output parsing, and cohort runs with persisted artifacts
//! - [`features`] — rule-based extraction of structured clinical variables,
//!   feature encoding, and the linear SVR baseline
//! - [`stats`] — metrics, bootstrap confidence intervals, paired bootstrap
//!   comparisons with Benjamini-Hochberg control, and subgroup reports
//! - [`synth`] — synthetic discharge summaries with a deterministic outcome
//!   oracle for end-to-end testing without PHI

pub mod backends;
pub mod corpus;
pub mod features;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub(crate) mod rng;
