//! Core algorithms for treating a language model as a domain expert.
//!
//! The crate covers two workflows: zero-shot imputation of tabular data
//! (mean/mode, k-NN, MissForest and a prompted LLM imputer, plus the metrics
//! used to compare them) and prior elicitation (distribution parsing, proper
//! scoring rules and effective sample size). Everything here only needs
//! `alloc`; file formats, HTTP and the CLI live in the `llmexpert` crate.
//!
//! Enable the default `std` feature to train forest trees in parallel.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod distribution;
pub mod downstream;
pub mod elicitation;
pub mod forest;
pub mod gateway;
pub mod impute;
pub mod metrics;
pub mod missingness;
pub mod prompting;
pub mod quadrature;
pub mod records;
pub mod rng;
pub mod special;
pub mod table;
pub mod weather;

pub use distribution::{Family, ParametricDistribution};
pub use gateway::{ChatBackend, ChatExchange, ExchangeSource, GatewayError, MockScript};
pub use impute::{ImputeError, ImputedTable, Method};
pub use missingness::{MaskError, Mechanism, MissingnessMask};
pub use records::EvalRecord;
pub use table::{Cell, ColumnKind, ColumnSchema, Split, TableBundle, TableError};
