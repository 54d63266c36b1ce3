//! Sentence-level section identification for Chinese medical papers.
//!
//! Every sentence of a paper is labeled Pre, Subject, Method, Result,
//! After or Other. Two model families are provided: feature-engineered
//! linear classifiers and a linear-chain CRF ([`classic`]), and the
//! structural BLSTM family ([`neural`]). [`eval`] runs paper-level k-fold
//! experiments and [`downstream`] mines entity co-occurrences from the
//! sentences that survive filtering.

pub mod annotate;
pub mod classic;
pub mod container;
pub mod corpus;
pub mod downstream;
pub mod error;
pub mod eval;
pub mod features;
pub mod neural;
pub mod optim;
pub mod pipeline;
pub mod segmentation;
pub mod selection;

pub use corpus::{Corpus, Document, SectionLabel, Sentence};
pub use error::{Error, Result};
