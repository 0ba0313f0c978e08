//! Weak-supervision pipeline for commonsense precondition statements.
//!
//! The stages run in this order: [`corpus`] ingestion and segmentation,
//! [`patterns`] labeling functions and the label matrix, [`extraction`] of
//! action/precondition pairs, [`labelmodel`] statistics and vote aggregation,
//! [`augment`] mask-and-fill augmentation, [`maskprep`] conjunction-masked
//! training records, and [`nliconvert`] to a single NLI schema with seeded
//! splits. [`pabi`] computes the informativeness score of an incidental
//! signal from its error rates.

pub mod augment;
pub mod corpus;
pub mod error;
pub mod extraction;
pub mod jsonl;
pub mod labelmodel;
pub mod maskprep;
pub mod nliconvert;
pub mod pabi;
pub mod patterns;
pub mod remote;
pub mod seed;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Precondition polarity: the precondition either allows or prevents the action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    Allow,
    Prevent,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Allow => "ALLOW",
            Polarity::Prevent => "PREVENT",
        }
    }
}

impl std::fmt::Display for Polarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
