//! Belief-function heads and logical consistency for two-level hierarchical
//! classification.
//!
//! The crate covers the whole numeric pipeline that sits on top of a frozen
//! feature extractor:
//!
//! * [`hierarchy`]: label spaces, the fine to coarse parent map and its lift to sets.
//! * [`belief`]: focal sets, restricted Möbius inversion, the Ω remainder,
//!   the pignistic transform, mass penalties and the focal-set BCE.
//! * [`fuzzy`]: membership functions and t-norms with their derivatives.
//! * [`consistency`]: the belief-based consistency score, its loss and gradients,
//!   and the weighted total loss.
//! * [`budget`]: k-means driven induction of focal-set families.
//! * [`decode`]: constrained coarse decoding from pignistic probabilities.
//! * [`metrics`]: accuracy, ECE, entropy, macro PRF, coverage and Ω statistics.
//! * [`train`]: linear focal-set heads trained with hand-written gradients.
//! * [`predictions`]: the belief prediction interchange file.

pub mod belief;
pub mod budget;
pub mod consistency;
pub mod decode;
mod error;
pub mod fuzzy;
pub mod hierarchy;
pub mod metrics;
pub mod predictions;
pub mod train;

pub use error::{Error, Result};
