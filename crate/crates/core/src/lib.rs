//! Semantic recognition from temporal single-photon LiDAR histograms.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`scene`] renders procedural depth/reflectivity targets.
//! 2. [`photon_sim`] maps a target to a temporal profile and draws Poisson
//!    photon histograms at a chosen SNR and photon budget.
//! 3. [`net`] trains a probabilistic encoder-decoder whose encoder mean is
//!    the semantic feature of a histogram.
//! 4. [`skb`] matches features against a knowledge base of class
//!    prototypes, flags unknown targets by likelihood, and grows the base
//!    from clusters of unknowns.
//!
//! [`harness`] wires these into the closed-set and open-set evaluation
//! protocols.

mod binio;
pub mod error;
pub mod harness;
pub mod net;
mod nn;
pub mod photon_sim;
pub mod scene;
pub mod seed;
pub mod skb;

pub use binio::write_atomic;
pub use error::{Error, Result};
