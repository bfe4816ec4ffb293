//! Hop-count analysis for Kademlia-type DHTs.
//!
//! A lookup is modelled as a Markov chain over the sorted distances of the α
//! contacts queried in each round. [`markov`] builds the initial distribution
//! and the upper/lower bound transition matrices, [`accuracy`] picks a reduced
//! identifier width that keeps the chain small, and [`sim`] runs the same
//! lookups on explicit random topologies for validation.

pub mod accuracy;
mod binomial;
pub mod contacts;
pub mod error;
pub mod markov;
pub mod report;
pub mod sim;
pub mod state;
pub mod system;

pub use accuracy::{min_bits, reduce_spec, reduction_error, ReductionPlan};
pub use contacts::{bucket_cdf, closest_contacts, target_found_prob, ContactDistribution};
pub use error::{Error, Result};
pub use markov::{
    analyze, initial_distribution, iterate, transition_matrix, Bound, ChurnParams, Distribution,
    HopCountReport, TransitionMatrix,
};
pub use state::{state_count, State, StateSpace};
pub use system::{distance, Preset, SystemSpec, Violation};
