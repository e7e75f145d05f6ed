//! Neural-cellular-automaton environment generators trained with
//! quality-diversity search.
//!
//! The crate covers the whole loop: grid environments and their analytic
//! measures ([`env`], [`metrics`], [`validate`]), deterministic NCA inference
//! ([`nca`]), archives and Gaussian search ([`qd`]), constraint repair
//! ([`repair`]), lifelong multi-agent simulation ([`sim`]), and the training
//! / scaling / rendering pipeline ([`pipeline`]).

pub mod env;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod nca;
pub mod pipeline;
pub mod qd;
pub mod repair;
pub mod sim;
pub mod validate;

pub use env::{Coord, Domain, Environment, TileType};
pub use error::{Error, Result};
pub use metrics::{environment_entropy, similarity, SimilarityWeights};
pub use nca::{make_seed, NcaArchitecture, NcaGenerator, OneHotGrid};
pub use validate::{validate, Constraints, ValidityReport};
