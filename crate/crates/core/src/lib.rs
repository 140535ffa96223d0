//! Sparse coarse correlated equilibria of Markov games and their relation to
//! Nash equilibria of normal-form games.

pub mod aggregation;
pub mod constructions;
pub mod equilibria;
pub mod error;
pub mod exact;
pub mod extraction;
pub mod factory;
pub mod games;
pub mod policies;
pub mod random;
pub mod rng;

pub use error::{Error, Result};
pub use exact::Exact;
pub use extraction::{
    algorithm1_extract, algorithm2_extract, Algorithm2Params, Algorithm2Run, Extraction,
    Provenance, QueryReport, SparseCceCertificate,
};
pub use factory::{BuiltGame, ConstructionKind, FixtureCatalog};
pub use games::{
    game_size, validate_normal_form, GameDocument, GenerativeModelOracle, MarkovGame,
    NormalFormGame, PayoffOracle, ValidationReport,
};
pub use policies::{
    DeterministicPolicy, DistributionalPolicy, MarkovPolicy, PolicyProgram, ProductPolicy,
    Trajectory,
};
