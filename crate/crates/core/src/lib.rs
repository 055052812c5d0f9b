//! Hierarchical frequency control of hybrid power plants.
//!
//! The crate covers transfer-function algebra ([`lti`]), frequency-domain
//! design of the frequency response observer ([`analysis`]), asset and
//! controller models ([`assets`], [`hierarchy`]), a single-bus grid
//! ([`grid`]) and the fixed-step simulation kernel ([`simkit`]).

pub mod analysis;
pub mod assets;
pub mod design;
pub mod engine;
pub mod lti;
pub mod poly;
pub mod presets;
pub mod scenario;
pub mod grid;
pub mod hierarchy;
pub mod simkit;
