//! Family-size decompositions of finite ultrametric measure spaces.
//!
//! The crate covers the tree representation and its structural operators
//! ([`umspace`]), ranked profiles and the decomposition path ([`profiles`]),
//! distance-matrix distributions and distances between spaces
//! ([`measures`]), the two inverse problems ([`reconstruct`]) and the
//! Moran / Kingman simulators ([`coalsim`]).

pub mod coalsim;
pub mod error;
pub mod gen;
pub mod measures;
pub mod profiles;
pub mod reconstruct;
pub mod rng;
pub mod stats;
pub mod umspace;

pub use error::{Error, Result};
