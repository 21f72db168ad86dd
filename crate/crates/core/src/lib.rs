//! Minimal invariant sets, dual sets and domains of attraction of
//! parameterized set-valued maps, computed on dyadic box covers, with
//! detection of explosions and appearances of minimal sets along parameter
//! sweeps.

pub mod continuation;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod minimal;
pub mod models;
