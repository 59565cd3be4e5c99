//! Federated construction of graph-filter recommenders.
//!
//! Clients each hold one private row of the user-item interaction matrix.
//! Using secure aggregation, a server computes the normalized item-item
//! matrix and an ideal low-pass filter without seeing any row, then the
//! filters score items exactly as a centralized GF-CF or Turbo-CF model
//! would.

pub mod dataset;
pub mod linalg;
pub mod secagg;
pub mod protocol;
pub mod recommender;
pub mod eval;
pub mod costmodel;
