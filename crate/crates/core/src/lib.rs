//! Cooperative cost games from newsvendor inventory centralization.

pub mod acceptance;
pub mod cli;
pub mod coalition;
pub mod config;
pub mod core_geometry;
pub mod demand;
pub mod dynamic;
pub mod error;
pub mod fixtures;
pub mod game;
pub mod lehrer;
pub mod lp;
pub mod rng;
pub mod solutions;

pub use coalition::Coalition;
pub use error::{Error, Result};
pub use game::{CostGame, CostParams};
pub use solutions::{Allocation, WeightProfile};
