//! Unsupervised heterogeneous graph embedding by maximising mutual
//! information between node representations and both a global graph summary
//! and soft cluster summaries.

pub mod cluster;
pub mod corrupt;
pub mod dataio;
pub mod encoder;
pub mod evalkit;
pub mod hetgraph;
pub mod numkit;
pub mod objective;
pub mod seeding;

pub use hetgraph::{HeteroGraph, MetaPathGraph, MetaPathSpec};
pub use numkit::Matrix;
pub use objective::{train, TrainConfig, TrainOutcome};
