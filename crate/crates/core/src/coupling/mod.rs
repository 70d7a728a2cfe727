//! Exact assignment and the dataset pairing strategies built on it.

mod assignment;
mod strategy;

pub use assignment::{cost_matrix, solve_assignment, CostMatrix};
pub use strategy::{
    global_coupling, is_permutation, loom_update, minibatch_precompute, pair_batch,
    prepare_coupling, Coupling, PairedBatch, Strategy, GLOBAL_OT_CAP,
};
