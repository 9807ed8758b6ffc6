//! Critical Galton–Watson forests, tree-indexed lattice walks, lattice
//! Green's functions and the capacity of the resulting ranges.

pub mod alias;
pub mod capacity;
pub mod forest;
pub mod green;
pub mod harness;
pub mod lattice;
pub mod linalg;
pub mod offspring;
pub mod seed;
pub mod stats;
pub mod tree_walk;
