//! Decision-dependent robust optimization (DDRO) toolkit.
//!
//! Builds, reformulates, solves, and verifies robust counterparts of the
//! shortest path, knapsack, and portfolio selection problems under
//! decision-dependent uncertainty sets (budgeted, continuous knapsack,
//! discrete knapsack). Continuous sets are handled through classic robust
//! dualization and through duality/KKT single-level reformulations of the
//! equivalent bilevel problem; discrete sets go through a bilevel model
//! that is solved exactly at desk scale or exported for an external
//! mixed-integer bilevel solver.

pub mod bilevel;
pub mod harness;
pub mod instgen;
pub mod model;
pub mod oracles;
pub mod problems;
pub mod reformulate;
pub mod solver;
pub mod uncertainty;
