//! Robust STL control on grids.
//!
//! Formulas are turned into trees of reachable tubes computed on a uniform
//! grid over the working space. The tree answers whether an initial state can
//! robustly satisfy the formula and drives an online controller that picks a
//! feasible input at every step.

pub mod bits;
pub mod formula;
pub mod grid;
pub mod reach;
pub mod synth;
pub mod system;
pub mod ttlt;
