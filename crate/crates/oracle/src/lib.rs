//! Slow, obviously-correct reference implementations for testing.
//!
//! Nothing here shares code with the algorithms under test beyond the data
//! types: STL is evaluated by direct recursion over sample indices, tube
//! membership by playing out the control/disturbance game over trajectory
//! histories, and satisfiability by enumerating control sequences.

pub mod game;
pub mod gen;
pub mod stl;
pub mod suites;

pub use game::LatticeGame;
