//! Scenario-driven front end: satisfiability checks, closed-loop synthesis,
//! trajectory monitoring and tree export.

pub mod commands;
pub mod config;
pub mod monitor;
pub mod trajectory;
