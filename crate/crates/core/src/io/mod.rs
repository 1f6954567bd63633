//! Data ingestion, simulation, configuration and run orchestration behind
//! the command-line tool.

pub mod config;
pub mod data;
pub mod karate;
pub mod run;
pub mod simulate;
