//! Visibility-aware local replanning for aerial target scanning.

pub mod bench;
pub mod cli;
pub mod clock;
pub mod config;
pub mod error;
pub mod geom;
pub mod oracle;
pub mod params;
pub mod path;
pub mod phiastar;
pub mod replan;
pub mod scenes;
pub mod sim;
pub mod repair;
pub mod tour;
pub mod vis;
pub mod world;

pub use error::{Error, Result};
