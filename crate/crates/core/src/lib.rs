pub mod action;
pub mod config;
pub mod context;
pub mod dialog;
pub mod domain;
pub mod error;
pub mod hub;
pub mod nlu;
pub mod norms;
pub mod sim;

pub use error::ConfigError;
