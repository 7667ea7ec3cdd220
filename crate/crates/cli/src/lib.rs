//! Command-line interface and HTTP service over a profile-selected stack.

pub mod app;
pub mod cli;
pub mod error;
pub mod format;
pub mod http;
pub mod profile;
pub mod repl;

pub use app::{App, QueryRequest};
pub use error::CliError;
pub use profile::Profile;
