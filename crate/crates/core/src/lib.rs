pub mod bench;
pub mod corpus;
pub mod dist;
pub mod entropy;
pub mod error;
pub mod markov;
pub mod rate;
pub mod sim;

pub use error::{Error, Result};
