pub mod apps;
pub mod baselines;
pub mod constraints;
pub mod demand;
pub mod error;
pub mod lp;
pub mod meta_policy;
pub mod optimizer;
pub mod stream;
pub mod two_echelon;

pub use error::{Error, Result};
