//! The three inventory systems.

pub mod multiechelon;
pub mod multiproduct;
pub mod owms;

pub use multiechelon::MultiEchelon;
pub use multiproduct::MultiProduct;
pub use owms::Owms;

use crate::error::{Error, Result};

pub(crate) fn check_positive(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension { expected: n, got: v.len() });
    }
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidInstance(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

pub(crate) fn pos(x: f64) -> f64 {
    x.max(0.0)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
