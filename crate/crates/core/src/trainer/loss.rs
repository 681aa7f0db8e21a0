use crate::error::{Error, Result};
use crate::numeric::{contrastive_value, distance};
use crate::scalar::Scalar;

/// `d^2 / 2` when `similar` (label 1), `max(0, margin - d)^2 / 2` otherwise,
/// with `d` the (epsilon-smoothed) Euclidean distance.
pub fn contrastive_loss<T: Scalar>(x1: &[T], x2: &[T], similar: bool, margin: T) -> Result<T> {
    if x1.len() != x2.len() {
        return Err(Error::shape("contrastive_loss", (x1.len(), 1), (x2.len(), 1)));
    }
    if margin <= T::zero() {
        return Err(Error::Config("margin must be positive".into()));
    }
    Ok(contrastive_value(distance(x1, x2), similar, margin))
}
