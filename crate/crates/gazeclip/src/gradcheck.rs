//! Finite-difference gradient checking. Central differences on a random
//! subsample of coordinates per parameter; only meaningful in `f64` mode
//! (finite differences drown in rounding noise at 32 bits).

use crate::error::{Error, Result};
use crate::params::ParameterStore;
use rand::seq::index::sample;
use rand::Rng;

/// Minimum coordinates probed per parameter (all of them if smaller).
pub const DEFAULT_COORDS: usize = 100;

/// Relative error between the analytic gradient of one parameter and central
/// finite differences of `loss_fn`. Returns the worst error over the probed
/// coordinates.
pub fn grad_check_param<F>(
    loss_fn: F,
    store: &ParameterStore,
    name: &str,
    analytic: &[f64],
    eps: f64,
    max_coords: usize,
    rng: &mut impl Rng,
) -> Result<f64>
where
    F: Fn(&ParameterStore) -> Result<f64>,
{
    let param = store
        .get(name)
        .ok_or_else(|| Error::Contract(format!("parameter `{}` not in store", name)))?;
    let n = param.numel();
    if analytic.len() != n {
        return Err(Error::Dimension(format!(
            "analytic gradient length {} does not match `{}` ({})",
            analytic.len(),
            name,
            n
        )));
    }
    let coords: Vec<usize> = if n <= max_coords {
        (0..n).collect()
    } else {
        sample(rng, n, max_coords).into_vec()
    };
    let mut working = store.clone();
    let mut worst = 0.0f64;
    for &i in &coords {
        let original = working.get(name).unwrap().values[i];
        working.get_mut(name).unwrap().values[i] = original + eps;
        let plus = loss_fn(&working)?;
        working.get_mut(name).unwrap().values[i] = original - eps;
        let minus = loss_fn(&working)?;
        working.get_mut(name).unwrap().values[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss while probing `{}`[{}]",
                name, i
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// |a - n| / max(1e-3, |a| + |n|): bounded when both gradients are near
/// zero, proportional when either is significant.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic_store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("theta", vec![3], vec![1.0, 2.0, 3.0], false)
            .unwrap();
        s
    }

    fn quadratic_loss(store: &ParameterStore) -> crate::error::Result<f64> {
        Ok(store
            .get("theta")
            .unwrap()
            .values
            .iter()
            .map(|v| v * v)
            .sum())
    }

    #[test]
    fn quadratic_is_checked_to_high_accuracy() {
        let store = quadratic_store();
        let analytic = vec![2.0, 4.0, 6.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = grad_check_param(
            quadratic_loss,
            &store,
            "theta",
            &analytic,
            1e-5,
            DEFAULT_COORDS,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-8, "error {err}");
    }

    #[test]
    fn deliberately_wrong_gradient_is_detected() {
        let store = quadratic_store();
        let wrong = vec![2.5, 4.0, 6.0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = grad_check_param(
            quadratic_loss,
            &store,
            "theta",
            &wrong,
            1e-5,
            DEFAULT_COORDS,
            &mut rng,
        )
        .unwrap();
        assert!(err > 1e-2, "error {err} too small to flag the mutation");
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let store = quadratic_store();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = grad_check_param(
            |_: &ParameterStore| Ok(f64::NAN),
            &store,
            "theta",
            &[0.0, 0.0, 0.0],
            1e-5,
            DEFAULT_COORDS,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}
