//! Central finite-difference gradient checking.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{no_grad, Tensor};

pub const FD_EPS: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Checks d(loss)/d(inputs) of a scalar-valued `f` by central differences
/// at every coordinate of every input. `f` must be pure in its inputs.
pub fn check_scalar<F>(inputs: &[Tensor], f: F) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
        .collect();
    check_coords(inputs, &coords, f)
}

/// Like [`check_scalar`] but only at the given `(input, index)` coordinates.
pub fn check_coords<F>(inputs: &[Tensor], coords: &[(usize, usize)], f: F) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    for t in inputs {
        t.zero_grad();
    }
    f(inputs)?.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    let mut max_rel: f64 = 0.0;
    let _guard = no_grad();
    for &(i, j) in coords {
        let orig = inputs[i].data()[j];
        inputs[i].data_mut()[j] = orig + FD_EPS;
        let up = f(inputs)?.item();
        inputs[i].data_mut()[j] = orig - FD_EPS;
        let down = f(inputs)?.item();
        inputs[i].data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * FD_EPS);
        max_rel = max_rel.max(relative_error(analytic[i][j], numeric, 1e-8));
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked: coords.len(),
    })
}

/// Reduces a tensor-valued `f` to `Σ f(x) ⊙ R` with fixed random weights `R`
/// and checks it.
pub fn check_tensor<F, R>(inputs: &[Tensor], f: F, rng: &mut R) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
    R: Rng + ?Sized,
{
    let probe = {
        let _g = no_grad();
        f(inputs)?
    };
    let w = Tensor::new(
        (0..probe.numel()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        probe.shape(),
    )?;
    check_scalar(inputs, |xs| f(xs)?.mul(&w)?.sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_is_symmetric_and_floored() {
        assert_eq!(relative_error(1.0, 1.0, 1e-8), 0.0);
        assert!((relative_error(0.0, 1e-12, 1e-8) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn quadratic_passes() {
        let x = Tensor::param(vec![0.3, -1.2, 2.0], &[3]).unwrap();
        let r = check_scalar(&[x], |xs| xs[0].square()?.sum()).unwrap();
        assert!(r.max_rel_error < 1e-8);
        assert_eq!(r.checked, 3);
    }
}
