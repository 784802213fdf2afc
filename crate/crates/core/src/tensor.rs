//! Dense row-major `f64` tensors and the central-difference gradient oracle.
//!
//! Frame-feature matrices follow a channels-first layout: a `(D, T)` tensor
//! stores channel `d` as the contiguous run `data[d * T..(d + 1) * T]`.

use crate::error::{Error, Result};

/// Default step for [`finite_diff_grad`].
pub const DEFAULT_FD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("empty shape list".into()));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape(format!(
            "zero dimension in shape {shape:?}"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape(format!("shape {shape:?} overflows")))
}

impl Tensor {
    /// A tensor of the given shape with every element set to `fill`.
    pub fn new(shape: &[usize], fill: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        if !fill.is_finite() {
            return Err(Error::Numeric(format!("non-finite fill value {fill}")));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at index {i}")));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Zeros with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::InvalidShape(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Row `r` of a matrix.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.shape[self.shape.len() - 1];
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn ensure_shape(&self, expected: &[usize], what: &str) -> Result<()> {
        if self.shape != expected {
            return Err(Error::InvalidShape(format!(
                "{what}: expected {expected:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        other.ensure_shape(&self.shape, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stack two matrices with equal column counts along the row axis.
    pub fn concat_rows(top: &Tensor, bottom: &Tensor) -> Result<Tensor> {
        let (r1, c1) = top.dims2()?;
        let (r2, c2) = bottom.dims2()?;
        if c1 != c2 {
            return Err(Error::InvalidShape(format!(
                "concat_rows: column counts {c1} and {c2} differ"
            )));
        }
        let mut data = Vec::with_capacity((r1 + r2) * c1);
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Ok(Tensor {
            shape: vec![r1 + r2, c1],
            data,
        })
    }

    /// The first `rows` rows of a matrix.
    pub fn take_rows(&self, rows: usize) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        if rows == 0 || rows > r {
            return Err(Error::InvalidShape(format!(
                "take_rows: {rows} of {r} rows"
            )));
        }
        Ok(Tensor {
            shape: vec![rows, c],
            data: self.data[..rows * c].to_vec(),
        })
    }
}

/// Central-difference gradient of a scalar function.
///
/// `g[i] = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut grad = x.zeros_like();
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let plus = f(&probe);
        probe.data[i] = orig - eps;
        let minus = f(&probe);
        probe.data[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "function is not finite around element {i}"
            )));
        }
        grad.data[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Elementwise relative error `|a - b| / max(|a|, |b|, floor)`, maximized over
/// all elements. The floor keeps near-zero entries from reporting round-off
/// noise as large relative errors.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    analytic
        .data
        .iter()
        .zip(&numeric.data)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_fills_every_element() {
        let t = Tensor::new(&[2, 3], 0.0).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.data(), &[0.0; 6]);

        let t = Tensor::new(&[1], 5.0).unwrap();
        assert_eq!(t.data(), &[5.0]);

        let t = Tensor::new(&[3, 2, 4], 1.0).unwrap();
        assert_eq!(t.len(), 24);
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(matches!(Tensor::new(&[], 0.0), Err(Error::InvalidShape(_))));
        assert!(matches!(Tensor::new(&[2, 0], 0.0), Err(Error::InvalidShape(_))));
        assert!(matches!(
            Tensor::from_vec(&[2, 2], vec![1.0; 3]),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            Tensor::from_vec(&[1], vec![f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn fd_sum_of_squares() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let g = finite_diff_grad(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn fd_constant_is_zero() {
        let x = Tensor::from_vec(&[3], vec![0.3, -1.0, 7.0]).unwrap();
        let g = finite_diff_grad(|_| 4.2, &x, 1e-5).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fd_softmax_cross_entropy_matches_probs_minus_onehot() {
        let ce = |z: &Tensor| {
            let (a, b) = (z.data()[0], z.data()[1]);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            lse - a
        };
        let x = Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap();
        let g = finite_diff_grad(ce, &x, 1e-5).unwrap();
        // probs = [0.5, 0.5], onehot = [1, 0]
        assert!((g.data()[0] + 0.5).abs() < 1e-9);
        assert!((g.data()[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fd_non_finite_is_an_error() {
        let x = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let r = finite_diff_grad(|_| f64::NAN, &x, 1e-5);
        assert!(matches!(r, Err(Error::Numeric(_))));
        assert!(finite_diff_grad(|_| 0.0, &x, 0.0).is_err());
    }

    #[test]
    fn fd_quadratics_match_analytic_derivative() {
        // f(x) = sum_i a_i x_i^2 + b_i x_i + c
        let a = [0.5, -2.0, 3.0, 1.25];
        let b = [1.0, 0.25, -4.0, 2.0];
        let x = Tensor::from_vec(&[4], vec![0.7, -1.3, 2.2, 10.0]).unwrap();
        let f = |t: &Tensor| {
            t.data()
                .iter()
                .enumerate()
                .map(|(i, v)| a[i] * v * v + b[i] * v + 3.0)
                .sum::<f64>()
        };
        let g = finite_diff_grad(f, &x, 1e-5).unwrap();
        for i in 0..4 {
            let exact = 2.0 * a[i] * x.data()[i] + b[i];
            assert!(((g.data()[i] - exact) / exact).abs() < 1e-8, "{i}");
        }
    }

    #[test]
    fn concat_and_take_rows() {
        let a = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = Tensor::concat_rows(&a, &b).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(c.take_rows(1).unwrap(), a);
    }
}
