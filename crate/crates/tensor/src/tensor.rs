use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TensorError};
use crate::real::Real;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, F::ZERO)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, F::ONE)
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: F) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&v| F::from_f64(v)).collect())
    }

    /// 2-D tensor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| F::from_f64(v)).collect();
        Self::new(vec![rows.len(), cols], data)
    }

    /// Samples from `N(0, std²)`.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let n = shape.iter().product();
        let data = (0..n).map(|_| F::from_f64(normal.sample(rng))).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` of a 2-D tensor; vectors count as one row.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            [c] => Ok((1, *c)),
            other => Err(TensorError::Shape(format!("expected a matrix, got shape {other:?}"))),
        }
    }

    pub fn item(&self) -> F {
        self.data[0]
    }

    pub fn at(&self, row: usize, col: usize) -> F {
        let cols = *self.shape.last().unwrap_or(&1);
        self.data[row * cols + col]
    }

    pub fn row(&self, row: usize) -> &[F] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.data[row * cols..(row + 1) * cols]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(TensorError::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    /// Plain (untaped) matrix product.
    pub fn matmul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(TensorError::Shape(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![F::ZERO; m * n];
        F::gemm(
            m, k, n, F::ONE, &self.data, k as isize, 1, &other.data, n as isize, 1, F::ZERO, &mut out,
            n as isize, 1,
        );
        Tensor::new(vec![m, n], out)
    }

    /// Numerically stable softmax along `axis` of a 2-D tensor.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<F>> {
        let (rows, cols) = self.dims2()?;
        if self.data.iter().any(|v| v.is_nan()) {
            return Err(TensorError::Numeric("softmax input contains NaN".into()));
        }
        let mut out = self.data.clone();
        let (lanes, lane_len, lane_stride, elem_stride) = match axis {
            0 => (cols, rows, 1, cols),
            1 => (rows, cols, cols, 1),
            _ => return Err(TensorError::Shape(format!("softmax axis {axis} out of range"))),
        };
        for lane in 0..lanes {
            let base = lane * lane_stride;
            softmax_strided(&mut out, base, lane_len, elem_stride);
        }
        Tensor::new(self.shape.clone(), out)
    }
}

pub(crate) fn softmax_strided<F: Real>(buf: &mut [F], base: usize, len: usize, stride: usize) {
    let mut max = F::from_f64(f64::NEG_INFINITY);
    for t in 0..len {
        max = max.max(buf[base + t * stride]);
    }
    let mut total = F::ZERO;
    for t in 0..len {
        let e = (buf[base + t * stride] - max).exp();
        buf[base + t * stride] = e;
        total += e;
    }
    for t in 0..len {
        buf[base + t * stride] /= total;
    }
}

/// Softmax over a plain slice.
pub fn softmax_slice<F: Real>(values: &[F]) -> Vec<F> {
    let mut out = values.to_vec();
    if !out.is_empty() {
        let n = out.len();
        softmax_strided(&mut out, 0, n, 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_invariant_enforced() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn softmax_examples() {
        let t = Tensor::<f64>::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(t.softmax(1).unwrap().data(), &[0.5, 0.5]);
        let t = Tensor::<f32>::from_rows(&[vec![1000.0, 1000.0]]).unwrap();
        assert_eq!(t.softmax(1).unwrap().data(), &[0.5, 0.5]);
        let t = Tensor::<f64>::from_rows(&[vec![-0.223, -1.204]]).unwrap();
        let s = t.softmax(1).unwrap();
        assert!((s.data()[0] - 0.727).abs() < 1e-3);
        assert!((s.data()[1] - 0.273).abs() < 1e-3);
    }

    #[test]
    fn softmax_columns() {
        let t = Tensor::<f64>::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let s = t.softmax(0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_nan() {
        let t = Tensor::<f64>::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        assert!(matches!(t.softmax(1), Err(TensorError::Numeric(_))));
    }

    #[test]
    fn matmul_identity_and_projection() {
        let eye = Tensor::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = Tensor::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap(), m);
        let p = Tensor::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let v = Tensor::<f64>::from_rows(&[vec![5.0], vec![7.0]]).unwrap();
        assert_eq!(p.matmul(&v).unwrap().data(), &[5.0, 0.0]);
        let bad = Tensor::<f64>::zeros(&[3, 1]);
        assert!(matches!(m.matmul(&bad), Err(TensorError::Shape(_))));
    }
}
