use crate::error::{Error, Result};
use crate::rng::{self, Rng};

use super::Scalar;

/// Dense row-major n-dimensional array.
///
/// A rank-0 tensor (empty shape) holds exactly one element. Every dimension
/// is strictly positive, so `data.len() == shape.iter().product()` always
/// holds and the shape never changes after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Scalar = f64> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("tensor", format!("zero dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn scalar(v: S) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![v; n])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, S::one())
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let n: usize = shape.iter().product();
        Self::from_parts(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&v| S::of(v)).collect())
    }

    /// Matrix from nested rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        let data = rows.iter().flat_map(|row| row.iter().map(|&v| S::of(v))).collect();
        Self::new(vec![r, c], data)
    }

    pub fn randn(shape: &[usize], std: f64, rng: &mut Rng) -> Self {
        Self::from_fn(shape, |_| S::of(std * rng::normal(rng)))
    }

    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Self {
        Self::from_fn(shape, |_| S::of(rng::uniform(rng, lo, hi)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Size of the last dimension (1 for scalars).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Number of last-dimension slices.
    pub fn rows(&self) -> usize {
        self.numel() / self.cols()
    }

    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> S {
        self.data[0]
    }

    pub fn get(&self, index: &[usize]) -> S {
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            debug_assert!(i < d);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn byte_size(&self) -> usize {
        self.numel() * S::DTYPE.size()
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::shape("transpose", format!("expected rank 2, got {:?}", self.shape)));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self::from_parts(vec![c, r], out))
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| T::of(v.f64())).collect())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.f64()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Little-endian IEEE-754 encoding of the payload.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_size());
        for &v in &self.data {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_le_bytes(shape: &[usize], bytes: &[u8]) -> Result<Self> {
        let w = S::DTYPE.size();
        if bytes.len() % w != 0 {
            return Err(Error::shape("from_le_bytes", "byte length not a multiple of the element size"));
        }
        Self::new(shape.to_vec(), bytes.chunks_exact(w).map(S::read_le).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shapes() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 0], vec![]).is_err());
        assert_eq!(Tensor::<f64>::scalar(3.0).numel(), 1);
    }

    #[test]
    fn reshape_transpose_round_trip() {
        let mut r = crate::rng::seeded(1);
        let t = Tensor::<f64>::randn(&[3, 4], 1.0, &mut r);
        assert_eq!(t.transpose().unwrap().transpose().unwrap(), t);
        assert_eq!(t.reshape(&[12]).unwrap().reshape(&[3, 4]).unwrap(), t);
        assert!(t.reshape(&[5, 2]).is_err());
    }

    #[test]
    fn byte_round_trip() {
        let t = Tensor::<f32>::from_f64(&[2, 2], &[1.5, -2.0, 0.0, 3.25]).unwrap();
        let back = Tensor::<f32>::from_le_bytes(&[2, 2], &t.to_le_bytes()).unwrap();
        assert_eq!(t, back);
    }
}
