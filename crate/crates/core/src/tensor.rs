//! Dense row-major tensors of rank 2 (`H×W`) or 3 (`K×H×W`).

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Rank 2 or 3, positive dims, `data.len()` equal to the shape product.
    /// Non-finite elements are rejected.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Result<Self> {
        check_shape(&shape)?;
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Tensor::new(vec![h, w], rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    /// Internal constructor for data produced by crate routines whose outputs
    /// are finite by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(height, width)` of a rank-2 tensor or of each channel of a rank-3 one.
    pub fn hw(&self) -> (usize, usize) {
        let r = self.shape.len();
        (self.shape[r - 2], self.shape[r - 1])
    }

    pub fn channels(&self) -> usize {
        if self.rank() == 3 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Row-major slice of channel `k`; for rank 2 only `k == 0` is valid.
    pub fn channel(&self, k: usize) -> &[T] {
        let (h, w) = self.hw();
        &self.data[k * h * w..(k + 1) * h * w]
    }

    /// Channel `k` as its own `H×W` tensor.
    pub fn channel_map(&self, k: usize) -> Tensor<T> {
        let (h, w) = self.hw();
        Tensor::from_parts(vec![h, w], self.channel(k).to_vec())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let w = self.hw().1;
        self.data[i * w + j]
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    /// Row-major `(i, j)` of the first maximal element of a rank-2 tensor.
    pub fn argmax(&self) -> (usize, usize) {
        let w = self.hw().1;
        let mut best = 0;
        for (idx, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = idx;
            }
        }
        (best / w, best % w)
    }

    pub fn require_rank(&self, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::Shape(format!(
                "expected rank {}, got shape {:?}",
                rank, self.shape
            )));
        }
        Ok(())
    }

    /// Elementwise map. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Tensor<T>> {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, factor: T) -> Result<Tensor<T>> {
        self.map(|v| v * factor)
    }

    pub fn cast<U: Scalar>(&self) -> Result<Tensor<U>> {
        let data = self
            .data
            .iter()
            .map(|v| {
                <U as num_traits::NumCast>::from(*v).ok_or_else(|| Error::Validation("cast overflow".into()))
            })
            .collect::<Result<Vec<U>>>()?;
        Tensor::new(self.shape.clone(), data)
    }
}

impl<T> Index<(usize, usize)> for Tensor<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        let w = self.shape[self.shape.len() - 1];
        &self.data[i * w + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Tensor<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        let w = self.shape[self.shape.len() - 1];
        &mut self.data[i * w + j]
    }
}

impl<T> Index<(usize, usize, usize)> for Tensor<T> {
    type Output = T;

    fn index(&self, (k, i, j): (usize, usize, usize)) -> &T {
        let (h, w) = (self.shape[1], self.shape[2]);
        &self.data[(k * h + i) * w + j]
    }
}

impl<T> IndexMut<(usize, usize, usize)> for Tensor<T> {
    fn index_mut(&mut self, (k, i, j): (usize, usize, usize)) -> &mut T {
        let (h, w) = (self.shape[1], self.shape[2]);
        &mut self.data[(k * h + i) * w + j]
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if !(shape.len() == 2 || shape.len() == 3) {
        return Err(Error::Shape(format!("rank must be 2 or 3, got {}", shape.len())));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("zero dimension in {:?}", shape)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = Tensor::<f32>::new(vec![1, 2], vec![0.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
    }

    #[test]
    fn rejects_bad_rank() {
        assert!(Tensor::<f32>::new(vec![4], vec![0.0; 4]).is_err());
        assert!(Tensor::<f32>::new(vec![1, 0], vec![]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::<f64>::new(vec![2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t[(1, 0, 2)], 8.0);
        assert_eq!(t.channel(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(t.hw(), (2, 3));
    }

    #[test]
    fn argmax_takes_first_maximum() {
        let t = Tensor::<f32>::from_rows(&[&[1.0, 3.0], &[3.0, 0.0]]).unwrap();
        assert_eq!(t.argmax(), (0, 1));
    }
}
