use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{shape_err, Error, Result};

/// Storage dtype tag, as written into checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Floating point element type. `f32` is used for training, `f64` for
/// gradient verification.
pub trait Real:
    Float + FromPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
    const DTYPE: DType;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

/// Dense row-major array.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            shape: vec![rows.len(), cols],
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a rank-2 tensor (a rank-1 tensor counts as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(shape_err(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|x| U::lit(x.to_f64().unwrap()))
                .collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64().unwrap()).collect()
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    fn matrix_dims(&self, what: &str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(shape_err(format!(
                "{what}: expected a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.matrix_dims("transpose")?;
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
        })
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.matrix_dims("matmul lhs")?;
        let (k2, n) = other.matrix_dims("matmul rhs")?;
        if k != k2 {
            return Err(shape_err(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        self.matmul(&other.transpose()?)
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Self> {
        let (outer, len, inner) = self.axis_split(axis)?;
        let mut out = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let mut max = T::neg_infinity();
                for j in 0..len {
                    max = max.max(self.data[idx(j)]);
                }
                let mut total = T::zero();
                for j in 0..len {
                    let e = (self.data[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total = total + e;
                }
                for j in 0..len {
                    out[idx(j)] = out[idx(j)] / total;
                }
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: out,
        })
    }

    fn axis_split(&self, axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= self.shape.len() {
            return Err(shape_err(format!(
                "axis {axis} invalid for shape {:?}",
                self.shape
            )));
        }
        let len = self.shape[axis];
        if len == 0 {
            return Err(shape_err("softmax over an empty axis"));
        }
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        Ok((outer, len, inner))
    }
}

/// `out += a · b` for row-major `a: m×k`, `b: k×n`.
pub(crate) fn matmul_into<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aip * bv;
            }
        }
    }
}

/// Row-wise log-softmax of a slice.
pub fn log_softmax_slice<T: Real>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    z.iter().map(|&v| v - lse).collect()
}

/// `-log softmax(logits)[target]` for a single logit vector.
pub fn cross_entropy<T: Real>(logits: &[T], target: usize) -> Result<T> {
    if target >= logits.len() {
        return Err(Error::Index {
            index: target,
            width: logits.len(),
        });
    }
    Ok(-log_softmax_slice(logits)[target])
}

/// Index of the maximum entry, lowest index on ties. `None` when empty.
pub fn argmax<T: Real>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let i2 = Tensor::<f64>::eye(2);
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(i2.matmul(&a).unwrap(), a);
    }

    #[test]
    fn projector_matmul() {
        let p = Tensor::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let v = Tensor::from_rows(&[vec![5.0], vec![7.0]]);
        assert_eq!(p.matmul(&v).unwrap().data(), &[5.0, 0.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&a), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_closed_forms() {
        let t = Tensor::<f64>::from_f64(&[2], &[0.0, 0.0]).unwrap();
        assert_eq!(t.softmax(0).unwrap().data(), &[0.5, 0.5]);
        let t = Tensor::<f64>::from_f64(&[2], &[2f64.ln(), 0.0]).unwrap();
        let s = t.softmax(0).unwrap();
        assert!((s.data()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.data()[1] - 1.0 / 3.0).abs() < 1e-12);
        let t = Tensor::<f32>::from_f64(&[2], &[1000.0, 0.0]).unwrap();
        let s = t.softmax(0).unwrap();
        assert!(s.is_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-6 && s.data()[1] < 1e-6);
    }

    #[test]
    fn softmax_on_inner_axis() {
        let t = Tensor::<f64>::from_f64(&[2, 3], &[1.0, 2.0, 3.0, 0.5, 0.5, 9.0]).unwrap();
        let s = t.softmax(0).unwrap();
        for j in 0..3 {
            assert!((s.get2(0, j) + s.get2(1, j) - 1.0).abs() < 1e-12);
        }
        assert!(t.softmax(2).is_err());
        assert!(Tensor::<f64>::zeros(&[0]).softmax(0).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy(&[0.0f64, 0.0], 0).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[20.0f64, 0.0], 0).unwrap() < 1e-8);
        assert!(matches!(
            cross_entropy(&[0.0f64], 3),
            Err(Error::Index { index: 3, width: 1 })
        ));
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0f64, 1.0, 0.0]), Some(0));
        assert_eq!(argmax(&[0.1f64, 3.0, -1.0]), Some(1));
        assert_eq!(argmax::<f64>(&[]), None);
    }
}
