//! Dense row-major n-dimensional arrays.
//!
//! Every shape has rank ≥ 1 and all extents ≥ 1. There is no broadcasting;
//! operations that combine tensors require identical shapes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Integer companion of [`Tensor`], used for argmax results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexTensor {
    shape: Vec<usize>,
    data: Vec<usize>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(shape_err!("rank must be at least 1"));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(shape_err!("extent {pos} of {shape:?} is zero"));
    }
    Ok(shape.iter().product())
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(shape_err!(
                "shape {shape:?} holds {n} entries but {} were given",
                data.len()
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let n = check_shape(shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for d in (0..shape.len()).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(shape_err!(
                "index of rank {} into tensor of rank {}",
                index.len(),
                self.shape.len()
            ));
        }
        let mut flat = 0;
        for (d, (&i, &e)) in index.iter().zip(&self.shape).enumerate() {
            if i >= e {
                return Err(shape_err!("index {i} out of range for axis {d} (extent {e})"));
            }
            flat = flat * e + i;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.flat_index(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let i = self.flat_index(index)?;
        self.data[i] = value;
        Ok(())
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    fn same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape,
                other.shape
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "sub")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "mul")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect(),
        })
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|x| x * k)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn l2_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    /// Standard product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(shape_err!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                self.shape,
                other.shape
            ));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(shape_err!("matmul inner dimensions {k} and {k2} differ"));
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    /// `selfᵀ · other` for rank-2 operands sharing their leading extent.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[0] != other.shape[0] {
            return Err(shape_err!("matmul_tn needs [k,m] and [k,n], got {:?} and {:?}", self.shape, other.shape));
        }
        let (k, m, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![T::zero(); m * n];
        for p in 0..k {
            let b_row = &other.data[p * n..(p + 1) * n];
            for i in 0..m {
                let a = self.data[p * m + i];
                if a == T::zero() {
                    continue;
                }
                let row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    /// `self · otherᵀ` for rank-2 operands sharing their trailing extent.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[1] {
            return Err(shape_err!("matmul_nt needs [m,k] and [n,k], got {:?} and {:?}", self.shape, other.shape));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[0]);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out.push(lane_dot(a_row, b_row));
            }
        }
        Tensor::new(&[m, n], out)
    }

    pub fn transpose2(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(shape_err!("transpose2 needs rank 2, got {:?}", self.shape));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                out.push(self.data[i * c + j]);
            }
        }
        Tensor::new(&[c, r], out)
    }

    /// Maximum along `axis` together with the index of the first maximal entry.
    pub fn reduce_and_argmax(&self, axis: usize) -> Result<(Self, IndexTensor)> {
        if axis >= self.rank() {
            return Err(shape_err!(
                "axis {axis} out of range for rank {}",
                self.rank()
            ));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let extent = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut vals = Vec::with_capacity(outer * inner);
        let mut idxs = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * extent * inner + i;
                let mut best = self.data[base];
                let mut arg = 0;
                for a in 1..extent {
                    let v = self.data[base + a * inner];
                    if v > best {
                        best = v;
                        arg = a;
                    }
                }
                vals.push(best);
                idxs.push(arg);
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok((
            Tensor::new(&shape, vals)?,
            IndexTensor {
                shape,
                data: idxs,
            },
        ))
    }

    /// Writes the binary dump: `rank: u32`, `extents: u32 × rank`, then
    /// row-major little-endian `f64` values.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &e in &self.shape {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        for &x in &self.data {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        let fmt = |e: std::io::Error| Error::Format(format!("truncated tensor dump: {e}"));
        r.read_exact(&mut word).map_err(fmt)?;
        let rank = u32::from_le_bytes(word) as usize;
        if rank == 0 || rank > 16 {
            return Err(Error::Format(format!("implausible tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            r.read_exact(&mut word).map_err(fmt)?;
            shape.push(u32::from_le_bytes(word) as usize);
        }
        let n = check_shape(&shape).map_err(|e| Error::Format(e.to_string()))?;
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf).map_err(fmt)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Tensor::new(&shape, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_dump(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_dump(BufReader::new(f))
    }
}

/// Dot product with eight independent partial sums, so the loop vectorises.
fn lane_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail = ca.remainder().iter().zip(cb.remainder()).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += xa[l] * xb[l];
        }
    }
    lanes.iter().fold(tail, |acc, &v| acc + v)
}

impl IndexTensor {
    pub fn new(shape: &[usize], data: Vec<usize>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(shape_err!("shape {shape:?} holds {n} entries, got {}", data.len()));
        }
        Ok(IndexTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn zeros_shapes() {
        let z = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        assert_eq!(z.shape(), &[2, 3]);
        assert_eq!(z.data(), &[0.0; 6]);
        assert_eq!(Tensor::<f64>::zeros(&[1]).unwrap().data(), &[0.0]);
        assert_eq!(Tensor::<f64>::zeros(&[4, 5, 1]).unwrap().len(), 20);
        assert!(matches!(Tensor::<f64>::zeros(&[3, 0]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::<f64>::zeros(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn matmul_small_cases() {
        let id = t(&[2, 2], &[1., 0., 0., 1.]);
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(id.matmul(&a).unwrap(), a);
        let r = t(&[1, 2], &[1., 2.]).matmul(&t(&[2, 1], &[3., 4.])).unwrap();
        assert_eq!(r.data(), &[11.0]);
        assert!(matches!(a.matmul(&t(&[3, 1], &[1., 1., 1.])), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Tensor = Tensor::from_fn(&[3, 4], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let b: Tensor = Tensor::from_fn(&[4, 2], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let mut expect = [0.0; 6];
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..4 {
                    expect[i * 2 + j] += a.data()[i * 4 + k] * b.data()[k * 2 + j];
                }
            }
        }
        assert_eq!(a.matmul(&b).unwrap().data(), &expect[..]);
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Tensor = Tensor::from_fn(&[5, 3], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let b: Tensor = Tensor::from_fn(&[5, 4], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let c: Tensor = Tensor::from_fn(&[6, 3], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let tn = a.matmul_tn(&b).unwrap();
        let expect = a.transpose2().unwrap().matmul(&b).unwrap();
        assert_eq!(tn.shape(), &[3, 4]);
        tn.data().iter().zip(expect.data()).for_each(|(x, y)| assert!((x - y).abs() < 1e-14));
        let nt = a.matmul_nt(&c).unwrap();
        let expect = a.matmul(&c.transpose2().unwrap()).unwrap();
        assert_eq!(nt.shape(), &[5, 6]);
        nt.data().iter().zip(expect.data()).for_each(|(x, y)| assert!((x - y).abs() < 1e-14));
        assert!(a.matmul_tn(&c).is_err());
        assert!(a.matmul_nt(&b).is_err());
    }

    #[test]
    fn argmax_cases() {
        let (v, i) = t(&[2, 2], &[1., 5., 7., 2.]).reduce_and_argmax(0).unwrap();
        assert_eq!(v.data(), &[7., 5.]);
        assert_eq!(i.data(), &[1, 0]);
        let (_, i) = t(&[1, 4], &[3.; 4]).reduce_and_argmax(1).unwrap();
        assert_eq!(i.data(), &[0]);
        assert!(t(&[2], &[1., 2.]).reduce_and_argmax(1).is_err());
    }

    #[test]
    fn argmax_rank3_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Tensor = Tensor::from_fn(&[3, 4, 5], |_| rng.gen_range(-1.0..1.0)).unwrap();
        for axis in 0..3 {
            let (v, idx) = x.reduce_and_argmax(axis).unwrap();
            let mut shape = x.shape().to_vec();
            let extent = shape.remove(axis);
            for (flat, (&val, &arg)) in v.data().iter().zip(idx.data()).enumerate() {
                let mut rest = [flat / (shape[1]), flat % shape[1]];
                let mut best = (f64::NEG_INFINITY, 0);
                for a in 0..extent {
                    let mut full = vec![];
                    let mut r = rest.iter_mut();
                    for d in 0..3 {
                        full.push(if d == axis { a } else { *r.next().unwrap() });
                    }
                    let e = x.get(&full).unwrap();
                    if e > best.0 {
                        best = (e, a);
                    }
                }
                assert_eq!((val, arg), best);
            }
        }
    }

    #[test]
    fn dump_round_trip_and_layout() {
        let x = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let mut buf = Vec::new();
        x.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..12], &[2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&buf[12..20], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), 12 + 6 * 8);
        assert_eq!(Tensor::<f64>::read_dump(&buf[..]).unwrap(), x);
        assert!(matches!(Tensor::<f64>::read_dump(&buf[..30]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn row_major_index_round_trip(r in 1usize..6, c in 1usize..6, i in 0usize..6, j in 0usize..6) {
            prop_assume!(i < r && j < c);
            let x = Tensor::from_fn(&[r, c], |ix| (ix[0] * 100 + ix[1]) as f64).unwrap();
            let flat = x.flat_index(&[i, j]).unwrap();
            prop_assert_eq!(flat, i * c + j);
            prop_assert_eq!(x.data()[flat], (i * 100 + j) as f64);
        }

        #[test]
        fn argmax_is_permutation_covariant(vals in proptest::collection::vec(-3i32..3, 1..8), seed in 0u64..1000) {
            let n = vals.len();
            let x = Tensor::new(&[n], vals.iter().map(|&v| v as f64).collect()).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in (1..n).rev() { perm.swap(k, rng.gen_range(0..=k)); }
            let y = Tensor::new(&[n], perm.iter().map(|&p| x.data()[p]).collect()).unwrap();
            let (vx, _) = x.reduce_and_argmax(0).unwrap();
            let (vy, iy) = y.reduce_and_argmax(0).unwrap();
            prop_assert_eq!(vx.data(), vy.data());
            // ties resolve to the lowest index in the permuted order
            let first = (0..n).find(|&k| y.data()[k] == vy.data()[0]).unwrap();
            prop_assert_eq!(iy.data()[0], first);
            prop_assert_eq!(x.data()[perm[iy.data()[0]]], vx.data()[0]);
        }
    }
}
