//! Endpoint-aligned linear interpolation along one axis.
//!
//! Output sample `i` of a length-`L'` resampling of a length-`L` signal reads
//! source position `i·(L−1)/(L'−1)`, so first and last samples are kept. A
//! length-1 output reads the source midpoint `(L−1)/2`. Each output row of
//! the operator touches at most two neighbouring source samples with weights
//! summing to one, so constants survive resampling exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ordered set of time-axis scale factors. Always contains 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ScaleSet {
    factors: Vec<f64>,
}

impl ScaleSet {
    pub fn new(mut factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Parameter("scale set is empty".into()));
        }
        if let Some(bad) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::Parameter(format!("scale factor {bad} is not positive")));
        }
        factors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if factors.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter(format!("duplicate scale factor in {factors:?}")));
        }
        if !factors.contains(&1.0) {
            return Err(Error::Parameter(format!(
                "scale set {factors:?} lacks the unit factor"
            )));
        }
        Ok(ScaleSet { factors })
    }

    /// The single-branch set `{1}`.
    pub fn unit() -> Self {
        ScaleSet { factors: vec![1.0] }
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of factor 1 within the sorted set.
    pub fn unit_index(&self) -> usize {
        self.factors.iter().position(|&f| f == 1.0).unwrap()
    }

    /// The logarithmically spaced combinations evaluated for the published
    /// experiments, with 3, 5 and 7 branches.
    pub fn published_grid() -> Vec<ScaleSet> {
        const SETS: &[&[f64]] = &[
            &[0.25, 1.0, 4.0],
            &[0.5, 1.0, 2.0],
            &[0.7, 1.0, 1.428],
            &[0.8, 1.0, 1.25],
            &[0.9, 1.0, 1.111],
            &[0.95, 1.0, 1.053],
            &[0.25, 0.5, 1.0, 2.0, 4.0],
            &[0.5, 0.7, 1.0, 1.428, 2.0],
            &[0.8, 0.9, 1.0, 1.111, 1.25],
            &[0.25, 0.5, 0.7, 1.0, 1.428, 2.0, 4.0],
            &[0.7, 0.8, 0.9, 1.0, 1.111, 1.25, 1.428],
        ];
        SETS.iter()
            .map(|s| ScaleSet::new(s.to_vec()).expect("published sets are valid"))
            .collect()
    }
}

impl fmt::Display for ScaleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl TryFrom<String> for ScaleSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScaleSet> for String {
    fn from(s: ScaleSet) -> String {
        s.to_string()
    }
}

impl FromStr for ScaleSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let factors = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad scale factor {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ScaleSet::new(factors)
    }
}

/// Resampled length `max(1, round(len·factor))`, rounding half away from zero.
pub fn scaled_len(len: usize, factor: f64) -> Result<usize> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::Parameter(format!("scale factor {factor} must be positive")));
    }
    Ok(((len as f64 * factor).round() as usize).max(1))
}

/// The linear map from a length-`source` axis to a length-`target` axis,
/// stored as one `(left index, right weight)` pair per output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolator {
    source: usize,
    target: usize,
    taps: Vec<(usize, f64)>,
}

impl Interpolator {
    pub fn new(source: usize, target: usize) -> Result<Self> {
        if source == 0 || target == 0 {
            return Err(Error::Parameter(format!(
                "interpolation lengths must be positive, got {source} -> {target}"
            )));
        }
        let last = source - 1;
        let taps = (0..target)
            .map(|i| {
                let pos = if target == 1 {
                    last as f64 / 2.0
                } else {
                    (i * last) as f64 / (target - 1) as f64
                };
                let lo = (pos.floor() as usize).min(last);
                let w = pos - lo as f64;
                if lo == last || w <= 0.0 {
                    (lo, 0.0)
                } else {
                    (lo, w)
                }
            })
            .collect();
        Ok(Interpolator {
            source,
            target,
            taps,
        })
    }

    pub fn source_len(&self) -> usize {
        self.source
    }

    pub fn target_len(&self) -> usize {
        self.target
    }

    pub fn is_identity(&self) -> bool {
        self.source == self.target
    }

    fn axis_layout<T: Scalar>(t: &Tensor<T>, axis: usize, expect: usize) -> Result<(usize, usize)> {
        if axis >= t.rank() {
            return Err(shape_err!("axis {axis} out of range for rank {}", t.rank()));
        }
        if t.shape()[axis] != expect {
            return Err(shape_err!(
                "axis {axis} has extent {}, expected {expect}",
                t.shape()[axis]
            ));
        }
        let outer = t.shape()[..axis].iter().product();
        let inner = t.shape()[axis + 1..].iter().product();
        Ok((outer, inner))
    }

    /// Applies the map along `axis` of `t`.
    pub fn apply<T: Scalar>(&self, t: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
        let (outer, inner) = Self::axis_layout(t, axis, self.source)?;
        if self.is_identity() {
            return Ok(t.clone());
        }
        let src = t.data();
        let mut out = Vec::with_capacity(outer * self.target * inner);
        for o in 0..outer {
            let base = o * self.source * inner;
            for &(lo, w) in &self.taps {
                let a = &src[base + lo * inner..base + (lo + 1) * inner];
                if w == 0.0 {
                    out.extend_from_slice(a);
                } else {
                    let b = &src[base + (lo + 1) * inner..base + (lo + 2) * inner];
                    let (wa, wb) = (T::of(1.0 - w), T::of(w));
                    out.extend(a.iter().zip(b).map(|(&x, &y)| x * wa + y * wb));
                }
            }
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = self.target;
        Tensor::new(&shape, out)
    }

    /// Applies the transpose of the map along `axis` (target length back to
    /// source length).
    pub fn apply_adjoint<T: Scalar>(&self, g: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
        let (outer, inner) = Self::axis_layout(g, axis, self.target)?;
        if self.is_identity() {
            return Ok(g.clone());
        }
        let src = g.data();
        let mut out = vec![T::zero(); outer * self.source * inner];
        for o in 0..outer {
            let gbase = o * self.target * inner;
            let obase = o * self.source * inner;
            for (i, &(lo, w)) in self.taps.iter().enumerate() {
                let gi = &src[gbase + i * inner..gbase + (i + 1) * inner];
                if w == 0.0 {
                    let dst = &mut out[obase + lo * inner..obase + (lo + 1) * inner];
                    dst.iter_mut().zip(gi).for_each(|(d, &v)| *d += v);
                } else {
                    let (wa, wb) = (T::of(1.0 - w), T::of(w));
                    let dst = &mut out[obase + lo * inner..obase + (lo + 2) * inner];
                    let (da, db) = dst.split_at_mut(inner);
                    for k in 0..inner {
                        da[k] += gi[k] * wa;
                        db[k] += gi[k] * wb;
                    }
                }
            }
        }
        let mut shape = g.shape().to_vec();
        shape[axis] = self.source;
        Tensor::new(&shape, out)
    }

    /// Dense `target × source` matrix of the map.
    pub fn matrix<T: Scalar>(&self) -> Tensor<T> {
        let mut m = Tensor::zeros(&[self.target, self.source]).unwrap();
        let data = m.data_mut();
        for (i, &(lo, w)) in self.taps.iter().enumerate() {
            data[i * self.source + lo] += T::of(1.0 - w);
            if w != 0.0 {
                data[i * self.source + lo + 1] += T::of(w);
            }
        }
        m
    }
}

/// Resamples `axis` of `t` by `factor`, to length `max(1, round(L·factor))`.
pub fn resample_time<T: Scalar>(t: &Tensor<T>, axis: usize, factor: f64) -> Result<Tensor<T>> {
    if axis >= t.rank() {
        return Err(shape_err!("axis {axis} out of range for rank {}", t.rank()));
    }
    let len = t.shape()[axis];
    Interpolator::new(len, scaled_len(len, factor)?)?.apply(t, axis)
}

/// Resamples `axis` of `t` to exactly `target_len` samples.
pub fn resample_to_length<T: Scalar>(t: &Tensor<T>, axis: usize, target_len: usize) -> Result<Tensor<T>> {
    if axis >= t.rank() {
        return Err(shape_err!("axis {axis} out of range for rank {}", t.rank()));
    }
    if target_len == 0 {
        return Err(Error::Parameter("target length must be at least 1".into()));
    }
    Interpolator::new(t.shape()[axis], target_len)?.apply(t, axis)
}

/// Transpose of [`resample_to_length`] from `source_len` samples: maps a
/// gradient with respect to the resampled tensor back to the source.
pub fn adjoint_resample<T: Scalar>(grad_out: &Tensor<T>, axis: usize, source_len: usize) -> Result<Tensor<T>> {
    if axis >= grad_out.rank() {
        return Err(shape_err!("axis {axis} out of range for rank {}", grad_out.rank()));
    }
    Interpolator::new(source_len, grad_out.shape()[axis])?.apply_adjoint(grad_out, axis)
}

/// Dense `target_len × source_len` interpolation matrix.
pub fn interpolation_matrix<T: Scalar>(source_len: usize, target_len: usize) -> Result<Tensor<T>> {
    Ok(Interpolator::new(source_len, target_len)?.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(data: &[f64]) -> Tensor {
        Tensor::new(&[data.len()], data.to_vec()).unwrap()
    }

    /// Independent oracle: evaluate the endpoint-aligned rule pointwise.
    fn brute(x: &[f64], target: usize) -> Vec<f64> {
        let l = x.len();
        (0..target)
            .map(|i| {
                let p = if target == 1 {
                    (l as f64 - 1.0) / 2.0
                } else {
                    i as f64 * (l as f64 - 1.0) / (target as f64 - 1.0)
                };
                let j = p.floor() as usize;
                if j + 1 >= l {
                    x[l - 1]
                } else {
                    let f = p - j as f64;
                    x[j] + f * (x[j + 1] - x[j])
                }
            })
            .collect()
    }

    #[test]
    fn resample_time_examples() {
        let x = v(&[1., 2., 3., 4.]);
        assert_eq!(resample_time(&x, 0, 1.0).unwrap(), x);
        assert_eq!(resample_time(&v(&[1., 3.]), 0, 0.5).unwrap().data(), &[2.0]);
        let up = resample_time(&v(&[0., 1., 2., 3.]), 0, 2.0).unwrap();
        let expect = [0., 3. / 7., 6. / 7., 9. / 7., 12. / 7., 15. / 7., 18. / 7., 3.];
        assert_eq!(up.len(), 8);
        for (a, b) in up.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in up.data().iter().zip(brute(&[0., 1., 2., 3.], 8)) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(matches!(resample_time(&x, 0, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(resample_time(&x, 0, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn resample_to_length_examples() {
        let x = v(&[1., 5., 2., 8., 3.]);
        assert_eq!(resample_to_length(&x, 0, 5).unwrap(), x);
        assert_eq!(resample_to_length(&v(&[0., 2.]), 0, 3).unwrap().data(), &[0., 1., 2.]);
        assert_eq!(resample_to_length(&v(&[5.]), 0, 4).unwrap().data(), &[5.; 4]);
        assert!(matches!(resample_to_length(&x, 0, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn length_rule() {
        assert_eq!(scaled_len(10, 0.5).unwrap(), 5);
        assert_eq!(scaled_len(10, 2.0).unwrap(), 20);
        assert_eq!(scaled_len(10, 1.428).unwrap(), 14);
        assert_eq!(scaled_len(5, 0.5).unwrap(), 3);
        assert_eq!(scaled_len(2, 0.25).unwrap(), 1);
    }

    #[test]
    fn matrices_by_hand() {
        assert_eq!(
            interpolation_matrix::<f64>(3, 3).unwrap().data(),
            &[1., 0., 0., 0., 1., 0., 0., 0., 1.]
        );
        assert_eq!(
            interpolation_matrix::<f64>(2, 3).unwrap().data(),
            &[1., 0., 0.5, 0.5, 0., 1.]
        );
        let m = interpolation_matrix::<f64>(1, 4).unwrap();
        assert_eq!(m.shape(), &[4, 1]);
        assert_eq!(m.data(), &[1.; 4]);
    }

    #[test]
    fn adjoint_examples() {
        let g = v(&[1., 1., 1.]);
        assert_eq!(adjoint_resample(&g, 0, 2).unwrap().data(), &[1.5, 1.5]);
        let y = v(&[3., -1., 2.]);
        assert_eq!(adjoint_resample(&y, 0, 3).unwrap(), y);
    }

    #[test]
    fn adjoint_identity_all_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for l in 1..=9 {
            for lp in 1..=9 {
                let x: Tensor = Tensor::from_fn(&[l], |_| rng.gen_range(-1.0..1.0)).unwrap();
                let y: Tensor = Tensor::from_fn(&[lp], |_| rng.gen_range(-1.0..1.0)).unwrap();
                let ax = resample_to_length(&x, 0, lp).unwrap();
                let aty = adjoint_resample(&y, 0, l).unwrap();
                assert!((ax.dot(&y).unwrap() - x.dot(&aty).unwrap()).abs() < 1e-10);
                // explicit dense matrix agrees with the fast path
                let a = interpolation_matrix::<f64>(l, lp).unwrap();
                let dense = a.matmul(&x.clone().reshape(&[l, 1]).unwrap()).unwrap();
                for (p, q) in dense.data().iter().zip(ax.data()) {
                    assert!((p - q).abs() < 1e-12);
                }
                for r in 0..lp {
                    let s: f64 = a.data()[r * l..(r + 1) * l].iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                    assert!(a.data()[r * l..(r + 1) * l].iter().filter(|&&w| w != 0.0).count() <= 2);
                }
            }
        }
    }

    #[test]
    fn non_time_axes_untouched() {
        let x = Tensor::from_fn(&[2, 4, 3], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64).unwrap();
        let y = resample_time(&x, 1, 2.0).unwrap();
        assert_eq!(y.shape(), &[2, 8, 3]);
        for b in 0..2 {
            for f in 0..3 {
                let src: Vec<f64> = (0..4).map(|t| x.get(&[b, t, f]).unwrap()).collect();
                let want = brute(&src, 8);
                for t in 0..8 {
                    assert!((y.get(&[b, t, f]).unwrap() - want[t]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn scale_set_validation() {
        assert!(ScaleSet::new(vec![0.5, 2.0]).is_err());
        assert!(ScaleSet::new(vec![0.0, 1.0]).is_err());
        assert!(ScaleSet::new(vec![1.0, 1.0]).is_err());
        let s: ScaleSet = "2, 1, 0.5".parse().unwrap();
        assert_eq!(s.factors(), &[0.5, 1.0, 2.0]);
        assert_eq!(s.unit_index(), 1);
        assert_eq!(s.to_string(), "0.5,1,2");
        let grid = ScaleSet::published_grid();
        assert_eq!(grid.len(), 11);
        assert_eq!(grid[1].factors(), &[0.5, 1.0, 2.0]);
        assert_eq!(grid.iter().map(ScaleSet::len).collect::<Vec<_>>(), [3, 3, 3, 3, 3, 3, 5, 5, 5, 7, 7]);
    }

    proptest! {
        #[test]
        fn unit_factor_is_bit_exact(data in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let x = v(&data);
            prop_assert_eq!(resample_time(&x, 0, 1.0).unwrap(), x);
        }

        #[test]
        fn constants_and_monotonicity_survive(c in -5.0f64..5.0, l in 1usize..12, factor in 0.2f64..4.0,
                                              steps in proptest::collection::vec(0.0f64..2.0, 12)) {
            let flat = Tensor::filled(&[l], c).unwrap();
            for &y in resample_time(&flat, 0, factor).unwrap().data() {
                prop_assert!((y - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
            let mut acc = 0.0;
            let ramp = v(&steps[..l].iter().map(|s| { acc += s; acc }).collect::<Vec<_>>());
            let r = resample_time(&ramp, 0, factor).unwrap();
            prop_assert!(r.data().windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }

        #[test]
        fn round_trip_restores_length(l in 1usize..15, factor in 0.1f64..5.0) {
            let x = Tensor::from_fn(&[2, l], |i| i[1] as f64).unwrap();
            let s = resample_time(&x, 1, factor).unwrap();
            let back = resample_to_length(&s, 1, l).unwrap();
            prop_assert_eq!(back.shape(), &[2, l]);
        }
    }
}
