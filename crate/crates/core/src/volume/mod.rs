//! Dense 3D voxel grids and the primitives built on them: Bernoulli entropy,
//! thresholding, face-connected dilation and masked averaging.
//!
//! All grids are stored flat in x-fastest order: voxel `(x, y, z)` lives at
//! offset `z * ny * nx + y * nx + x`.

pub mod fvol;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Default dilation radius used to grow the predicted segmentation into a region of interest.
pub const DEFAULT_DILATION_RADIUS: usize = 2;
/// Default foreground threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 3]", into = "[usize; 3]")]
pub struct VolumeShape {
    nx: usize,
    ny: usize,
    nz: usize,
}

impl VolumeShape {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let invalid = |reason| Error::InvalidShape { nx, ny, nz, reason };
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(invalid("every extent must be at least 1"));
        }
        nx.checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| invalid("voxel count overflows"))?;
        Ok(Self { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }
    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }
    #[inline]
    pub fn nz(&self) -> usize {
        self.nz
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Total number of voxels.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        (z * self.ny + y) * self.nx + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        debug_assert!(index < self.len());
        let x = index % self.nx;
        let rest = index / self.nx;
        (x, rest % self.ny, rest / self.ny)
    }

    /// Face neighbours of `index` that lie inside the grid.
    pub fn face_neighbors(&self, index: usize) -> impl Iterator<Item = usize> {
        let (x, y, z) = self.coords(index);
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let plane = nx * ny;
        [
            (x > 0).then(|| index - 1),
            (x + 1 < nx).then(|| index + 1),
            (y > 0).then(|| index - nx),
            (y + 1 < ny).then(|| index + nx),
            (z > 0).then(|| index - plane),
            (z + 1 < nz).then(|| index + plane),
        ]
        .into_iter()
        .flatten()
    }
}

impl TryFrom<[usize; 3]> for VolumeShape {
    type Error = Error;
    fn try_from(d: [usize; 3]) -> Result<Self> {
        Self::new(d[0], d[1], d[2])
    }
}

impl From<VolumeShape> for [usize; 3] {
    fn from(s: VolumeShape) -> Self {
        s.dims()
    }
}

impl fmt::Display for VolumeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

fn check_len(shape: VolumeShape, len: usize) -> Result<()> {
    if shape.len() != len {
        return Err(Error::LengthMismatch {
            expected: shape.len(),
            actual: len,
        });
    }
    Ok(())
}

fn check_same(left: VolumeShape, right: VolumeShape) -> Result<()> {
    if left != right {
        return Err(Error::ShapeMismatch { left, right });
    }
    Ok(())
}

/// Finite real values on a grid (intensities, entropies).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume<T> {
    shape: VolumeShape,
    data: Vec<T>,
}

impl<T: Real> ScalarVolume<T> {
    pub fn new(shape: VolumeShape, data: Vec<T>) -> Result<Self> {
        check_len(shape, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: VolumeShape, value: T) -> Self {
        assert!(value.is_finite());
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_fn(shape: VolumeShape, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let data = (0..shape.len())
            .map(|i| {
                let (x, y, z) = shape.coords(i);
                f(x, y, z)
            })
            .collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> VolumeShape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.shape.index(x, y, z)]
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::from_usize_lossy(self.data.len())
    }
}

/// Per-voxel foreground probabilities, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume<T> {
    shape: VolumeShape,
    data: Vec<T>,
}

impl<T: Real> ProbabilityVolume<T> {
    pub fn new(shape: VolumeShape, data: Vec<T>) -> Result<Self> {
        check_len(shape, data.len())?;
        for (index, &p) in data.iter().enumerate() {
            // NaN fails both comparisons
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::ProbabilityOutOfRange {
                    index,
                    value: p.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: VolumeShape, p: T) -> Result<Self> {
        Self::new(shape, vec![p; shape.len()])
    }

    pub fn shape(&self) -> VolumeShape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    shape: VolumeShape,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: VolumeShape, data: Vec<bool>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Self { shape, data })
    }

    pub fn empty(shape: VolumeShape) -> Self {
        Self {
            shape,
            data: vec![false; shape.len()],
        }
    }

    pub fn full(shape: VolumeShape) -> Self {
        Self {
            shape,
            data: vec![true; shape.len()],
        }
    }

    pub fn from_fn(shape: VolumeShape, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let data = (0..shape.len())
            .map(|i| {
                let (x, y, z) = shape.coords(i);
                f(x, y, z)
            })
            .collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> VolumeShape {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.shape.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.shape.index(x, y, z);
        self.data[i] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.shape == other.shape && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Number of voxels set in both masks.
    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        check_same(self.shape, other.shape)?;
        Ok(self.data.iter().zip(&other.data).filter(|(&a, &b)| a && b).count())
    }
}

/// Entropy of a Bernoulli variable in nats, with `0 ln 0 = 0`.
#[inline]
pub fn bernoulli_entropy<T: Real>(p: T) -> T {
    let plogp = |q: T| if q > T::zero() { q * q.ln() } else { T::zero() };
    let h = -(plogp(p) + plogp(T::one() - p));
    // rounding can leave a tiny negative near p in {0, 1}
    h.max(T::zero())
}

pub fn bernoulli_entropy_map<T: Real>(probs: &ProbabilityVolume<T>) -> ScalarVolume<T> {
    ScalarVolume {
        shape: probs.shape,
        data: probs.data.iter().map(|&p| bernoulli_entropy(p)).collect(),
    }
}

fn validate_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidThreshold(t));
    }
    Ok(())
}

/// Voxels with probability strictly above `t`.
pub fn threshold<T: Real>(probs: &ProbabilityVolume<T>, t: f64) -> Result<BinaryMask> {
    validate_threshold(t)?;
    let t = T::lit(t);
    Ok(BinaryMask {
        shape: probs.shape,
        data: probs.data.iter().map(|&p| p > t).collect(),
    })
}

/// Iterated 6-connected dilation; `radius` passes, clipped at the grid boundary.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let shape = mask.shape;
    let mut current = mask.clone();
    for _ in 0..radius {
        let mut next = current.clone();
        for (i, _) in current.data.iter().enumerate().filter(|(_, &b)| b) {
            for j in shape.face_neighbors(i) {
                next.data[j] = true;
            }
        }
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Mean of `values` over the voxels selected by `mask`.
pub fn masked_mean<T: Real>(values: &ScalarVolume<T>, mask: &BinaryMask) -> Result<T> {
    check_same(values.shape, mask.shape)?;
    let (sum, n) = values
        .data
        .iter()
        .zip(&mask.data)
        .filter(|(_, &m)| m)
        .fold((T::zero(), 0usize), |(s, n), (&v, _)| (s + v, n + 1));
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(sum / T::from_usize_lossy(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn shape(n: usize) -> VolumeShape {
        VolumeShape::cube(n).unwrap()
    }

    #[test]
    fn shape_rejects_zero_extent() {
        assert!(VolumeShape::new(0, 3, 3).is_err());
        assert!(VolumeShape::new(usize::MAX, 2, 2).is_err());
        assert_eq!(VolumeShape::new(2, 3, 4).unwrap().len(), 24);
    }

    #[test]
    fn entropy_map_examples() {
        let s = shape(3);
        let half = bernoulli_entropy_map(&ProbabilityVolume::filled(s, 0.5f64).unwrap());
        assert!(half.data().iter().all(|&h| (h - std::f64::consts::LN_2).abs() < 1e-12));
        let one = bernoulli_entropy_map(&ProbabilityVolume::filled(s, 1.0f64).unwrap());
        assert!(one.data().iter().all(|&h| h == 0.0));
        let single = VolumeShape::new(1, 1, 1).unwrap();
        let h = bernoulli_entropy_map(&ProbabilityVolume::filled(single, 0.9f64).unwrap());
        assert_abs_diff_eq!(h.data()[0], 0.325083, epsilon = 1e-6);
    }

    #[test]
    fn entropy_generic_over_f32() {
        assert_abs_diff_eq!(bernoulli_entropy(0.5f32), std::f32::consts::LN_2, epsilon = 1e-6);
        assert_eq!(bernoulli_entropy(0.0f32), 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        let s = shape(2);
        let m = threshold(&ProbabilityVolume::filled(s, 0.5f64).unwrap(), 0.5).unwrap();
        assert_eq!(m.count(), 0);
        let m = threshold(&ProbabilityVolume::filled(s, 0.6f64).unwrap(), 0.5).unwrap();
        assert_eq!(m.count(), 8);
        let two = VolumeShape::new(2, 1, 1).unwrap();
        let mixed = ProbabilityVolume::new(two, vec![0.2f64, 0.7]).unwrap();
        assert_eq!(threshold(&mixed, 0.5).unwrap().data(), &[false, true]);
    }

    #[test]
    fn threshold_rejects_out_of_range() {
        let p = ProbabilityVolume::filled(shape(2), 0.5f64).unwrap();
        for t in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(threshold(&p, t), Err(Error::InvalidThreshold(_))));
        }
    }

    #[test]
    fn probability_volume_rejects_out_of_range() {
        let s = VolumeShape::new(2, 1, 1).unwrap();
        assert!(ProbabilityVolume::new(s, vec![0.5f64, 1.01]).is_err());
        assert!(ProbabilityVolume::new(s, vec![f64::NAN, 0.0]).is_err());
        assert!(ScalarVolume::new(s, vec![f64::INFINITY, 0.0]).is_err());
        assert!(ScalarVolume::new(s, vec![0.0f64]).is_err());
    }

    #[test]
    fn dilate_interior_and_corner() {
        let s = shape(5);
        let mut m = BinaryMask::empty(s);
        m.set(2, 2, 2, true);
        let d = dilate(&m, 1);
        assert_eq!(d.count(), 7);
        assert!(d.get(1, 2, 2) && d.get(2, 3, 2) && d.get(2, 2, 1));
        assert!(!d.get(1, 1, 2));

        let mut c = BinaryMask::empty(s);
        c.set(0, 0, 0, true);
        assert_eq!(dilate(&c, 1).count(), 4);
        assert_eq!(dilate(&c, 0), c);
    }

    #[test]
    fn dilate_radius_two_is_l1_ball() {
        let s = shape(7);
        let mut m = BinaryMask::empty(s);
        m.set(3, 3, 3, true);
        // |dx|+|dy|+|dz| <= 2 has 25 lattice points
        assert_eq!(dilate(&m, 2).count(), 25);
    }

    #[test]
    fn masked_mean_examples() {
        let s = shape(3);
        let v = ScalarVolume::filled(s, 2.0f64);
        let mut m = BinaryMask::empty(s);
        m.set(1, 0, 2, true);
        assert_eq!(masked_mean(&v, &m).unwrap(), 2.0);

        let four = VolumeShape::new(4, 1, 1).unwrap();
        let v = ScalarVolume::new(four, vec![1.0, 2.0, 3.0, 4.0f64]).unwrap();
        let m = BinaryMask::new(four, vec![false, true, false, true]).unwrap();
        assert_eq!(masked_mean(&v, &m).unwrap(), 3.0);

        assert!(matches!(
            masked_mean(&v, &BinaryMask::empty(four)),
            Err(Error::EmptyRegion)
        ));
        assert!(matches!(
            masked_mean(&v, &BinaryMask::empty(s)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(nx, ny, nz)| {
            let s = VolumeShape::new(nx, ny, nz).unwrap();
            proptest::collection::vec(proptest::bool::weighted(0.1), s.len())
                .prop_map(move |d| BinaryMask::new(s, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_symmetric(p in 0.0f64..=1.0) {
            let h = bernoulli_entropy(p);
            prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&h));
            prop_assert!((h - bernoulli_entropy(1.0 - p)).abs() < 1e-12);
        }

        #[test]
        fn dilation_is_monotone_and_composes(m in arb_mask()) {
            let d1 = dilate(&m, 1);
            let d2 = dilate(&m, 2);
            prop_assert!(m.is_subset_of(&d1));
            prop_assert!(d1.is_subset_of(&d2));
            prop_assert_eq!(dilate(&d1, 1), d2);
        }

        #[test]
        fn flat_index_round_trips(nx in 1usize..9, ny in 1usize..9, nz in 1usize..9, seed in any::<usize>()) {
            let s = VolumeShape::new(nx, ny, nz).unwrap();
            let i = seed % s.len();
            let (x, y, z) = s.coords(i);
            prop_assert_eq!(s.index(x, y, z), i);
            prop_assert_eq!(i, z * ny * nx + y * nx + x);
        }

        #[test]
        fn full_mask_mean_is_global_mean(vals in proptest::collection::vec(-10.0f64..10.0, 1..60)) {
            let s = VolumeShape::new(vals.len(), 1, 1).unwrap();
            let v = ScalarVolume::new(s, vals).unwrap();
            let mm = masked_mean(&v, &BinaryMask::full(s)).unwrap();
            prop_assert!((mm - v.mean()).abs() < 1e-12);
        }
    }
}
