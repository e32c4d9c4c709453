use crate::real::Real;
use crate::volume::{ScalarVolume, VolumeShape};

pub const FEATURE_COUNT: usize = 7;

/// 3x3x3 box mean, clipped to in-bounds neighbours.
pub(crate) fn box_smooth<T: Real>(image: &ScalarVolume<T>) -> ScalarVolume<T> {
    let shape = image.shape();
    let [nx, ny, nz] = shape.dims();
    ScalarVolume::from_fn(shape, |x, y, z| box_mean_at(image, x, y, z, nx, ny, nz))
        .expect("mean of finite values is finite")
}

fn box_mean_at<T: Real>(image: &ScalarVolume<T>, x: usize, y: usize, z: usize, nx: usize, ny: usize, nz: usize) -> T {
    let range = |c: usize, n: usize| c.saturating_sub(1)..=(c + 1).min(n - 1);
    let mut sum = T::zero();
    let mut n = 0usize;
    for zz in range(z, nz) {
        for yy in range(y, ny) {
            for xx in range(x, nx) {
                sum += image.get(xx, yy, zz);
                n += 1;
            }
        }
    }
    sum / T::from_usize_lossy(n)
}

#[inline]
fn normalized(c: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        2.0 * c as f64 / (n - 1) as f64 - 1.0
    }
}

#[inline]
fn spatial<T: Real>(shape: VolumeShape, x: usize, y: usize, z: usize) -> [T; 4] {
    let (u, v, w) = (
        normalized(x, shape.nx()),
        normalized(y, shape.ny()),
        normalized(z, shape.nz()),
    );
    let radial = (u * u + v * v + w * w).sqrt() / 3f64.sqrt();
    [T::lit(u), T::lit(v), T::lit(w), T::lit(radial)]
}

#[inline]
fn assemble<T: Real>(intensity: T, smoothed: T, s: [T; 4]) -> [T; FEATURE_COUNT] {
    [T::one(), intensity, smoothed, s[0], s[1], s[2], s[3]]
}

/// Feature vector of one voxel: bias, intensity, 3x3x3 box-smoothed intensity,
/// coordinates scaled to `[-1, 1]`, and distance to the volume centre scaled so
/// that corners are at 1.
pub fn extract_features<T: Real>(image: &ScalarVolume<T>, voxel: (usize, usize, usize)) -> [T; FEATURE_COUNT] {
    let shape = image.shape();
    let (x, y, z) = voxel;
    let [nx, ny, nz] = shape.dims();
    assemble(
        image.get(x, y, z),
        box_mean_at(image, x, y, z, nx, ny, nz),
        spatial(shape, x, y, z),
    )
}

/// Per-case feature cache: the smoothed image is computed once and the
/// coordinate features on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume<T> {
    image: ScalarVolume<T>,
    smoothed: ScalarVolume<T>,
}

impl<T: Real> FeatureVolume<T> {
    pub fn new(image: ScalarVolume<T>) -> Self {
        let smoothed = box_smooth(&image);
        Self { image, smoothed }
    }

    pub fn image(&self) -> &ScalarVolume<T> {
        &self.image
    }

    pub fn shape(&self) -> VolumeShape {
        self.image.shape()
    }

    #[inline]
    pub fn at(&self, index: usize) -> [T; FEATURE_COUNT] {
        let shape = self.shape();
        let (x, y, z) = shape.coords(index);
        assemble(
            self.image.data()[index],
            self.smoothed.data()[index],
            spatial(shape, x, y, z),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn centre_and_corner() {
        let s = VolumeShape::new(5, 7, 9).unwrap();
        let img = ScalarVolume::filled(s, 0.0f64);
        let c = extract_features(&img, (2, 3, 4));
        assert_eq!(&c[3..], &[0.0, 0.0, 0.0, 0.0]);
        let k = extract_features(&img, (4, 0, 8));
        assert_eq!(&k[3..6], &[1.0, -1.0, 1.0]);
        assert_abs_diff_eq!(k[6], 1.0, epsilon = 1e-15);
        assert_eq!(k[0], 1.0);
    }

    #[test]
    fn constant_image_features() {
        let s = VolumeShape::cube(4).unwrap();
        let img = ScalarVolume::filled(s, 0.37f64);
        for i in [0, 5, 21, 63] {
            let f = extract_features(&img, s.coords(i));
            assert_abs_diff_eq!(f[1], 0.37, epsilon = 1e-15);
            assert_abs_diff_eq!(f[2], 0.37, epsilon = 1e-15);
        }
    }

    #[test]
    fn boundary_smoothing_clips() {
        let s = VolumeShape::new(3, 1, 1).unwrap();
        let img = ScalarVolume::new(s, vec![0.0, 3.0, 6.0f64]).unwrap();
        assert_abs_diff_eq!(extract_features(&img, (0, 0, 0))[2], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(extract_features(&img, (1, 0, 0))[2], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn cache_matches_direct_extraction() {
        let s = VolumeShape::new(4, 5, 3).unwrap();
        let img = ScalarVolume::from_fn(s, |x, y, z| (x * 7 + y * 3 + z * 11) as f64 % 5.0).unwrap();
        let cache = FeatureVolume::new(img.clone());
        for i in 0..s.len() {
            assert_eq!(cache.at(i), extract_features(&img, s.coords(i)));
        }
    }
}
