//! Core 3D scalar grid with separable Gaussian filtering, gradients and
//! Hessian computation.
//!
//! Layout is fixed for the whole crate and for on-disk payloads:
//! `data[x + nx * (y + ny * z)]`, x fastest, z slowest. `spacing` is the
//! physical step (micrometers) per voxel along each axis and enters every
//! derivative denominator, so results are correct on anisotropic grids.
//!
//! Boundary policy: convolutions and second differences reflect about the
//! volume face (half-sample symmetric, `f[-1] == f[0]`), which keeps the
//! total intensity of a unit-sum kernel exact. First-order gradients use
//! one-sided differences at the faces instead.

use crate::error::{Error, Result};

/// 3D grid of real intensities over the image domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64), data: Vec<f64>) -> Result<Self> {
        if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
            return Err(Error::Shape(format!("volume dims must be >= 1, got {dims:?}")));
        }
        if !(spacing.0 > 0.0 && spacing.1 > 0.0 && spacing.2 > 0.0) {
            return Err(Error::Parameter(format!("spacing must be > 0, got {spacing:?}")));
        }
        let n = dims.0 * dims.1 * dims.2;
        if data.len() != n {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {:?} ({} voxels)",
                data.len(),
                dims,
                n
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("volume contains non-finite values".into()));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn filled(dims: (usize, usize, usize), spacing: (f64, f64, f64), value: f64) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        Self::new(dims, spacing, vec![value; n])
    }

    /// Internal constructor for data produced by this crate's own loops.
    pub(crate) fn from_parts(dims: (usize, usize, usize), spacing: (f64, f64, f64), data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.0 * dims.1 * dims.2);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { dims, spacing, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    pub fn voxel_count(&self) -> usize {
        self.data.len()
    }

    /// Physical volume of one voxel.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.0 * self.spacing.1 * self.spacing.2
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.0.min(self.spacing.1).min(self.spacing.2)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// New volume with the same geometry and `f(value)` per voxel.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarVolume {
        let data = self.data.iter().map(|&v| f(v)).collect();
        ScalarVolume::from_parts(self.dims, self.spacing, data)
    }

    pub fn same_geometry(&self, other: &ScalarVolume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    /// Separable Gaussian smoothing with physical-length `sigma`.
    ///
    /// The kernel is sampled at the voxel pitch of each axis, truncated at
    /// radius `ceil(3 sigma / spacing)` and normalized to unit sum, so a
    /// constant volume is reproduced exactly and total intensity is kept.
    pub fn gaussian_smooth(&self, sigma: f64) -> Result<ScalarVolume> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
        }
        let mut data = self.data.clone();
        let spacings = [self.spacing.0, self.spacing.1, self.spacing.2];
        for axis in 0..3 {
            let kernel = gaussian_kernel(sigma, spacings[axis]);
            data = convolve_axis(&data, self.dims, axis, &kernel);
        }
        Ok(ScalarVolume::from_parts(self.dims, self.spacing, data))
    }

    /// First derivatives along x, y, z: central differences in the
    /// interior, one-sided at the faces, divided by the physical spacing.
    pub fn gradient(&self) -> (ScalarVolume, ScalarVolume, ScalarVolume) {
        let gx = self.derivative_axis(0);
        let gy = self.derivative_axis(1);
        let gz = self.derivative_axis(2);
        (gx, gy, gz)
    }

    fn derivative_axis(&self, axis: usize) -> ScalarVolume {
        let (nx, ny, nz) = self.dims;
        let n = [nx, ny, nz];
        let h = [self.spacing.0, self.spacing.1, self.spacing.2][axis];
        let stride = [1, nx, nx * ny][axis];
        let len = n[axis];
        let mut out = vec![0.0; self.data.len()];
        for_each_line(self.dims, axis, |base| {
            for i in 0..len {
                let idx = base + i * stride;
                let v = if len == 1 {
                    0.0
                } else if i == 0 {
                    (self.data[idx + stride] - self.data[idx]) / h
                } else if i == len - 1 {
                    (self.data[idx] - self.data[idx - stride]) / h
                } else {
                    (self.data[idx + stride] - self.data[idx - stride]) / (2.0 * h)
                };
                out[idx] = v;
            }
        });
        ScalarVolume::from_parts(self.dims, self.spacing, out)
    }

    /// Hessian of the sigma-smoothed volume, scale-normalized by sigma^2.
    ///
    /// Pure second derivatives use the mirrored three-point stencil, mixed
    /// partials successive mirrored central first differences.
    pub fn hessian(&self, sigma: f64) -> Result<HessianVolume> {
        let smoothed = self.gaussian_smooth(sigma)?;
        let s2 = sigma * sigma;
        let (nx, ny, nz) = self.dims;

        let dxx = second_derivative_axis(&smoothed, 0);
        let dyy = second_derivative_axis(&smoothed, 1);
        let dzz = second_derivative_axis(&smoothed, 2);
        let dx = central_mirror_axis(&smoothed, 0);
        let dxy = central_mirror_axis_vec(&dx, self.dims, self.spacing, 1);
        let dxz = central_mirror_axis_vec(&dx, self.dims, self.spacing, 2);
        let dy = central_mirror_axis(&smoothed, 1);
        let dyz = central_mirror_axis_vec(&dy, self.dims, self.spacing, 2);

        let n = nx * ny * nz;
        let mut comps = vec![[0.0f64; 6]; n];
        for i in 0..n {
            comps[i] = [
                s2 * dxx[i],
                s2 * dyy[i],
                s2 * dzz[i],
                s2 * dxy[i],
                s2 * dxz[i],
                s2 * dyz[i],
            ];
        }
        Ok(HessianVolume {
            dims: self.dims,
            spacing: self.spacing,
            scale: sigma,
            comps,
        })
    }
}

/// Per-voxel symmetric 3x3 matrix stored as its 6 unique components in the
/// fixed order `[xx, yy, zz, xy, xz, yz]`, plus the smoothing scale.
#[derive(Debug, Clone)]
pub struct HessianVolume {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    scale: f64,
    comps: Vec<[f64; 6]>,
}

impl HessianVolume {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 6] {
        self.comps[idx]
    }

    pub fn components(&self) -> &[[f64; 6]] {
        &self.comps
    }
}

/// Sampled, unit-sum 1D Gaussian; radius `ceil(3 sigma / h)` taps per side.
fn gaussian_kernel(sigma: f64, h: f64) -> Vec<f64> {
    let radius = (3.0 * sigma / h).ceil() as usize;
    let mut k = Vec::with_capacity(2 * radius + 1);
    for j in -(radius as isize)..=(radius as isize) {
        let x = j as f64 * h;
        k.push((-x * x / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Half-sample symmetric reflection: ... f[1] f[0] | f[0] f[1] ... f[n-1] | f[n-1] ...
#[inline]
fn reflect(mut i: isize, n: isize) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Run `f(base_index)` once per grid line along `axis`.
pub(crate) fn for_each_line(dims: (usize, usize, usize), axis: usize, mut f: impl FnMut(usize)) {
    let (nx, ny, nz) = dims;
    match axis {
        0 => {
            for z in 0..nz {
                for y in 0..ny {
                    f(nx * (y + ny * z));
                }
            }
        }
        1 => {
            for z in 0..nz {
                for x in 0..nx {
                    f(x + nx * ny * z);
                }
            }
        }
        _ => {
            for y in 0..ny {
                for x in 0..nx {
                    f(x + nx * y);
                }
            }
        }
    }
}

fn convolve_axis(data: &[f64], dims: (usize, usize, usize), axis: usize, kernel: &[f64]) -> Vec<f64> {
    let (nx, ny, nz) = dims;
    let n = [nx, ny, nz][axis];
    let stride = [1, nx, nx * ny][axis];
    let radius = (kernel.len() - 1) / 2;
    let mut out = vec![0.0; data.len()];
    let mut line = vec![0.0; n];
    for_each_line(dims, axis, |base| {
        for i in 0..n {
            line[i] = data[base + i * stride];
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let off = i as isize + j as isize - radius as isize;
                acc += kv * line[reflect(off, n as isize)];
            }
            out[base + i * stride] = acc;
        }
    });
    out
}

/// Mirrored three-point second difference along `axis`, divided by h^2.
pub(crate) fn second_derivative_axis(v: &ScalarVolume, axis: usize) -> Vec<f64> {
    let dims = v.dims();
    let (nx, ny, nz) = dims;
    let n = [nx, ny, nz][axis];
    let stride = [1, nx, nx * ny][axis];
    let h = [v.spacing().0, v.spacing().1, v.spacing().2][axis];
    let data = v.data();
    let mut out = vec![0.0; data.len()];
    for_each_line(dims, axis, |base| {
        for i in 0..n {
            let c = data[base + i * stride];
            let l = data[base + reflect(i as isize - 1, n as isize) * stride];
            let r = data[base + reflect(i as isize + 1, n as isize) * stride];
            out[base + i * stride] = (r - 2.0 * c + l) / (h * h);
        }
    });
    out
}

/// Mirrored central first difference along `axis`, divided by 2h.
fn central_mirror_axis(v: &ScalarVolume, axis: usize) -> Vec<f64> {
    central_mirror_axis_vec(v.data(), v.dims(), v.spacing(), axis)
}

pub(crate) fn central_mirror_axis_vec(
    data: &[f64],
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    axis: usize,
) -> Vec<f64> {
    let (nx, ny, nz) = dims;
    let n = [nx, ny, nz][axis];
    let stride = [1, nx, nx * ny][axis];
    let h = [spacing.0, spacing.1, spacing.2][axis];
    let mut out = vec![0.0; data.len()];
    for_each_line(dims, axis, |base| {
        for i in 0..n {
            let l = data[base + reflect(i as isize - 1, n as isize) * stride];
            let r = data[base + reflect(i as isize + 1, n as isize) * stride];
            out[base + i * stride] = (r - l) / (2.0 * h);
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_volume(dims: (usize, usize, usize), spacing: (f64, f64, f64), seed: u64) -> ScalarVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.0 * dims.1 * dims.2;
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        ScalarVolume::new(dims, spacing, data).unwrap()
    }

    /// Dense 3D convolution with an explicitly sampled product kernel and
    /// the same reflected boundary. Oracle for the separable path.
    fn dense_gaussian_oracle(v: &ScalarVolume, sigma: f64) -> Vec<f64> {
        let (nx, ny, nz) = v.dims();
        let (sx, sy, sz) = v.spacing();
        let kx = gaussian_kernel(sigma, sx);
        let ky = gaussian_kernel(sigma, sy);
        let kz = gaussian_kernel(sigma, sz);
        let rx = (kx.len() - 1) / 2;
        let ry = (ky.len() - 1) / 2;
        let rz = (kz.len() - 1) / 2;
        let mut out = vec![0.0; v.voxel_count()];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let mut acc = 0.0;
                    for (c, &kzv) in kz.iter().enumerate() {
                        let zz = reflect(z as isize + c as isize - rz as isize, nz as isize);
                        for (b, &kyv) in ky.iter().enumerate() {
                            let yy = reflect(y as isize + b as isize - ry as isize, ny as isize);
                            for (a, &kxv) in kx.iter().enumerate() {
                                let xx = reflect(x as isize + a as isize - rx as isize, nx as isize);
                                acc += kxv * kyv * kzv * v.at(xx, yy, zz);
                            }
                        }
                    }
                    out[v.index(x, y, z)] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        assert!(matches!(
            ScalarVolume::new((0, 4, 4), (1.0, 1.0, 1.0), vec![]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            ScalarVolume::new((2, 2, 2), (0.0, 1.0, 1.0), vec![0.0; 8]),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            ScalarVolume::new((2, 2, 2), (1.0, 1.0, 1.0), vec![0.0; 7]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            ScalarVolume::new((2, 2, 2), (1.0, 1.0, 1.0), vec![f64::NAN; 8]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn smooth_impulse_matches_sampled_kernel_peak() {
        let dims = (17, 17, 17);
        let mut v = ScalarVolume::filled(dims, (1.0, 1.0, 1.0), 0.0).unwrap();
        v.set(8, 8, 8, 1.0);
        let sigma = 1.0;
        let s = v.gaussian_smooth(sigma).unwrap();
        let k = gaussian_kernel(sigma, 1.0);
        let peak = k[(k.len() - 1) / 2];
        let expected = peak * peak * peak;
        assert!(
            (s.at(8, 8, 8) - expected).abs() < 1e-12,
            "impulse center {} vs sampled product kernel peak {}",
            s.at(8, 8, 8),
            expected
        );
        let oracle = dense_gaussian_oracle(&v, sigma);
        let max_err = s
            .data()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-12, "separable vs dense oracle max err {max_err}");
    }

    #[test]
    fn smooth_preserves_constants_and_total_intensity() {
        let v = ScalarVolume::filled((9, 7, 5), (0.5, 0.5, 2.0), 3.25).unwrap();
        for sigma in [0.4, 1.0, 3.0] {
            let s = v.gaussian_smooth(sigma).unwrap();
            for &x in s.data() {
                assert!((x - 3.25).abs() < 1e-12);
            }
        }
        let r = random_volume((12, 10, 8), (0.7, 1.0, 1.3), 11);
        let s = r.gaussian_smooth(1.7).unwrap();
        let rel = (s.sum() - r.sum()).abs() / r.sum().abs();
        assert!(rel < 1e-6, "total intensity drift {rel}");
    }

    #[test]
    fn smooth_matches_dense_oracle_on_random_volume() {
        let v = random_volume((32, 32, 32), (1.0, 1.0, 1.0), 42);
        let s = v.gaussian_smooth(0.5).unwrap();
        let oracle = dense_gaussian_oracle(&v, 0.5);
        let max_err = s
            .data()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1e-9, "max abs err vs dense oracle: {max_err}");
    }

    #[test]
    fn smooth_rejects_bad_sigma() {
        let v = ScalarVolume::filled((4, 4, 4), (1.0, 1.0, 1.0), 0.0).unwrap();
        assert!(matches!(v.gaussian_smooth(0.0), Err(Error::Parameter(_))));
        assert!(matches!(v.gaussian_smooth(-1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn smooth_is_linear() {
        let u = random_volume((10, 9, 8), (1.0, 1.0, 1.0), 1);
        let w = random_volume((10, 9, 8), (1.0, 1.0, 1.0), 2);
        let (a, b) = (0.7, -1.9);
        let combo = ScalarVolume::new(
            u.dims(),
            u.spacing(),
            u.data().iter().zip(w.data()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let lhs = combo.gaussian_smooth(1.2).unwrap();
        let su = u.gaussian_smooth(1.2).unwrap();
        let sw = w.gaussian_smooth(1.2).unwrap();
        let max_err = lhs
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (a * su.data()[i] + b * sw.data()[i])).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-9, "linearity violation {max_err}");
    }

    #[test]
    fn smooth_never_raises_max_of_nonnegative() {
        let v = random_volume((14, 14, 14), (1.0, 1.0, 1.0), 5);
        let m0 = v.max_value();
        for sigma in [0.5, 1.0, 2.0, 4.0] {
            let s = v.gaussian_smooth(sigma).unwrap();
            assert!(s.max_value() <= m0 + 1e-12);
        }
    }

    #[test]
    fn hessian_of_quadratic_is_two_sigma_squared() {
        let dims = (21, 21, 21);
        let mut data = vec![0.0; 21 * 21 * 21];
        for z in 0..21 {
            for y in 0..21 {
                for x in 0..21 {
                    data[x + 21 * (y + 21 * z)] = (x as f64) * (x as f64);
                }
            }
        }
        let v = ScalarVolume::new(dims, (1.0, 1.0, 1.0), data).unwrap();
        let sigma = 0.8;
        let h = v.hessian(sigma).unwrap();
        let c = h.at(h.index(10, 10, 10));
        let expected = 2.0 * sigma * sigma;
        assert!((c[0] - expected).abs() < 1e-3, "xx {} vs {}", c[0], expected);
        for k in 1..6 {
            assert!(c[k].abs() < 1e-3, "component {k} should vanish, got {}", c[k]);
        }
    }

    #[test]
    fn hessian_of_constant_is_zero() {
        let v = ScalarVolume::filled((8, 8, 8), (0.5, 0.5, 1.0), 7.0).unwrap();
        let h = v.hessian(1.0).unwrap();
        for c in h.components() {
            for &x in c {
                assert_eq!(x, 0.0);
            }
        }
    }

    #[test]
    fn hessian_negation_is_componentwise() {
        let v = random_volume((10, 10, 10), (1.0, 1.0, 1.0), 9);
        let neg = v.map(|x| -x);
        let h = v.hessian(1.0).unwrap();
        let hn = neg.hessian(1.0).unwrap();
        for (a, b) in h.components().iter().zip(hn.components()) {
            for k in 0..6 {
                assert!((a[k] + b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_of_bright_tube_is_small_along_axis() {
        // Bright tube along z: zz curvature must be far below xx, yy.
        let dims = (24, 24, 24);
        let mut data = vec![0.0; 24 * 24 * 24];
        for z in 0..24 {
            for y in 0..24 {
                for x in 0..24 {
                    let dx = x as f64 - 12.0;
                    let dy = y as f64 - 12.0;
                    let r2 = dx * dx + dy * dy;
                    data[x + 24 * (y + 24 * z)] = (-r2 / (2.0 * 2.0 * 2.0)).exp();
                }
            }
        }
        let v = ScalarVolume::new(dims, (1.0, 1.0, 1.0), data).unwrap();
        let h = v.hessian(1.5).unwrap();
        let c = h.at(h.index(12, 12, 12));
        assert!(c[2].abs() < 0.1 * c[0].abs(), "zz {} vs xx {}", c[2], c[0]);
        assert!(c[2].abs() < 0.1 * c[1].abs(), "zz {} vs yy {}", c[2], c[1]);
        assert!(c[0] < 0.0 && c[1] < 0.0, "bright tube cross-section must curve down");
    }

    #[test]
    fn gradient_of_linear_field_is_unit() {
        let dims = (12, 10, 8);
        let mut data = vec![0.0; 12 * 10 * 8];
        for z in 0..8 {
            for y in 0..10 {
                for x in 0..12 {
                    data[x + 12 * (y + 10 * z)] = x as f64 * 0.5;
                }
            }
        }
        let v = ScalarVolume::new(dims, (0.5, 1.0, 1.0), data).unwrap();
        let (gx, gy, gz) = v.gradient();
        for z in 0..8 {
            for y in 0..10 {
                for x in 1..11 {
                    assert!((gx.at(x, y, z) - 1.0).abs() < 1e-12);
                    assert_eq!(gy.at(x, y, z), 0.0);
                    assert_eq!(gz.at(x, y, z), 0.0);
                }
            }
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let v = ScalarVolume::filled((5, 5, 5), (1.0, 2.0, 3.0), 4.0).unwrap();
        let (gx, gy, gz) = v.gradient();
        for g in [gx, gy, gz] {
            assert!(g.data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn gradient_matches_index_arithmetic_oracle() {
        let v = random_volume((16, 16, 16), (0.4, 1.0, 2.5), 33);
        let (gx, gy, gz) = v.gradient();
        let (nx, ny, nz) = v.dims();
        let (sx, sy, sz) = v.spacing();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let ox = if x == 0 {
                        (v.at(1, y, z) - v.at(0, y, z)) / sx
                    } else if x == nx - 1 {
                        (v.at(nx - 1, y, z) - v.at(nx - 2, y, z)) / sx
                    } else {
                        (v.at(x + 1, y, z) - v.at(x - 1, y, z)) / (2.0 * sx)
                    };
                    assert_eq!(gx.at(x, y, z), ox);
                    let oy = if y == 0 {
                        (v.at(x, 1, z) - v.at(x, 0, z)) / sy
                    } else if y == ny - 1 {
                        (v.at(x, ny - 1, z) - v.at(x, ny - 2, z)) / sy
                    } else {
                        (v.at(x, y + 1, z) - v.at(x, y - 1, z)) / (2.0 * sy)
                    };
                    assert_eq!(gy.at(x, y, z), oy);
                    let oz = if z == 0 {
                        (v.at(x, y, 1) - v.at(x, y, 0)) / sz
                    } else if z == nz - 1 {
                        (v.at(x, y, nz - 1) - v.at(x, y, nz - 2)) / sz
                    } else {
                        (v.at(x, y, z + 1) - v.at(x, y, z - 1)) / (2.0 * sz)
                    };
                    assert_eq!(gz.at(x, y, z), oz);
                }
            }
        }
    }

    #[test]
    fn operations_leave_input_unmodified() {
        let v = random_volume((8, 8, 8), (1.0, 1.0, 1.0), 77);
        let copy = v.clone();
        let _ = v.gaussian_smooth(1.0).unwrap();
        let _ = v.hessian(1.0).unwrap();
        let _ = v.gradient();
        assert_eq!(v, copy);
    }
}
