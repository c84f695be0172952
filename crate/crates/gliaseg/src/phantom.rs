//! Deterministic synthetic volumes with analytic ground truth: a
//! blob-like soma, capsule-shaped tubes, optional intensity ramp and
//! seeded Gaussian noise.
//!
//! All geometry is expressed in physical units; voxel `(x, y, z)` sits at
//! physical position `(x sx, y sy, z sz)`. A voxel is foreground when its
//! center lies inside a shape; intensities get a one-voxel linear ramp at
//! the surface so edges are not perfectly sharp. Ground-truth masks are
//! noise-free by construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::init::BinaryMask;
use crate::volume::ScalarVolume;

#[derive(Debug, Clone, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Tube {
    pub start: [f64; 3],
    pub direction: [f64; 3],
    pub length: f64,
    pub radius: f64,
    /// Intensity multiplier relative to the foreground level.
    #[serde(default = "one")]
    pub intensity: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct Noise {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
}

/// Linear foreground-contrast ramp along one axis, multiplying the
/// foreground intensity from `low` (at coordinate 0) to `high`.
#[derive(Debug, Clone, Deserialize)]
pub struct Ramp {
    pub axis: usize,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
    #[serde(default)]
    pub soma: Option<Sphere>,
    #[serde(default)]
    pub tubes: Vec<Tube>,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub background: f64,
    #[serde(default = "one")]
    pub foreground: f64,
    #[serde(default)]
    pub ramp: Option<Ramp>,
    #[serde(default)]
    pub seed: u64,
}

fn unit_spacing() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

impl PhantomSpec {
    /// Noise-free sphere centered in the grid, spacing 1.
    pub fn sphere(dims: (usize, usize, usize), radius: f64) -> Self {
        let center = [
            (dims.0 as f64 - 1.0) / 2.0,
            (dims.1 as f64 - 1.0) / 2.0,
            (dims.2 as f64 - 1.0) / 2.0,
        ];
        PhantomSpec {
            dims: [dims.0, dims.1, dims.2],
            spacing: [1.0, 1.0, 1.0],
            soma: Some(Sphere { center, radius }),
            tubes: vec![],
            noise: Noise::default(),
            background: 0.0,
            foreground: 1.0,
            ramp: None,
            seed: 0,
        }
    }

    /// Noise-free tube along x, centered in y and z, spacing 1.
    pub fn cylinder(dims: (usize, usize, usize), radius: f64) -> Self {
        let cy = (dims.1 as f64 - 1.0) / 2.0;
        let cz = (dims.2 as f64 - 1.0) / 2.0;
        let margin = (radius + 2.0).ceil();
        PhantomSpec {
            dims: [dims.0, dims.1, dims.2],
            spacing: [1.0, 1.0, 1.0],
            soma: None,
            tubes: vec![Tube {
                start: [margin, cy, cz],
                direction: [1.0, 0.0, 0.0],
                length: dims.0 as f64 - 1.0 - 2.0 * margin,
                radius,
                intensity: 1.0,
            }],
            noise: Noise::default(),
            background: 0.0,
            foreground: 1.0,
            ramp: None,
            seed: 0,
        }
    }

    /// The default cell phantom: anisotropic 64x64x32 grid (0.2, 0.2, 1.0)
    /// micrometer spacing, a 5 um soma and four 1.2 um tubes, at
    /// amplitude signal-to-noise 5.
    pub fn microglia(seed: u64) -> Self {
        let c = [6.4, 6.4, 16.0];
        let r = 5.0;
        let dirs: [[f64; 3]; 4] = [
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
            [0.35, 0.0, 0.936_749_699_382_676_6],
            [0.0, -0.35, -0.936_749_699_382_676_6],
        ];
        let lens = [8.0, 8.0, 7.0, 7.0];
        let tubes = dirs
            .iter()
            .zip(lens)
            .map(|(d, len)| Tube {
                start: [c[0] + r * d[0], c[1] + r * d[1], c[2] + r * d[2]],
                direction: *d,
                length: len,
                radius: 1.2,
                intensity: 1.0,
            })
            .collect();
        PhantomSpec {
            dims: [64, 64, 32],
            spacing: [0.2, 0.2, 1.0],
            soma: Some(Sphere { center: c, radius: r }),
            tubes,
            noise: Noise { kind: NoiseKind::Gaussian, sigma: 0.18 },
            background: 0.1,
            foreground: 1.0,
            ramp: None,
            seed,
        }
    }

    /// Microglia phantom with a linear contrast ramp across the cell.
    pub fn microglia_ramp(seed: u64) -> Self {
        let mut spec = Self::microglia(seed);
        spec.ramp = Some(Ramp { axis: 0, low: 0.55, high: 1.0 });
        spec
    }

    /// Microglia geometry without noise.
    pub fn microglia_clean() -> Self {
        let mut spec = Self::microglia(0);
        spec.noise = Noise::default();
        spec
    }

    /// Two bright tube fragments separated by a gap carrying a faint
    /// bridge, for exercising fragment attraction. Spacing 1, no noise.
    pub fn fragmented_tube(bridge_intensity: f64) -> Self {
        PhantomSpec {
            dims: [64, 24, 24],
            spacing: [1.0, 1.0, 1.0],
            soma: None,
            tubes: vec![
                Tube {
                    start: [6.0, 11.5, 11.5],
                    direction: [1.0, 0.0, 0.0],
                    length: 20.0,
                    radius: 2.0,
                    intensity: 1.0,
                },
                Tube {
                    start: [26.5, 11.5, 11.5],
                    direction: [1.0, 0.0, 0.0],
                    length: 7.0,
                    radius: 1.2,
                    intensity: bridge_intensity,
                },
                Tube {
                    start: [34.0, 11.5, 11.5],
                    direction: [1.0, 0.0, 0.0],
                    length: 12.0,
                    radius: 2.0,
                    intensity: 1.0,
                },
            ],
            noise: Noise::default(),
            background: 0.0,
            foreground: 1.0,
            ramp: None,
            seed: 0,
        }
    }
}

fn normalize(d: [f64; 3]) -> Result<[f64; 3]> {
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Parameter("tube direction must be a nonzero vector".into()));
    }
    Ok([d[0] / n, d[1] / n, d[2] / n])
}

fn sphere_distance(p: [f64; 3], s: &Sphere) -> f64 {
    let dx = p[0] - s.center[0];
    let dy = p[1] - s.center[1];
    let dz = p[2] - s.center[2];
    (dx * dx + dy * dy + dz * dz).sqrt() - s.radius
}

fn capsule_distance(p: [f64; 3], start: [f64; 3], dir: [f64; 3], length: f64, radius: f64) -> f64 {
    let v = [p[0] - start[0], p[1] - start[1], p[2] - start[2]];
    let t = (v[0] * dir[0] + v[1] * dir[1] + v[2] * dir[2]).clamp(0.0, length);
    let q = [start[0] + t * dir[0], start[1] + t * dir[1], start[2] + t * dir[2]];
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    (dx * dx + dy * dy + dz * dz).sqrt() - radius
}

/// Render the phantom: the raw (possibly noisy) volume plus the
/// noise-free soma and process ground-truth masks.
pub fn generate(spec: &PhantomSpec) -> Result<(ScalarVolume, BinaryMask, BinaryMask)> {
    let dims = (spec.dims[0], spec.dims[1], spec.dims[2]);
    let spacing = (spec.spacing[0], spec.spacing[1], spec.spacing[2]);
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::Shape("phantom dims must be >= 1".into()));
    }
    if spacing.0 <= 0.0 || spacing.1 <= 0.0 || spacing.2 <= 0.0 {
        return Err(Error::Parameter("phantom spacing must be > 0".into()));
    }
    let extent = [
        (dims.0 as f64 - 1.0) * spacing.0,
        (dims.1 as f64 - 1.0) * spacing.1,
        (dims.2 as f64 - 1.0) * spacing.2,
    ];

    if let Some(s) = &spec.soma {
        if s.radius <= 0.0 {
            return Err(Error::Parameter("soma radius must be > 0".into()));
        }
        for k in 0..3 {
            if s.center[k] - s.radius < 0.0 || s.center[k] + s.radius > extent[k] {
                return Err(Error::Parameter(format!(
                    "soma exceeds the volume along axis {k} (center {:?}, radius {})",
                    s.center, s.radius
                )));
            }
        }
    }
    let mut tubes = Vec::with_capacity(spec.tubes.len());
    for t in &spec.tubes {
        if t.radius <= 0.0 || t.length < 0.0 {
            return Err(Error::Parameter("tube radius must be > 0 and length >= 0".into()));
        }
        let dir = normalize(t.direction)?;
        let end = [
            t.start[0] + t.length * dir[0],
            t.start[1] + t.length * dir[1],
            t.start[2] + t.length * dir[2],
        ];
        for k in 0..3 {
            for p in [t.start[k], end[k]] {
                if p - t.radius < 0.0 || p + t.radius > extent[k] {
                    return Err(Error::Parameter(format!(
                        "tube exceeds the volume along axis {k} (start {:?}, end {:?}, radius {})",
                        t.start, end, t.radius
                    )));
                }
            }
        }
        tubes.push((t.clone(), dir));
    }

    let edge_width = spacing.0.min(spacing.1).min(spacing.2);
    let n = dims.0 * dims.1 * dims.2;
    let mut data = vec![spec.background; n];
    let mut soma_mask = BinaryMask::new_empty(dims);
    let mut process_mask = BinaryMask::new_empty(dims);

    let ramp_factor = |p: [f64; 3]| -> f64 {
        match &spec.ramp {
            None => 1.0,
            Some(r) => {
                let span = extent[r.axis].max(f64::MIN_POSITIVE);
                let f = (p[r.axis] / span).clamp(0.0, 1.0);
                r.low + (r.high - r.low) * f
            }
        }
    };

    let mut idx = 0usize;
    for z in 0..dims.2 {
        for y in 0..dims.1 {
            for x in 0..dims.0 {
                let p = [x as f64 * spacing.0, y as f64 * spacing.1, z as f64 * spacing.2];
                let mut contribution: f64 = 0.0;
                if let Some(s) = &spec.soma {
                    let d = sphere_distance(p, s);
                    if d <= 0.0 {
                        soma_mask.set(x, y, z, true);
                    }
                    let edge = (0.5 - d / edge_width).clamp(0.0, 1.0);
                    let level = spec.foreground * ramp_factor(p);
                    contribution = contribution.max((level - spec.background) * edge);
                }
                for (t, dir) in &tubes {
                    let d = capsule_distance(p, t.start, *dir, t.length, t.radius);
                    if d <= 0.0 {
                        process_mask.set(x, y, z, true);
                    }
                    let edge = (0.5 - d / edge_width).clamp(0.0, 1.0);
                    let level = spec.foreground * t.intensity * ramp_factor(p);
                    contribution = contribution.max((level - spec.background) * edge);
                }
                data[idx] = spec.background + contribution.max(0.0);
                idx += 1;
            }
        }
    }

    if spec.noise.kind == NoiseKind::Gaussian && spec.noise.sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise.sigma)
            .map_err(|e| Error::Parameter(format!("bad noise sigma: {e}")))?;
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }

    // Attachment collars: mask overlap may only happen within one tube
    // radius of the soma surface.
    #[cfg(debug_assertions)]
    if let Some(s) = &spec.soma {
        let max_tube_r = tubes.iter().map(|(t, _)| t.radius).fold(0.0f64, f64::max);
        for z in 0..dims.2 {
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    if soma_mask.get(x, y, z) && process_mask.get(x, y, z) {
                        let p = [x as f64 * spacing.0, y as f64 * spacing.1, z as f64 * spacing.2];
                        debug_assert!(
                            sphere_distance(p, s).abs() <= max_tube_r + 1e-9,
                            "soma/process overlap outside the attachment collar"
                        );
                    }
                }
            }
        }
    }

    let volume = ScalarVolume::new(dims, spacing, data)?;
    Ok((volume, soma_mask, process_mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_voxel_count_matches_analytic_volume() {
        let spec = PhantomSpec::sphere((64, 64, 64), 6.0);
        let (_, soma, processes) = generate(&spec).unwrap();
        assert!(processes.is_empty());
        let count = soma.count_ones() as f64;
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * 6.0f64.powi(3);
        let rel = (count - analytic).abs() / analytic;
        assert!(rel < 0.05, "ball voxel count {count} vs analytic {analytic} ({rel})");
    }

    #[test]
    fn empty_spec_gives_flat_background() {
        let spec = PhantomSpec {
            dims: [8, 8, 8],
            spacing: [1.0, 1.0, 1.0],
            soma: None,
            tubes: vec![],
            noise: Noise::default(),
            background: 0.25,
            foreground: 1.0,
            ramp: None,
            seed: 0,
        };
        let (v, soma, tubes) = generate(&spec).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.25));
        assert!(soma.is_empty() && tubes.is_empty());
    }

    #[test]
    fn generation_is_deterministic_under_fixed_seed() {
        let spec = PhantomSpec::microglia(1234);
        let (a, _, _) = generate(&spec).unwrap();
        let (b, _, _) = generate(&spec).unwrap();
        assert_eq!(a.data(), b.data());
        let other = PhantomSpec::microglia(1235);
        let (c, _, _) = generate(&other).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn out_of_bounds_geometry_is_rejected() {
        let mut spec = PhantomSpec::sphere((16, 16, 16), 6.0);
        spec.soma.as_mut().unwrap().center = [1.0, 8.0, 8.0];
        assert!(matches!(generate(&spec), Err(Error::Parameter(_))));

        let mut spec = PhantomSpec::cylinder((32, 16, 16), 2.0);
        spec.tubes[0].length = 100.0;
        assert!(matches!(generate(&spec), Err(Error::Parameter(_))));
    }

    #[test]
    fn microglia_phantom_is_in_bounds_and_has_both_structures() {
        let (v, soma, tubes) = generate(&PhantomSpec::microglia(7)).unwrap();
        assert_eq!(v.dims(), (64, 64, 32));
        assert!(soma.count_ones() > 1000, "soma voxels {}", soma.count_ones());
        assert!(tubes.count_ones() > 300, "tube voxels {}", tubes.count_ones());
        let ramped = generate(&PhantomSpec::microglia_ramp(7)).unwrap();
        assert_eq!(ramped.1.bits(), soma.bits(), "ramp must not change ground truth");
    }

    #[test]
    fn ramp_dims_the_low_end() {
        let mut spec = PhantomSpec::cylinder((48, 16, 16), 2.0);
        spec.ramp = Some(Ramp { axis: 0, low: 0.4, high: 1.0 });
        let (v, _, _) = generate(&spec).unwrap();
        let left = v.at(8, 7, 7);
        let right = v.at(40, 7, 7);
        assert!(left < right, "ramped intensities {left} vs {right}");
    }
}
