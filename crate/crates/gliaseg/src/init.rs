//! Automatic seeding: Otsu thresholds on the enhanced responses converted
//! to initial signed-distance level sets.

use crate::error::{Error, Result};
use crate::features::EnhancedField;
use crate::levelset::LevelSetField;
use crate::volume::ScalarVolume;

/// One bit per voxel, same layout as [`ScalarVolume`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: (usize, usize, usize),
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new_empty(dims: (usize, usize, usize)) -> Self {
        Self { dims, bits: vec![false; dims.0 * dims.1 * dims.2] }
    }

    pub fn from_fn(dims: (usize, usize, usize), f: impl Fn(usize, usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for z in 0..dims.2 {
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    bits.push(f(x, y, z));
                }
            }
        }
        Self { dims, bits }
    }

    pub fn from_bits(dims: (usize, usize, usize), bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::Shape(format!(
                "mask bits length {} does not match dims {:?}",
                bits.len(),
                dims
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.index(x, y, z);
        self.bits[i] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.dims != other.dims {
            return Err(Error::Shape("mask dims differ".into()));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        Ok(BinaryMask { dims: self.dims, bits })
    }
}

/// Otsu threshold over `bins` equal-width bins spanning [min, max].
///
/// Returns the bin boundary maximizing between-class variance; ties pick
/// the lowest threshold. All class moments are exact integers so the
/// result is reproducible down to the last ulp against an exhaustive
/// search over the same histogram.
pub fn otsu_threshold(v: &ScalarVolume, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Parameter(format!("bins must be >= 2, got {bins}")));
    }
    let lo = v.min_value();
    let hi = v.max_value();
    if lo == hi {
        return Err(Error::Degenerate("constant volume has no threshold".into()));
    }
    let hist = build_histogram(v, bins, lo, hi);
    let best_t = otsu_best_bin(&hist)
        .ok_or_else(|| Error::Degenerate("histogram collapsed to one class".into()))?;
    Ok(lo + (hi - lo) * (best_t as f64 + 1.0) / bins as f64)
}

pub(crate) fn build_histogram(v: &ScalarVolume, bins: usize, lo: f64, hi: f64) -> Vec<u64> {
    let mut hist = vec![0u64; bins];
    let w = (hi - lo) / bins as f64;
    for &x in v.data() {
        let mut b = ((x - lo) / w) as usize;
        if b >= bins {
            b = bins - 1;
        }
        hist[b] += 1;
    }
    hist
}

/// Index `t` of the best split "bins 0..=t vs rest", or None when a class
/// is always empty. Score is (S0*N - S*w0)^2 / (w0*w1) on exact integer
/// moments; strict `>` keeps the lowest threshold on ties.
pub(crate) fn otsu_best_bin(hist: &[u64]) -> Option<usize> {
    let n: u64 = hist.iter().sum();
    let s: u64 = hist.iter().enumerate().map(|(i, &h)| i as u64 * h).sum();
    let mut w0: u64 = 0;
    let mut s0: u64 = 0;
    let mut best: Option<(usize, f64)> = None;
    for t in 0..hist.len() - 1 {
        w0 += hist[t];
        s0 += t as u64 * hist[t];
        let w1 = n - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let d = (s0 as i128 * n as i128 - s as i128 * w0 as i128) as f64;
        let score = d * d / (w0 as f64 * w1 as f64);
        match best {
            Some((_, b)) if score <= b => {}
            _ => best = Some((t, score)),
        }
    }
    best.map(|(t, _)| t)
}

/// Warnings produced while converting degenerate masks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SdfFlags {
    pub empty: bool,
    pub full: bool,
}

/// Exact Euclidean signed distance: positive inside the mask, negative
/// outside, measured in physical units between voxel centers.
pub fn mask_to_sdf(m: &BinaryMask, spacing: (f64, f64, f64), epsilon_vox: f64) -> (LevelSetField, SdfFlags) {
    let dims = m.dims();
    let diag = {
        let ex = (dims.0 as f64 - 1.0) * spacing.0;
        let ey = (dims.1 as f64 - 1.0) * spacing.1;
        let ez = (dims.2 as f64 - 1.0) * spacing.2;
        (ex * ex + ey * ey + ez * ez).sqrt().max(spacing.0.max(spacing.1).max(spacing.2))
    };
    let n = dims.0 * dims.1 * dims.2;
    let ones = m.count_ones();
    if ones == 0 {
        let phi = ScalarVolume::from_parts(dims, spacing, vec![-diag; n]);
        return (
            LevelSetField::from_phi(phi, epsilon_vox),
            SdfFlags { empty: true, full: false },
        );
    }
    if ones == n {
        let phi = ScalarVolume::from_parts(dims, spacing, vec![diag; n]);
        return (
            LevelSetField::from_phi(phi, epsilon_vox),
            SdfFlags { empty: false, full: true },
        );
    }
    let dist_to_fg = euclidean_distance_field(m, spacing, true);
    let dist_to_bg = euclidean_distance_field(m, spacing, false);
    let mut phi = vec![0.0f64; n];
    for i in 0..n {
        phi[i] = if m.bits()[i] { dist_to_bg[i] } else { -dist_to_fg[i] };
    }
    let phi = ScalarVolume::from_parts(dims, spacing, phi);
    (LevelSetField::from_phi(phi, epsilon_vox), SdfFlags::default())
}

/// Exact squared-Euclidean distance transform (lower envelope of
/// parabolas, one pass per axis), then square root. `to_foreground`
/// selects which voxel class is the target set.
fn euclidean_distance_field(m: &BinaryMask, spacing: (f64, f64, f64), to_foreground: bool) -> Vec<f64> {
    const FAR: f64 = 1e20;
    let (nx, ny, nz) = m.dims();
    let mut d2: Vec<f64> = m
        .bits()
        .iter()
        .map(|&b| if b == to_foreground { 0.0 } else { FAR })
        .collect();

    let spacings = [spacing.0, spacing.1, spacing.2];
    for axis in 0..3 {
        let len = [nx, ny, nz][axis];
        if len == 1 {
            continue;
        }
        let stride = [1, nx, nx * ny][axis];
        let h = spacings[axis];
        let mut f = vec![0.0f64; len];
        let mut out = vec![0.0f64; len];
        let mut v_idx = vec![0usize; len];
        let mut z_bound = vec![0.0f64; len + 1];
        crate::volume::for_each_line(m.dims(), axis, |base| {
            for i in 0..len {
                f[i] = d2[base + i * stride];
            }
            dt1d(&f, h, &mut out, &mut v_idx, &mut z_bound);
            for i in 0..len {
                d2[base + i * stride] = out[i];
            }
        });
    }
    d2.iter().map(|&x| x.sqrt()).collect()
}

/// 1D squared-distance transform D(q) = min_i f(i) + (h (q - i))^2.
fn dt1d(f: &[f64], h: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let h2 = h * h;
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + h2 * (q * q) as f64) - (f[p] + h2 * (p * p) as f64))
                / (2.0 * h2 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        out[q] = h2 * (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// 26-connected component labeling; labels start at 1 in scan order.
/// Returns per-voxel labels (0 = background) and per-label voxel counts.
pub fn connected_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (nx, ny, nz) = mask.dims();
    let n = nx * ny * nz;
    let mut labels = vec![0u32; n];
    let mut sizes = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    let mut next = 1u32;
    for start in 0..n {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = next;
        next += 1;
        let mut size = 0usize;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let x = i % nx;
            let y = (i / nx) % ny;
            let z = i / (nx * ny);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let xx = x as i64 + dx;
                        let yy = y as i64 + dy;
                        let zz = z as i64 + dz;
                        if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                            continue;
                        }
                        let j = xx as usize + nx * (yy as usize + ny * zz as usize);
                        if mask.bits()[j] && labels[j] == 0 {
                            labels[j] = label;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Seeding diagnostics surfaced in the run report.
#[derive(Debug, Clone, Default)]
pub struct SeedDiagnostics {
    pub tube_threshold: Option<f64>,
    pub blob_threshold: Option<f64>,
    pub tube_seed_empty: bool,
    pub blob_seed_empty: bool,
}

/// Threshold an enhanced response into a seed mask.
///
/// Otsu always produces a nonempty upper class (it is invariant under
/// intensity scaling), so a volume without the sought structure would
/// still grow a seed out of residue responses. `floor` guards against
/// that: when the strongest response stays below it the seed is declared
/// empty. A degenerate (constant) response falls back to the fixed
/// midpoint 0.5.
pub fn threshold_response(
    field: &EnhancedField,
    bins: usize,
    floor: f64,
) -> Result<(BinaryMask, Option<f64>)> {
    if field.response.max_value() < floor {
        return Ok((BinaryMask::new_empty(field.dims()), None));
    }
    let thr = match otsu_threshold(&field.response, bins) {
        Ok(t) => Some(t),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let t = thr.unwrap_or(0.5);
    let bits = field.response.data().iter().map(|&r| r >= t).collect();
    Ok((BinaryMask::from_bits(field.dims(), bits)?, thr))
}

/// Otsu-seed both level sets. Tube-seed components lying entirely inside
/// the blob seed are dropped to start the pair near the no-overlap
/// feasible set. Errors only when both seeds are empty.
pub fn initialize_pair(
    tube: &EnhancedField,
    blob: &EnhancedField,
    epsilon_vox: f64,
    seed_floor: f64,
) -> Result<(LevelSetField, LevelSetField, SeedDiagnostics)> {
    if tube.dims() != blob.dims() {
        return Err(Error::Shape("tube and blob enhancement dims differ".into()));
    }
    let spacing = tube.response.spacing();
    let (mut tube_mask, tube_thr) = threshold_response(tube, 256, seed_floor)?;
    let (blob_mask, blob_thr) = threshold_response(blob, 256, seed_floor)?;

    // Drop tube components fully covered by the blob seed.
    if !tube_mask.is_empty() && !blob_mask.is_empty() {
        let (labels, sizes) = connected_components(&tube_mask);
        let mut fully_inside = vec![true; sizes.len() + 1];
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 && !blob_mask.bits()[i] {
                fully_inside[l as usize] = false;
            }
        }
        let dims = tube_mask.dims();
        let mut bits = tube_mask.bits().to_vec();
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 && fully_inside[l as usize] {
                bits[i] = false;
            }
        }
        tube_mask = BinaryMask::from_bits(dims, bits)?;
    }

    if tube_mask.is_empty() && blob_mask.is_empty() {
        return Err(Error::EmptySeed(
            "both the tube and blob seeds are empty; nothing to segment".into(),
        ));
    }

    let (phi_tube, tube_flags) = mask_to_sdf(&tube_mask, spacing, epsilon_vox);
    let (phi_blob, blob_flags) = mask_to_sdf(&blob_mask, spacing, epsilon_vox);
    Ok((
        phi_tube,
        phi_blob,
        SeedDiagnostics {
            tube_threshold: tube_thr,
            blob_threshold: blob_thr,
            tube_seed_empty: tube_flags.empty,
            blob_seed_empty: blob_flags.empty,
        },
    ))
}
