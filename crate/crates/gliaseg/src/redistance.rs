//! Signed-distance restoration by fast sweeping.
//!
//! The zero crossing of the input field is located by linear interpolation
//! along grid edges and frozen; the eikonal equation |grad d| = 1 is then
//! solved by Gauss-Seidel sweeps in the eight axis orderings, honoring
//! anisotropic spacing. Gradient-descent updates erode the signed-distance
//! property of phi; this restores it without moving the interface by more
//! than a voxel.

use crate::volume::ScalarVolume;

const FAR: f64 = 1e20;

/// Rebuild `phi` as an approximate signed distance to its own zero set.
/// Fields with no sign change are returned unchanged.
pub fn reinitialize(phi: &ScalarVolume) -> ScalarVolume {
    let (nx, ny, nz) = phi.dims();
    let (sx, sy, sz) = phi.spacing();
    let n = nx * ny * nz;
    let data = phi.data();

    let inside: Vec<bool> = data.iter().map(|&v| v > 0.0).collect();
    let mut dist = vec![FAR; n];
    let mut frozen = vec![false; n];

    // Seed interface voxels with their interpolated distance to the zero
    // crossing; combine per-axis crossings like distances to a plane.
    let strides = [1usize, nx, nx * ny];
    let lens = [nx, ny, nz];
    let spac = [sx, sy, sz];
    let mut any_interface = false;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                let pos = [x, y, z];
                let mut inv_sq = 0.0f64;
                for axis in 0..3 {
                    let mut best = f64::INFINITY;
                    for dir in [-1isize, 1] {
                        let q = pos[axis] as isize + dir;
                        if q < 0 || q >= lens[axis] as isize {
                            continue;
                        }
                        let j = (i as isize + dir * strides[axis] as isize) as usize;
                        if inside[j] != inside[i] {
                            let denom = data[i].abs() + data[j].abs();
                            let theta = if denom > 0.0 { data[i].abs() / denom } else { 0.0 };
                            best = best.min(theta * spac[axis]);
                        }
                    }
                    if best.is_finite() {
                        let d = best.max(1e-12 * spac[axis]);
                        inv_sq += 1.0 / (d * d);
                    }
                }
                if inv_sq > 0.0 {
                    dist[i] = 1.0 / inv_sq.sqrt();
                    frozen[i] = true;
                    any_interface = true;
                }
            }
        }
    }

    if !any_interface {
        return phi.clone();
    }

    for _round in 0..2 {
        sweep_all_directions(&mut dist, &frozen, (nx, ny, nz), (sx, sy, sz));
    }

    let diag = {
        let ex = (nx as f64 - 1.0) * sx;
        let ey = (ny as f64 - 1.0) * sy;
        let ez = (nz as f64 - 1.0) * sz;
        (ex * ex + ey * ey + ez * ez).sqrt()
    };
    let out: Vec<f64> = dist
        .iter()
        .zip(&inside)
        .map(|(&d, &ins)| {
            let d = d.min(diag);
            if ins {
                d
            } else {
                -d
            }
        })
        .collect();
    ScalarVolume::from_parts(phi.dims(), phi.spacing(), out)
}

fn sweep_all_directions(dist: &mut [f64], frozen: &[bool], dims: (usize, usize, usize), spacing: (f64, f64, f64)) {
    let (nx, ny, nz) = dims;
    for sweep in 0..8 {
        let xf = sweep & 1 == 0;
        let yf = sweep & 2 == 0;
        let zf = sweep & 4 == 0;
        for zi in 0..nz {
            let z = if zf { zi } else { nz - 1 - zi };
            for yi in 0..ny {
                let y = if yf { yi } else { ny - 1 - yi };
                for xi in 0..nx {
                    let x = if xf { xi } else { nx - 1 - xi };
                    let i = x + nx * (y + ny * z);
                    if frozen[i] {
                        continue;
                    }
                    let ax = axis_min(dist, i, x, nx, 1);
                    let ay = axis_min(dist, i, y, ny, nx);
                    let az = axis_min(dist, i, z, nz, nx * ny);
                    let t = solve_eikonal([ax, ay, az], [spacing.0, spacing.1, spacing.2]);
                    if t < dist[i] {
                        dist[i] = t;
                    }
                }
            }
        }
    }
}

#[inline]
fn axis_min(dist: &[f64], i: usize, pos: usize, len: usize, stride: usize) -> f64 {
    let mut m = FAR;
    if pos > 0 {
        m = m.min(dist[i - stride]);
    }
    if pos + 1 < len {
        m = m.min(dist[i + stride]);
    }
    m
}

/// Smallest t with sum_i max((t - a_i) / h_i, 0)^2 = 1, the upwind local
/// solver of the anisotropic eikonal equation.
fn solve_eikonal(a: [f64; 3], h: [f64; 3]) -> f64 {
    let mut pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(h.iter())
        .filter(|(av, _)| **av < FAR)
        .map(|(&av, &hv)| (av, hv))
        .collect();
    if pairs.is_empty() {
        return FAR;
    }
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());

    // Try with 1, 2, then 3 active neighbors; accept the first candidate
    // not exceeding the next neighbor value.
    let mut t = pairs[0].0 + pairs[0].1;
    if pairs.len() == 1 || t <= pairs[1].0 {
        return t;
    }
    for k in 2..=pairs.len() {
        // Solve sum_{i<k} (t - a_i)^2 w_i = 1 with w_i = 1 / h_i^2.
        let mut sw = 0.0;
        let mut swa = 0.0;
        let mut swa2 = 0.0;
        for &(av, hv) in &pairs[..k] {
            let w = 1.0 / (hv * hv);
            sw += w;
            swa += w * av;
            swa2 += w * av * av;
        }
        let a2 = sw;
        let b = -2.0 * swa;
        let c = swa2 - 1.0;
        let disc = b * b - 4.0 * a2 * c;
        if disc < 0.0 {
            // Fall back to the previous candidate.
            return t;
        }
        t = (-b + disc.sqrt()) / (2.0 * a2);
        if k == pairs.len() || t <= pairs[k].0 {
            return t;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::BinaryMask;

    fn sphere_mask(dims: (usize, usize, usize), c: (f64, f64, f64), r: f64) -> BinaryMask {
        BinaryMask::from_fn(dims, |x, y, z| {
            let d2 = (x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2) + (z as f64 - c.2).powi(2);
            d2.sqrt() <= r
        })
    }

    fn zero_crossing_voxels(phi: &ScalarVolume) -> Vec<(usize, usize, usize)> {
        let (nx, ny, nz) = phi.dims();
        let mut out = Vec::new();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let inside = phi.at(x, y, z) > 0.0;
                    let mut boundary = false;
                    if x + 1 < nx && (phi.at(x + 1, y, z) > 0.0) != inside {
                        boundary = true;
                    }
                    if y + 1 < ny && (phi.at(x, y + 1, z) > 0.0) != inside {
                        boundary = true;
                    }
                    if z + 1 < nz && (phi.at(x, y, z + 1) > 0.0) != inside {
                        boundary = true;
                    }
                    if boundary {
                        out.push((x, y, z));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn reinit_recovers_distance_from_distorted_sphere_sdf() {
        let dims = (32, 32, 32);
        let c = (15.5, 15.5, 15.5);
        let r = 8.0;
        let mut data = vec![0.0; 32 * 32 * 32];
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    let d = ((x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2) + (z as f64 - c.2).powi(2))
                        .sqrt();
                    // Distorted SDF: same zero set, wrong gradient.
                    let sdf = r - d;
                    data[x + 32 * (y + 32 * z)] = sdf * (1.5 + 0.8 * (x as f64 * 0.3).sin());
                }
            }
        }
        let phi = ScalarVolume::new(dims, (1.0, 1.0, 1.0), data).unwrap();
        let out = reinitialize(&phi);
        for z in 2..30 {
            for y in 2..30 {
                for x in 2..30 {
                    let d = ((x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2) + (z as f64 - c.2).powi(2))
                        .sqrt();
                    let expect = r - d;
                    if expect.abs() < 5.0 {
                        let got = out.at(x, y, z);
                        assert!(
                            (got - expect).abs() < 0.6,
                            "voxel ({x},{y},{z}): {got} vs {expect}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn reinit_does_not_move_the_zero_crossing() {
        let dims = (28, 28, 28);
        let mask = sphere_mask(dims, (13.5, 13.5, 13.5), 7.0);
        let (field, _) = crate::init::mask_to_sdf(&mask, (1.0, 1.0, 1.0), 1.5);
        let distorted = field.phi().map(|v| v * 2.3 + 0.08 * v.abs().sqrt());
        let out = reinitialize(&distorted);
        let before = zero_crossing_voxels(&distorted);
        let after = zero_crossing_voxels(&out);
        assert!(!before.is_empty() && !after.is_empty());
        // Band-limited Hausdorff: every boundary voxel keeps a counterpart
        // within one voxel.
        let tol = 1.0f64 + 1e-9;
        for &(x, y, z) in &before {
            let ok = after.iter().any(|&(a, b, c)| {
                let d2 = (x as f64 - a as f64).powi(2) + (y as f64 - b as f64).powi(2)
                    + (z as f64 - c as f64).powi(2);
                d2.sqrt() <= tol
            });
            assert!(ok, "boundary voxel ({x},{y},{z}) moved by more than 1 voxel");
        }
    }

    #[test]
    fn reinit_gradient_magnitude_near_band_is_unit() {
        let dims = (24, 24, 24);
        let mask = sphere_mask(dims, (11.5, 11.5, 11.5), 6.0);
        let (field, _) = crate::init::mask_to_sdf(&mask, (1.0, 1.0, 1.0), 1.5);
        let distorted = field.phi().map(|v| v * 0.4);
        let out = reinitialize(&distorted);
        let (gx, gy, gz) = out.gradient();
        let band = 4.5;
        for z in 1..23 {
            for y in 1..23 {
                for x in 1..23 {
                    if out.at(x, y, z).abs() < band {
                        let g = (gx.at(x, y, z).powi(2) + gy.at(x, y, z).powi(2) + gz.at(x, y, z).powi(2))
                            .sqrt();
                        assert!(
                            (0.5..=1.5).contains(&g),
                            "|grad phi| = {g} at ({x},{y},{z}), phi {}",
                            out.at(x, y, z)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn reinit_leaves_signless_fields_alone() {
        let phi = ScalarVolume::filled((6, 6, 6), (1.0, 1.0, 1.0), -3.0).unwrap();
        let out = reinitialize(&phi);
        assert_eq!(out.data(), phi.data());
    }

    #[test]
    fn reinit_handles_anisotropic_spacing() {
        let dims = (24, 24, 12);
        let spacing = (0.5, 0.5, 2.0);
        let c = (11.5 * 0.5, 11.5 * 0.5, 5.5 * 2.0);
        let r = 4.0;
        let mask = BinaryMask::from_fn(dims, |x, y, z| {
            let p = (x as f64 * 0.5, y as f64 * 0.5, z as f64 * 2.0);
            let d2 = (p.0 - c.0).powi(2) + (p.1 - c.1).powi(2) + (p.2 - c.2).powi(2);
            d2.sqrt() <= r
        });
        let (field, _) = crate::init::mask_to_sdf(&mask, spacing, 1.5);
        let distorted = field.phi().map(|v| v * 3.0);
        let out = reinitialize(&distorted);
        // Physical distance at the center must be close to the radius.
        let center = out.at(11, 11, 5);
        assert!((center - r).abs() < 1.2, "center distance {center} vs {r}");
    }
}
