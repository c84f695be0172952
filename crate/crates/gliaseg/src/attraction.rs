//! Fragment attraction: pulls smaller disconnected pieces of {phi > 0}
//! toward the largest piece along high-response bridges.
//!
//! The advection direction descends a smoothed chessboard distance to the
//! largest component, and its strength is modulated by the smoothed
//! enhancement response, so fragments migrate along faint bridges instead
//! of drifting through empty background. The force is confined to voxels
//! within `max_gap_vox` of a participating fragment; a single connected
//! component produces no force and no energy.

use std::collections::VecDeque;

use crate::error::Result;
use crate::features::EnhancedField;
use crate::init::{connected_components, BinaryMask};
use crate::volume::ScalarVolume;

/// Tuning for the attraction term.
#[derive(Debug, Clone, Copy)]
pub struct AttractionParams {
    /// Gaussian width (in voxels of the finest axis) applied to both the
    /// distance field and the response before taking gradients.
    pub sigma_vox: f64,
    /// Fragments farther than this many voxels (chessboard metric) from
    /// the largest component are left alone.
    pub max_gap_vox: usize,
}

impl Default for AttractionParams {
    fn default() -> Self {
        Self { sigma_vox: 4.0, max_gap_vox: 10 }
    }
}

/// Response smoothing reused across iterations.
#[derive(Debug, Clone)]
pub(crate) struct AttrCache {
    pub smooth_resp: ScalarVolume,
    pub max_resp: f64,
}

pub(crate) fn build_cache(enh: &EnhancedField, p: &AttractionParams) -> Result<AttrCache> {
    let sigma = p.sigma_vox * enh.response.min_spacing();
    let smooth_resp = enh.response.gaussian_smooth(sigma)?;
    let max_resp = smooth_resp.max_value();
    Ok(AttrCache { smooth_resp, max_resp })
}

/// 26-neighborhood offsets in scan order.
fn neighbor_offsets(dims: (usize, usize, usize)) -> Vec<(i64, i64, i64)> {
    let _ = dims;
    let mut out = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    out.push((dx, dy, dz));
                }
            }
        }
    }
    out
}

/// Multi-source unit-cost BFS over the 26-neighborhood.
fn chessboard_bfs(dims: (usize, usize, usize), sources: impl Iterator<Item = usize>, limit: u32) -> Vec<u32> {
    let (nx, ny, nz) = dims;
    let n = nx * ny * nz;
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for s in sources {
        if dist[s] != 0 {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    let offsets = neighbor_offsets(dims);
    while let Some(i) = queue.pop_front() {
        let d = dist[i];
        if d >= limit {
            continue;
        }
        let x = (i % nx) as i64;
        let y = ((i / nx) % ny) as i64;
        let z = (i / (nx * ny)) as i64;
        for &(dx, dy, dz) in &offsets {
            let (xx, yy, zz) = (x + dx, y + dy, z + dz);
            if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                continue;
            }
            let j = xx as usize + nx * (yy as usize + ny * zz as usize);
            if dist[j] > d + 1 {
                dist[j] = d + 1;
                queue.push_back(j);
            }
        }
    }
    dist
}

/// Attraction energy of the current interface and, when requested, the
/// per-voxel advection speed to add to the velocity assembly.
pub(crate) fn attraction_terms(
    phi: &ScalarVolume,
    cache: &AttrCache,
    p: &AttractionParams,
    want_velocity: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let dims = phi.dims();
    let n = phi.voxel_count();
    let zeros = || if want_velocity { Some(vec![0.0; n]) } else { None };

    let mask = BinaryMask::from_bits(dims, phi.data().iter().map(|&v| v > 0.0).collect())?;
    let (labels, sizes) = connected_components(&mask);
    if sizes.len() <= 1 || cache.max_resp <= 0.0 {
        return Ok((0.0, zeros()));
    }

    let largest = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32 + 1)
        .expect("at least two components");

    let d_large = chessboard_bfs(
        dims,
        (0..n).filter(|&i| labels[i] == largest),
        u32::MAX - 1,
    );

    // Fragments close enough to the largest component take part.
    let limit = p.max_gap_vox as u32;
    let mut participates = vec![false; sizes.len() + 1];
    for i in 0..n {
        let l = labels[i];
        if l != 0 && l != largest && d_large[i] <= limit {
            participates[l as usize] = true;
        }
    }
    if !participates.iter().any(|&b| b) {
        return Ok((0.0, zeros()));
    }

    // Energy: response integrated along one bridging path per fragment.
    let voxvol = phi.voxel_volume();
    let offsets = neighbor_offsets(dims);
    let (nx, ny, nz) = dims;
    let mut energy = 0.0;
    for frag in 1..=sizes.len() as u32 {
        if !participates[frag as usize] {
            continue;
        }
        let mut start = usize::MAX;
        let mut best = u32::MAX;
        for i in 0..n {
            if labels[i] == frag && d_large[i] < best {
                best = d_large[i];
                start = i;
            }
        }
        let mut cur = start;
        let mut guard = 0;
        while d_large[cur] > 0 && guard <= best + 2 {
            energy -= cache.smooth_resp.data()[cur] * voxvol;
            let x = (cur % nx) as i64;
            let y = ((cur / nx) % ny) as i64;
            let z = (cur / (nx * ny)) as i64;
            let mut next = cur;
            let mut next_d = d_large[cur];
            for &(dx, dy, dz) in &offsets {
                let (xx, yy, zz) = (x + dx, y + dy, z + dz);
                if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                    continue;
                }
                let j = xx as usize + nx * (yy as usize + ny * zz as usize);
                if d_large[j] < next_d {
                    next_d = d_large[j];
                    next = j;
                }
            }
            if next == cur {
                break;
            }
            cur = next;
            guard += 1;
        }
        energy -= cache.smooth_resp.data()[cur] * voxvol;
    }

    if !want_velocity {
        return Ok((energy, None));
    }

    // Advection field: descend the smoothed gap distance, weighted by the
    // smoothed response, only near participating fragments.
    let region = {
        let sources = (0..n).filter(|&i| {
            let l = labels[i];
            l != 0 && l != largest && participates[l as usize]
        });
        let d = chessboard_bfs(dims, sources, limit);
        d.iter().map(|&v| v <= limit).collect::<Vec<bool>>()
    };

    let cap = (p.max_gap_vox + 2) as f64;
    let capped = ScalarVolume::from_parts(
        dims,
        phi.spacing(),
        d_large.iter().map(|&d| (d as f64).min(cap)).collect(),
    );
    let sigma = p.sigma_vox * phi.min_spacing();
    let smooth_dist = capped.gaussian_smooth(sigma)?;
    let (dgx, dgy, dgz) = smooth_dist.gradient();
    let (pgx, pgy, pgz) = phi.gradient();

    let mut velocity = vec![0.0; n];
    for i in 0..n {
        if !region[i] {
            continue;
        }
        let b = [-dgx.data()[i], -dgy.data()[i], -dgz.data()[i]];
        let bn = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        if bn < 1e-12 {
            continue;
        }
        let m = cache.smooth_resp.data()[i] / cache.max_resp;
        // Advection speed of phi for the unit field b/|b|: b-hat . (-grad phi).
        let adv = -(b[0] * pgx.data()[i] + b[1] * pgy.data()[i] + b[2] * pgz.data()[i]) / bn;
        velocity[i] = m * adv;
    }
    Ok((energy, Some(velocity)))
}
