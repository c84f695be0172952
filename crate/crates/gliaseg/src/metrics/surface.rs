//! Surface area from an extracted triangle mesh.
//!
//! The binary mask is meshed directly: each grid cell splits into six
//! tetrahedra sharing the main diagonal and the 0.5 iso-surface of the
//! indicator is extracted per tetrahedron. Raw staircase meshes inflate
//! a digital ball's area by roughly a quarter (voxel-face counting is off
//! by half), so each triangle's area is projected onto the local normal
//! of the Gaussian-smoothed indicator: flat staircases then measure
//! exactly their plane's area, while thin structures keep their geometry
//! because only normal directions, never the mask itself, are smoothed.
//! The tetrahedron decomposition is symmetric under axis permutations
//! that fix the main diagonal, so the area is invariant under translation
//! and axis permutation of the mask.

use crate::init::BinaryMask;
use crate::volume::ScalarVolume;

/// Smoothing width (voxels) of the indicator used for normals only.
const NORMAL_SIGMA_VOX: f64 = 1.0;
const PAD: usize = 4;

/// Cube corner offsets in (dx, dy, dz).
const CORNERS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (1, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (0, 1, 1),
    (1, 1, 1),
];

/// Six tetrahedra per cube, each walking corner 0 to corner 7 by flipping
/// one axis at a time (all permutations of the three axis steps).
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Total physical area of the mask's extracted surface.
pub fn mesh_surface_area(m: &BinaryMask, spacing: (f64, f64, f64)) -> f64 {
    let (nx, ny, nz) = m.dims();
    let pdims = (nx + 2 * PAD, ny + 2 * PAD, nz + 2 * PAD);
    let mut data = vec![0.0f64; pdims.0 * pdims.1 * pdims.2];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if m.get(x, y, z) {
                    data[(x + PAD) + pdims.0 * ((y + PAD) + pdims.1 * (z + PAD))] = 1.0;
                }
            }
        }
    }
    let raw = ScalarVolume::new(pdims, (1.0, 1.0, 1.0), data).expect("padded dims are valid");
    // Reference normals live in index space; directions convert to
    // physical space per axis when the weight is taken.
    let smoothed = raw.gaussian_smooth(NORMAL_SIGMA_VOX).expect("positive sigma");
    let (gx, gy, gz) = smoothed.gradient();

    let mut area = 0.0;
    for z in 0..pdims.2 - 1 {
        for y in 0..pdims.1 - 1 {
            for x in 0..pdims.0 - 1 {
                let mut vals = [0.0f64; 8];
                let mut pos = [[0.0f64; 3]; 8];
                let mut any_in = false;
                let mut any_out = false;
                for (k, &(dx, dy, dz)) in CORNERS.iter().enumerate() {
                    let (cx, cy, cz) = (x + dx, y + dy, z + dz);
                    let v = raw.at(cx, cy, cz);
                    vals[k] = v;
                    if v > 0.5 {
                        any_in = true;
                    } else {
                        any_out = true;
                    }
                    pos[k] = [cx as f64, cy as f64, cz as f64];
                }
                if !(any_in && any_out) {
                    continue;
                }
                for tet in &TETS {
                    let tris = tet_triangles(
                        [vals[tet[0]], vals[tet[1]], vals[tet[2]], vals[tet[3]]],
                        [pos[tet[0]], pos[tet[1]], pos[tet[2]], pos[tet[3]]],
                    );
                    for t in tris.iter().flatten() {
                        area += weighted_triangle_area(t, spacing, pdims, &gx, &gy, &gz);
                    }
                }
            }
        }
    }
    area
}

/// Triangle area in physical space, scaled by |facet normal . reference
/// normal| so staircase zigzag cancels.
fn weighted_triangle_area(
    tri: &[[f64; 3]; 3],
    spacing: (f64, f64, f64),
    pdims: (usize, usize, usize),
    gx: &ScalarVolume,
    gy: &ScalarVolume,
    gz: &ScalarVolume,
) -> f64 {
    let sp = [spacing.0, spacing.1, spacing.2];
    let phys = |p: &[f64; 3]| [p[0] * sp[0], p[1] * sp[1], p[2] * sp[2]];
    let a = phys(&tri[0]);
    let b = phys(&tri[1]);
    let c = phys(&tri[2]);
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let two_area = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if two_area == 0.0 {
        return 0.0;
    }
    let centroid = [
        (tri[0][0] + tri[1][0] + tri[2][0]) / 3.0,
        (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0,
        (tri[0][2] + tri[1][2] + tri[2][2]) / 3.0,
    ];
    // Index-space gradient of the smoothed indicator, converted to a
    // physical-space direction.
    let g = [
        trilinear(gx, pdims, centroid) / sp[0],
        trilinear(gy, pdims, centroid) / sp[1],
        trilinear(gz, pdims, centroid) / sp[2],
    ];
    let gl = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    let w = if gl > 1e-9 {
        ((n[0] * g[0] + n[1] * g[1] + n[2] * g[2]) / (two_area * gl)).abs()
    } else {
        1.0
    };
    0.5 * two_area * w
}

fn trilinear(g: &ScalarVolume, pdims: (usize, usize, usize), p: [f64; 3]) -> f64 {
    let x0 = (p[0].floor().max(0.0) as usize).min(pdims.0 - 1);
    let y0 = (p[1].floor().max(0.0) as usize).min(pdims.1 - 1);
    let z0 = (p[2].floor().max(0.0) as usize).min(pdims.2 - 1);
    let x1 = (x0 + 1).min(pdims.0 - 1);
    let y1 = (y0 + 1).min(pdims.1 - 1);
    let z1 = (z0 + 1).min(pdims.2 - 1);
    let fx = (p[0] - x0 as f64).clamp(0.0, 1.0);
    let fy = (p[1] - y0 as f64).clamp(0.0, 1.0);
    let fz = (p[2] - z0 as f64).clamp(0.0, 1.0);
    let c00 = g.at(x0, y0, z0) + fx * (g.at(x1, y0, z0) - g.at(x0, y0, z0));
    let c10 = g.at(x0, y1, z0) + fx * (g.at(x1, y1, z0) - g.at(x0, y1, z0));
    let c01 = g.at(x0, y0, z1) + fx * (g.at(x1, y0, z1) - g.at(x0, y0, z1));
    let c11 = g.at(x0, y1, z1) + fx * (g.at(x1, y1, z1) - g.at(x0, y1, z1));
    let c0 = c00 + fy * (c10 - c00);
    let c1 = c01 + fy * (c11 - c01);
    c0 + fz * (c1 - c0)
}

fn interp(a: [f64; 3], b: [f64; 3], va: f64, vb: f64) -> [f64; 3] {
    let t = (0.5 - va) / (vb - va);
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Iso-surface triangles (none, one, or a quad as two) inside one
/// tetrahedron.
fn tet_triangles(vals: [f64; 4], pos: [[f64; 3]; 4]) -> [Option<[[f64; 3]; 3]>; 2] {
    let inside: Vec<usize> = (0..4).filter(|&i| vals[i] > 0.5).collect();
    match inside.len() {
        0 | 4 => [None, None],
        1 | 3 => {
            // One vertex separated from the other three: a triangle.
            let lone = if inside.len() == 1 {
                inside[0]
            } else {
                (0..4).find(|i| !inside.contains(i)).unwrap()
            };
            let others: Vec<usize> = (0..4).filter(|&i| i != lone).collect();
            let p: Vec<[f64; 3]> = others
                .iter()
                .map(|&o| interp(pos[lone], pos[o], vals[lone], vals[o]))
                .collect();
            [Some([p[0], p[1], p[2]]), None]
        }
        _ => {
            // Two against two: a quad split into two triangles, ordered so
            // consecutive quad vertices share a tetrahedron face.
            let (a, b) = (inside[0], inside[1]);
            let outs: Vec<usize> = (0..4).filter(|i| !inside.contains(i)).collect();
            let (c, d) = (outs[0], outs[1]);
            let q0 = interp(pos[a], pos[c], vals[a], vals[c]);
            let q1 = interp(pos[a], pos[d], vals[a], vals[d]);
            let q2 = interp(pos[b], pos[d], vals[b], vals[d]);
            let q3 = interp(pos[b], pos[c], vals[b], vals[c]);
            [Some([q0, q1, q2]), Some([q0, q2, q3])]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digital_ball_area_matches_sphere() {
        let r = 10.0;
        let m = BinaryMask::from_fn((26, 26, 26), |x, y, z| {
            ((x as f64 - 12.5).powi(2) + (y as f64 - 12.5).powi(2) + (z as f64 - 12.5).powi(2)).sqrt()
                <= r
        });
        let area = mesh_surface_area(&m, (1.0, 1.0, 1.0));
        let expect = 4.0 * std::f64::consts::PI * r * r;
        let rel = (area - expect).abs() / expect;
        assert!(rel < 0.05, "ball area {area} vs sphere {expect} (rel {rel})");
    }

    #[test]
    fn large_box_area_matches_analytic_cuboid() {
        // Box large enough that beveled edges stay a small correction.
        let dims = (30, 30, 26);
        let m = BinaryMask::from_fn(dims, |x, y, z| {
            (4..=25).contains(&x) && (4..=25).contains(&y) && (4..=21).contains(&z)
        });
        let area = mesh_surface_area(&m, (1.0, 1.0, 1.0));
        // Sharp-corner cuboid spanning half a voxel beyond the centers;
        // mesh bevels shave the edges, so expect slightly below.
        let (a, b, c) = (23.0, 23.0, 19.0);
        let expect = 2.0 * (a * b + b * c + a * c);
        assert!(
            area <= expect && area > 0.85 * expect,
            "box area {area} vs cuboid {expect}"
        );
    }

    #[test]
    fn tube_area_matches_cylinder() {
        let r = 2.0;
        let m = BinaryMask::from_fn((52, 16, 16), |x, y, z| {
            (6..=45).contains(&x) && ((y as f64 - 7.5).powi(2) + (z as f64 - 7.5).powi(2)).sqrt() <= r
        });
        let area = mesh_surface_area(&m, (1.0, 1.0, 1.0));
        let expect = 2.0 * std::f64::consts::PI * r * (40.0 + r);
        let rel = (area - expect).abs() / expect;
        assert!(rel < 0.1, "tube area {area} vs cylinder {expect} (rel {rel})");
    }

    #[test]
    fn anisotropic_spacing_scales_the_area() {
        let m = BinaryMask::from_fn((16, 16, 16), |x, y, z| {
            ((x as f64 - 7.5).powi(2) + (y as f64 - 7.5).powi(2) + (z as f64 - 7.5).powi(2)).sqrt() <= 5.0
        });
        let a1 = mesh_surface_area(&m, (1.0, 1.0, 1.0));
        let a2 = mesh_surface_area(&m, (2.0, 2.0, 2.0));
        assert!(((a2 / a1) - 4.0).abs() < 1e-9, "doubling spacing quadruples area");
    }

    #[test]
    fn empty_mask_has_no_surface() {
        let m = BinaryMask::new_empty((6, 6, 6));
        assert_eq!(mesh_surface_area(&m, (1.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn mask_touching_the_border_still_closes() {
        let m = BinaryMask::from_fn((6, 6, 6), |_, _, _| true);
        let area = mesh_surface_area(&m, (1.0, 1.0, 1.0));
        // Closed (beveled) box around the whole volume.
        assert!(area > 120.0, "area {area} must enclose the volume");
    }
}
