//! 3D convex hull of foreground voxel centers, voxelized back to a mask.
//!
//! All predicates run on integer lattice coordinates, where cross products
//! and determinants are exact in i64/f64, so membership, idempotence and
//! degenerate (point / collinear / coplanar) inputs are handled without
//! tolerance tuning. The candidate set is reduced to per-line extremes
//! before hull construction.

use crate::error::Result;
use crate::init::BinaryMask;

type P = [i64; 3];

fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: P, b: P) -> P {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: P, b: P) -> i64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm2(a: P) -> i64 {
    dot(a, a)
}

/// Convex hull of the foreground voxel centers, rendered as the mask of
/// voxels whose centers lie inside or on the hull. `spacing` does not
/// change membership (convexity is affine-invariant) and is accepted for
/// interface symmetry with the other mask operations.
pub fn convex_hull_mask(m: &BinaryMask, spacing: (f64, f64, f64)) -> Result<BinaryMask> {
    let _ = spacing;
    let dims = m.dims();
    let pts = extreme_candidates(m);
    if pts.is_empty() {
        return Ok(BinaryMask::new_empty(dims));
    }

    // Affine rank probe with exact arithmetic.
    let p0 = pts[0];
    let p1 = match pts.iter().copied().max_by_key(|&p| (norm2(sub(p, p0)), std::cmp::Reverse(p))) {
        Some(p) if norm2(sub(p, p0)) > 0 => p,
        _ => {
            // Rank 0: a single voxel.
            let mut out = BinaryMask::new_empty(dims);
            out.set(p0[0] as usize, p0[1] as usize, p0[2] as usize, true);
            return Ok(out);
        }
    };
    let d = sub(p1, p0);
    let p2 = pts
        .iter()
        .copied()
        .max_by_key(|&p| (norm2(cross(d, sub(p, p0))), std::cmp::Reverse(p)))
        .unwrap();
    if norm2(cross(d, sub(p2, p0))) == 0 {
        return Ok(collinear_hull(m, &pts, p0, d));
    }
    let nrm = cross(d, sub(p2, p0));
    let p3 = pts
        .iter()
        .copied()
        .max_by_key(|&p| (dot(nrm, sub(p, p0)).abs(), std::cmp::Reverse(p)))
        .unwrap();
    if dot(nrm, sub(p3, p0)) == 0 {
        return Ok(coplanar_hull(m, &pts, p0, p1, p2));
    }

    full_rank_hull(m, &pts, [p0, p1, p2, p3])
}

/// Per-(y, z) line x-extremes; their hull equals the full point hull.
fn extreme_candidates(m: &BinaryMask) -> Vec<P> {
    let (nx, ny, nz) = m.dims();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            let mut lo = None;
            let mut hi = None;
            for x in 0..nx {
                if m.get(x, y, z) {
                    if lo.is_none() {
                        lo = Some(x);
                    }
                    hi = Some(x);
                }
            }
            if let (Some(a), Some(b)) = (lo, hi) {
                out.push([a as i64, y as i64, z as i64]);
                if b != a {
                    out.push([b as i64, y as i64, z as i64]);
                }
            }
        }
    }
    out
}

/// Rank 1: lattice points exactly on the segment spanned by the inputs.
fn collinear_hull(m: &BinaryMask, pts: &[P], p0: P, d: P) -> BinaryMask {
    let (t_min, t_max) = pts
        .iter()
        .map(|&p| dot(sub(p, p0), d))
        .fold((i64::MAX, i64::MIN), |(lo, hi), t| (lo.min(t), hi.max(t)));
    let dims = m.dims();
    BinaryMask::from_fn(dims, |x, y, z| {
        let q = [x as i64, y as i64, z as i64];
        let r = sub(q, p0);
        if norm2(cross(r, d)) != 0 {
            return false;
        }
        let t = dot(r, d);
        (t_min..=t_max).contains(&t)
    })
}

/// Rank 2: 2D hull inside the common plane, exact in-plane coordinates.
fn coplanar_hull(m: &BinaryMask, pts: &[P], p0: P, p1: P, p2: P) -> BinaryMask {
    let u = sub(p1, p0);
    let nrm = cross(u, sub(p2, p0));
    let v = cross(nrm, u);
    let mut plane: Vec<(i64, i64)> = pts
        .iter()
        .map(|&p| {
            let r = sub(p, p0);
            (dot(r, u), dot(r, v))
        })
        .collect();
    plane.sort();
    plane.dedup();
    let hull2 = monotone_chain(&plane);

    let dims = m.dims();
    BinaryMask::from_fn(dims, |x, y, z| {
        let q = [x as i64, y as i64, z as i64];
        let r = sub(q, p0);
        if dot(r, nrm) != 0 {
            return false;
        }
        point_in_convex_polygon((dot(r, u), dot(r, v)), &hull2)
    })
}

fn cross2(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i128 {
    (a.0 - o.0) as i128 * (b.1 - o.1) as i128 - (a.1 - o.1) as i128 * (b.0 - o.0) as i128
}

/// Andrew monotone chain on sorted, deduplicated points (CCW order).
fn monotone_chain(sorted: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let n = sorted.len();
    if n <= 2 {
        return sorted.to_vec();
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * n);
    for &p in sorted {
        while hull.len() >= 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in sorted.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Inclusive membership in a CCW convex polygon; degenerate polygons
/// (point, segment) are handled by their own exact tests.
fn point_in_convex_polygon(q: (i64, i64), hull: &[(i64, i64)]) -> bool {
    match hull.len() {
        0 => false,
        1 => q == hull[0],
        2 => {
            let (a, b) = (hull[0], hull[1]);
            if cross2(a, b, q) != 0 {
                return false;
            }
            let t = (q.0 - a.0) as i128 * (b.0 - a.0) as i128 + (q.1 - a.1) as i128 * (b.1 - a.1) as i128;
            let len2 = (b.0 - a.0) as i128 * (b.0 - a.0) as i128 + (b.1 - a.1) as i128 * (b.1 - a.1) as i128;
            (0..=len2).contains(&t)
        }
        _ => {
            for i in 0..hull.len() {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                if cross2(a, b, q) < 0 {
                    return false;
                }
            }
            true
        }
    }
}

struct Face {
    v: [P; 3],
    /// Outward normal and offset; all values of `dot(n, q) - off` on
    /// lattice points are exact integers in f64.
    n: [f64; 3],
    off: f64,
    alive: bool,
    outside: Vec<usize>,
}

fn face_eval(f: &Face, q: P) -> f64 {
    f.n[0] * q[0] as f64 + f.n[1] * q[1] as f64 + f.n[2] * q[2] as f64 - f.off
}

/// Rank 3: incremental quickhull with farthest-point insertion. Strict
/// integer visibility makes degenerate faces impossible.
fn full_rank_hull(m: &BinaryMask, pts: &[P], tet: [P; 4]) -> Result<BinaryMask> {
    // Interior reference: 4x the tetrahedron centroid stays integral.
    let c4 = [
        tet[0][0] + tet[1][0] + tet[2][0] + tet[3][0],
        tet[0][1] + tet[1][1] + tet[2][1] + tet[3][1],
        tet[0][2] + tet[1][2] + tet[2][2] + tet[3][2],
    ];

    let mk_face = |a: P, b: P, c: P| -> Face {
        let n_i = cross(sub(b, a), sub(c, a));
        debug_assert!(norm2(n_i) > 0, "degenerate hull face");
        let mut n = [n_i[0] as f64, n_i[1] as f64, n_i[2] as f64];
        let mut off = dot(n_i, a) as f64;
        // Orient outward: the interior point must sit strictly below.
        let s_c4 = n[0] * c4[0] as f64 + n[1] * c4[1] as f64 + n[2] * c4[2] as f64 - 4.0 * off;
        if s_c4 > 0.0 {
            n = [-n[0], -n[1], -n[2]];
            off = -off;
        }
        Face { v: [a, b, c], n, off, alive: true, outside: Vec::new() }
    };

    let mut faces = vec![
        mk_face(tet[0], tet[1], tet[2]),
        mk_face(tet[0], tet[1], tet[3]),
        mk_face(tet[0], tet[2], tet[3]),
        mk_face(tet[1], tet[2], tet[3]),
    ];

    // Conflict lists: assign every point to the first face it is strictly
    // outside of.
    for (pi, &p) in pts.iter().enumerate() {
        for f in faces.iter_mut() {
            if face_eval(f, p) > 0.0 {
                f.outside.push(pi);
                break;
            }
        }
    }

    let mut fi = 0usize;
    while fi < faces.len() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            fi += 1;
            continue;
        }
        // Farthest conflict point of this face (ties: lowest index).
        let &far = faces[fi]
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                face_eval(&faces[fi], pts[a])
                    .partial_cmp(&face_eval(&faces[fi], pts[b]))
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .unwrap();
        let p = pts[far];

        // Visible set and its orphaned conflict points.
        let mut orphans: Vec<usize> = Vec::new();
        let mut visible: Vec<usize> = Vec::new();
        for (i, f) in faces.iter().enumerate() {
            if f.alive && face_eval(f, p) > 0.0 {
                visible.push(i);
            }
        }
        let mut edge_count: std::collections::HashMap<(P, P), usize> = std::collections::HashMap::new();
        for &i in &visible {
            let f = &faces[i];
            for k in 0..3 {
                let a = f.v[k];
                let b = f.v[(k + 1) % 3];
                let key = if a <= b { (a, b) } else { (b, a) };
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        for &i in &visible {
            orphans.append(&mut faces[i].outside);
            faces[i].alive = false;
        }
        let mut horizon: Vec<(P, P)> = edge_count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        horizon.sort();

        let first_new = faces.len();
        for &(a, b) in &horizon {
            faces.push(mk_face(a, b, p));
        }
        for pi in orphans {
            if pi == far {
                continue;
            }
            let q = pts[pi];
            for f in faces[first_new..].iter_mut() {
                if face_eval(f, q) > 0.0 {
                    f.outside.push(pi);
                    break;
                }
            }
        }
        // Restart scanning from the first new face region.
        fi = 0;
    }

    // Voxelize: centers inside or on every face plane.
    let dims = m.dims();
    let alive: Vec<&Face> = faces.iter().filter(|f| f.alive).collect();
    let (mut lo, mut hi) = ([i64::MAX; 3], [i64::MIN; 3]);
    for &p in pts {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Ok(BinaryMask::from_fn(dims, |x, y, z| {
        let q = [x as i64, y as i64, z as i64];
        for k in 0..3 {
            if q[k] < lo[k] || q[k] > hi[k] {
                return false;
            }
        }
        alive.iter().all(|f| face_eval(f, q) <= 0.0)
    }))
}
