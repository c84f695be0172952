//! Per-voxel eigen-analysis of the Hessian and the multiscale tube /
//! blob enhancement fields that drive the level-set evolution.
//!
//! Eigenvalues are ordered by increasing magnitude, |l1| <= |l2| <= |l3|.
//! A bright tube has l2, l3 strongly negative and l1 near zero with e1
//! pointing along the axis; a bright blob has all three strongly negative.

use crate::error::{Error, Result};
use crate::volume::ScalarVolume;

/// Which structure an enhancement field responds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Tube,
    Blob,
}

/// Frangi bright-tube response parameters. `c = None` (or a non-positive
/// value via the CLI) selects the per-scale fallback of half the maximum
/// structureness over the volume.
#[derive(Debug, Clone, Copy)]
pub struct FrangiParams {
    pub a: f64,
    pub b: f64,
    pub c: Option<f64>,
}

impl Default for FrangiParams {
    fn default() -> Self {
        Self { a: 0.5, b: 0.5, c: None }
    }
}

/// Bright-blob response parameters; `b2 = None` selects the same
/// half-max-structureness fallback as the tube `c`.
#[derive(Debug, Clone, Copy)]
pub struct BlobParams {
    pub b1: f64,
    pub b2: Option<f64>,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self { b1: 0.5, b2: None }
    }
}

/// Per-voxel magnitude-ordered eigenvalues and orthonormal eigenvectors of
/// the scale-normalized Hessian, taken at the scale that won the
/// multiscale maximum.
#[derive(Debug, Clone)]
pub struct OrientationField {
    dims: (usize, usize, usize),
    kind: StructureKind,
    lambdas: Vec<[f64; 3]>,
    vectors: Vec<[[f64; 3]; 3]>,
    scale: Vec<f64>,
}

impl OrientationField {
    #[cfg(test)]
    pub(crate) fn test_constant(
        dims: (usize, usize, usize),
        kind: StructureKind,
        vectors: [[f64; 3]; 3],
    ) -> Self {
        let n = dims.0 * dims.1 * dims.2;
        Self {
            dims,
            kind,
            lambdas: vec![[0.0, -1.0, -1.0]; n],
            vectors: vec![vectors; n],
            scale: vec![1.0; n],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    #[inline]
    pub fn lambdas(&self, idx: usize) -> [f64; 3] {
        self.lambdas[idx]
    }

    /// Eigenvectors `[e1, e2, e3]` at a voxel, matching the eigenvalue order.
    #[inline]
    pub fn vectors(&self, idx: usize) -> [[f64; 3]; 3] {
        self.vectors[idx]
    }

    pub fn scale(&self, idx: usize) -> f64 {
        self.scale[idx]
    }
}

/// Scalar response in [0, 1] plus the directional evolution weights
/// alpha_i derived from it.
#[derive(Debug, Clone)]
pub struct EnhancedField {
    pub kind: StructureKind,
    pub response: ScalarVolume,
    /// alpha_1..alpha_3; zero until populated by [`evolution_weights`].
    pub weights: [ScalarVolume; 3],
    pub scales_used: Vec<f64>,
}

impl EnhancedField {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.response.dims()
    }
}

/// Eigen-decomposition of a symmetric 3x3 matrix given as
/// `[xx, yy, zz, xy, xz, yz]`.
///
/// Closed-form characteristic roots polished by one Newton step;
/// eigenvectors by the cross-product method with a deterministic
/// orthogonal-complement fallback for near-degenerate pairs. Output is
/// magnitude-ordered and sign-fixed (largest-magnitude component of each
/// vector non-negative, ties broken by the first axis).
pub fn eigen_symmetric3(m: &[f64; 6]) -> Result<([f64; 3], [[f64; 3]; 3])> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigen input contains non-finite values".into()));
    }
    Ok(eigen_symmetric3_unchecked(m))
}

pub(crate) fn eigen_symmetric3_unchecked(m: &[f64; 6]) -> ([f64; 3], [[f64; 3]; 3]) {
    let [a11, a22, a33, a12, a13, a23] = *m;
    let off = a12 * a12 + a13 * a13 + a23 * a23;

    if off == 0.0 {
        // Already diagonal; eigenpairs are the axes.
        let pairs = [(a11, 0usize), (a22, 1), (a33, 2)];
        return order_and_sign(
            [pairs[0].0, pairs[1].0, pairs[2].0],
            [axis_vec(0), axis_vec(1), axis_vec(2)],
        );
    }

    // Trigonometric closed form for the roots of the characteristic
    // polynomial of a symmetric 3x3 matrix.
    let q = (a11 + a22 + a33) / 3.0;
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let (mut l1, mut l2, mut l3);
    if p == 0.0 {
        l1 = q;
        l2 = q;
        l3 = q;
    } else {
        let inv_p = 1.0 / p;
        let b11 = (a11 - q) * inv_p;
        let b22 = (a22 - q) * inv_p;
        let b33 = (a33 - q) * inv_p;
        let b12 = a12 * inv_p;
        let b13 = a13 * inv_p;
        let b23 = a23 * inv_p;
        let det_b = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13)
            + b13 * (b12 * b23 - b22 * b13);
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3 * 2.0).cos();
        let mid = 3.0 * q - hi - lo;
        l1 = lo;
        l2 = mid;
        l3 = hi;
    }

    // One Newton polish step on p(l) = det(A - l I). Near a repeated root
    // p'(l) vanishes and the raw step explodes, so steps that move the
    // root by a non-trivial fraction of the spectral scale are rejected
    // (the closed-form root is already accurate there).
    let tr = a11 + a22 + a33;
    let m2 = a11 * a22 - a12 * a12 + a11 * a33 - a13 * a13 + a22 * a33 - a23 * a23;
    let det = a11 * (a22 * a33 - a23 * a23) - a12 * (a12 * a33 - a23 * a13)
        + a13 * (a12 * a23 - a22 * a13);
    let spectral = q.abs() + 2.0 * p;
    let polish = |l: f64| -> f64 {
        let pv = -l * l * l + tr * l * l - m2 * l + det;
        let dv = -3.0 * l * l + 2.0 * tr * l - m2;
        if dv != 0.0 {
            let step = pv / dv;
            if step.is_finite() && step.abs() <= 1e-4 * spectral {
                return l - step;
            }
        }
        l
    };
    l1 = polish(l1);
    l2 = polish(l2);
    l3 = polish(l3);
    let mut asc = [l1, l2, l3];
    asc.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let scale = asc[0].abs().max(asc[2].abs()).max(1e-300);
    let gap_lo = asc[1] - asc[0];
    let gap_hi = asc[2] - asc[1];

    // The closed form loses about half the mantissa when eigenvalues
    // nearly coincide (acos near +-1), which is enough to make responses
    // wobble under last-ulp input changes. Jacobi rotations are backward
    // stable there, so hand the tight-spectrum cases to them.
    if gap_lo.min(gap_hi) <= 1e-4 * scale {
        let (vals, vecs) = jacobi_eigen(m);
        return order_and_sign(vals, vecs);
    }
    let degenerate_tol = 1e-10 * scale;

    let vectors = if gap_lo <= degenerate_tol && gap_hi <= degenerate_tol {
        // Near-spherical spectrum: any orthonormal basis works.
        [axis_vec(0), axis_vec(1), axis_vec(2)]
    } else {
        // Resolve the best-isolated extreme eigenvalue first, then the
        // other extreme, then complete the right-handed triple.
        let (first, second, third) = if gap_lo >= gap_hi { (0, 2, 1) } else { (2, 0, 1) };
        let va = eigenvector_cross(m, asc[first])
            .unwrap_or_else(|| fallback_orthogonal(&axis_vec(0), &axis_vec(1)));
        let vb_raw = eigenvector_cross(m, asc[second]);
        let vb = match vb_raw {
            Some(v) => {
                let proj = dot(&v, &va);
                let ortho = [v[0] - proj * va[0], v[1] - proj * va[1], v[2] - proj * va[2]];
                let n = norm(&ortho);
                if n > 1e-8 {
                    [ortho[0] / n, ortho[1] / n, ortho[2] / n]
                } else {
                    fallback_perp(&va)
                }
            }
            None => fallback_perp(&va),
        };
        let vc = cross(&va, &vb);
        let mut out = [[0.0; 3]; 3];
        out[first] = va;
        out[second] = vb;
        out[third] = vc;
        out
    };

    order_and_sign(asc, vectors)
}

fn axis_vec(i: usize) -> [f64; 3] {
    let mut v = [0.0; 3];
    v[i] = 1.0;
    v
}

/// Cyclic Jacobi diagonalization of a symmetric 3x3 matrix; returns
/// unordered eigenvalues with the matching orthonormal columns.
fn jacobi_eigen(m: &[f64; 6]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = [
        [m[0], m[3], m[4]],
        [m[3], m[1], m[5]],
        [m[4], m[5], m[2]],
    ];
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1e-300);
    for _sweep in 0..24 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off <= (1e-16 * scale) * (1e-16 * scale) {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let (app, aqq) = (a[p][p], a[q][q]);
            a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
            a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            let r = 3 - p - q;
            let (arp, arq) = (a[r][p], a[r][q]);
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];
            for row in 0..3 {
                let (vp, vq) = (v[row][p], v[row][q]);
                v[row][p] = c * vp - s * vq;
                v[row][q] = s * vp + c * vq;
            }
        }
    }
    (
        [a[0][0], a[1][1], a[2][2]],
        [
            [v[0][0], v[1][0], v[2][0]],
            [v[0][1], v[1][1], v[2][1]],
            [v[0][2], v[1][2], v[2][2]],
        ],
    )
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenvector of `A - l I` from the largest cross product of its rows;
/// `None` when all pairs are near-parallel (degenerate eigenvalue).
fn eigenvector_cross(m: &[f64; 6], l: f64) -> Option<[f64; 3]> {
    let [a11, a22, a33, a12, a13, a23] = *m;
    let r0 = [a11 - l, a12, a13];
    let r1 = [a12, a22 - l, a23];
    let r2 = [a13, a23, a33 - l];
    let c01 = cross(&r0, &r1);
    let c02 = cross(&r0, &r2);
    let c12 = cross(&r1, &r2);
    let n01 = dot(&c01, &c01);
    let n02 = dot(&c02, &c02);
    let n12 = dot(&c12, &c12);
    let (best, nbest) = if n01 >= n02 && n01 >= n12 {
        (c01, n01)
    } else if n02 >= n12 {
        (c02, n02)
    } else {
        (c12, n12)
    };
    let row_scale = dot(&r0, &r0).max(dot(&r1, &r1)).max(dot(&r2, &r2));
    if nbest <= 1e-24 * row_scale * row_scale {
        return None;
    }
    let n = nbest.sqrt();
    Some([best[0] / n, best[1] / n, best[2] / n])
}

/// Deterministic unit vector orthogonal to `v`: project out the axis with
/// the smallest |component|.
fn fallback_perp(v: &[f64; 3]) -> [f64; 3] {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() < v[k].abs() {
            k = i;
        }
    }
    let e = axis_vec(k);
    let proj = dot(&e, v);
    let ortho = [e[0] - proj * v[0], e[1] - proj * v[1], e[2] - proj * v[2]];
    let n = norm(&ortho);
    [ortho[0] / n, ortho[1] / n, ortho[2] / n]
}

fn fallback_orthogonal(a: &[f64; 3], _b: &[f64; 3]) -> [f64; 3] {
    *a
}

/// Magnitude-order eigenpairs and apply the sign convention.
fn order_and_sign(vals: [f64; 3], vecs: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| {
        vals[i]
            .abs()
            .partial_cmp(&vals[j].abs())
            .unwrap()
            .then(vals[i].partial_cmp(&vals[j]).unwrap())
            .then(i.cmp(&j))
    });
    let mut out_vals = [0.0; 3];
    let mut out_vecs = [[0.0; 3]; 3];
    for (slot, &i) in idx.iter().enumerate() {
        out_vals[slot] = vals[i];
        out_vecs[slot] = sign_fix(vecs[i]);
    }
    (out_vals, out_vecs)
}

/// Largest-magnitude component becomes non-negative; on exact magnitude
/// ties the first axis wins.
fn sign_fix(v: [f64; 3]) -> [f64; 3] {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        [-v[0], -v[1], -v[2]]
    } else {
        v
    }
}

/// Multiscale Frangi bright-tube response with the winning-scale
/// orientation field.
pub fn vesselness(
    v: &ScalarVolume,
    scales: &[f64],
    params: &FrangiParams,
) -> Result<(EnhancedField, OrientationField)> {
    if params.a <= 0.0 || params.b <= 0.0 {
        return Err(Error::Parameter(format!(
            "frangi a and b must be > 0, got a={} b={}",
            params.a, params.b
        )));
    }
    let a2 = 2.0 * params.a * params.a;
    let b2 = 2.0 * params.b * params.b;
    multiscale_response(v, scales, StructureKind::Tube, params.c, move |l, s, c| {
        // Bright tubes need both large eigenvalues negative.
        if l[1] > 0.0 || l[2] > 0.0 {
            return 0.0;
        }
        let prod = (l[1] * l[2]).abs();
        if prod == 0.0 {
            return 0.0;
        }
        let ra = l[1].abs() / l[2].abs();
        let rb = l[0].abs() / prod.sqrt();
        (1.0 - (-ra * ra / a2).exp()) * (-rb * rb / b2).exp() * (1.0 - (-s * s / (2.0 * c * c)).exp())
    })
}

/// Multiscale bright-blob response: high where all three eigenvalues are
/// strongly negative and of similar magnitude.
pub fn blobness(
    v: &ScalarVolume,
    scales: &[f64],
    params: &BlobParams,
) -> Result<(EnhancedField, OrientationField)> {
    if params.b1 <= 0.0 {
        return Err(Error::Parameter(format!("blob b1 must be > 0, got {}", params.b1)));
    }
    let b1sq = 2.0 * params.b1 * params.b1;
    multiscale_response(v, scales, StructureKind::Blob, params.b2, move |l, s, c| {
        if l[0] > 0.0 || l[1] > 0.0 || l[2] > 0.0 {
            return 0.0;
        }
        if l[2] == 0.0 {
            return 0.0;
        }
        let rb = l[0].abs() / l[2].abs();
        (1.0 - (-rb * rb / b1sq).exp()) * (1.0 - (-s * s / (2.0 * c * c)).exp())
    })
}

fn multiscale_response(
    v: &ScalarVolume,
    scales: &[f64],
    kind: StructureKind,
    noise_cutoff: Option<f64>,
    response_fn: impl Fn(&[f64; 3], f64, f64) -> f64,
) -> Result<(EnhancedField, OrientationField)> {
    if scales.is_empty() {
        return Err(Error::Parameter("scale list must not be empty".into()));
    }
    if scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Parameter(format!("scales must be > 0, got {scales:?}")));
    }
    let n = v.voxel_count();
    let mut best_resp = vec![0.0f64; n];
    let mut best_lambda = vec![[0.0f64; 3]; n];
    let mut best_vec = vec![[[0.0f64; 3]; 3]; n];
    let mut best_scale = vec![scales[0]; n];

    let explicit_cutoff = noise_cutoff.filter(|&c| c > 0.0);

    for (si, &sigma) in scales.iter().enumerate() {
        let h = v.hessian(sigma)?;
        let mut eig: Vec<([f64; 3], [[f64; 3]; 3])> = Vec::with_capacity(n);
        let mut max_s = 0.0f64;
        for i in 0..n {
            let e = eigen_symmetric3_unchecked(&h.at(i));
            let l = e.0;
            let s = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
            if s > max_s {
                max_s = s;
            }
            eig.push(e);
        }
        // Per-scale fallback keeps the multiscale maximum property: each
        // scale's response is independent of which other scales are asked.
        let cutoff = explicit_cutoff.unwrap_or(if max_s > 0.0 { max_s / 2.0 } else { 1.0 });
        for i in 0..n {
            let (l, vecs) = eig[i];
            let s = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
            let r = response_fn(&l, s, cutoff);
            if si == 0 || r > best_resp[i] {
                best_resp[i] = r;
                best_lambda[i] = l;
                best_vec[i] = vecs;
                best_scale[i] = sigma;
            }
        }
    }

    let response = ScalarVolume::new(v.dims(), v.spacing(), best_resp)?;
    let zeros = || ScalarVolume::filled(v.dims(), v.spacing(), 0.0).expect("valid dims");
    let field = EnhancedField {
        kind,
        response,
        weights: [zeros(), zeros(), zeros()],
        scales_used: scales.to_vec(),
    };
    let orient = OrientationField {
        dims: v.dims(),
        kind,
        lambdas: best_lambda,
        vectors: best_vec,
        scale: best_scale,
    };
    Ok((field, orient))
}

/// Populate the directional evolution weights.
///
/// Tubes grow mainly along the axis eigenvector: alpha_1 = response,
/// alpha_2 = alpha_3 = kappa * response with kappa in (0, 1]. Blobs grow
/// isotropically: all three weights equal the response.
pub fn evolution_weights(
    field: &EnhancedField,
    orient: &OrientationField,
    kappa: f64,
) -> Result<EnhancedField> {
    if field.kind != orient.kind() {
        return Err(Error::Parameter(format!(
            "enhancement kind {:?} does not match orientation kind {:?}",
            field.kind,
            orient.kind()
        )));
    }
    if field.dims() != orient.dims() {
        return Err(Error::Shape("enhancement and orientation dims differ".into()));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Parameter(format!("kappa must be in (0, 1], got {kappa}")));
    }
    let resp = &field.response;
    let weights = match field.kind {
        StructureKind::Tube => [
            resp.clone(),
            resp.map(|r| kappa * r),
            resp.map(|r| kappa * r),
        ],
        StructureKind::Blob => [resp.clone(), resp.clone(), resp.clone()],
    };
    Ok(EnhancedField {
        kind: field.kind,
        response: resp.clone(),
        weights,
        scales_used: field.scales_used.clone(),
    })
}
