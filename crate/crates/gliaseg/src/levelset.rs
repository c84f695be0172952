//! Coupled dual level-set evolution.
//!
//! Two signed fields evolve together: one chasing tubular structures, one
//! chasing the blob-like body, each by explicit gradient descent on
//! regularization + directional-evolution + attraction energies, linked by
//! a mutual repulsion that penalizes overlap of their interiors. Both
//! fields update from the previous iterate of the other (Jacobi coupling)
//! so results are order-independent and deterministic.

use crate::attraction::{self, AttrCache};
pub use crate::attraction::AttractionParams;
use crate::error::{Error, Result};
use crate::features::{self, BlobParams, EnhancedField, FrangiParams, OrientationField};
use crate::init::{self, BinaryMask};
use crate::redistance;
use crate::volume::{self, ScalarVolume};

const GRAD_FLOOR: f64 = 1e-8;

/// Signed field over the volume; the zero level set is the contour and
/// the inside is positive. `epsilon` (voxels of the finest axis) is the
/// smoothing width of the regularized Heaviside; `band`, when set,
/// restricts updates to |phi| below that many voxels.
#[derive(Debug, Clone)]
pub struct LevelSetField {
    phi: ScalarVolume,
    epsilon: f64,
    band: Option<f64>,
}

impl LevelSetField {
    pub fn from_phi(phi: ScalarVolume, epsilon_vox: f64) -> Self {
        assert!(epsilon_vox > 0.0, "heaviside epsilon must be > 0");
        Self { phi, epsilon: epsilon_vox, band: None }
    }

    pub fn with_band(mut self, band_vox: Option<f64>) -> Self {
        self.band = band_vox;
        self
    }

    pub fn phi(&self) -> &ScalarVolume {
        &self.phi
    }

    pub fn epsilon_vox(&self) -> f64 {
        self.epsilon
    }

    /// Heaviside width in the physical units of phi.
    pub fn epsilon_physical(&self) -> f64 {
        self.epsilon * self.phi.min_spacing()
    }

    pub fn band_vox(&self) -> Option<f64> {
        self.band
    }

    /// Voxels with phi > 0.
    pub fn inside_mask(&self) -> BinaryMask {
        BinaryMask::from_bits(self.phi.dims(), self.phi.data().iter().map(|&v| v > 0.0).collect())
            .expect("phi data length matches dims")
    }
}

/// Regularized Heaviside H(z) = 1/2 (1 + (2/pi) atan(z / eps)).
pub fn heaviside(z: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(h_eps(z, epsilon))
}

#[inline]
pub(crate) fn h_eps(z: f64, eps: f64) -> f64 {
    0.5 * (1.0 + std::f64::consts::FRAC_2_PI * (z / eps).atan())
}

/// Derivative of the regularized Heaviside.
#[inline]
pub(crate) fn delta_eps(z: f64, eps: f64) -> f64 {
    std::f64::consts::FRAC_1_PI * eps / (eps * eps + z * z)
}

/// Non-negative weights for the four velocity terms.
#[derive(Debug, Clone, Copy)]
pub struct Weights {
    pub reg: f64,
    pub evolve: f64,
    pub attr: f64,
    pub repel: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { reg: 0.05, evolve: 1.0, attr: 1.0, repel: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub weights: Weights,
    /// Fixed time step; `None` normalizes each step so the largest phi
    /// update is 0.4 voxel.
    pub dt: Option<f64>,
    pub max_iters: usize,
    /// Stop when the fraction of band voxels changing sign per iteration
    /// falls below this for both fields.
    pub convergence_tol: f64,
    /// Iterations between signed-distance reinitializations.
    pub reinit_every: usize,
    pub attraction: AttractionParams,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            dt: None,
            max_iters: 50,
            convergence_tol: 1e-3,
            reinit_every: 10,
            attraction: AttractionParams::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        if !(w.reg >= 0.0 && w.evolve >= 0.0 && w.attr >= 0.0 && w.repel >= 0.0) {
            return Err(Error::Parameter("weights must be non-negative".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Parameter(format!("dt must be > 0, got {dt}")));
            }
        }
        if self.max_iters < 1 {
            return Err(Error::Parameter("max_iters must be >= 1".into()));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::Parameter("convergence_tol must be >= 0".into()));
        }
        if self.reinit_every == 0 {
            return Err(Error::Parameter("reinit_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// The two coupled fields plus per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub phi_tuff: LevelSetField,
    pub phi_bff: LevelSetField,
    pub iteration: usize,
    /// Weighted total energies (tube field, blob field) after each step.
    pub energy_trace: Vec<(f64, f64)>,
    pub overlap_trace: Vec<usize>,
    pub cfl_warnings: usize,
}

impl CoupledState {
    pub fn new(phi_tuff: LevelSetField, phi_bff: LevelSetField) -> Result<Self> {
        if !phi_tuff.phi.same_geometry(&phi_bff.phi) {
            return Err(Error::Shape("coupled fields must share dims and spacing".into()));
        }
        Ok(Self {
            phi_tuff,
            phi_bff,
            iteration: 0,
            energy_trace: Vec::new(),
            overlap_trace: Vec::new(),
            cfl_warnings: 0,
        })
    }

    pub fn overlap_count(&self) -> usize {
        self.phi_tuff
            .phi
            .data()
            .iter()
            .zip(self.phi_bff.phi.data())
            .filter(|(&a, &b)| a > 0.0 && b > 0.0)
            .count()
    }
}

/// Contour-length energy w * sum delta(phi) |grad phi| dV.
pub fn energy_reg(phi: &LevelSetField, w: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::Parameter(format!("regularization weight must be >= 0, got {w}")));
    }
    if w == 0.0 {
        return Ok(0.0);
    }
    let eps = phi.epsilon_physical();
    let (gx, gy, gz) = phi.phi.gradient();
    let voxvol = phi.phi.voxel_volume();
    let mut acc = 0.0;
    for (i, &v) in phi.phi.data().iter().enumerate() {
        let g = (gx.data()[i].powi(2) + gy.data()[i].powi(2) + gz.data()[i].powi(2)).sqrt();
        acc += delta_eps(v, eps) * g;
    }
    Ok(w * acc * voxvol)
}

/// Directional evolution energy
/// -sum_i alpha_i <e_i, n>^2 H(phi) dV with n the outward normal.
pub fn energy_evolve(phi: &LevelSetField, enh: &EnhancedField, orient: &OrientationField) -> Result<f64> {
    if enh.dims() != phi.phi.dims() || orient.dims() != phi.phi.dims() {
        return Err(Error::Shape("field dims do not match phi".into()));
    }
    let eps = phi.epsilon_physical();
    let voxvol = phi.phi.voxel_volume();
    let (gx, gy, gz) = phi.phi.gradient();
    let mut acc = 0.0;
    for i in 0..phi.phi.voxel_count() {
        let s = directional_speed(i, enh, orient, gx.data(), gy.data(), gz.data());
        acc += s * h_eps(phi.phi.data()[i], eps);
    }
    Ok(-acc * voxvol)
}

/// sum_i alpha_i(x) <e_i(x), n(x)>^2 at one voxel.
#[inline]
fn directional_speed(
    i: usize,
    enh: &EnhancedField,
    orient: &OrientationField,
    gx: &[f64],
    gy: &[f64],
    gz: &[f64],
) -> f64 {
    let g = [gx[i], gy[i], gz[i]];
    let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt().max(GRAD_FLOOR);
    let n = [-g[0] / gn, -g[1] / gn, -g[2] / gn];
    let vecs = orient.vectors(i);
    let mut s = 0.0;
    for k in 0..3 {
        let d = vecs[k][0] * n[0] + vecs[k][1] * n[1] + vecs[k][2] * n[2];
        s += enh.weights[k].data()[i] * d * d;
    }
    s
}

/// Overlap penalty integral H(phi_1) H(phi_2) dV.
pub fn energy_repel(a: &LevelSetField, b: &LevelSetField) -> Result<f64> {
    if !a.phi.same_geometry(&b.phi) {
        return Err(Error::Shape("repel energy needs matching fields".into()));
    }
    let ea = a.epsilon_physical();
    let eb = b.epsilon_physical();
    let voxvol = a.phi.voxel_volume();
    let mut acc = 0.0;
    for (&x, &y) in a.phi.data().iter().zip(b.phi.data()) {
        acc += h_eps(x, ea) * h_eps(y, eb);
    }
    Ok(acc * voxvol)
}

/// Attraction energy of disconnected fragments and its descent velocity.
pub fn energy_attr(
    phi: &LevelSetField,
    enh: &EnhancedField,
    params: &AttractionParams,
) -> Result<(f64, ScalarVolume)> {
    if enh.dims() != phi.phi.dims() {
        return Err(Error::Shape("enhancement dims do not match phi".into()));
    }
    let cache = attraction::build_cache(enh, params)?;
    let (energy, velocity) = attraction::attraction_terms(&phi.phi, &cache, params, true)?;
    let velocity = velocity.expect("velocity requested");
    Ok((
        energy,
        ScalarVolume::from_parts(phi.phi.dims(), phi.phi.spacing(), velocity),
    ))
}

/// Mean curvature div(grad phi / |grad phi|), clamped to +-1/h_min.
fn curvature(phi: &ScalarVolume) -> Vec<f64> {
    let dims = phi.dims();
    let spacing = phi.spacing();
    let (gx, gy, gz) = phi.gradient();
    let pxx = volume::second_derivative_axis(phi, 0);
    let pyy = volume::second_derivative_axis(phi, 1);
    let pzz = volume::second_derivative_axis(phi, 2);
    let dx = volume::central_mirror_axis_vec(phi.data(), dims, spacing, 0);
    let pxy = volume::central_mirror_axis_vec(&dx, dims, spacing, 1);
    let pxz = volume::central_mirror_axis_vec(&dx, dims, spacing, 2);
    let dy = volume::central_mirror_axis_vec(phi.data(), dims, spacing, 1);
    let pyz = volume::central_mirror_axis_vec(&dy, dims, spacing, 2);

    let clamp = 1.0 / phi.min_spacing();
    let mut out = vec![0.0; phi.voxel_count()];
    for i in 0..out.len() {
        let (px, py, pz) = (gx.data()[i], gy.data()[i], gz.data()[i]);
        let g2 = px * px + py * py + pz * pz;
        let g = g2.sqrt().max(GRAD_FLOOR);
        let num = pxx[i] * (py * py + pz * pz) + pyy[i] * (px * px + pz * pz)
            + pzz[i] * (px * px + py * py)
            - 2.0 * (px * py * pxy[i] + px * pz * pxz[i] + py * pz * pyz[i]);
        out[i] = (num / (g * g * g)).clamp(-clamp, clamp);
    }
    out
}

/// Raw per-voxel update delta(phi) * F for one field, reading the other
/// field's previous iterate for the repulsion gate.
fn field_update(
    phi: &LevelSetField,
    enh: &EnhancedField,
    orient: &OrientationField,
    other: &LevelSetField,
    cfg: &EvolutionConfig,
    attr_cache: Option<&AttrCache>,
) -> Result<Vec<f64>> {
    let w = &cfg.weights;
    let n = phi.phi.voxel_count();
    let eps = phi.epsilon_physical();
    let eps_other = other.epsilon_physical();

    let mut force = vec![0.0f64; n];

    if w.reg > 0.0 {
        let kappa = curvature(&phi.phi);
        for i in 0..n {
            force[i] += w.reg * kappa[i];
        }
    }

    if w.evolve > 0.0 {
        let (gx, gy, gz) = phi.phi.gradient();
        for i in 0..n {
            force[i] += w.evolve * directional_speed(i, enh, orient, gx.data(), gy.data(), gz.data());
        }
    }

    if w.attr > 0.0 {
        if let Some(cache) = attr_cache {
            let (_, velocity) = attraction::attraction_terms(&phi.phi, cache, &cfg.attraction, true)?;
            if let Some(v) = velocity {
                for i in 0..n {
                    force[i] += w.attr * v[i];
                }
            }
        }
    }

    if w.repel > 0.0 {
        // Active only where both interiors claim the voxel; pushes this
        // field out of the overlap.
        for i in 0..n {
            let h_self = h_eps(phi.phi.data()[i], eps);
            let h_other = h_eps(other.phi.data()[i], eps_other);
            if h_self > 0.5 && h_other > 0.5 {
                force[i] -= w.repel * h_other;
            }
        }
    }

    let band_phys = phi.band.map(|b| b * phi.phi.min_spacing());
    let mut delta = vec![0.0f64; n];
    for i in 0..n {
        let v = phi.phi.data()[i];
        if let Some(band) = band_phys {
            if v.abs() > band {
                continue;
            }
        }
        delta[i] = delta_eps(v, eps) * force[i];
    }
    Ok(delta)
}

/// Weighted total energies of the current state, (tube field, blob field).
fn coupled_energies(
    state: &CoupledState,
    tube: (&EnhancedField, &OrientationField),
    blob: (&EnhancedField, &OrientationField),
    cfg: &EvolutionConfig,
    tube_cache: Option<&AttrCache>,
    blob_cache: Option<&AttrCache>,
) -> Result<(f64, f64)> {
    let w = &cfg.weights;
    let repel = energy_repel(&state.phi_tuff, &state.phi_bff)?;
    let mut e1 = energy_reg(&state.phi_tuff, w.reg)? + w.repel * repel;
    let mut e2 = energy_reg(&state.phi_bff, w.reg)? + w.repel * repel;
    if w.evolve > 0.0 {
        e1 += w.evolve * energy_evolve(&state.phi_tuff, tube.0, tube.1)?;
        e2 += w.evolve * energy_evolve(&state.phi_bff, blob.0, blob.1)?;
    }
    if w.attr > 0.0 {
        if let Some(c) = tube_cache {
            let (ea, _) = attraction::attraction_terms(&state.phi_tuff.phi, c, &cfg.attraction, false)?;
            e1 += w.attr * ea;
        }
        if let Some(c) = blob_cache {
            let (ea, _) = attraction::attraction_terms(&state.phi_bff.phi, c, &cfg.attraction, false)?;
            e2 += w.attr * ea;
        }
    }
    Ok((e1, e2))
}

/// One explicit Jacobi-coupled gradient-descent update of both fields.
pub fn step(
    state: &CoupledState,
    tube: (&EnhancedField, &OrientationField),
    blob: (&EnhancedField, &OrientationField),
    cfg: &EvolutionConfig,
) -> Result<CoupledState> {
    cfg.validate()?;
    let tube_cache = if cfg.weights.attr > 0.0 {
        Some(attraction::build_cache(tube.0, &cfg.attraction)?)
    } else {
        None
    };
    let blob_cache = if cfg.weights.attr > 0.0 {
        Some(attraction::build_cache(blob.0, &cfg.attraction)?)
    } else {
        None
    };
    step_with_caches(state, tube, blob, cfg, tube_cache.as_ref(), blob_cache.as_ref())
}

pub(crate) fn step_with_caches(
    state: &CoupledState,
    tube: (&EnhancedField, &OrientationField),
    blob: (&EnhancedField, &OrientationField),
    cfg: &EvolutionConfig,
    tube_cache: Option<&AttrCache>,
    blob_cache: Option<&AttrCache>,
) -> Result<CoupledState> {
    if tube.0.dims() != state.phi_tuff.phi.dims() || blob.0.dims() != state.phi_bff.phi.dims() {
        return Err(Error::Shape("enhancement dims do not match the state".into()));
    }

    let d1 = field_update(&state.phi_tuff, tube.0, tube.1, &state.phi_bff, cfg, tube_cache)?;
    let d2 = field_update(&state.phi_bff, blob.0, blob.1, &state.phi_tuff, cfg, blob_cache)?;

    let max_delta = d1
        .iter()
        .chain(&d2)
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let h_min = state.phi_tuff.phi.min_spacing();
    let dt = cfg.dt.unwrap_or_else(|| {
        if max_delta > 0.0 {
            0.4 * h_min / max_delta
        } else {
            1.0
        }
    });
    let mut cfl_warnings = state.cfl_warnings;
    if dt * max_delta > 0.49 * h_min {
        cfl_warnings += 1;
    }

    let apply = |field: &LevelSetField, delta: &[f64]| -> LevelSetField {
        let mut phi = field.phi.clone();
        let data = phi.data_mut();
        for i in 0..data.len() {
            if delta[i] != 0.0 {
                data[i] += dt * delta[i];
            }
        }
        LevelSetField { phi, epsilon: field.epsilon, band: field.band }
    };
    let phi_tuff = apply(&state.phi_tuff, &d1);
    let phi_bff = apply(&state.phi_bff, &d2);

    let mut next = CoupledState {
        phi_tuff,
        phi_bff,
        iteration: state.iteration + 1,
        energy_trace: state.energy_trace.clone(),
        overlap_trace: state.overlap_trace.clone(),
        cfl_warnings,
    };
    let energies = coupled_energies(&next, tube, blob, cfg, tube_cache, blob_cache)?;
    next.energy_trace.push(energies);
    next.overlap_trace.push(next.overlap_count());
    Ok(next)
}

/// Everything the pipeline needs to run end to end.
#[derive(Debug, Clone)]
pub struct EvolveParams {
    pub tube_scales: Vec<f64>,
    pub blob_scales: Vec<f64>,
    pub frangi: FrangiParams,
    pub blob: BlobParams,
    /// Cross-section growth weight for tube structures.
    pub kappa: f64,
    pub epsilon_vox: f64,
    pub band_vox: Option<f64>,
    pub invert_polarity: bool,
    pub otsu_bins: usize,
    /// Strongest response a field must reach for its seed to count as
    /// present at all.
    pub seed_floor: f64,
    pub config: EvolutionConfig,
}

impl Default for EvolveParams {
    fn default() -> Self {
        Self {
            tube_scales: vec![0.5, 0.75, 1.0],
            blob_scales: vec![4.0, 5.0, 6.0, 7.0],
            frangi: FrangiParams::default(),
            blob: BlobParams::default(),
            kappa: 0.5,
            epsilon_vox: 1.5,
            band_vox: None,
            invert_polarity: false,
            otsu_bins: 256,
            config: EvolutionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub cfl_warnings: usize,
    pub soma_seed_empty: bool,
    pub tube_seed_empty: bool,
    pub tube_threshold: Option<f64>,
    pub blob_threshold: Option<f64>,
    pub energy_trace: Vec<(f64, f64)>,
    pub overlap_trace: Vec<usize>,
}

/// Final masks plus the fields and diagnostics behind them. Voxels claimed
/// by both fields go to the soma.
#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub processes: BinaryMask,
    pub soma: BinaryMask,
    pub union_mask: BinaryMask,
    pub phi_tuff: LevelSetField,
    pub phi_bff: LevelSetField,
    pub diagnostics: Diagnostics,
}

/// Full pipeline: enhancement fields, Otsu seeding, coupled evolution
/// with periodic reinitialization, mask extraction.
pub fn evolve(volume: &ScalarVolume, params: &EvolveParams) -> Result<SegmentationResult> {
    params.config.validate()?;
    if !(params.kappa > 0.0 && params.kappa <= 1.0) {
        return Err(Error::Parameter(format!("kappa must be in (0, 1], got {}", params.kappa)));
    }
    if !(params.epsilon_vox > 0.0) {
        return Err(Error::Parameter("epsilon must be > 0 voxels".into()));
    }

    let working;
    let vol = if params.invert_polarity {
        let lo = volume.min_value();
        let hi = volume.max_value();
        working = volume.map(|v| hi + lo - v);
        &working
    } else {
        volume
    };

    let (tube_raw, tube_orient) = features::vesselness(vol, &params.tube_scales, &params.frangi)?;
    let tube_enh = features::evolution_weights(&tube_raw, &tube_orient, params.kappa)?;
    let (blob_raw, blob_orient) = features::blobness(vol, &params.blob_scales, &params.blob)?;
    let blob_enh = features::evolution_weights(&blob_raw, &blob_orient, params.kappa)?;

    let (phi1, phi2, seeds) = init::initialize_pair(&tube_enh, &blob_enh, params.epsilon_vox)?;
    let phi1 = phi1.with_band(params.band_vox);
    let phi2 = phi2.with_band(params.band_vox);
    let mut state = CoupledState::new(phi1, phi2)?;

    let cfg = &params.config;
    let tube_cache = if cfg.weights.attr > 0.0 {
        Some(attraction::build_cache(&tube_enh, &cfg.attraction)?)
    } else {
        None
    };
    let blob_cache = if cfg.weights.attr > 0.0 {
        Some(attraction::build_cache(&blob_enh, &cfg.attraction)?)
    } else {
        None
    };

    let h_min = vol.min_spacing();
    let band_conv = params.band_vox.unwrap_or(3.0 * params.epsilon_vox) * h_min;
    let mut converged = false;

    for it in 1..=cfg.max_iters {
        let prev_signs: (Vec<bool>, Vec<bool>) = (
            state.phi_tuff.phi.data().iter().map(|&v| v > 0.0).collect(),
            state.phi_bff.phi.data().iter().map(|&v| v > 0.0).collect(),
        );
        state = step_with_caches(
            &state,
            (&tube_enh, &tube_orient),
            (&blob_enh, &blob_orient),
            cfg,
            tube_cache.as_ref(),
            blob_cache.as_ref(),
        )?;
        if it % cfg.reinit_every == 0 {
            state.phi_tuff = LevelSetField {
                phi: redistance::reinitialize(&state.phi_tuff.phi),
                epsilon: state.phi_tuff.epsilon,
                band: state.phi_tuff.band,
            };
            state.phi_bff = LevelSetField {
                phi: redistance::reinitialize(&state.phi_bff.phi),
                epsilon: state.phi_bff.epsilon,
                band: state.phi_bff.band,
            };
        }

        let frac = |field: &LevelSetField, prev: &[bool]| -> f64 {
            let mut band_count = 0usize;
            let mut changed = 0usize;
            for (i, &v) in field.phi.data().iter().enumerate() {
                if v.abs() < band_conv {
                    band_count += 1;
                    if (v > 0.0) != prev[i] {
                        changed += 1;
                    }
                }
            }
            changed as f64 / band_count.max(1) as f64
        };
        let f1 = frac(&state.phi_tuff, &prev_signs.0);
        let f2 = frac(&state.phi_bff, &prev_signs.1);
        if f1 < cfg.convergence_tol && f2 < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    let tube_inside = state.phi_tuff.inside_mask();
    let soma = state.phi_bff.inside_mask();
    let union_mask = tube_inside.union(&soma)?;
    let processes = BinaryMask::from_bits(
        tube_inside.dims(),
        tube_inside
            .bits()
            .iter()
            .zip(soma.bits())
            .map(|(&t, &s)| t && !s)
            .collect(),
    )?;

    let diagnostics = Diagnostics {
        iterations: state.iteration,
        converged,
        cfl_warnings: state.cfl_warnings,
        soma_seed_empty: seeds.blob_seed_empty,
        tube_seed_empty: seeds.tube_seed_empty,
        tube_threshold: seeds.tube_threshold,
        blob_threshold: seeds.blob_threshold,
        energy_trace: state.energy_trace.clone(),
        overlap_trace: state.overlap_trace.clone(),
    };
    Ok(SegmentationResult {
        processes,
        soma,
        union_mask,
        phi_tuff: state.phi_tuff,
        phi_bff: state.phi_bff,
        diagnostics,
    })
}
