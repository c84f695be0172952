//! Quantitative evaluation: Dice overlap, convex-hull (surveyed-area)
//! Dice, ramification index and mean absolute error aggregation.

mod hull;
mod surface;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::BinaryMask;

pub use hull::convex_hull_mask;
pub use surface::mesh_surface_area;

/// Dice coefficient plus a flag for the vacuous empty-vs-empty case,
/// which is defined as perfect agreement so batch evaluation never stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiceScore {
    pub value: f64,
    pub both_empty: bool,
}

/// 2 |A intersect B| / (|A| + |B|).
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<DiceScore> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "dice needs equal dims, got {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        total += x as usize + y as usize;
    }
    if total == 0 {
        return Ok(DiceScore { value: 1.0, both_empty: true });
    }
    Ok(DiceScore {
        value: 2.0 * inter as f64 / total as f64,
        both_empty: false,
    })
}

/// Dice of the convex hulls of both masks.
pub fn convex_hull_dice(a: &BinaryMask, b: &BinaryMask, spacing: (f64, f64, f64)) -> Result<DiceScore> {
    let ha = convex_hull_mask(a, spacing)?;
    let hb = convex_hull_mask(b, spacing)?;
    dice(&ha, &hb)
}

/// Surface-to-volume shape index normalized so a ball scores 1:
/// RI = S / (36 pi V^2)^(1/3), with S from an extracted triangle mesh and
/// V the summed voxel volume.
pub fn ramification_index(m: &BinaryMask, spacing: (f64, f64, f64)) -> Result<f64> {
    let voxels = m.count_ones();
    if voxels == 0 {
        return Err(Error::UndefinedMetric("ramification index of an empty mask".into()));
    }
    let v = voxels as f64 * spacing.0 * spacing.1 * spacing.2;
    let s = mesh_surface_area(m, spacing);
    let s_ball = (36.0 * std::f64::consts::PI * v * v).powf(1.0 / 3.0);
    Ok(s / s_ball)
}

/// Mean absolute error over (truth, estimate) pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Parameter("mae needs at least one pair".into()));
    }
    let sum: f64 = pairs.iter().map(|(t, e)| (t - e).abs()).sum();
    Ok(sum / pairs.len() as f64)
}

/// Per-cell evaluation summary serialized into the run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cell_id: String,
    pub dice: Option<f64>,
    pub dice_convex_hull: Option<f64>,
    pub ramification_index: Option<f64>,
    pub volume_voxels: usize,
    pub surface_area: f64,
    pub dice_both_empty: bool,
}

impl MetricsReport {
    /// Evaluate a segmentation mask, optionally against a ground truth.
    pub fn evaluate(
        cell_id: &str,
        segmentation: &BinaryMask,
        ground_truth: Option<&BinaryMask>,
        spacing: (f64, f64, f64),
    ) -> Result<MetricsReport> {
        let (dice_v, hull_v, both_empty) = match ground_truth {
            Some(gt) => {
                let d = dice(gt, segmentation)?;
                let h = convex_hull_dice(gt, segmentation, spacing)?;
                (Some(d.value), Some(h.value), d.both_empty)
            }
            None => (None, None, false),
        };
        let volume_voxels = segmentation.count_ones();
        let surface_area = if volume_voxels > 0 {
            mesh_surface_area(segmentation, spacing)
        } else {
            0.0
        };
        let ramification = if volume_voxels > 0 {
            Some(ramification_index(segmentation, spacing)?)
        } else {
            None
        };
        Ok(MetricsReport {
            cell_id: cell_id.to_string(),
            dice: dice_v,
            dice_convex_hull: hull_v,
            ramification_index: ramification,
            volume_voxels,
            surface_area,
            dice_both_empty: both_empty,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ball_mask(dims: (usize, usize, usize), c: (f64, f64, f64), r: f64) -> BinaryMask {
        BinaryMask::from_fn(dims, |x, y, z| {
            ((x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2) + (z as f64 - c.2).powi(2)).sqrt() <= r
        })
    }

    #[test]
    fn dice_identical_and_disjoint() {
        let a = ball_mask((20, 20, 20), (9.5, 9.5, 9.5), 5.0);
        assert_eq!(dice(&a, &a).unwrap(), DiceScore { value: 1.0, both_empty: false });
        let dims = (20, 10, 10);
        let left = BinaryMask::from_fn(dims, |x, _, _| x < 5);
        let right = BinaryMask::from_fn(dims, |x, _, _| x >= 15);
        assert_eq!(dice(&left, &right).unwrap().value, 0.0);
    }

    #[test]
    fn dice_half_overlap() {
        // |A| = |B| = 100, |A and B| = 50.
        let dims = (200, 1, 1);
        let a = BinaryMask::from_fn(dims, |x, _, _| x < 100);
        let b = BinaryMask::from_fn(dims, |x, _, _| (50..150).contains(&x));
        assert_eq!(dice(&a, &b).unwrap().value, 0.5);
    }

    #[test]
    fn dice_both_empty_is_flagged_one() {
        let a = BinaryMask::new_empty((4, 4, 4));
        let d = dice(&a, &a).unwrap();
        assert_eq!(d.value, 1.0);
        assert!(d.both_empty);
    }

    #[test]
    fn dice_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = (12, 12, 12);
        for _ in 0..10 {
            let a = BinaryMask::from_bits(dims, (0..12 * 12 * 12).map(|_| rng.gen_bool(0.3)).collect())
                .unwrap();
            let b = BinaryMask::from_bits(dims, (0..12 * 12 * 12).map(|_| rng.gen_bool(0.3)).collect())
                .unwrap();
            assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
        }
    }

    #[test]
    fn dice_shape_mismatch() {
        let a = BinaryMask::new_empty((4, 4, 4));
        let b = BinaryMask::new_empty((5, 4, 4));
        assert!(matches!(dice(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn ramification_of_ball_is_one() {
        let m = ball_mask((28, 28, 28), (13.5, 13.5, 13.5), 10.0);
        let ri = ramification_index(&m, (1.0, 1.0, 1.0)).unwrap();
        assert!((ri - 1.0).abs() <= 0.1, "ball RI {ri}");
    }

    #[test]
    fn ramification_grows_with_attached_tubes() {
        // Ball radius 6 with 4 thin tubes of length 30.
        let dims = (84, 84, 24);
        let c = (41.5, 41.5, 11.5);
        let r = 6.0;
        let tube_r = 2.0;
        let len = 30.0;
        let m = BinaryMask::from_fn(dims, |x, y, z| {
            let p = (x as f64, y as f64, z as f64);
            let dc = ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2) + (p.2 - c.2).powi(2)).sqrt();
            if dc <= r {
                return true;
            }
            // Four axis tubes in the xy-plane starting at the ball surface.
            for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                let along = (p.0 - c.0) * dx + (p.1 - c.1) * dy;
                if (r..=r + len).contains(&along) {
                    let ax = c.0 + along * dx;
                    let ay = c.1 + along * dy;
                    let radial = ((p.0 - ax).powi(2) + (p.1 - ay).powi(2) + (p.2 - c.2).powi(2)).sqrt();
                    if radial <= tube_r {
                        return true;
                    }
                }
            }
            false
        });
        let ri = ramification_index(&m, (1.0, 1.0, 1.0)).unwrap();
        assert!(ri > 2.0, "ball+tubes RI {ri}");

        // Analytic surface/volume oracle for the same geometry.
        let pi = std::f64::consts::PI;
        let cap_h = r - (r * r - tube_r * tube_r).sqrt();
        let s_analytic = 4.0 * pi * r * r - 4.0 * (2.0 * pi * r * cap_h)
            + 4.0 * (2.0 * pi * tube_r * len)
            + 4.0 * (pi * tube_r * tube_r);
        let v_analytic = 4.0 / 3.0 * pi * r.powi(3) + 4.0 * (pi * tube_r * tube_r * len);
        let ri_analytic = s_analytic / (36.0 * pi * v_analytic * v_analytic).powf(1.0 / 3.0);
        assert!(
            (ri - ri_analytic).abs() <= 0.15 * ri_analytic,
            "RI {ri} vs analytic {ri_analytic}"
        );
    }

    #[test]
    fn ramification_empty_mask_is_undefined() {
        let m = BinaryMask::new_empty((4, 4, 4));
        assert!(matches!(
            ramification_index(&m, (1.0, 1.0, 1.0)),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ramification_is_translation_and_permutation_invariant() {
        let base = |ox: usize, oy: usize, oz: usize| {
            BinaryMask::from_fn((40, 40, 40), move |x, y, z| {
                let p = (
                    x as f64 - 14.5 - ox as f64,
                    y as f64 - 14.5 - oy as f64,
                    z as f64 - 14.5 - oz as f64,
                );
                (p.0 * p.0 + p.1 * p.1 + p.2 * p.2).sqrt() <= 6.0
                    || (p.0.abs() <= 1.5 && p.1.abs() <= 1.5 && (0.0..=11.0).contains(&p.2))
            })
        };
        let ri_0 = ramification_index(&base(0, 0, 0), (1.0, 1.0, 1.0)).unwrap();
        let ri_t = ramification_index(&base(3, 5, 2), (1.0, 1.0, 1.0)).unwrap();
        assert!((ri_0 - ri_t).abs() < 1e-6, "translation: {ri_0} vs {ri_t}");

        let m = base(0, 0, 0);
        let permuted = BinaryMask::from_fn((40, 40, 40), |x, y, z| m.get(z, x, y));
        let ri_p = ramification_index(&permuted, (1.0, 1.0, 1.0)).unwrap();
        assert!((ri_0 - ri_p).abs() < 1e-6, "permutation: {ri_0} vs {ri_p}");
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[(1.0, 1.0), (2.0, 2.0)]).unwrap(), 0.0);
        let v = mae(&[(8.88, 7.88), (7.69, 10.14)]).unwrap();
        assert!((v - 1.725).abs() < 1e-12, "paired mae {v}");
        assert_eq!(mae(&[(0.0, 3.0)]).unwrap(), 3.0);
        assert!(matches!(mae(&[]), Err(Error::Parameter(_))));
    }
}
