//! Grey-level co-occurrence statistics restricted to a region.

use super::Mask;
use crate::error::{Error, Result};
use crate::speedmap::{SpeedField, HEATMAP_MAX_SPEED};

/// Uniform bin index of `speed` over [0, 120] km/h; out-of-range speeds are clipped.
pub fn quantize(speed: f64, levels: usize) -> usize {
    let unit = (speed / HEATMAP_MAX_SPEED).clamp(0.0, 1.0);
    ((unit * levels as f64).floor() as usize).min(levels - 1)
}

/// Normalised symmetric co-occurrence matrix (`levels x levels`, row-major)
/// for pairs `(cell, cell + offset)` with both cells inside `mask`.
pub fn glcm_matrix(field: &SpeedField, mask: &Mask, levels: usize, offset: (isize, isize)) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::Validation(format!("need at least 2 grey levels, got {levels}")));
    }
    let mut counts = vec![0u64; levels * levels];
    let mut pairs = 0u64;
    for (i, j) in mask.cells() {
        let (a, b) = (i as isize + offset.0, j as isize + offset.1);
        if a < 0 || b < 0 || !mask.contains(a as usize, b as usize) {
            continue;
        }
        let p = quantize(field.get(i, j), levels);
        let q = quantize(field.get(a as usize, b as usize), levels);
        counts[p * levels + q] += 1;
        counts[q * levels + p] += 1;
        pairs += 2;
    }
    if pairs == 0 {
        return Err(Error::UndefinedEnergy(format!(
            "no co-occurring pair inside the region at offset {offset:?}"
        )));
    }
    Ok(counts.into_iter().map(|c| c as f64 / pairs as f64).collect())
}

/// Texture energy: the sum of squared co-occurrence probabilities.
pub fn glcm_energy(field: &SpeedField, mask: &Mask, levels: usize, offset: (isize, isize)) -> Result<f64> {
    Ok(glcm_matrix(field, mask, levels, offset)?.iter().map(|p| p * p).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speedmap::GridMeta;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_region_has_unit_energy() {
        let f = SpeedField::constant(GridMeta::default(), 6, 9, 23.0).unwrap();
        let m = Mask::full(6, 9);
        for offset in [(0, 1), (1, 0), (1, 1), (-1, 2)] {
            assert_eq!(glcm_energy(&f, &m, 8, offset).unwrap(), 1.0);
        }
    }

    #[test]
    fn hand_counted_two_by_two() {
        // bins under 2 levels: 0 km/h -> 0, 100 km/h -> 1
        let f = SpeedField::from_rows(GridMeta::default(), vec![vec![0.0, 100.0], vec![0.0, 100.0]]).unwrap();
        let m = Mask::full(2, 2);
        let p = glcm_matrix(&f, &m, 2, (1, 0)).unwrap();
        assert_eq!(p, vec![0.5, 0.0, 0.0, 0.5]);
        assert_eq!(glcm_energy(&f, &m, 2, (1, 0)).unwrap(), 0.5);
    }

    #[test]
    fn no_pair_is_an_error() {
        let f = SpeedField::constant(GridMeta::default(), 3, 3, 10.0).unwrap();
        let column = Mask::from_cells(3, 3, [(0, 1), (1, 1), (2, 1)]);
        assert!(matches!(glcm_energy(&f, &column, 8, (0, 1)), Err(Error::UndefinedEnergy(_))));
        assert!(glcm_energy(&f, &column, 1, (1, 0)).is_err());
    }

    #[test]
    fn quantization_clips() {
        assert_eq!(quantize(-5.0, 8), 0);
        assert_eq!(quantize(14.9, 8), 0);
        assert_eq!(quantize(15.0, 8), 1);
        assert_eq!(quantize(120.0, 8), 7);
        assert_eq!(quantize(400.0, 8), 7);
    }

    /// Direct evaluation of the energy sum from the raw definition, written
    /// without the matrix helper.
    fn energy_by_enumeration(values: &[f64], ns: usize, nt: usize, levels: usize) -> f64 {
        let mut pairs = Vec::new();
        for i in 0..ns {
            for j in 0..nt - 1 {
                let a = quantize(values[i * nt + j], levels);
                let b = quantize(values[i * nt + j + 1], levels);
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
        let n = pairs.len() as f64;
        let mut total = 0.0;
        for x in 0..levels {
            for y in 0..levels {
                let c = pairs.iter().filter(|&&p| p == (x, y)).count() as f64;
                total += (c / n) * (c / n);
            }
        }
        total
    }

    #[test]
    fn noise_across_bins_lowers_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (ns, nt) = (8, 12);
        let m = Mask::full(ns, nt);
        for _ in 0..100 {
            let base: f64 = rng.gen_range(20.0..100.0);
            let spread = rng.gen_range(20.0..40.0);
            let values: Vec<f64> = (0..ns * nt)
                .map(|_| (base + rng.gen_range(-spread..spread)).max(0.0))
                .collect();
            let noisy = SpeedField::new(GridMeta::default(), ns, nt, values.clone()).unwrap();
            let e = glcm_energy(&noisy, &m, 8, (0, 1)).unwrap();
            assert!((e - energy_by_enumeration(&values, ns, nt, 8)).abs() < 1e-12);
            assert!(e > 0.0 && e < 1.0, "energy {e}");
        }
    }
}
