//! Mondrian split sampling.
//!
//! A sample lying outside a block extends it by `ext[d]` along each feature.
//! The split clock runs at rate `sum(ext)`; when it fires the cut dimension is
//! drawn proportionally to `ext` and the threshold uniformly inside the gap
//! between the old block and the sample.

use rand::Rng;

use crate::instrument::Instrument;
use crate::scalar::Scalar;
use crate::vprec::VprecError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitProposal<F> {
    pub dim: usize,
    pub threshold: F,
    pub time: F,
}

/// Fills `ext` with the per-feature extension of `[lower, upper]` needed to
/// contain `x` and returns the total extension mass.
pub fn extension<F: Scalar>(
    lower: &[F],
    upper: &[F],
    x: &[F],
    inst: &Instrument,
    ext: &mut Vec<F>,
) -> Result<F, VprecError> {
    ext.clear();
    let zero = F::zero();
    let mut total = zero;
    for ((&lo, &hi), &v) in lower.iter().zip(upper).zip(x) {
        let below = inst.sub(lo, v)?.max(zero);
        let above = inst.sub(v, hi)?.max(zero);
        let e = inst.add(below, above)?;
        ext.push(e);
        total = inst.add(total, e)?;
    }
    Ok(total)
}

/// `parent_time + E` with `E ~ Exp(rate)`; infinite when `rate` is zero.
///
/// The variate is generated at working precision and only the resulting time
/// goes through the instrument.
pub fn draw_split_time<F: Scalar, R: Rng + ?Sized>(
    parent_time: F,
    rate: F,
    rng: &mut R,
    inst: &Instrument,
) -> Result<F, VprecError> {
    if rate <= F::zero() {
        return Ok(F::infinity());
    }
    let u = F::from_f64_lossy(rng.random::<f64>());
    let wait = -(-u).ln_1p() / rate;
    inst.add(parent_time, wait)
}

/// Draws the cut dimension (proportional to `ext`) and a threshold uniformly
/// in the extension gap on that dimension.
///
/// Returns `None` when rounding collapsed the gap so that the cut would not
/// separate `x` from the existing block.
pub fn draw_split_location<F: Scalar, R: Rng + ?Sized>(
    lower: &[F],
    upper: &[F],
    x: &[F],
    ext: &[F],
    total: F,
    rng: &mut R,
    inst: &Instrument,
) -> Result<Option<(usize, F)>, VprecError> {
    let zero = F::zero();
    let u = inst.value(F::from_f64_lossy(rng.random::<f64>()))?;
    let target = inst.mul(u, total)?;
    let mut acc = zero;
    let mut dim = None;
    for (d, &e) in ext.iter().enumerate() {
        if e <= zero {
            continue;
        }
        acc = inst.add(acc, e)?;
        dim = Some(d);
        if target < acc {
            break;
        }
    }
    let Some(dim) = dim else {
        return Ok(None);
    };

    let v = x[dim];
    let (lo, hi, sample_above) = if v > upper[dim] {
        (upper[dim], v, true)
    } else {
        (v, lower[dim], false)
    };
    let u = inst.value(F::from_f64_lossy(rng.random::<f64>()))?;
    let width = inst.sub(hi, lo)?;
    let threshold = inst.add(lo, inst.mul(u, width)?)?;
    // Routing sends `value <= threshold` left; the sample and the block must
    // land on opposite sides.
    let separates = if sample_above {
        upper[dim] <= threshold && v > threshold
    } else {
        v <= threshold && lower[dim] > threshold
    };
    Ok(separates.then_some((dim, threshold)))
}

/// Full proposal for extending the block `[lower, upper]` with `x`, or `None`
/// when `x` is already inside the block.
pub fn sample_split<F: Scalar, R: Rng + ?Sized>(
    lower: &[F],
    upper: &[F],
    x: &[F],
    parent_time: F,
    rng: &mut R,
    inst: &Instrument,
) -> Result<Option<SplitProposal<F>>, VprecError> {
    let mut ext = Vec::with_capacity(x.len());
    let total = extension(lower, upper, x, inst, &mut ext)?;
    if total <= F::zero() {
        return Ok(None);
    }
    let time = draw_split_time(parent_time, total, rng, inst)?;
    Ok(
        draw_split_location(lower, upper, x, &ext, total, rng, inst)?.map(|(dim, threshold)| SplitProposal {
            dim,
            threshold,
            time,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::InstrumentationMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plain() -> Instrument {
        Instrument::new(InstrumentationMode::Uninstrumented)
    }

    #[test]
    fn extension_vector() {
        let mut ext = Vec::new();
        let total = extension(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 1.0], &plain(), &mut ext).unwrap();
        assert_eq!(total, 1.0);
        assert_eq!(ext, vec![1.0, 0.0]);
        let total = extension(&[0.0, 0.0], &[1.0, 1.0], &[0.5, -3.0], &plain(), &mut ext).unwrap();
        assert_eq!(total, 3.0);
        assert_eq!(ext, vec![0.0, 3.0]);
    }

    #[test]
    fn inside_block_never_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_split(&[0.0, 0.0], &[1.0, 1.0], &[0.3, 0.9], 0.0, &mut rng, &plain()).unwrap();
        assert!(p.is_none());
        assert_eq!(draw_split_time(0.2f64, 0.0, &mut rng, &plain()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn single_extended_dimension_is_always_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let p = sample_split(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 1.0], 0.0, &mut rng, &plain())
                .unwrap()
                .unwrap();
            assert_eq!(p.dim, 0);
            assert!(p.threshold >= 1.0 && p.threshold < 2.0);
            assert!(p.time > 0.0);
        }
    }

    #[test]
    fn threshold_lies_in_the_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut lo_seen, mut hi_seen) = (f64::MAX, f64::MIN);
        for _ in 0..20_000 {
            let p = sample_split(&[0.0], &[1.0], &[3.0], 0.0, &mut rng, &plain())
                .unwrap()
                .unwrap();
            assert!(p.threshold > 1.0 && p.threshold < 3.0);
            lo_seen = lo_seen.min(p.threshold);
            hi_seen = hi_seen.max(p.threshold);
        }
        assert!(lo_seen < 1.01 && hi_seen > 2.99);
        for _ in 0..1000 {
            let p = sample_split(&[0.0], &[1.0], &[-2.0], 0.0, &mut rng, &plain())
                .unwrap()
                .unwrap();
            assert!(p.threshold >= -2.0 && p.threshold < 0.0);
        }
    }

    #[test]
    fn dimension_frequencies_follow_extension() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 100_000;
        let mut first = 0;
        for _ in 0..trials {
            let p = sample_split(&[0.0, 0.0], &[1.0, 1.0], &[4.0, 2.0], 0.0, &mut rng, &plain())
                .unwrap()
                .unwrap();
            first += usize::from(p.dim == 0);
        }
        let freq = first as f64 / trials as f64;
        assert!((freq - 0.75).abs() <= 0.01, "P(dim=0) = {freq}");
    }

    #[test]
    fn split_time_mean_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50_000;
        let mean: f64 = (0..n)
            .map(|_| draw_split_time(1.0f64, 4.0, &mut rng, &plain()).unwrap() - 1.0)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.25).abs() < 0.005, "mean wait {mean}");
    }
}
