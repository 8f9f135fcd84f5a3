//! Oracle mask construction and mask application.
//!
//! Two oracle families are provided. The component-wise ratio masks divide
//! the clean spectrogram's real and imaginary parts by the noisy ones,
//! which inverts the mixing exactly wherever the denominators are healthy.
//! The magnitude mask scales noisy magnitudes toward the clean ones while
//! keeping the noisy phase, which is what limits it: the masked result is
//! generally not the transform of any signal, and resynthesis projects it.

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::stft::Spectrogram;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("invalid mask parameter: {0}")]
    InvalidParam(String),
}

fn check_shapes(a: &Spectrogram, b: &Spectrogram) -> Result<(), MaskError> {
    if a.data.dim() != b.data.dim() {
        return Err(MaskError::ShapeMismatch {
            a: a.data.dim(),
            b: b.data.dim(),
        });
    }
    Ok(())
}

/// Real/imaginary mask pair, entries clipped into `[-K, K]`.
#[derive(Debug, Clone)]
pub struct MaskPair {
    pub mr: Array2<f64>,
    pub mi: Array2<f64>,
    pub clip_bound: f64,
}

impl MaskPair {
    /// Constant mask of the given value on every component.
    pub fn constant(shape: (usize, usize), value: f64, clip_bound: f64) -> Self {
        MaskPair {
            mr: Array2::from_elem(shape, value),
            mi: Array2::from_elem(shape, value),
            clip_bound,
        }
    }
}

/// Magnitude-domain mask with entries in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct MagnitudeMask {
    pub m: Array2<f64>,
}

/// Ratio masks plus how often the clip bound was hit.
#[derive(Debug, Clone)]
pub struct RatioMaskOutcome {
    pub masks: MaskPair,
    /// Mask components that landed outside `[-K, K]` before clipping.
    pub clipped_components: usize,
}

/// Guarded division: the denominator keeps its sign but its magnitude is
/// floored at `eps`, with `sign(0) := +1`.
fn guarded_ratio(num: f64, den: f64, eps: f64) -> f64 {
    let sign = if den < 0.0 { -1.0 } else { 1.0 };
    num / (sign * den.abs().max(eps))
}

/// Component-wise ratio masks of a clean spectrogram against a noisy one:
/// `MR = Re S / Re Y`, `MI = Im S / Im Y`, denominators floored at `eps`
/// and results clipped to `[-K, K]`.
pub fn oracle_ratio_masks(
    clean: &Spectrogram,
    noisy: &Spectrogram,
    eps: f64,
    clip_bound: f64,
) -> Result<RatioMaskOutcome, MaskError> {
    check_shapes(clean, noisy)?;
    if !eps.is_finite() || eps <= 0.0 {
        return Err(MaskError::InvalidParam(format!("eps must be positive, got {eps}")));
    }
    if !clip_bound.is_finite() || clip_bound <= 0.0 {
        return Err(MaskError::InvalidParam(format!(
            "clip bound must be positive, got {clip_bound}"
        )));
    }
    let mut clipped = 0usize;
    let mut component = |num: f64, den: f64| -> f64 {
        let r = guarded_ratio(num, den, eps);
        if r.abs() > clip_bound {
            clipped += 1;
            r.clamp(-clip_bound, clip_bound)
        } else {
            r
        }
    };
    let dim = clean.data.dim();
    let mut mr = Array2::zeros(dim);
    let mut mi = Array2::zeros(dim);
    for ((idx, s), y) in clean.data.indexed_iter().zip(noisy.data.iter()) {
        mr[idx] = component(s.re, y.re);
        mi[idx] = component(s.im, y.im);
    }
    Ok(RatioMaskOutcome {
        masks: MaskPair { mr, mi, clip_bound },
        clipped_components: clipped,
    })
}

/// Magnitude-ratio oracle `sqrt(|S|^2 / (|S|^2 + |N|^2))` from clean speech
/// and the noise component, with `0/0 -> 0`.
pub fn oracle_irm(clean: &Spectrogram, noise: &Spectrogram) -> Result<MagnitudeMask, MaskError> {
    check_shapes(clean, noise)?;
    let m = Array2::from_shape_fn(clean.data.dim(), |idx| {
        let s2 = clean.data[idx].norm_sqr();
        let n2 = noise.data[idx].norm_sqr();
        if s2 == 0.0 {
            0.0
        } else {
            (s2 / (s2 + n2)).sqrt()
        }
    });
    Ok(MagnitudeMask { m })
}

/// Apply a real/imaginary mask pair:
/// `S_hat = MR .* Re Y + i * (MI .* Im Y)`.
///
/// The result is generally inconsistent; resynthesis projects it.
pub fn apply_mask(noisy: &Spectrogram, masks: &MaskPair) -> Result<Spectrogram, MaskError> {
    if noisy.data.dim() != masks.mr.dim() || noisy.data.dim() != masks.mi.dim() {
        return Err(MaskError::ShapeMismatch {
            a: noisy.data.dim(),
            b: masks.mr.dim(),
        });
    }
    let mut out = noisy.clone();
    for ((z, &mr), &mi) in out.data.iter_mut().zip(masks.mr.iter()).zip(masks.mi.iter()) {
        *z = Complex64::new(mr * z.re, mi * z.im);
    }
    Ok(out)
}

/// Apply a magnitude mask, keeping the noisy phase:
/// `S_hat = m .* |Y| * exp(i arg Y)`.
pub fn apply_magnitude_mask(
    noisy: &Spectrogram,
    mask: &MagnitudeMask,
) -> Result<Spectrogram, MaskError> {
    if noisy.data.dim() != mask.m.dim() {
        return Err(MaskError::ShapeMismatch {
            a: noisy.data.dim(),
            b: mask.m.dim(),
        });
    }
    let mut out = noisy.clone();
    for (z, &m) in out.data.iter_mut().zip(mask.m.iter()) {
        *z *= m;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::stft::{stft, StftConfig, WindowKind};
    use crate::wav::Waveform;

    const EPS: f64 = 1e-12;
    const K: f64 = 10.0;

    fn config() -> StftConfig {
        StftConfig::new(32, 16, WindowKind::HannPeriodic).unwrap()
    }

    fn random_spec(seed: u64) -> Spectrogram {
        let mut rng = SplitMix64::new(seed);
        let w = Waveform::new((0..300).map(|_| rng.next_signed()).collect(), 8000);
        stft(&w, &config()).unwrap()
    }

    #[test]
    fn noise_free_input_gives_unit_masks() {
        let s = random_spec(1);
        let out = oracle_ratio_masks(&s, &s, EPS, K).unwrap();
        // Denominators at healthy bins give exactly 1; bins the guard
        // touches are the only exceptions.
        let healthy = s
            .data
            .iter()
            .zip(out.masks.mr.iter().zip(out.masks.mi.iter()))
            .filter(|(z, _)| z.re.abs() > EPS && z.im.abs() > EPS)
            .all(|(_, (&mr, &mi))| mr == 1.0 && mi == 1.0);
        assert!(healthy);
    }

    #[test]
    fn silent_clean_gives_zero_masks() {
        let y = random_spec(2);
        let mut s = y.clone();
        s.data.fill(Complex64::new(0.0, 0.0));
        let out = oracle_ratio_masks(&s, &y, EPS, K).unwrap();
        assert!(out.masks.mr.iter().all(|&v| v == 0.0));
        assert!(out.masks.mi.iter().all(|&v| v == 0.0));
        assert_eq!(out.clipped_components, 0);
    }

    #[test]
    fn vanishing_denominator_clips_to_bound() {
        let y = random_spec(3);
        let mut s = y.clone();
        let mut yz = y.clone();
        yz.data[[1, 1]] = Complex64::new(0.0, 0.5);
        s.data[[1, 1]] = Complex64::new(0.5, 0.5);
        let out = oracle_ratio_masks(&s, &yz, EPS, K).unwrap();
        assert_eq!(out.masks.mr[[1, 1]], K);
        assert!(out.clipped_components >= 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = random_spec(4);
        let mut rng = SplitMix64::new(5);
        let w = Waveform::new((0..600).map(|_| rng.next_signed()).collect(), 8000);
        let b = stft(&w, &config()).unwrap();
        assert!(matches!(
            oracle_ratio_masks(&a, &b, EPS, K),
            Err(MaskError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn irm_limits() {
        let s = random_spec(6);
        let mut silent = s.clone();
        silent.data.fill(Complex64::new(0.0, 0.0));

        let noise_free = oracle_irm(&s, &silent).unwrap();
        for (z, &m) in s.data.iter().zip(noise_free.m.iter()) {
            if z.norm_sqr() > 0.0 {
                assert_eq!(m, 1.0);
            }
        }

        let equal_power = oracle_irm(&s, &s).unwrap();
        for (z, &m) in s.data.iter().zip(equal_power.m.iter()) {
            if z.norm_sqr() > 0.0 {
                assert!((m - 0.5f64.sqrt()).abs() <= 1e-15);
            }
        }

        let silent_clean = oracle_irm(&silent, &s).unwrap();
        assert!(silent_clean.m.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn identity_mask_preserves_input() {
        let y = random_spec(7);
        let masks = MaskPair::constant(y.data.dim(), 1.0, K);
        let out = apply_mask(&y, &masks).unwrap();
        assert_eq!(out.data, y.data);
    }

    #[test]
    fn single_component_arithmetic() {
        let mut y = random_spec(8);
        y.data[[0, 0]] = Complex64::new(3.0, 4.0);
        let mut masks = MaskPair::constant(y.data.dim(), 0.0, K);
        masks.mr[[0, 0]] = 2.0;
        masks.mi[[0, 0]] = 0.5;
        let out = apply_mask(&y, &masks).unwrap();
        assert_eq!(out.data[[0, 0]], Complex64::new(6.0, 2.0));
    }

    #[test]
    fn unclipped_oracle_inverts_mixing() {
        let s = random_spec(9);
        let mut y = s.clone();
        // Componentwise scaling keeps denominators proportional to the
        // numerators, so no guard or clip fires.
        for z in y.data.iter_mut() {
            *z *= 1.5;
        }
        let out = oracle_ratio_masks(&s, &y, EPS, K).unwrap();
        assert_eq!(out.clipped_components, 0);
        let rebuilt = apply_mask(&y, &out.masks).unwrap();
        let scale = s.frob_norm();
        let mut err: f64 = 0.0;
        for (a, b) in rebuilt.data.iter().zip(s.data.iter()) {
            err = err.max((a - b).norm());
        }
        assert!(err <= 1e-12 * scale);
    }

    #[test]
    fn magnitude_mask_endpoints() {
        let y = random_spec(10);

        let ones = MagnitudeMask { m: Array2::from_elem(y.data.dim(), 1.0) };
        assert_eq!(apply_magnitude_mask(&y, &ones).unwrap().data, y.data);

        let zeros = MagnitudeMask { m: Array2::zeros(y.data.dim()) };
        let out = apply_magnitude_mask(&y, &zeros).unwrap();
        assert!(out.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn magnitude_mask_scales_magnitude_and_keeps_phase() {
        let y = random_spec(11);
        let mut rng = SplitMix64::new(12);
        let m = Array2::from_shape_fn(y.data.dim(), |_| rng.next_f64());
        let out = apply_magnitude_mask(&y, &MagnitudeMask { m: m.clone() }).unwrap();
        for ((idx, z), o) in y.data.indexed_iter().zip(out.data.iter()) {
            assert!((o.norm() - m[idx] * z.norm()).abs() <= 1e-12 * z.norm().max(1.0));
            if z.norm() > 1e-9 && m[idx] > 1e-9 {
                let dphi = (o.arg() - z.arg()).abs();
                assert!(dphi <= 1e-12, "phase moved by {dphi}");
            }
        }
    }

    #[test]
    fn mask_application_is_linear_in_the_mask() {
        let y = random_spec(13);
        let mut rng = SplitMix64::new(14);
        let mk = |rng: &mut SplitMix64| MaskPair {
            mr: Array2::from_shape_fn(y.data.dim(), |_| rng.next_signed()),
            mi: Array2::from_shape_fn(y.data.dim(), |_| rng.next_signed()),
            clip_bound: K,
        };
        let m1 = mk(&mut rng);
        let m2 = mk(&mut rng);
        let (a, b) = (0.3, -2.1);
        let combo = MaskPair {
            mr: a * &m1.mr + b * &m2.mr,
            mi: a * &m1.mi + b * &m2.mi,
            clip_bound: K,
        };
        let lhs = apply_mask(&y, &combo).unwrap();
        let r1 = apply_mask(&y, &m1).unwrap();
        let r2 = apply_mask(&y, &m2).unwrap();
        let scale = lhs.frob_norm().max(1.0);
        for ((l, p), q) in lhs.data.iter().zip(r1.data.iter()).zip(r2.data.iter()) {
            assert!((l - (a * p + b * q)).norm() <= 1e-12 * scale);
        }
    }
}
