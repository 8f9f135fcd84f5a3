//! The consistency projection and phase retrieval built on it.
//!
//! A complex time-frequency array is *consistent* when it is the transform
//! of some time signal. Analysis-of-synthesis, `C(S) = stft(istft(S))`, maps
//! any array onto that subspace: consistent inputs are fixed points, and the
//! composition is linear and idempotent because the synthesis window is the
//! canonical dual of the analysis window (synthesis is the least-squares
//! inverse of analysis, so `C` is the orthogonal projection under the
//! symmetry-weighted inner product).

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::stft::{istft_to_len, stft, symmetry_weights, Spectrogram, StftConfig};
use crate::wav::Waveform;

#[derive(Debug, Error)]
pub enum ConsistencyError {
    #[error("magnitude arrays must be nonnegative, found {0}")]
    InvalidMagnitude(f64),
}

/// Project onto the consistent subspace: synthesize, then re-analyze.
///
/// The synthesis length is the spectrogram's recorded original length, or
/// the full coverage length when none is recorded, so repeated application
/// reproduces the same operator exactly.
pub fn consistency_operator(s: &Spectrogram) -> Spectrogram {
    let len = s.default_synth_len();
    let x = istft_to_len(s, len).expect("synthesis length is within coverage by construction");
    let mut out = stft(&x, &s.config).expect("projection of a non-empty spectrogram");
    out.orig_len = s.orig_len;
    out
}

/// Relative distance to the consistent subspace,
/// `||S - C(S)||_F / ||S||_F`, with the convention that the zero array is
/// consistent.
pub fn inconsistency(s: &Spectrogram) -> f64 {
    let norm = s.frob_norm();
    if norm == 0.0 {
        return 0.0;
    }
    let projected = consistency_operator(s);
    residual_norm(s, &projected) / norm
}

fn residual_norm(a: &Spectrogram, b: &Spectrogram) -> f64 {
    a.data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Phase initialization for [`griffin_lim`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseInit {
    /// All-zero phase: the initial estimate is the magnitude itself.
    Zeros,
    /// Deterministic uniform phases in `[-pi, pi)`.
    Random { seed: u64 },
}

/// One Griffin-Lim iteration record.
#[derive(Debug, Clone, Copy)]
pub struct GriffinLimStep {
    pub iter: usize,
    /// Distance between `|C(S_k)|` and the target magnitudes, relative to
    /// the target norm, both taken in the symmetry-weighted norm — the
    /// norm in which the projection is orthogonal, which is what makes
    /// this sequence non-increasing.
    pub magnitude_error: f64,
    /// [`inconsistency`] of the current estimate.
    pub inconsistency: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GriffinLimTrace {
    pub steps: Vec<GriffinLimStep>,
}

impl GriffinLimTrace {
    pub fn final_magnitude_error(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.magnitude_error)
    }
}

/// Recover a signal from a magnitude array by alternating projections.
///
/// Starting from `S_0 = A * exp(i*phi_0)`, each iteration projects onto the
/// consistent subspace and restores the target magnitudes:
/// `S_{k+1} = A * exp(i * arg C(S_k))`, with `arg 0 := 0`. Returns the
/// synthesis of the final estimate at the full coverage length, plus the
/// per-iteration trace (entry `k` describes `S_k`, so `iters + 1` entries).
pub fn griffin_lim(
    magnitude: &Array2<f64>,
    config: &StftConfig,
    sample_rate: u32,
    iters: usize,
    init: PhaseInit,
) -> Result<(Waveform, GriffinLimTrace), ConsistencyError> {
    if let Some(&bad) = magnitude.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(ConsistencyError::InvalidMagnitude(bad));
    }

    let weights = symmetry_weights(magnitude.ncols());
    let weighted_norm = |m: &Array2<f64>| -> f64 {
        m.rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(weights.iter())
                    .map(|(v, w)| w * v * v)
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };
    let target_norm = weighted_norm(magnitude);

    let mut estimate = Spectrogram {
        data: magnitude.mapv(|a| Complex64::new(a, 0.0)),
        config: config.clone(),
        sample_rate,
        orig_len: None,
    };
    if let PhaseInit::Random { seed } = init {
        let mut rng = SplitMix64::new(seed);
        for z in estimate.data.iter_mut() {
            let phase = std::f64::consts::PI * rng.next_signed();
            *z = Complex64::from_polar(z.re, phase);
        }
    }

    let mut trace = GriffinLimTrace::default();
    for k in 0..=iters {
        let projected = consistency_operator(&estimate);
        let mag_err = {
            let diff = projected.data.mapv(Complex64::norm) - magnitude;
            let num = weighted_norm(&diff);
            if target_norm == 0.0 {
                num
            } else {
                num / target_norm
            }
        };
        let est_norm = estimate.frob_norm();
        let incons = if est_norm == 0.0 {
            0.0
        } else {
            residual_norm(&estimate, &projected) / est_norm
        };
        trace.steps.push(GriffinLimStep {
            iter: k,
            magnitude_error: mag_err,
            inconsistency: incons,
        });
        if k == iters {
            break;
        }
        // Restore target magnitudes with the projected phases.
        for ((z, p), &a) in estimate
            .data
            .iter_mut()
            .zip(projected.data.iter())
            .zip(magnitude.iter())
        {
            *z = if p.norm() == 0.0 {
                Complex64::new(a, 0.0)
            } else {
                Complex64::from_polar(a, p.arg())
            };
        }
    }

    let len = estimate.max_synth_len();
    let out = istft_to_len(&estimate, len).expect("coverage length is synthesizable");
    Ok((out, trace))
}
