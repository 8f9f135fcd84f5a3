//! Short-time Fourier analysis and synthesis with explicit DFT kernel
//! matrices.
//!
//! The forward transform applies two real `F x N` matrices (cosine and sine
//! kernels) to analysis-windowed frames; the inverse expands the one-sided
//! spectrum through the same matrices and overlap-adds synthesis-windowed
//! frames. Keeping the transforms as literal matrix products makes the
//! linear-operator structure auditable and gives the inverse transform an
//! exact, testable adjoint ([`istft_adjoint`]) for gradient computation.
//!
//! The synthesis window is the canonical dual of the analysis window, so
//! `istft(stft(x)) == x` holds to machine precision over the whole signal:
//! the signal is zero-padded by `N - R` samples on both ends before framing,
//! which gives every original sample its full complement of overlapping
//! frames.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Zip};
use num_complex::Complex64;
use once_cell::sync::OnceCell;
use thiserror::Error;

use crate::wav::Waveform;

#[derive(Debug, Error)]
pub enum StftError {
    #[error("invalid transform parameters: {0}")]
    InvalidParams(String),
    #[error("window overlap cannot reconstruct: {0}")]
    ColaViolation(String),
    #[error("cannot transform an empty signal")]
    EmptySignal,
    #[error("spectrogram records no original length and none was supplied")]
    MissingLength,
    #[error("target length {got} exceeds the {max} samples this spectrogram can synthesize")]
    LengthMismatch { max: usize, got: usize },
}

/// Analysis window shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Periodic Hann window `0.5 * (1 - cos(2*pi*n/N))`.
    HannPeriodic,
    /// All-ones window.
    Rectangular,
}

/// Overlap-add power sums below this fraction of the peak make the dual
/// window blow up; such window/hop pairings are rejected.
const MIN_OVERLAP_POWER_RATIO: f64 = 1e-2;

/// Construction-time bound on the verified reconstruction sum.
const PR_SUM_TOL: f64 = 1e-9;

/// Transform geometry plus the analysis/synthesis window pair.
///
/// Immutable after construction; cheap to clone and safe to share across
/// concurrent transform calls. Kernel matrices are built lazily and shared.
#[derive(Debug, Clone)]
pub struct StftConfig {
    frame_len: usize,
    hop: usize,
    window_kind: WindowKind,
    analysis_window: Vec<f64>,
    synthesis_window: Vec<f64>,
    kernels: OnceCell<Arc<DftKernel>>,
}

impl PartialEq for StftConfig {
    fn eq(&self, other: &Self) -> bool {
        self.frame_len == other.frame_len
            && self.hop == other.hop
            && self.window_kind == other.window_kind
    }
}

/// One-sided DFT kernel matrices with entries evaluated on the exact
/// `2*pi*(f*n mod N)/N` grid.
#[derive(Debug, Clone)]
pub struct DftKernel {
    /// `F x N`, entry `(f, n) = cos(2*pi*f*n/N)`.
    pub cos: Array2<f64>,
    /// `F x N`, entry `(f, n) = sin(2*pi*f*n/N)`.
    pub sin: Array2<f64>,
}

impl StftConfig {
    /// Build a config, derive the canonical dual synthesis window and verify
    /// the reconstruction condition.
    pub fn new(frame_len: usize, hop: usize, window_kind: WindowKind) -> Result<Self, StftError> {
        if frame_len == 0 || !frame_len.is_multiple_of(2) {
            return Err(StftError::InvalidParams(format!(
                "frame length must be even and positive, got {frame_len}"
            )));
        }
        if hop == 0 || hop > frame_len {
            return Err(StftError::InvalidParams(format!(
                "hop must satisfy 0 < hop <= frame length, got hop {hop} for frame {frame_len}"
            )));
        }
        let analysis_window: Vec<f64> = match window_kind {
            WindowKind::HannPeriodic => (0..frame_len)
                .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / frame_len as f64).cos()))
                .collect(),
            WindowKind::Rectangular => vec![1.0; frame_len],
        };

        // Overlap-add power of the analysis window, periodic in the hop.
        let mut overlap_power = vec![0.0f64; hop];
        for (n, w) in analysis_window.iter().enumerate() {
            overlap_power[n % hop] += w * w;
        }
        let max_power = overlap_power.iter().cloned().fold(0.0, f64::max);
        let min_power = overlap_power.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_power <= MIN_OVERLAP_POWER_RATIO * max_power {
            return Err(StftError::ColaViolation(format!(
                "overlap-add power has near-zero troughs (min {min_power:.3e}, max {max_power:.3e}) \
                 for hop {hop} of frame {frame_len}"
            )));
        }

        let synthesis_window: Vec<f64> = analysis_window
            .iter()
            .enumerate()
            .map(|(n, w)| w / overlap_power[n % hop])
            .collect();

        // Verify the reconstruction sum over one hop period.
        for r in 0..hop {
            let sum: f64 = (r..frame_len)
                .step_by(hop)
                .map(|p| analysis_window[p] * synthesis_window[p])
                .sum();
            if (sum - 1.0).abs() > PR_SUM_TOL {
                return Err(StftError::ColaViolation(format!(
                    "reconstruction sum at offset {r} is {sum}, expected 1"
                )));
            }
        }

        Ok(StftConfig {
            frame_len,
            hop,
            window_kind,
            analysis_window,
            synthesis_window,
            kernels: OnceCell::new(),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window_kind(&self) -> WindowKind {
        self.window_kind
    }

    /// Number of one-sided frequency bins, `N/2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn analysis_window(&self) -> &[f64] {
        &self.analysis_window
    }

    pub fn synthesis_window(&self) -> &[f64] {
        &self.synthesis_window
    }

    /// The cached kernel matrices for this frame length.
    pub fn kernels(&self) -> &DftKernel {
        self.kernels.get_or_init(|| Arc::new(build_kernels(self.frame_len)))
    }

    /// Frame count produced by [`stft`] for a signal of `len` samples.
    pub fn n_frames_for(&self, len: usize) -> usize {
        let padded_min = len + 2 * (self.frame_len - self.hop);
        if padded_min <= self.frame_len {
            1
        } else {
            (padded_min - self.frame_len).div_ceil(self.hop) + 1
        }
    }

    /// Longest signal a `n_frames`-frame spectrogram can synthesize with
    /// every sample fully covered by overlapping frames.
    pub fn max_synth_len(&self, n_frames: usize) -> usize {
        ((n_frames + 1) * self.hop).saturating_sub(self.frame_len)
    }
}

fn build_kernels(frame_len: usize) -> DftKernel {
    let n_bins = frame_len / 2 + 1;
    let step = 2.0 * std::f64::consts::PI / frame_len as f64;
    let mut cos = Array2::zeros((n_bins, frame_len));
    let mut sin = Array2::zeros((n_bins, frame_len));
    for f in 0..n_bins {
        for n in 0..frame_len {
            let k = (f * n) % frame_len;
            // Quarter-period lattice points are exact; this keeps the sin
            // rows at DC and Nyquist identically zero so the one-sided
            // symmetry convention holds bit-exactly.
            let (c, s) = if k == 0 {
                (1.0, 0.0)
            } else if 4 * k == frame_len {
                (0.0, 1.0)
            } else if 2 * k == frame_len {
                (-1.0, 0.0)
            } else if 4 * k == 3 * frame_len {
                (0.0, -1.0)
            } else {
                let angle = step * k as f64;
                (angle.cos(), angle.sin())
            };
            cos[[f, n]] = c;
            sin[[f, n]] = s;
        }
    }
    DftKernel { cos, sin }
}

/// Kernel matrices for a config; identical to what [`stft`] applies.
pub fn dft_kernels(config: &StftConfig) -> DftKernel {
    config.kernels().clone()
}

/// One-sided spectral weights: 1 at DC and Nyquist, 2 elsewhere. Sums over
/// the one-sided spectrum taken with these weights equal full two-sided
/// sums.
pub fn symmetry_weights(n_bins: usize) -> Array1<f64> {
    let mut w = Array1::from_elem(n_bins, 2.0);
    w[0] = 1.0;
    w[n_bins - 1] = 1.0;
    w
}

/// How a signal was padded before framing, kept for exact-length inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub left_pad: usize,
    pub right_pad: usize,
    pub n_frames: usize,
    pub orig_len: usize,
}

impl FrameLayout {
    pub fn padded_len(&self) -> usize {
        self.orig_len + self.left_pad + self.right_pad
    }
}

/// A complex `T x F` time-frequency array tied to its transform config.
///
/// `orig_len` is the length of the signal the spectrogram was analyzed
/// from; spectrograms assembled from raw coefficient arrays may leave it
/// unset and supply a target length at synthesis time instead.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub data: Array2<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
    pub orig_len: Option<usize>,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.data.ncols()
    }

    /// Plain (unweighted) Frobenius norm of the coefficient array.
    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Longest synthesizable signal for this frame count.
    pub fn max_synth_len(&self) -> usize {
        self.config.max_synth_len(self.n_frames())
    }

    /// The length [`istft`] will produce: the recorded original length,
    /// clamped to what the frame count supports.
    pub fn default_synth_len(&self) -> usize {
        let max = self.max_synth_len();
        self.orig_len.map_or(max, |l| l.min(max))
    }
}

/// Split a signal into overlapping frames of the padded signal.
///
/// The signal is zero-padded by `N - R` at both ends and then to the next
/// frame boundary on the right; frame `t` covers padded samples
/// `[t*R, t*R + N)`. Frames are returned unwindowed.
pub fn frame_signal(w: &Waveform, config: &StftConfig) -> Result<(Array2<f64>, FrameLayout), StftError> {
    if w.is_empty() {
        return Err(StftError::EmptySignal);
    }
    let n = config.frame_len;
    let hop = config.hop;
    let left_pad = n - hop;
    let n_frames = config.n_frames_for(w.len());
    let padded_len = (n_frames - 1) * hop + n;
    let right_pad = padded_len - w.len() - left_pad;

    let mut padded = vec![0.0f64; padded_len];
    padded[left_pad..left_pad + w.len()].copy_from_slice(&w.samples);

    let mut frames = Array2::zeros((n_frames, n));
    for t in 0..n_frames {
        frames
            .row_mut(t)
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(&padded[t * hop..t * hop + n]);
    }
    let layout = FrameLayout {
        left_pad,
        right_pad,
        n_frames,
        orig_len: w.len(),
    };
    Ok((frames, layout))
}

/// Forward transform: analysis-windowed frames through the kernel matrices.
pub fn stft(w: &Waveform, config: &StftConfig) -> Result<Spectrogram, StftError> {
    let (frames, layout) = frame_signal(w, config)?;
    let wa = ArrayView1::from(config.analysis_window());
    let windowed = &frames * &wa;
    let kernels = config.kernels();
    let re = windowed.dot(&kernels.cos.t());
    let im = -(windowed.dot(&kernels.sin.t()));
    let mut data = Array2::zeros((layout.n_frames, config.n_bins()));
    Zip::from(&mut data).and(&re).and(&im).for_each(|d, &r, &i| {
        *d = Complex64::new(r, i);
    });
    Ok(Spectrogram {
        data,
        config: config.clone(),
        sample_rate: w.sample_rate,
        orig_len: Some(w.len()),
    })
}

/// Inverse transform to the recorded original length.
pub fn istft(s: &Spectrogram) -> Result<Waveform, StftError> {
    match s.orig_len {
        Some(len) => istft_to_len(s, len),
        None => Err(StftError::MissingLength),
    }
}

/// Inverse transform to an explicit target length.
///
/// One-sided bins are expanded with conjugate symmetry (imaginary parts at
/// DC and Nyquist drop out), each frame passes through the inverse kernel
/// and the synthesis window, and frames overlap-add at the hop. The edge
/// padding applied at analysis time is stripped, so `len` may not exceed
/// [`Spectrogram::max_synth_len`].
pub fn istft_to_len(s: &Spectrogram, len: usize) -> Result<Waveform, StftError> {
    let max = s.max_synth_len();
    if len > max {
        return Err(StftError::LengthMismatch { max, got: len });
    }
    let padded = synthesize_padded(s);
    let left_pad = s.config.frame_len - s.config.hop;
    let samples = padded[left_pad..left_pad + len].to_vec();
    Ok(Waveform::new(samples, s.sample_rate))
}

/// Overlap-added synthesis over the padded domain.
fn synthesize_padded(s: &Spectrogram) -> Vec<f64> {
    let config = &s.config;
    let n = config.frame_len;
    let hop = config.hop;
    let n_frames = s.n_frames();
    let n_bins = s.n_bins();
    let kernels = config.kernels();
    let weights = symmetry_weights(n_bins);

    let re = s.data.mapv(|z| z.re);
    let im = s.data.mapv(|z| z.im);
    let re_w = &re * &weights;
    let im_w = &im * &weights;
    // Rows of sin are identically zero at DC and Nyquist, so imaginary
    // parts recorded there never reach the output.
    let mut frames = re_w.dot(&kernels.cos) - im_w.dot(&kernels.sin);
    frames /= n as f64;

    let ws = ArrayView1::from(config.synthesis_window());
    let frames = &frames * &ws;

    let mut out = vec![0.0f64; (n_frames - 1) * hop + n];
    for t in 0..n_frames {
        let row = frames.row(t);
        let row = row.as_slice().unwrap();
        for (k, v) in row.iter().enumerate() {
            out[t * hop + k] += v;
        }
    }
    out
}

/// Adjoint of the linear map `S -> istft_to_len(S, w.len())` for a fixed
/// frame count, under real inner products with complex coefficients read as
/// pairs of reals.
///
/// Satisfies `<istft(S), w> == <S, istft_adjoint(w)>` to machine precision;
/// this is the workhorse for gradients of time-domain objectives.
pub fn istft_adjoint(
    w: &Waveform,
    config: &StftConfig,
    n_frames: usize,
) -> Result<Spectrogram, StftError> {
    let max = config.max_synth_len(n_frames);
    if w.len() > max {
        return Err(StftError::LengthMismatch { max, got: w.len() });
    }
    let n = config.frame_len;
    let hop = config.hop;
    let left_pad = n - hop;
    let mut padded = vec![0.0f64; (n_frames - 1) * hop + n];
    padded[left_pad..left_pad + w.len()].copy_from_slice(&w.samples);

    // Adjoint of overlap-add is frame extraction; the diagonal synthesis
    // window is self-adjoint.
    let mut frames = Array2::zeros((n_frames, n));
    for t in 0..n_frames {
        frames
            .row_mut(t)
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(&padded[t * hop..t * hop + n]);
    }
    let ws = ArrayView1::from(config.synthesis_window());
    let frames = &frames * &ws;

    let kernels = config.kernels();
    let weights = symmetry_weights(config.n_bins());
    let re = frames.dot(&kernels.cos.t()) * &weights / n as f64;
    let im = -(frames.dot(&kernels.sin.t())) * &weights / n as f64;

    let mut data = Array2::zeros((n_frames, config.n_bins()));
    Zip::from(&mut data).and(&re).and(&im).for_each(|d, &r, &i| {
        *d = Complex64::new(r, i);
    });
    Ok(Spectrogram {
        data,
        config: config.clone(),
        sample_rate: w.sample_rate,
        orig_len: None,
    })
}
