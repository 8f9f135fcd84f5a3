//! Mask fitting under two rival objectives.
//!
//! The spectrogram-domain objective measures the masked estimate against
//! the clean spectrogram where the estimate lives, inconsistent components
//! and all. The time-domain objective measures the resynthesized signal
//! against the clean signal, which is the same as measuring the *projected*
//! estimate: components outside the consistent subspace never reach the
//! output, so gradient steps stop spending effort on them. Convergence
//! traces make the difference between the two observable.
//!
//! Both objectives are quadratic in the mask parameters for the supported
//! `beta = 2`, so gradients are exact and descent with a backtracking step
//! is guaranteed monotone. A block constraint (one mask value shared by `B`
//! consecutive frames) stands in for limited model capacity; with it, the
//! two objectives genuinely disagree about the best reachable mask.

use ndarray::Array2;
use thiserror::Error;

use crate::consistency::inconsistency;
use crate::masking::{apply_mask, MaskPair};
use crate::stft::{istft_adjoint, istft_to_len, stft, symmetry_weights, Spectrogram};
use crate::wav::Waveform;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("only beta = 2 objectives are supported, got {0}")]
    UnsupportedBeta(f64),
    #[error("divergence at iteration {iter}: {reason}")]
    Divergence { iter: usize, reason: String },
    #[error("invalid fit option: {0}")]
    InvalidOption(String),
}

/// Which domain the residual is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossDomain {
    /// `sum_f w_f |S_hat - stft(x)|^2` with one-sided symmetry weights.
    Spectrogram,
    /// `||istft(S_hat) - x||^2`.
    TimeDomain,
}

/// Objective = domain + distance exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub domain: LossDomain,
    pub beta: f64,
}

impl Objective {
    pub fn spectrogram() -> Self {
        Objective { domain: LossDomain::Spectrogram, beta: 2.0 }
    }

    pub fn time_domain() -> Self {
        Objective { domain: LossDomain::TimeDomain, beta: 2.0 }
    }

    fn check(&self) -> Result<(), OptimError> {
        if self.beta != 2.0 {
            return Err(OptimError::UnsupportedBeta(self.beta));
        }
        Ok(())
    }
}

/// Mask initialization for [`fit_masks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskInit {
    Ones,
    Zeros,
}

/// Gradient with the same layout as a [`MaskPair`].
#[derive(Debug, Clone)]
pub struct MaskGradient {
    pub mr: Array2<f64>,
    pub mi: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the relative loss decrease of a step falls below this.
    pub tol: f64,
    /// Frames per shared mask value; 1 leaves every frame free.
    pub block_size: usize,
    pub init: MaskInit,
    pub clip_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            step_size: 0.01,
            max_iters: 2000,
            tol: 1e-10,
            block_size: 1,
            init: MaskInit::Ones,
            clip_bound: 10.0,
        }
    }
}

/// One row of a convergence trace.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub iter: usize,
    pub loss: f64,
    /// `||istft(S_hat) - x||_2` at this iterate.
    pub time_domain_error: f64,
    /// [`inconsistency`] of the masked estimate.
    pub inconsistency: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    pub points: Vec<TracePoint>,
}

impl ConvergenceTrace {
    pub fn final_point(&self) -> &TracePoint {
        self.points.last().expect("traces always hold the initial point")
    }
}

/// Shared, validated problem state.
struct Problem<'a> {
    noisy: &'a Spectrogram,
    clean: &'a Waveform,
    clean_spec: Spectrogram,
    weights: Array2<f64>,
    objective: Objective,
}

impl<'a> Problem<'a> {
    fn new(
        noisy: &'a Spectrogram,
        clean: &'a Waveform,
        objective: Objective,
    ) -> Result<Self, OptimError> {
        objective.check()?;
        if noisy.orig_len != Some(clean.len()) {
            return Err(OptimError::ShapeMismatch(format!(
                "noisy spectrogram analyzes {:?} samples but the clean signal has {}",
                noisy.orig_len,
                clean.len()
            )));
        }
        let clean_spec = stft(clean, &noisy.config)
            .map_err(|e| OptimError::ShapeMismatch(e.to_string()))?;
        if clean_spec.data.dim() != noisy.data.dim() {
            return Err(OptimError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                clean_spec.data.dim(),
                noisy.data.dim()
            )));
        }
        let w = symmetry_weights(noisy.n_bins());
        let weights =
            Array2::from_shape_fn(noisy.data.dim(), |(_, f)| w[f]);
        Ok(Problem { noisy, clean, clean_spec, weights, objective })
    }

    fn check_masks(&self, masks: &MaskPair) -> Result<(), OptimError> {
        if masks.mr.dim() != self.noisy.data.dim() || masks.mi.dim() != self.noisy.data.dim() {
            return Err(OptimError::ShapeMismatch(format!(
                "mask {:?} vs spectrogram {:?}",
                masks.mr.dim(),
                self.noisy.data.dim()
            )));
        }
        Ok(())
    }

    fn estimate(&self, masks: &MaskPair) -> Spectrogram {
        apply_mask(self.noisy, masks).expect("shapes validated at construction")
    }

    fn resynth(&self, estimate: &Spectrogram) -> Waveform {
        istft_to_len(estimate, self.clean.len())
            .expect("estimate inherits the analyzed length")
    }

    fn loss_of(&self, masks: &MaskPair) -> f64 {
        let estimate = self.estimate(masks);
        match self.objective.domain {
            LossDomain::Spectrogram => {
                let mut total = 0.0;
                for ((e, c), w) in estimate
                    .data
                    .iter()
                    .zip(self.clean_spec.data.iter())
                    .zip(self.weights.iter())
                {
                    total += w * (e - c).norm_sqr();
                }
                total
            }
            LossDomain::TimeDomain => {
                let out = self.resynth(&estimate);
                out.samples
                    .iter()
                    .zip(&self.clean.samples)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            }
        }
    }

    fn gradient_of(&self, masks: &MaskPair) -> MaskGradient {
        let estimate = self.estimate(masks);
        match self.objective.domain {
            LossDomain::Spectrogram => {
                let mut mr = Array2::zeros(masks.mr.dim());
                let mut mi = Array2::zeros(masks.mi.dim());
                for (i, ((e, c), y)) in estimate
                    .data
                    .iter()
                    .zip(self.clean_spec.data.iter())
                    .zip(self.noisy.data.iter())
                    .enumerate()
                {
                    let w = self.weights.as_slice().unwrap()[i];
                    let r = e - c;
                    mr.as_slice_mut().unwrap()[i] = 2.0 * w * y.re * r.re;
                    mi.as_slice_mut().unwrap()[i] = 2.0 * w * y.im * r.im;
                }
                MaskGradient { mr, mi }
            }
            LossDomain::TimeDomain => {
                let out = self.resynth(&estimate);
                let residual = Waveform::new(
                    out.samples
                        .iter()
                        .zip(&self.clean.samples)
                        .map(|(a, b)| a - b)
                        .collect(),
                    out.sample_rate,
                );
                let back = istft_adjoint(&residual, &self.noisy.config, self.noisy.n_frames())
                    .expect("residual length equals the synthesis length");
                let mut mr = Array2::zeros(masks.mr.dim());
                let mut mi = Array2::zeros(masks.mi.dim());
                for (i, (g, y)) in back.data.iter().zip(self.noisy.data.iter()).enumerate() {
                    mr.as_slice_mut().unwrap()[i] = 2.0 * y.re * g.re;
                    mi.as_slice_mut().unwrap()[i] = 2.0 * y.im * g.im;
                }
                MaskGradient { mr, mi }
            }
        }
    }
}

/// Objective value at the given masks.
pub fn loss_value(
    masks: &MaskPair,
    noisy: &Spectrogram,
    clean: &Waveform,
    objective: Objective,
) -> Result<f64, OptimError> {
    let problem = Problem::new(noisy, clean, objective)?;
    problem.check_masks(masks)?;
    Ok(problem.loss_of(masks))
}

/// Exact gradient of [`loss_value`] with respect to every mask component.
///
/// For the time-domain objective the residual flows back through the
/// adjoint of the inverse transform before landing on the masks.
pub fn loss_gradient(
    masks: &MaskPair,
    noisy: &Spectrogram,
    clean: &Waveform,
    objective: Objective,
) -> Result<MaskGradient, OptimError> {
    let problem = Problem::new(noisy, clean, objective)?;
    problem.check_masks(masks)?;
    Ok(problem.gradient_of(masks))
}

const MAX_BACKTRACKS: u32 = 30;
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Fit a mask pair by gradient descent with halving backtracking.
///
/// Mask values are shared across `block_size` consecutive frames; the
/// returned masks are expanded to full frame resolution and clipped into
/// `[-K, K]`. The trace records the initial point and every accepted step,
/// so it holds `iterations + 1` rows.
pub fn fit_masks(
    noisy: &Spectrogram,
    clean: &Waveform,
    objective: Objective,
    opts: &FitOptions,
) -> Result<(MaskPair, ConvergenceTrace), OptimError> {
    if opts.block_size == 0 {
        return Err(OptimError::InvalidOption("block size must be positive".into()));
    }
    if !opts.step_size.is_finite() || opts.step_size <= 0.0 {
        return Err(OptimError::InvalidOption("step size must be positive".into()));
    }
    let problem = Problem::new(noisy, clean, objective)?;

    let (n_frames, n_bins) = noisy.data.dim();
    let n_blocks = n_frames.div_ceil(opts.block_size);
    let init_value = match opts.init {
        MaskInit::Ones => 1.0,
        MaskInit::Zeros => 0.0,
    };
    let mut params_r = Array2::from_elem((n_blocks, n_bins), init_value);
    let mut params_i = Array2::from_elem((n_blocks, n_bins), init_value);

    let expand = |p: &Array2<f64>| -> Array2<f64> {
        Array2::from_shape_fn((n_frames, n_bins), |(t, f)| p[[t / opts.block_size, f]])
    };
    let masks_at = |pr: &Array2<f64>, pi: &Array2<f64>| MaskPair {
        mr: expand(pr),
        mi: expand(pi),
        clip_bound: opts.clip_bound,
    };
    let reduce = |g: &Array2<f64>| -> Array2<f64> {
        let mut out = Array2::zeros((n_blocks, n_bins));
        for ((t, f), v) in g.indexed_iter() {
            out[[t / opts.block_size, f]] += v;
        }
        out
    };

    let mut trace = ConvergenceTrace::default();
    let mut record = |iter: usize, loss: f64, masks: &MaskPair| {
        let estimate = problem.estimate(masks);
        let out = problem.resynth(&estimate);
        let td_err = out
            .samples
            .iter()
            .zip(&problem.clean.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        trace.points.push(TracePoint {
            iter,
            loss,
            time_domain_error: td_err,
            inconsistency: inconsistency(&estimate),
        });
    };

    let mut masks = masks_at(&params_r, &params_i);
    let mut loss = problem.loss_of(&masks);
    let initial_loss = loss;
    record(0, loss, &masks);

    for iter in 1..=opts.max_iters {
        let grad = problem.gradient_of(&masks);
        let grad_r = reduce(&grad.mr);
        let grad_i = reduce(&grad.mi);

        let mut step = opts.step_size;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let cand_r = &params_r - &(step * &grad_r);
            let cand_i = &params_i - &(step * &grad_i);
            let cand_masks = masks_at(&cand_r, &cand_i);
            let cand_loss = problem.loss_of(&cand_masks);
            if cand_loss <= loss {
                accepted = Some((cand_r, cand_i, cand_masks, cand_loss));
                break;
            }
            step /= 2.0;
        }
        let Some((new_r, new_i, new_masks, new_loss)) = accepted else {
            return Err(OptimError::Divergence {
                iter,
                reason: format!("no loss reduction after {MAX_BACKTRACKS} step halvings"),
            });
        };
        if new_loss > DIVERGENCE_FACTOR * initial_loss {
            return Err(OptimError::Divergence {
                iter,
                reason: format!("loss {new_loss} exceeds {DIVERGENCE_FACTOR} x initial"),
            });
        }

        params_r = new_r;
        params_i = new_i;
        masks = new_masks;
        let prev = loss;
        loss = new_loss;
        record(iter, loss, &masks);

        let rel_decrease = (prev - loss) / prev.max(f64::MIN_POSITIVE);
        if rel_decrease < opts.tol {
            break;
        }
    }

    let clipped = MaskPair {
        mr: masks.mr.mapv(|v| v.clamp(-opts.clip_bound, opts.clip_bound)),
        mi: masks.mi.mapv(|v| v.clamp(-opts.clip_bound, opts.clip_bound)),
        clip_bound: opts.clip_bound,
    };
    Ok((clipped, trace))
}
