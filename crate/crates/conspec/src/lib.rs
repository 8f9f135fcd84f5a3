//! Consistent-spectrogram toolkit.
//!
//! A complex time-frequency array only corresponds to a real signal when
//! its overlapping frames agree with each other; masking a spectrogram
//! almost always breaks that agreement. This crate provides the pieces to
//! study and exploit the difference:
//!
//! - [`stft`](mod@stft): analysis/synthesis with explicit DFT kernel matrices,
//!   perfect-reconstruction dual windows, and the adjoint of the inverse
//!   transform;
//! - [`consistency`]: the projection `stft . istft`, an inconsistency
//!   measure, and Griffin-Lim phase retrieval;
//! - [`masking`]: oracle ratio and magnitude masks and their application;
//! - [`optim`]: mask fitting under a spectrogram-domain objective and a
//!   time-domain (consistent) objective, with convergence traces;
//! - [`mixer`] / [`metrics`] / [`wav`]: deterministic mixtures at exact
//!   SNRs, evaluation, and mono WAV I/O.

pub mod consistency;
pub mod masking;
pub mod metrics;
pub mod mixer;
pub mod optim;
pub mod rng;
pub mod stft;
pub mod wav;

pub use consistency::{consistency_operator, griffin_lim, inconsistency, GriffinLimTrace, PhaseInit};
pub use masking::{apply_magnitude_mask, apply_mask, oracle_irm, oracle_ratio_masks, MagnitudeMask, MaskPair};
pub use metrics::{segmental_snr, snr_db, spectrogram_distance, EvalReport, SegSnrOptions};
pub use mixer::{gen_sine, gen_white_noise, mix_at_snr, mix_at_snr_seeded, Mixture};
pub use optim::{fit_masks, loss_gradient, loss_value, ConvergenceTrace, FitOptions, LossDomain, MaskInit, Objective};
pub use stft::{dft_kernels, istft, istft_adjoint, istft_to_len, stft, DftKernel, Spectrogram, StftConfig, WindowKind};
pub use wav::{read_wav, write_wav, Waveform, WavEncoding};
