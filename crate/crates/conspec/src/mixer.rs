//! Deterministic test signals and noisy mixtures at exact target SNRs.
//!
//! Mixing level is defined on full-utterance mean power: the noise is
//! truncated to the clean signal's extent and scaled so that
//! `10*log10(P_clean / P_noise)` hits the target exactly.

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::wav::Waveform;

#[derive(Debug, Error)]
pub enum MixError {
    #[error("degenerate signal: {0} has zero power")]
    DegenerateSignal(&'static str),
    #[error("sample rate mismatch: {clean} Hz vs {noise} Hz")]
    RateMismatch { clean: u32, noise: u32 },
    #[error("noise is too short: {noise} samples for a {clean}-sample clean signal")]
    NoiseTooShort { clean: usize, noise: usize },
    #[error("frequency {0} Hz is outside (0, rate/2)")]
    InvalidFrequency(f64),
}

/// A clean/noise pair combined at a target SNR.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub noisy: Waveform,
    pub clean: Waveform,
    pub scaled_noise: Waveform,
    pub target_snr_db: f64,
    pub achieved_snr_db: f64,
    pub noise_scale: f64,
    /// Seed of the generated noise, when the noise came from
    /// [`mix_at_snr_seeded`].
    pub seed: Option<u64>,
}

/// Scale `noise` against `clean` to hit `snr_db` and add them.
///
/// Noise longer than the clean signal is truncated; powers are mean squares
/// over the overlapped extent.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Mixture, MixError> {
    if clean.sample_rate != noise.sample_rate {
        return Err(MixError::RateMismatch {
            clean: clean.sample_rate,
            noise: noise.sample_rate,
        });
    }
    if noise.len() < clean.len() {
        return Err(MixError::NoiseTooShort {
            clean: clean.len(),
            noise: noise.len(),
        });
    }
    let p_clean = clean.mean_power();
    if p_clean == 0.0 {
        return Err(MixError::DegenerateSignal("clean"));
    }
    let trimmed = &noise.samples[..clean.len()];
    let p_noise = trimmed.iter().map(|s| s * s).sum::<f64>() / clean.len() as f64;
    if p_noise == 0.0 {
        return Err(MixError::DegenerateSignal("noise"));
    }

    let scale = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = trimmed.iter().map(|s| s * scale).collect();
    let noisy: Vec<f64> = clean
        .samples
        .iter()
        .zip(&scaled)
        .map(|(c, n)| c + n)
        .collect();

    let p_scaled = scaled.iter().map(|s| s * s).sum::<f64>() / scaled.len() as f64;
    let achieved = 10.0 * (p_clean / p_scaled).log10();

    Ok(Mixture {
        noisy: Waveform::new(noisy, clean.sample_rate),
        clean: clean.clone(),
        scaled_noise: Waveform::new(scaled, clean.sample_rate),
        target_snr_db: snr_db,
        achieved_snr_db: achieved,
        noise_scale: scale,
        seed: None,
    })
}

/// Mix against generated white noise of the clean signal's length.
pub fn mix_at_snr_seeded(clean: &Waveform, seed: u64, snr_db: f64) -> Result<Mixture, MixError> {
    let duration = clean.len() as f64 / clean.sample_rate as f64;
    let noise = gen_white_noise(duration, clean.sample_rate, seed, 1.0);
    let mut mixture = mix_at_snr(clean, &noise, snr_db)?;
    mixture.seed = Some(seed);
    Ok(mixture)
}

/// `amplitude * sin(2*pi*freq*n/rate + phase)` with `round(duration*rate)`
/// samples.
pub fn gen_sine(
    freq_hz: f64,
    duration_s: f64,
    sample_rate: u32,
    amplitude: f64,
    phase: f64,
) -> Result<Waveform, MixError> {
    if !(freq_hz > 0.0 && freq_hz < sample_rate as f64 / 2.0) {
        return Err(MixError::InvalidFrequency(freq_hz));
    }
    let n_samples = (duration_s * sample_rate as f64).round() as usize;
    let step = 2.0 * std::f64::consts::PI * freq_hz / sample_rate as f64;
    let samples = (0..n_samples)
        .map(|n| amplitude * (step * n as f64 + phase).sin())
        .collect();
    Ok(Waveform::new(samples, sample_rate))
}

/// Seeded uniform noise in `[-amplitude, amplitude)`.
///
/// The generator is [`SplitMix64`], so the same seed produces the same
/// samples on every platform and run.
pub fn gen_white_noise(duration_s: f64, sample_rate: u32, seed: u64, amplitude: f64) -> Waveform {
    let n_samples = (duration_s * sample_rate as f64).round().max(0.0) as usize;
    let mut rng = SplitMix64::new(seed);
    let samples = (0..n_samples).map(|_| amplitude * rng.next_signed()).collect();
    Waveform::new(samples, sample_rate)
}
