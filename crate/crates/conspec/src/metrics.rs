//! Signal-to-noise and spectrogram-distance evaluation.
//!
//! Perceptual scores are out of scope; reports carry plain SNR, clamped
//! segmental SNR and the symmetry-weighted spectrogram distance, plus the
//! inconsistency of whatever spectrogram produced the estimate.

use serde::Serialize;
use thiserror::Error;

use crate::stft::{symmetry_weights, Spectrogram};
use crate::wav::Waveform;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {a} vs {b} samples")]
    LengthMismatch { a: usize, b: usize },
    #[error("sample rate mismatch: {a} Hz vs {b} Hz")]
    RateMismatch { a: u32, b: u32 },
    #[error("reference signal has zero power")]
    DegenerateReference,
    #[error("no frame with nonzero reference power")]
    NoValidFrames,
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
}

/// SNR values are capped here when the error power vanishes.
pub const SNR_CAP_DB: f64 = 300.0;

fn check_pair(reference: &Waveform, estimate: &Waveform) -> Result<(), MetricsError> {
    if reference.sample_rate != estimate.sample_rate {
        return Err(MetricsError::RateMismatch {
            a: reference.sample_rate,
            b: estimate.sample_rate,
        });
    }
    if reference.len() != estimate.len() {
        return Err(MetricsError::LengthMismatch {
            a: reference.len(),
            b: estimate.len(),
        });
    }
    Ok(())
}

/// `10*log10(||ref||^2 / ||ref - est||^2)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(reference: &Waveform, estimate: &Waveform) -> Result<f64, MetricsError> {
    check_pair(reference, estimate)?;
    let ref_power: f64 = reference.samples.iter().map(|s| s * s).sum();
    if ref_power == 0.0 {
        return Err(MetricsError::DegenerateReference);
    }
    let err_power: f64 = reference
        .samples
        .iter()
        .zip(&estimate.samples)
        .map(|(r, e)| (r - e) * (r - e))
        .sum();
    if err_power == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (ref_power / err_power).log10()).min(SNR_CAP_DB))
}

/// Framing and clamping for [`segmental_snr`].
#[derive(Debug, Clone, Copy)]
pub struct SegSnrOptions {
    pub frame_len: usize,
    pub hop: usize,
    pub floor_db: f64,
    pub ceil_db: f64,
}

impl Default for SegSnrOptions {
    fn default() -> Self {
        SegSnrOptions {
            frame_len: 256,
            hop: 128,
            floor_db: -10.0,
            ceil_db: 35.0,
        }
    }
}

/// Mean of per-frame SNRs clamped into `[floor, ceil]`; frames whose
/// reference power is zero are skipped.
pub fn segmental_snr(
    reference: &Waveform,
    estimate: &Waveform,
    opts: SegSnrOptions,
) -> Result<f64, MetricsError> {
    check_pair(reference, estimate)?;
    if reference.samples.iter().map(|s| s * s).sum::<f64>() == 0.0 {
        return Err(MetricsError::DegenerateReference);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut start = 0usize;
    while start + opts.frame_len <= reference.len() {
        let r = &reference.samples[start..start + opts.frame_len];
        let e = &estimate.samples[start..start + opts.frame_len];
        let rp: f64 = r.iter().map(|s| s * s).sum();
        if rp > 0.0 {
            let ep: f64 = r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
            let snr = if ep == 0.0 {
                opts.ceil_db
            } else {
                (10.0 * (rp / ep).log10()).clamp(opts.floor_db, opts.ceil_db)
            };
            sum += snr;
            count += 1;
        }
        start += opts.hop;
    }
    if count == 0 {
        return Err(MetricsError::NoValidFrames);
    }
    Ok(sum / count as f64)
}

/// Symmetry-weighted Frobenius distance,
/// `sqrt(sum_f w_f |S1 - S2|^2)`, equal to the full two-sided distance.
pub fn spectrogram_distance(a: &Spectrogram, b: &Spectrogram) -> Result<f64, MetricsError> {
    if a.data.dim() != b.data.dim() {
        return Err(MetricsError::ShapeMismatch {
            a: a.data.dim(),
            b: b.data.dim(),
        });
    }
    let weights = symmetry_weights(a.n_bins());
    let mut total = 0.0;
    for (ra, rb) in a.data.rows().into_iter().zip(b.data.rows()) {
        for ((x, y), w) in ra.iter().zip(rb.iter()).zip(weights.iter()) {
            total += w * (x - y).norm_sqr();
        }
    }
    Ok(total.sqrt())
}

/// Flat evaluation record. Serializes to JSON with this field order and to
/// a CSV row via [`EvalReport::csv_header`] / [`EvalReport::csv_row`].
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub snr_db: f64,
    pub seg_snr_db: f64,
    pub spec_dist: f64,
    pub inconsistency: f64,
    pub n_samples: usize,
}

impl EvalReport {
    /// Evaluate an estimate against the clean reference.
    ///
    /// `estimated_spec` is the spectrogram the estimate was synthesized
    /// from; it supplies the distance to the clean spectrogram and the
    /// inconsistency column.
    pub fn compute(
        clean: &Waveform,
        estimate: &Waveform,
        estimated_spec: &Spectrogram,
        clean_spec: &Spectrogram,
    ) -> Result<Self, MetricsError> {
        Ok(EvalReport {
            snr_db: snr_db(clean, estimate)?,
            seg_snr_db: segmental_snr(clean, estimate, SegSnrOptions::default())?,
            spec_dist: spectrogram_distance(estimated_spec, clean_spec)?,
            inconsistency: crate::consistency::inconsistency(estimated_spec),
            n_samples: clean.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn csv_header() -> &'static str {
        "snr_db,seg_snr_db,spec_dist,inconsistency,n_samples"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.snr_db, self.seg_snr_db, self.spec_dist, self.inconsistency, self.n_samples
        )
    }
}
