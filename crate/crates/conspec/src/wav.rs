//! Mono WAV input/output and the time-domain signal type.
//!
//! Only RIFF/WAVE containers with a single channel are accepted, encoded as
//! 16-bit integer PCM or 32-bit IEEE float, little-endian. Integer samples
//! map to amplitude through the symmetric divisor 32768, so full scale is
//! 1.0 and the largest positive 16-bit code is one LSB short of it.
//! Multichannel input is rejected rather than downmixed, and there is no
//! resampling: operations that combine signals require equal sample rates.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Amplitude of one 16-bit step.
pub const PCM16_STEP: f64 = 1.0 / 32768.0;

/// A mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Samples as dimensionless amplitudes, nominally in `[-1, 1]`.
    pub samples: Vec<f64>,
    /// Sampling rate in Hz, strictly positive.
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Waveform { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean sample power. Zero for an empty signal.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Error)]
pub enum WavError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("expected mono audio, file has {0} channels")]
    UnsupportedChannels(u16),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("waveform contains NaN or infinite samples")]
    InvalidWaveform,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Sample encodings understood by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// What happened while writing, beyond success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOutcome {
    /// Samples clipped into `[-1, 1 - 1/32768]` before 16-bit quantization.
    pub clipped_samples: usize,
}

fn map_hound_err(path: &Path, e: hound::Error) -> WavError {
    match e {
        hound::Error::IoError(io) if io.kind() == io::ErrorKind::NotFound => {
            WavError::FileNotFound(path.to_path_buf())
        }
        hound::Error::IoError(io) => WavError::Io(io),
        hound::Error::FormatError(msg) => WavError::MalformedHeader(msg.to_string()),
        hound::Error::Unsupported => {
            WavError::UnsupportedEncoding("unrecognized sample format".into())
        }
        other => WavError::MalformedHeader(other.to_string()),
    }
}

/// Read a mono WAV file.
///
/// 16-bit PCM samples are scaled by `1/32768`; 32-bit float samples pass
/// through unchanged. Any other channel count, bit depth or codec is an
/// error.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, WavError> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::UnsupportedChannels(spec.channels));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 * PCM16_STEP))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| map_hound_err(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| map_hound_err(path, e))?,
        (fmt, bits) => {
            return Err(WavError::UnsupportedEncoding(format!(
                "{bits}-bit {}",
                match fmt {
                    hound::SampleFormat::Int => "integer",
                    hound::SampleFormat::Float => "float",
                }
            )))
        }
    };
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Write a mono WAV file.
///
/// For [`WavEncoding::Pcm16`] samples are clipped to `[-1, 1 - 1/32768]`
/// first and the number of clipped samples is reported. Float output rounds
/// each sample to the nearest f32 and stores it bit-exactly.
pub fn write_wav(
    path: impl AsRef<Path>,
    w: &Waveform,
    encoding: WavEncoding,
) -> Result<WriteOutcome, WavError> {
    let path = path.as_ref();
    if w.samples.iter().any(|s| !s.is_finite()) {
        return Err(WavError::InvalidWaveform);
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound_err(path, e))?;
    let mut clipped = 0usize;
    match encoding {
        WavEncoding::Pcm16 => {
            let hi = 1.0 - PCM16_STEP;
            for &s in &w.samples {
                let c = s.clamp(-1.0, hi);
                if c != s {
                    clipped += 1;
                }
                let code = (c * 32768.0).round() as i16;
                writer.write_sample(code).map_err(|e| map_hound_err(path, e))?;
            }
        }
        WavEncoding::Float32 => {
            for &s in &w.samples {
                writer
                    .write_sample(s as f32)
                    .map_err(|e| map_hound_err(path, e))?;
            }
        }
    }
    writer.finalize().map_err(|e| map_hound_err(path, e))?;
    Ok(WriteOutcome { clipped_samples: clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn tmp(name: &str) -> PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // Leak the dir so the file outlives the handle for the test body.
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn pcm16_scaling_is_exact() {
        let path = tmp("codes.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for code in [0i16, 16384, -16384] {
            w.write_sample(code).unwrap();
        }
        w.finalize().unwrap();

        let wave = read_wav(&path).unwrap();
        assert_eq!(wave.samples, vec![0.0, 0.5, -0.5]);
        assert_eq!(wave.sample_rate, 8000);
    }

    #[test]
    fn pcm16_round_trip_within_one_step() {
        let mut rng = SplitMix64::new(11);
        let samples: Vec<f64> = (0..2000).map(|_| 0.99 * rng.next_signed()).collect();
        let wave = Waveform::new(samples.clone(), 16000);
        let path = tmp("rt16.wav");
        let outcome = write_wav(&path, &wave, WavEncoding::Pcm16).unwrap();
        assert_eq!(outcome.clipped_samples, 0);
        let back = read_wav(&path).unwrap();
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= PCM16_STEP, "{a} vs {b}");
        }
    }

    #[test]
    fn float32_round_trip_is_bit_identical() {
        let mut rng = SplitMix64::new(3);
        // Samples already on the f32 grid survive the trip exactly.
        let samples: Vec<f64> = (0..2000).map(|_| rng.next_signed() as f32 as f64).collect();
        let wave = Waveform::new(samples.clone(), 44100);
        let path = tmp("rt32.wav");
        write_wav(&path, &wave, WavEncoding::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples, samples);
    }

    #[test]
    fn stereo_is_rejected() {
        let path = tmp("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for code in [0i16, 0, 100, -100] {
            w.write_sample(code).unwrap();
        }
        w.finalize().unwrap();
        match read_wav(&path) {
            Err(WavError::UnsupportedChannels(2)) => {}
            other => panic!("expected UnsupportedChannels, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_bit_depth_is_rejected() {
        let path = tmp("depth.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i32).unwrap();
        w.finalize().unwrap();
        match read_wav(&path) {
            Err(WavError::UnsupportedEncoding(_)) => {}
            other => panic!("expected UnsupportedEncoding, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_reported() {
        match read_wav("/definitely/not/here.wav") {
            Err(WavError::FileNotFound(p)) => {
                assert!(p.to_string_lossy().contains("not/here.wav"))
            }
            other => panic!("expected FileNotFound, got {other:?}"),
        }
    }

    #[test]
    fn zero_signal_writes_zeros() {
        let wave = Waveform::new(vec![0.0; 64], 8000);
        let path = tmp("zero.wav");
        let outcome = write_wav(&path, &wave, WavEncoding::Pcm16).unwrap();
        assert_eq!(outcome.clipped_samples, 0);
        let back = read_wav(&path).unwrap();
        assert!(back.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn overdriven_sample_is_clipped_and_counted() {
        let wave = Waveform::new(vec![0.0, 1.5, -2.0], 8000);
        let path = tmp("clip.wav");
        let outcome = write_wav(&path, &wave, WavEncoding::Pcm16).unwrap();
        assert!(outcome.clipped_samples >= 2);
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples[1], 1.0 - PCM16_STEP);
        assert_eq!(back.samples[2], -1.0);
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let wave = Waveform::new(vec![0.0, f64::NAN], 8000);
        match write_wav(tmp("nan.wav"), &wave, WavEncoding::Float32) {
            Err(WavError::InvalidWaveform) => {}
            other => panic!("expected InvalidWaveform, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_is_reported() {
        let path = tmp("garbage.wav");
        std::fs::write(&path, b"RIFFxxxxNOTWAVE").unwrap();
        match read_wav(&path) {
            Err(WavError::MalformedHeader(_)) | Err(WavError::Io(_)) => {}
            other => panic!("expected header error, got {other:?}"),
        }
    }
}
