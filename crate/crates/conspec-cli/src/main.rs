//! Command-line front end for batch experiments.
//!
//! Every subcommand writes a manifest JSON next to its primary output with
//! the resolved parameters, so a run can be reproduced exactly; outputs are
//! deterministic for a given manifest on one platform. Exit codes: 0 on
//! success, 2 for usage or file problems, 3 for numerical failures
//! (non-reconstructing window pairings, diverging fits).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use conspec::consistency::{griffin_lim, inconsistency, GriffinLimTrace, PhaseInit};
use conspec::masking::{apply_magnitude_mask, apply_mask, oracle_irm, oracle_ratio_masks};
use conspec::metrics::EvalReport;
use conspec::mixer::{mix_at_snr, mix_at_snr_seeded};
use conspec::optim::{fit_masks, ConvergenceTrace, FitOptions, MaskInit, Objective, OptimError};
use conspec::stft::{istft_to_len, stft, Spectrogram, StftConfig, StftError, WindowKind};
use conspec::wav::{read_wav, write_wav, WavEncoding, Waveform};

#[derive(Parser)]
#[command(name = "conspec", version, about = "Consistent-spectrogram masking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mix a clean recording with noise at an exact SNR.
    Mix(MixArgs),
    /// Apply an oracle mask computed from a clean/noisy pair.
    EnhanceOracle(EnhanceArgs),
    /// Fit masks by gradient descent and export the convergence trace.
    Fit(FitArgs),
    /// Report spectrogram inconsistency for a recording or a masked estimate.
    Analyze(AnalyzeArgs),
    /// Reconstruct a signal from its magnitude spectrogram.
    GriffinLim(GriffinLimArgs),
}

#[derive(Args)]
struct TransformArgs {
    /// Frame length in samples.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Hop length in samples.
    #[arg(long, default_value_t = 512)]
    hop: usize,
    /// Analysis window.
    #[arg(long, value_enum, default_value_t = WindowArg::Hann)]
    window: WindowArg,
}

impl TransformArgs {
    fn config(&self) -> Result<StftConfig> {
        Ok(StftConfig::new(self.n, self.hop, self.window.kind())?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Hann,
    Rect,
}

impl WindowArg {
    fn kind(self) -> WindowKind {
        match self {
            WindowArg::Hann => WindowKind::HannPeriodic,
            WindowArg::Rect => WindowKind::Rectangular,
        }
    }

    fn name(self) -> &'static str {
        match self {
            WindowArg::Hann => "hann_periodic",
            WindowArg::Rect => "rectangular",
        }
    }
}

#[derive(Args)]
struct MixArgs {
    /// Clean input WAV.
    #[arg(long)]
    clean: PathBuf,
    /// Noise WAV; at least as long as the clean input.
    #[arg(long, conflicts_with = "noise_seed", required_unless_present = "noise_seed")]
    noise: Option<PathBuf>,
    /// Generate white noise with this seed instead of reading a file.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Target SNR in dB.
    #[arg(long, allow_negative_numbers = true)]
    snr: f64,
    /// Output WAV for the noisy mixture.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskArg {
    /// Component-wise real/imaginary ratio mask.
    Csm,
    /// Alias of csm.
    Crm,
    /// Magnitude ratio mask applied with the noisy phase.
    Irm,
}

impl MaskArg {
    fn name(self) -> &'static str {
        match self {
            MaskArg::Csm => "csm",
            MaskArg::Crm => "crm",
            MaskArg::Irm => "irm",
        }
    }
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    clean: PathBuf,
    #[arg(long, value_enum)]
    mask: MaskArg,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
    /// Denominator guard for ratio masks.
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    /// Clip bound for ratio masks.
    #[arg(long, default_value_t = 10.0)]
    clip: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Spectrogram-domain objective.
    Spec,
    /// Time-domain (consistent) objective.
    Time,
}

impl ModeArg {
    fn objective(self) -> Objective {
        match self {
            ModeArg::Spec => Objective::spectrogram(),
            ModeArg::Time => Objective::time_domain(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ModeArg::Spec => "spec",
            ModeArg::Time => "time",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Ones,
    Zeros,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    clean: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Frames sharing one mask value.
    #[arg(long, default_value_t = 1)]
    block: usize,
    /// Convergence trace CSV.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
    /// Gradient step size.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Relative-decrease stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Ones)]
    init: InitArg,
    /// Mask clip bound.
    #[arg(long, default_value_t = 10.0)]
    clip: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input WAV to analyze.
    #[arg(long = "in")]
    input: PathBuf,
    /// Also report the inconsistency of this oracle-masked estimate.
    #[arg(long, value_enum, requires = "clean")]
    mask: Option<MaskArg>,
    /// Clean reference, required with --mask.
    #[arg(long)]
    clean: Option<PathBuf>,
    #[command(flatten)]
    transform: TransformArgs,
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    #[arg(long, default_value_t = 10.0)]
    clip: f64,
}

#[derive(Args)]
struct GriffinLimArgs {
    /// Input WAV whose magnitude spectrogram is inverted.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
    /// Phase initialization: zeros or random.
    #[arg(long, value_enum, default_value_t = GlInitArg::Zeros)]
    init: GlInitArg,
    /// Seed for random phase initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GlInitArg {
    Zeros,
    Random,
}

/// Everything needed to reproduce a run, serialized next to each output.
#[derive(Serialize)]
struct Manifest {
    subcommand: &'static str,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hop: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    block: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clip_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<&'static str>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    fn new(subcommand: &'static str) -> Self {
        Manifest {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            n: None,
            hop: None,
            window: None,
            snr_db: None,
            seed: None,
            mask: None,
            mode: None,
            beta: None,
            eta: None,
            iters: None,
            block: None,
            clip_bound: None,
            eps: None,
            init: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn with_transform(mut self, t: &TransformArgs) -> Self {
        self.n = Some(t.n);
        self.hop = Some(t.hop);
        self.window = Some(t.window.name());
        self
    }
}

fn sibling(out: &Path, what: &str) -> PathBuf {
    out.with_extension(what)
}

fn write_manifest(out: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = sibling(out, "manifest.json");
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_report(out: &Path, report: &EvalReport) -> Result<PathBuf> {
    let path = sibling(out, "report.json");
    std::fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_fit_trace(path: &Path, trace: &ConvergenceTrace) -> Result<()> {
    let mut text = String::from("iter,loss,time_domain_error,inconsistency\n");
    for p in &trace.points {
        text.push_str(&format!(
            "{},{},{},{}\n",
            p.iter, p.loss, p.time_domain_error, p.inconsistency
        ));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_gl_trace(path: &Path, trace: &GriffinLimTrace) -> Result<()> {
    let mut text = String::from("iter,magnitude_error,inconsistency\n");
    for s in &trace.steps {
        text.push_str(&format!("{},{},{}\n", s.iter, s.magnitude_error, s.inconsistency));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Clean/noisy pair analyzed with one config.
struct PairSpectra {
    clean: Waveform,
    noisy: Waveform,
    clean_spec: Spectrogram,
    noisy_spec: Spectrogram,
}

fn load_pair(clean: &Path, noisy: &Path, config: &StftConfig) -> Result<PairSpectra> {
    let clean = read_wav(clean)?;
    let noisy = read_wav(noisy)?;
    if clean.sample_rate != noisy.sample_rate {
        bail!(
            "sample rates differ: {} Hz (clean) vs {} Hz (noisy)",
            clean.sample_rate,
            noisy.sample_rate
        );
    }
    if clean.len() != noisy.len() {
        bail!(
            "lengths differ: {} samples (clean) vs {} (noisy)",
            clean.len(),
            noisy.len()
        );
    }
    let clean_spec = stft(&clean, config)?;
    let noisy_spec = stft(&noisy, config)?;
    Ok(PairSpectra { clean, noisy, clean_spec, noisy_spec })
}

/// Oracle-masked estimate for the chosen mask family.
fn oracle_estimate(pair: &PairSpectra, mask: MaskArg, eps: f64, clip: f64) -> Result<Spectrogram> {
    Ok(match mask {
        MaskArg::Csm | MaskArg::Crm => {
            let oracle = oracle_ratio_masks(&pair.clean_spec, &pair.noisy_spec, eps, clip)?;
            apply_mask(&pair.noisy_spec, &oracle.masks)?
        }
        MaskArg::Irm => {
            let noise = Waveform::new(
                pair.noisy
                    .samples
                    .iter()
                    .zip(&pair.clean.samples)
                    .map(|(n, c)| n - c)
                    .collect(),
                pair.noisy.sample_rate,
            );
            let noise_spec = stft(&noise, &pair.noisy_spec.config)?;
            let mask = oracle_irm(&pair.clean_spec, &noise_spec)?;
            apply_magnitude_mask(&pair.noisy_spec, &mask)?
        }
    })
}

fn run_mix(args: MixArgs) -> Result<()> {
    let clean = read_wav(&args.clean)?;
    let mixture = match (&args.noise, args.noise_seed) {
        (Some(path), _) => {
            let noise = read_wav(path)?;
            mix_at_snr(&clean, &noise, args.snr)?
        }
        (None, Some(seed)) => mix_at_snr_seeded(&clean, seed, args.snr)?,
        (None, None) => unreachable!("clap enforces one noise source"),
    };
    write_wav(&args.out, &mixture.noisy, WavEncoding::Float32)?;

    let mut manifest = Manifest::new("mix");
    manifest.snr_db = Some(args.snr);
    manifest.seed = mixture.seed;
    manifest.inputs.push(args.clean.clone());
    if let Some(noise) = &args.noise {
        manifest.inputs.push(noise.clone());
    }
    manifest.outputs.push(args.out.clone());
    write_manifest(&args.out, &manifest)?;

    println!("achieved snr: {:.6} dB", mixture.achieved_snr_db);
    Ok(())
}

fn run_enhance(args: EnhanceArgs) -> Result<()> {
    let config = args.transform.config()?;
    let pair = load_pair(&args.clean, &args.noisy, &config)?;
    let estimate = oracle_estimate(&pair, args.mask, args.eps, args.clip)?;
    let enhanced = istft_to_len(&estimate, pair.clean.len())?;
    write_wav(&args.out, &enhanced, WavEncoding::Float32)?;

    let report = EvalReport::compute(&pair.clean, &enhanced, &estimate, &pair.clean_spec)?;
    write_report(&args.out, &report)?;

    let mut manifest = Manifest::new("enhance-oracle").with_transform(&args.transform);
    manifest.mask = Some(args.mask.name());
    manifest.eps = Some(args.eps);
    manifest.clip_bound = Some(args.clip);
    manifest.inputs = vec![args.noisy.clone(), args.clean.clone()];
    manifest.outputs = vec![args.out.clone(), sibling(&args.out, "report.json")];
    write_manifest(&args.out, &manifest)?;

    println!("enhanced snr: {:.3} dB ({})", report.snr_db, args.mask.name());
    Ok(())
}

fn run_fit(args: FitArgs) -> Result<()> {
    let config = args.transform.config()?;
    let pair = load_pair(&args.clean, &args.noisy, &config)?;
    let opts = FitOptions {
        step_size: args.eta,
        max_iters: args.iters,
        tol: args.tol,
        block_size: args.block,
        init: match args.init {
            InitArg::Ones => MaskInit::Ones,
            InitArg::Zeros => MaskInit::Zeros,
        },
        clip_bound: args.clip,
    };
    let objective = args.mode.objective();
    let (masks, trace) = fit_masks(&pair.noisy_spec, &pair.clean, objective, &opts)?;

    let estimate = apply_mask(&pair.noisy_spec, &masks)?;
    let enhanced = istft_to_len(&estimate, pair.clean.len())?;
    write_wav(&args.out, &enhanced, WavEncoding::Float32)?;
    write_fit_trace(&args.trace, &trace)?;
    let report = EvalReport::compute(&pair.clean, &enhanced, &estimate, &pair.clean_spec)?;
    write_report(&args.out, &report)?;

    let mut manifest = Manifest::new("fit").with_transform(&args.transform);
    manifest.mode = Some(args.mode.name());
    manifest.beta = Some(objective.beta);
    manifest.eta = Some(args.eta);
    manifest.iters = Some(args.iters);
    manifest.block = Some(args.block);
    manifest.clip_bound = Some(args.clip);
    manifest.init = Some(match args.init {
        InitArg::Ones => "ones",
        InitArg::Zeros => "zeros",
    });
    manifest.inputs = vec![args.noisy.clone(), args.clean.clone()];
    manifest.outputs = vec![
        args.out.clone(),
        args.trace.clone(),
        sibling(&args.out, "report.json"),
    ];
    write_manifest(&args.out, &manifest)?;

    let last = trace.final_point();
    println!(
        "fit {}: {} iterations, loss {:.6e}, snr {:.3} dB",
        args.mode.name(),
        last.iter,
        last.loss,
        report.snr_db
    );
    Ok(())
}

#[derive(Serialize)]
struct AnalysisOutput {
    manifest: Manifest,
    inconsistency_input: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    inconsistency_masked: Option<f64>,
}

fn run_analyze(args: AnalyzeArgs) -> Result<()> {
    let config = args.transform.config()?;
    let input = read_wav(&args.input)?;
    let spec = stft(&input, &config)?;
    let own = inconsistency(&spec);

    let masked = match (args.mask, &args.clean) {
        (Some(mask), Some(clean)) => {
            let pair = load_pair(clean, &args.input, &config)?;
            let estimate = oracle_estimate(&pair, mask, args.eps, args.clip)?;
            Some(inconsistency(&estimate))
        }
        _ => None,
    };

    let mut manifest = Manifest::new("analyze").with_transform(&args.transform);
    manifest.mask = args.mask.map(MaskArg::name);
    if args.mask.is_some() {
        manifest.eps = Some(args.eps);
        manifest.clip_bound = Some(args.clip);
    }
    manifest.inputs = vec![args.input.clone()];
    if let Some(clean) = &args.clean {
        manifest.inputs.push(clean.clone());
    }

    let output = AnalysisOutput {
        manifest,
        inconsistency_input: own,
        inconsistency_masked: masked,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

fn run_griffin_lim(args: GriffinLimArgs) -> Result<()> {
    let config = args.transform.config()?;
    let input = read_wav(&args.input)?;
    let spec = stft(&input, &config)?;
    let magnitude = spec.data.mapv(Complex64::norm);
    let init = match args.init {
        GlInitArg::Zeros => PhaseInit::Zeros,
        GlInitArg::Random => PhaseInit::Random { seed: args.seed },
    };
    let (full, trace) = griffin_lim(&magnitude, &config, input.sample_rate, args.iters, init)?;
    // The reconstruction covers the full frame support; trim to the input.
    let out_wave = Waveform::new(full.samples[..input.len()].to_vec(), full.sample_rate);
    write_wav(&args.out, &out_wave, WavEncoding::Float32)?;
    write_gl_trace(&args.trace, &trace)?;

    let mut manifest = Manifest::new("griffin-lim").with_transform(&args.transform);
    manifest.iters = Some(args.iters);
    manifest.init = Some(match args.init {
        GlInitArg::Zeros => "zeros",
        GlInitArg::Random => "random",
    });
    if matches!(args.init, GlInitArg::Random) {
        manifest.seed = Some(args.seed);
    }
    manifest.inputs = vec![args.input.clone()];
    manifest.outputs = vec![args.out.clone(), args.trace.clone()];
    write_manifest(&args.out, &manifest)?;

    let last = trace.steps.last().expect("trace is never empty");
    println!("griffin-lim: {} iterations, magnitude error {:.6e}", args.iters, last.magnitude_error);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mix(args) => run_mix(args),
        Command::EnhanceOracle(args) => run_enhance(args),
        Command::Fit(args) => run_fit(args),
        Command::Analyze(args) => run_analyze(args),
        Command::GriffinLim(args) => run_griffin_lim(args),
    }
}

/// 3 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(stft_err) = cause.downcast_ref::<StftError>() {
            if matches!(stft_err, StftError::ColaViolation(_)) {
                return 3;
            }
        }
        if let Some(optim_err) = cause.downcast_ref::<OptimError>() {
            if matches!(optim_err, OptimError::Divergence { .. }) {
                return 3;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
