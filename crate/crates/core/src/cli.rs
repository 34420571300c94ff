//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 usage error. Every failure prints one `error[Code]: message` line.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audio_io::{encode_wav, read_wav, Encoding, Waveform};
use crate::blend::{blend, search_weights, BlendWeights};
use crate::bsseval::{sdr_frames, EvalConfig};
use crate::error::Error;
use crate::fsutil::write_atomic;
use crate::pipeline::{read_dsmag, PipelineConfig};
use crate::source::{MagnitudeSet, Source, SourceWaveformSet};
use crate::stft::{istft, magnitude, stft, StftConfig};
use crate::wiener::{mwf, MwfConfig};

#[derive(Debug, Parser)]
#[command(
    name = "stemfuse",
    version,
    about = "Fuse, filter and score music source separation stems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline on a mixture and write the fused stems.
    Separate(SeparateArgs),
    /// Score estimated stems against references with framewise median SDR.
    Eval(EvalArgs),
    /// Blend several models' stems with per-source weights.
    Blend(BlendArgs),
    /// Grid-search per-source blend weights against references.
    SearchWeights(SearchArgs),
    /// Turn per-source magnitude estimates into stems with the Wiener filter.
    Wiener(WienerArgs),
}

#[derive(Debug, Args)]
pub struct OutputFormat {
    /// Write 16-bit PCM instead of 32-bit float WAV.
    #[arg(long)]
    pub pcm16: bool,
}

impl OutputFormat {
    fn encoding(&self) -> Encoding {
        if self.pcm16 {
            Encoding::Pcm16
        } else {
            Encoding::Float32
        }
    }
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Mixture WAV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Pipeline configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving drums.wav, bass.wav, other.wav and vocals.wav.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct EvalOptions {
    /// Distortion filter length in taps.
    #[arg(long, default_value_t = 512)]
    pub filter_len: usize,
    /// Evaluation window in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub win: f64,
    /// Evaluation hop in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub hop: f64,
}

impl EvalOptions {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            filter_len: self.filter_len,
            win: self.win,
            hop: self.hop,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of estimated stems.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Directory of reference stems.
    #[arg(long)]
    pub references: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV summary (Drums,Bass,Other,Vocals,Avg).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalOptions,
}

#[derive(Debug, Args)]
pub struct BlendArgs {
    /// Stem directory of one model; repeat in weight-row order.
    #[arg(long = "stems", required = true)]
    pub stems: Vec<PathBuf>,
    /// Weights JSON; the shipped fusion weights when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Output directory for the blended stems.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Stem directory of one model; repeat once per model.
    #[arg(long = "stems", required = true)]
    pub stems: Vec<PathBuf>,
    /// Model names, comma separated; defaults to the directory names.
    #[arg(long, value_delimiter = ',')]
    pub names: Option<Vec<String>>,
    /// Directory of reference stems.
    #[arg(long)]
    pub references: PathBuf,
    /// Weights JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Grid spacing; must divide 1.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[command(flatten)]
    pub eval: EvalOptions,
}

#[derive(Debug, Args)]
pub struct WienerArgs {
    /// Mixture WAV file.
    #[arg(long)]
    pub mix: PathBuf,
    /// Directory with <source>.dsmag magnitudes or <source>.wav rough stems;
    /// every source present is filtered.
    #[arg(long)]
    pub mags: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// EM iterations after the soft-mask start.
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    /// Regularizer, relative to the mean mixture power.
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,
    /// Exponent of the initial soft mask.
    #[arg(long, default_value_t = 2.0)]
    pub mask_power: f64,
    /// STFT size.
    #[arg(long, default_value_t = 4096)]
    pub fft_size: usize,
    /// STFT hop.
    #[arg(long, default_value_t = 1024)]
    pub hop: usize,
    #[command(flatten)]
    pub format: OutputFormat,
}

/// Failure of a CLI invocation.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Runtime(e) => e.code(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Runtime(e) => e.to_string(),
        };
        // keep the diagnostic on one line
        write!(f, "error[{}]: {}", self.code(), msg.replace('\n', " "))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> CliResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(cli)
}

/// Entry point for the binary: prints help, version and diagnostics and
/// returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "{}",
                CliError::Usage(first.trim_start_matches("error: ").to_string())
            );
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult {
    match cli.command {
        Command::Separate(a) => cmd_separate(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Blend(a) => cmd_blend(&a),
        Command::SearchWeights(a) => cmd_search_weights(&a),
        Command::Wiener(a) => cmd_wiener(&a),
    }
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, what: &str) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn stem_path(dir: &Path, source: Source, ext: &str) -> PathBuf {
    dir.join(format!("{}.{ext}", source.name()))
}

/// Loads `<source>.wav` for each source; the stems must agree in shape.
fn read_stems(dir: &Path, sources: &[Source]) -> CliResult<SourceWaveformSet> {
    let stems = sources
        .iter()
        .map(|&s| {
            let path = stem_path(dir, s, "wav");
            if !path.is_file() {
                return Err(Error::MissingStem {
                    dir: dir.to_path_buf(),
                    stem: format!("{}.wav", s.name()),
                });
            }
            read_wav(path)
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(SourceWaveformSet::new(stems)?)
}

fn write_stems(
    dir: &Path,
    sources: &[Source],
    stems: &SourceWaveformSet,
    encoding: Encoding,
) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (s, w) in sources.iter().zip(stems) {
        write_atomic(&stem_path(dir, *s, "wav"), &encode_wav(w, encoding))?;
    }
    Ok(())
}

pub fn cmd_separate(a: &SeparateArgs) -> CliResult {
    require_file(&a.input, "input file")?;
    require_file(&a.config, "config file")?;
    let mix = read_wav(&a.input)?;
    let cfg = PipelineConfig::load(&a.config)?;
    let fused = crate::pipeline::run(&mix, &cfg)?;
    write_stems(&a.out, cfg.sources(), &fused, a.format.encoding())
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult {
    require_dir(&a.estimates, "estimates directory")?;
    require_dir(&a.references, "references directory")?;
    let refs = read_stems(&a.references, &Source::ALL)?;
    let ests = read_stems(&a.estimates, &Source::ALL)?;
    let report = sdr_frames(&refs, &ests, &a.eval.config())?;
    report.save(&a.out)?;
    if let Some(csv) = &a.csv {
        write_atomic(csv, report.summary().to_csv().as_bytes())?;
    }
    Ok(())
}

fn load_weights(path: Option<&Path>) -> CliResult<BlendWeights> {
    match path {
        Some(p) => {
            require_file(p, "weights file")?;
            Ok(BlendWeights::load(p)?)
        }
        None => Ok(BlendWeights::default_fusion()),
    }
}

pub fn cmd_blend(a: &BlendArgs) -> CliResult {
    for d in &a.stems {
        require_dir(d, "stems directory")?;
    }
    let weights = load_weights(a.weights.as_deref())?;
    let per_model = a
        .stems
        .iter()
        .map(|d| read_stems(d, weights.sources()))
        .collect::<CliResult<Vec<_>>>()?;
    let fused = blend(&per_model, &weights)?;
    write_stems(&a.out, weights.sources(), &fused, a.format.encoding())
}

pub fn cmd_search_weights(a: &SearchArgs) -> CliResult {
    for d in &a.stems {
        require_dir(d, "stems directory")?;
    }
    require_dir(&a.references, "references directory")?;
    let names = match &a.names {
        Some(n) => n.clone(),
        None => a
            .stems
            .iter()
            .map(|d| {
                d.file_name().map_or_else(
                    || d.display().to_string(),
                    |n| n.to_string_lossy().into_owned(),
                )
            })
            .collect(),
    };
    let refs = read_stems(&a.references, &Source::ALL)?;
    let per_model = a
        .stems
        .iter()
        .map(|d| read_stems(d, &Source::ALL))
        .collect::<CliResult<Vec<_>>>()?;
    let cfg = a.eval.config();
    cfg.validate()?;
    let weights = search_weights(&per_model, &names, &refs, a.step, &cfg)?;
    weights.save(&a.out)?;
    Ok(())
}

pub fn cmd_wiener(a: &WienerArgs) -> CliResult {
    require_file(&a.mix, "mixture file")?;
    require_dir(&a.mags, "magnitudes directory")?;
    let mix = read_wav(&a.mix)?;
    let stft_cfg = StftConfig::new(a.fft_size, a.hop)?;
    let mwf_cfg = MwfConfig {
        iterations: a.iterations,
        eps: a.eps,
        mask_power: a.mask_power,
    };
    let spec = stft(&mix, &stft_cfg)?;
    let mut sources = Vec::new();
    let mut mags = Vec::new();
    for s in Source::ALL {
        let dsmag = stem_path(&a.mags, s, "dsmag");
        let wav = stem_path(&a.mags, s, "wav");
        if dsmag.is_file() {
            mags.push(read_dsmag(dsmag)?);
        } else if wav.is_file() {
            let w: Waveform = read_wav(wav)?;
            mix.check_compatible(&w)?;
            mags.push(magnitude(&stft(&w, &stft_cfg)?));
        } else {
            continue;
        }
        sources.push(s);
    }
    if sources.is_empty() {
        return Err(Error::MissingStem {
            dir: a.mags.clone(),
            stem: "any of drums/bass/other/vocals (.dsmag or .wav)".into(),
        }
        .into());
    }
    let mags = MagnitudeSet::new(mags)?;
    let filtered = mwf(&mags, &spec, &mwf_cfg.relative_to(&spec))?;
    let stems = SourceWaveformSet::new(
        filtered
            .iter()
            .map(|s| istft(s, &stft_cfg, mix.len()))
            .collect::<crate::Result<Vec<_>>>()?,
    )?;
    write_stems(&a.out, &sources, &stems, a.format.encoding())
}
