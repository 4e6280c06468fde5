//! The `cdunet` command line: simulate, train, enhance, eval, gradcheck and
//! beamform subcommands over the library.
//!
//! Exit codes are 0 on success, 1 on runtime or I/O failures and 2 on usage
//! errors. `--config FILE` supplies `key = value` lines that fill in any
//! flag not given on the command line.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::audit::{audit_suite, AUDIT_TOLERANCE};
use crate::beamform::{das_beamform, gsc_beamform, steering_vector, GSC_EPS, GSC_MU};
use crate::model::{
    init_weights, load_weights, save_weights, Cdunet, EnhancementRequest, MaskSource, ModelConfig, ModelVariant,
    DEFAULT_WIDTH_DEG,
};
use crate::room::speech::speech_pool;
use crate::room::{
    pick_utterances, read_dataset, read_manifest, sample_scene, synthesize_example, write_dataset, ArrayGeometry,
    DatasetKind, MixtureExample, DEFAULT_NOISE_DB, MIC_SPACING,
};
use crate::signal::wav::{read_wav, write_mono, WavFormat};
use crate::signal::{istft, stft, StftConfig, Waveform};
use crate::train::{
    eval_sweep, train, width_sweep, AdamConfig, ResultsTable, SweepConfig, SweepKind, TrainConfig, SWEEP_WIDTHS,
};
use crate::{Error, Result, DEFAULT_SAMPLE_RATE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cdunet", version, about = "Directional speech enhancement for two-microphone arrays")]
pub struct Cli {
    /// File of `key = value` defaults; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a dataset of reverberant two-microphone mixtures.
    Simulate(SimulateArgs),
    /// Train a mask network on a simulated dataset.
    Train(TrainArgs),
    /// Extract the talker at one direction from a stereo recording.
    Enhance(EnhanceArgs),
    /// Evaluate trained weights on a sweep of directions or widths.
    Eval(EvalArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Run a classical beamformer on a stereo recording.
    Beamform(BeamformArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: DatasetKind,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of speech WAVs; synthetic speech is used when absent.
    #[arg(long)]
    pub speech: Option<PathBuf>,
    /// Synthetic utterances to draw from.
    #[arg(long, default_value_t = 64)]
    pub pool_size: usize,
    #[arg(long, default_value_t = 2.0)]
    pub clip_seconds: f64,
    /// Worker threads; the output does not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset scored at the end of training (and every `--eval-every` steps).
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_variant, default_value = "cdunet")]
    pub variant: ModelVariant,
    /// Per-step JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WIDTH_DEG, allow_negative_numbers = true)]
    pub width: f64,
    #[arg(long, default_value_t = 1.0)]
    pub crop_seconds: f64,
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Stereo WAV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Target direction in degrees, 90 is broadside.
    #[arg(long, allow_negative_numbers = true)]
    pub angle: f64,
    /// Half-width of the enhanced region in degrees.
    #[arg(long, default_value_t = DEFAULT_WIDTH_DEG, allow_negative_numbers = true)]
    pub width: f64,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Microphone spacing in metres.
    #[arg(long, default_value_t = MIC_SPACING)]
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    Interference,
    Target,
    Width,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "identity")]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sweep: SweepArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Score the unit mask instead of the network.
    #[arg(long)]
    pub identity: bool,
    #[arg(long, default_value_t = 3)]
    pub scenes: usize,
    /// Comma-separated SNR levels in dB.
    #[arg(long, value_delimiter = ',', default_value = "0,5")]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 9_000)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_WIDTH_DEG, allow_negative_numbers = true)]
    pub width: f64,
    /// Comma-separated widths for the width sweep.
    #[arg(long, value_delimiter = ',')]
    pub widths: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub clip_seconds: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Das,
    Gsc,
}

#[derive(Debug, Args)]
pub struct BeamformArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, allow_negative_numbers = true)]
    pub angle: f64,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = MIC_SPACING)]
    pub spacing: f64,
}

fn parse_kind(s: &str) -> std::result::Result<DatasetKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<ModelVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parses a `key = value` config file. Blank lines and `#` comments are
/// skipped; keys may use `-` or `_`.
pub fn parse_config_file(text: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
        let k = k.trim().replace('_', "-");
        if k.is_empty() {
            return Err(format!("config line {}: empty key", n + 1));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Appends config-file entries whose flag is absent from `args`.
pub fn merge_config(args: &[OsString], entries: &[(String, String)]) -> Vec<OsString> {
    let mut merged = args.to_vec();
    for (k, v) in entries {
        let flag = format!("--{k}");
        let present = args.iter().any(|a| {
            let s = a.to_string_lossy();
            s == flag || s.starts_with(&format!("{flag}="))
        });
        if present || k == "config" {
            continue;
        }
        match v.as_str() {
            "true" => merged.push(flag.into()),
            "false" => {}
            _ => {
                merged.push(flag.into());
                merged.push(v.into());
            }
        }
    }
    merged
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let mut args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if let Some(path) = config_path(&args) {
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                return EXIT_RUNTIME;
            }
        };
        match parse_config_file(&text) {
            Ok(entries) => args = merge_config(&args, &entries),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return EXIT_USAGE;
            }
        }
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| EXIT_OK),
        Command::Train(a) => cmd_train(&a).map(|_| EXIT_OK),
        Command::Enhance(a) => cmd_enhance(&a).map(|_| EXIT_OK),
        Command::Eval(a) => cmd_eval(&a).map(|_| EXIT_OK),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Beamform(a) => cmd_beamform(&a).map(|_| EXIT_OK),
    }
}

fn check_angle(name: &str, deg: f64) -> CliResult<()> {
    if !(0.0..=180.0).contains(&deg) {
        return usage(format!("--{name} {deg} is outside [0, 180] degrees"));
    }
    Ok(())
}

fn check_width(deg: f64) -> CliResult<()> {
    if !(deg >= 0.0 && deg.is_finite()) {
        return usage(format!("width {deg} must be a non-negative angle"));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> CliResult<()> {
    if !(v > 0.0 && v.is_finite()) {
        return usage(format!("--{name} must be positive"));
    }
    Ok(())
}

fn require_file(path: &Path) -> CliResult<()> {
    if !path.is_file() {
        return Err(CliError::Runtime(Error::Input(format!("{} does not exist", path.display()))));
    }
    Ok(())
}

fn require_dir(path: &Path) -> CliResult<()> {
    if !path.is_dir() {
        return Err(CliError::Runtime(Error::Input(format!("{} is not a directory", path.display()))));
    }
    Ok(())
}

/// The parent of `path` must exist so the output can be created.
fn require_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(CliError::Runtime(Error::Input(format!(
            "output directory {} does not exist",
            p.display()
        )))),
        _ => Ok(()),
    }
}

/// Cuts every WAV in `dir` (sorted by name, first channel) into clips of
/// `clip_seconds`; shorter tails are dropped.
pub fn load_speech_dir(dir: &Path, clip_seconds: f64) -> Result<Vec<Waveform>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    let clip = (clip_seconds * DEFAULT_SAMPLE_RATE as f64).round() as usize;
    let mut pool = Vec::new();
    for p in paths {
        let audio = read_wav(&p)?;
        if audio.sample_rate() != DEFAULT_SAMPLE_RATE {
            return Err(Error::Input(format!(
                "{} is sampled at {} Hz; expected {DEFAULT_SAMPLE_RATE} Hz",
                p.display(),
                audio.sample_rate()
            )));
        }
        let ch = audio.channel(0);
        let mut start = 0;
        while start + clip <= ch.len() {
            pool.push(ch.segment(start, clip));
            start += clip;
        }
    }
    if pool.len() < 2 {
        return Err(Error::Input(format!(
            "{} yields {} clips of {clip_seconds} s; at least two are needed",
            dir.display(),
            pool.len()
        )));
    }
    Ok(pool)
}

/// `build_dataset` split across `jobs` threads; the result is the same for
/// any thread count.
pub fn build_dataset_parallel(
    kind: DatasetKind,
    count: usize,
    seed: u64,
    pool: &[Waveform],
    jobs: usize,
) -> Result<Vec<MixtureExample>> {
    let one = |i: u64| -> Result<MixtureExample> {
        let scene = sample_scene(kind, seed, i)?;
        let (t, n) = pick_utterances(&scene, pool.len());
        synthesize_example(&scene, &pool[t], &pool[n], Some(DEFAULT_NOISE_DB))
    };
    let jobs = jobs.clamp(1, count.max(1));
    if jobs == 1 {
        return (0..count as u64).map(one).collect();
    }
    let chunk = count.div_ceil(jobs);
    let parts: Vec<Result<Vec<MixtureExample>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let lo = (j * chunk).min(count) as u64;
                let hi = ((j + 1) * chunk).min(count) as u64;
                s.spawn(move || (lo..hi).map(one).collect::<Result<Vec<_>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    check_positive("clip-seconds", a.clip_seconds)?;
    if a.pool_size < 2 {
        return usage("--pool-size must be at least 2");
    }
    if let Some(dir) = &a.speech {
        require_dir(dir)?;
    }
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    let pool = match &a.speech {
        Some(dir) => load_speech_dir(dir, a.clip_seconds)?,
        None => speech_pool(a.seed ^ 0x5eec, a.pool_size, a.clip_seconds, DEFAULT_SAMPLE_RATE),
    };
    let t0 = Instant::now();
    let examples = build_dataset_parallel(a.kind, a.count, a.seed, &pool, a.jobs)?;
    write_dataset(&a.out, a.kind, &examples)?;
    info!("{} {} scenes in {:.1} s", a.count, a.kind, t0.elapsed().as_secs_f64());
    println!("wrote {} examples to {}", a.count, a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    check_width(a.width)?;
    check_positive("lr", a.lr)?;
    check_positive("crop-seconds", a.crop_seconds)?;
    if a.batch_size == 0 {
        return usage("--batch-size must be positive");
    }
    require_dir(&a.data)?;
    if let Some(h) = &a.heldout {
        require_dir(h)?;
    }
    require_parent(&a.out)?;
    if let Some(l) = &a.log {
        require_parent(l)?;
    }
    let manifest = read_manifest(&a.data)?;
    let kind = manifest.first().map(|e| e.kind).unwrap_or(DatasetKind::Fixed);
    let cfg = TrainConfig {
        steps: a.steps,
        batch_size: a.batch_size,
        adam: AdamConfig {
            learning_rate: a.lr,
            clip_norm: a.clip_norm,
            ..AdamConfig::default()
        },
        seed: a.seed,
        dataset_kind: kind,
        model: ModelConfig::for_variant(a.variant),
        crop_seconds: a.crop_seconds,
        width_deg: a.width,
        eval_every: a.eval_every,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    if a.steps == 0 {
        save_weights(&init_weights(&cfg.model, cfg.seed)?, &a.out)?;
        println!("wrote initial weights to {}", a.out.display());
        return Ok(());
    }
    let examples = read_dataset(&a.data)?;
    let heldout = match &a.heldout {
        Some(h) => read_dataset(h)?,
        None => Vec::new(),
    };
    let mut sink = match &a.log {
        Some(p) => Some(BufWriter::new(fs::File::create(p).map_err(Error::from)?)),
        None => None,
    };
    let t0 = Instant::now();
    let outcome = train(
        &cfg,
        &examples,
        &heldout,
        sink.as_mut().map(|w| w as &mut dyn Write),
    )?;
    if let Some(mut w) = sink {
        w.flush().map_err(Error::from)?;
    }
    save_weights(&outcome.weights, &a.out)?;
    println!(
        "trained {} for {} steps in {:.1} s ({} skipped)",
        a.variant,
        a.steps,
        t0.elapsed().as_secs_f64(),
        outcome.skipped_steps
    );
    if let Some(v) = outcome.heldout_si_snri {
        println!("held-out SI-SNRi: {v:.3} dB");
    }
    Ok(())
}

fn cmd_enhance(a: &EnhanceArgs) -> CliResult<()> {
    check_angle("angle", a.angle)?;
    check_width(a.width)?;
    check_positive("spacing", a.spacing)?;
    require_file(&a.input)?;
    require_file(&a.weights)?;
    require_parent(&a.out)?;
    let net = Cdunet::from_weights(load_weights(&a.weights)?)?;
    let mixture = read_wav(&a.input)?;
    if mixture.num_channels() != 2 {
        return Err(CliError::Runtime(Error::Input(format!(
            "{} has {} channel(s); enhancement needs a 2-channel recording",
            a.input.display(),
            mixture.num_channels()
        ))));
    }
    let duration = mixture.len() as f64 / mixture.sample_rate() as f64;
    let mut req = EnhancementRequest::new(mixture, a.angle, a.width)?;
    req.mic_spacing = a.spacing;
    let t0 = Instant::now();
    let out = net.enhance(&req)?;
    let rtf = t0.elapsed().as_secs_f64() / duration.max(f64::MIN_POSITIVE);
    write_mono(&a.out, &out, WavFormat::Float32)?;
    println!("real-time factor: {rtf:.3}");
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    check_width(a.width)?;
    for &w in &a.widths {
        check_width(w)?;
    }
    check_positive("clip-seconds", a.clip_seconds)?;
    if a.scenes == 0 {
        return usage("--scenes must be positive");
    }
    if a.snr.is_empty() {
        return usage("--snr needs at least one level");
    }
    if a.identity && a.sweep == SweepArg::Width {
        return usage("--identity does not apply to the width sweep");
    }
    if let Some(w) = &a.weights {
        require_file(w)?;
    }
    require_parent(&a.out)?;
    let net = match &a.weights {
        Some(w) => Cdunet::from_weights(load_weights(w)?)?,
        None => Cdunet::new(ModelConfig::default(), init_weights(&ModelConfig::default(), 0)?)?,
    };
    let cfg = SweepConfig {
        seed: a.seed,
        scenes_per_cell: a.scenes,
        snr_levels: a.snr.clone(),
        width_deg: a.width,
        clip_seconds: a.clip_seconds,
        pool_seed: a.seed.wrapping_add(1),
        ..SweepConfig::default()
    };
    let source = if a.identity { MaskSource::Constant(1.0) } else { MaskSource::Network };
    let table: ResultsTable = match a.sweep {
        SweepArg::Interference => eval_sweep(&net, source, SweepKind::Interference, &cfg)?,
        SweepArg::Target => eval_sweep(&net, source, SweepKind::Target, &cfg)?,
        SweepArg::Width => {
            let widths = if a.widths.is_empty() { SWEEP_WIDTHS.to_vec() } else { a.widths.clone() };
            width_sweep(&net, &widths, &cfg)?
        }
    };
    table.write_csv(&a.out)?;
    println!("mean SI-SNRi: {:.3} dB", table.mean());
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<i32> {
    let reports = audit_suite(a.seed)?;
    let mut failed = 0;
    for r in &reports {
        let ok = r.passes(AUDIT_TOLERANCE);
        failed += usize::from(!ok);
        println!("{:<20} {:.3e} {}", r.name, r.max_rel_error, if ok { "ok" } else { "FAIL" });
    }
    println!("{} checks, {failed} failed (tolerance {AUDIT_TOLERANCE:e})", reports.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_RUNTIME })
}

fn cmd_beamform(a: &BeamformArgs) -> CliResult<()> {
    check_angle("angle", a.angle)?;
    check_positive("spacing", a.spacing)?;
    require_file(&a.input)?;
    require_parent(&a.out)?;
    let audio = read_wav(&a.input)?;
    audio.require_stereo()?;
    let cfg = StftConfig::hann(512, 256)?;
    let x1 = stft(audio.channel(0), &cfg)?;
    let x2 = stft(audio.channel(1), &cfg)?;
    let geometry = ArrayGeometry::new([0.0, 0.0, 0.0], a.spacing, 0.0)?;
    let sv = steering_vector(a.angle, &geometry, &cfg, audio.sample_rate())?;
    let y = match a.method {
        Method::Das => das_beamform([&x1, &x2], &sv)?,
        Method::Gsc => gsc_beamform([&x1, &x2], &sv, GSC_MU, GSC_EPS)?,
    };
    write_mono(&a.out, &istft(&y)?, WavFormat::Float32)?;
    Ok(())
}
