//! Command-line driver wiring configs, datasets, and the simulation modules
//! into reproducible experiments with machine-readable outputs.
//!
//! Every run writes a `manifest.json` echoing the fully resolved parameters,
//! seed, and tool version; `replay <manifest>` re-executes it and reproduces
//! the CSV artifacts byte for byte. `FASTONN_THREADS` caps internal
//! parallelism (0 or unset = automatic).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{energy_per_op, throughput, EnergyParams};
use crate::calibration::{
    build_lut, default_weight_grid, flat_field, measure_response, write_lut_csv, SlmDeviceModel,
};
use crate::cnn::{self, CnnModel, TrainConfig};
use crate::data::{edge_detect, load_idx, read_pgm, write_pgm, ImageSet};
use crate::error::{Error, Result};
use crate::fmt::float17;
use crate::hardware::{
    encode_input, optical_mvm, write_readout_csv, Backend, DetectorReadout, HardwareConfig,
    OpticalBackend, WeightPlane, OUTPUT_FULL_SCALE,
};
use crate::noise::{dbc_to_linear, snr_breakdown, NoiseParams};
use crate::rng;

#[derive(Parser)]
#[command(name = "fastonn", version, about = "Free-space optical MVM simulator and CNN harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random signed MVM accuracy benchmark with error statistics.
    MvmBench(MvmBenchArgs),
    /// Laplacian edge detection through the optical datapath.
    EdgeDetect(EdgeDetectArgs),
    /// Train the CNN (digital or optical-in-the-loop forward).
    Train(TrainArgs),
    /// Evaluate a saved model on a labeled IDX dataset.
    Infer(InferArgs),
    /// Accuracy versus injected activation-noise level.
    NoiseSweep(NoiseSweepArgs),
    /// SNR and effective bits over a log-spaced optical power grid.
    SnrCurve(SnrCurveArgs),
    /// Per-component energy-per-operation table.
    EnergyReport(EnergyReportArgs),
    /// Build a weight lookup table against the simulated SLM.
    Calibrate(CalibrateArgs),
    /// Re-execute a run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML file providing this command's parameters (flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for all random sub-streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (must exist).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Execution backend selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Digital,
    OpticalSim,
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fastonn: {e}");
            1
        }
    }
}

fn configure_threads() {
    if let Ok(text) = std::env::var("FASTONN_THREADS") {
        if let Ok(n) = text.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::MvmBench(args) => {
            let (common, params) = args.resolve()?;
            let ctx = RunContext::new(&common, "mvm-bench")?;
            run_mvm_bench(&ctx, &params)
        }
        Command::EdgeDetect(args) => {
            let (common, params) = args.resolve()?;
            let ctx = RunContext::new(&common, "edge-detect")?;
            run_edge_detect(&ctx, &params)
        }
        Command::Train(args) => {
            let (common, params) = args.resolve()?;
            let ctx = RunContext::new(&common, "train")?;
            run_train(&ctx, &params)
        }
        Command::Infer(args) => {
            let (common, params) = args.resolve()?;
            let ctx = RunContext::new(&common, "infer")?;
            run_infer(&ctx, &params)
        }
        Command::NoiseSweep(args) => {
            let (common, params) = args.resolve()?;
            let ctx = RunContext::new(&common, "noise-sweep")?;
            run_noise_sweep(&ctx, &params)
        }
        Command::SnrCurve(args) => {
            let (common, params) = args.resolve()?;
            let ctx = RunContext::new(&common, "snr-curve")?;
            run_snr_curve(&ctx, &params)
        }
        Command::EnergyReport(args) => {
            let (common, params) = args.resolve()?;
            let ctx = RunContext::new(&common, "energy-report")?;
            run_energy_report(&ctx, &params)
        }
        Command::Calibrate(args) => {
            let (common, params) = args.resolve()?;
            let ctx = RunContext::new(&common, "calibrate")?;
            run_calibrate(&ctx, &params)
        }
        Command::Replay(args) => run_replay(&args),
    }
}

/// Resolved run environment: seed, output directory, command name.
struct RunContext {
    command: &'static str,
    seed: u64,
    out: PathBuf,
}

impl RunContext {
    fn new(common: &CommonArgs, command: &'static str) -> Result<Self> {
        let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
        if !out.is_dir() {
            return Err(Error::Config(format!(
                "output directory {} does not exist",
                out.display()
            )));
        }
        Ok(Self {
            command,
            seed: common.seed.unwrap_or(0),
            out,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tool_version: String,
    command: String,
    seed: u64,
    params: serde_json::Value,
    outputs: Vec<String>,
}

/// Write the manifest echoing the fully resolved config; sufficient to
/// replay the run exactly.
fn emit_manifest<P: Serialize>(ctx: &RunContext, params: &P, outputs: &[&str]) -> Result<()> {
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: ctx.command.to_string(),
        seed: ctx.seed,
        params: serde_json::to_value(params)
            .map_err(|e| Error::Internal(format!("manifest params: {e}")))?,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Internal(format!("manifest: {e}")))?;
    std::fs::write(ctx.path("manifest.json"), text + "\n")?;
    Ok(())
}

fn load_params<T: Default + for<'de> Deserialize<'de>>(config: &Option<PathBuf>) -> Result<T> {
    match config {
        None => Ok(T::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }
}

fn optical_noise(cfg: &HardwareConfig, error_std_pct: f64) -> NoiseParams {
    NoiseParams::tuned_for_output_std(cfg, error_std_pct / 100.0 * OUTPUT_FULL_SCALE)
}

fn cnn_backend(kind: BackendKind, noiseless: bool, error_std_pct: f64) -> Backend {
    match kind {
        BackendKind::Digital => Backend::Digital,
        BackendKind::OpticalSim => {
            let cfg = HardwareConfig::new(9, 9);
            let noise = if noiseless {
                None
            } else {
                Some(optical_noise(&cfg, error_std_pct))
            };
            Backend::Optical(OpticalBackend { config: cfg, noise })
        }
    }
}

fn write_json<P: Serialize>(path: &Path, value: &P) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("json: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// mvm-bench

#[derive(Args)]
struct MvmBenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of input frames to stream.
    #[arg(long)]
    trials: Option<usize>,
    /// Disable detector noise.
    #[arg(long)]
    noiseless: bool,
    /// Output-referred noise std as percent of full scale.
    #[arg(long)]
    error_std_pct: Option<f64>,
    /// Hardware config TOML overriding the built-in 9x9 default.
    #[arg(long)]
    hardware_config: Option<PathBuf>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct MvmBenchParams {
    trials: usize,
    noiseless: bool,
    error_std_pct: f64,
    hardware: HardwareConfig,
}

impl Default for MvmBenchParams {
    fn default() -> Self {
        Self {
            trials: 200,
            noiseless: false,
            error_std_pct: 3.27,
            hardware: HardwareConfig::new(9, 9),
        }
    }
}

impl MvmBenchArgs {
    fn resolve(self) -> Result<(CommonArgs, MvmBenchParams)> {
        let mut p: MvmBenchParams = load_params(&self.common.config)?;
        if let Some(v) = self.trials {
            p.trials = v;
        }
        if self.noiseless {
            p.noiseless = true;
        }
        if let Some(v) = self.error_std_pct {
            p.error_std_pct = v;
        }
        if let Some(path) = &self.hardware_config {
            p.hardware = HardwareConfig::from_toml_path(path)?;
        }
        Ok((self.common, p))
    }
}

#[derive(Serialize)]
struct MvmBenchSummary {
    trials: usize,
    channels: usize,
    products: usize,
    full_scale: f64,
    target_error_std_pct: Option<f64>,
    measured_error_std_pct: f64,
}

fn run_mvm_bench(ctx: &RunContext, params: &MvmBenchParams) -> Result<()> {
    let cfg = &params.hardware;
    cfg.validate()?;
    let noise = if params.noiseless {
        None
    } else {
        Some(optical_noise(cfg, params.error_std_pct))
    };

    let mut data_rng = rng::substream(ctx.seed, "bench-data");
    let weights: Vec<f64> = (0..cfg.n_fanout * cfg.n_inputs)
        .map(|_| data_rng.gen_range(-1.0..=1.0))
        .collect();
    let plane = WeightPlane::from_weights(cfg.n_fanout, cfg.n_inputs, &weights)?;

    let mut readouts: Vec<DetectorReadout> = Vec::with_capacity(params.trials);
    let mut errors = Vec::with_capacity(params.trials * cfg.n_fanout);
    let mut bench = BufWriter::new(File::create(ctx.path("mvm_bench.csv"))?);
    writeln!(bench, "frame_index,channel,exact,analog,digital,error")?;
    for trial in 0..params.trials {
        let x: Vec<f64> = (0..cfg.n_inputs).map(|_| data_rng.gen::<f64>()).collect();
        let frame = encode_input(&x, cfg)?;
        let readout = optical_mvm(
            &frame,
            &plane,
            cfg,
            noise.as_ref(),
            rng::frame_seed(ctx.seed, trial as u64),
        )?;
        for m in 0..cfg.n_fanout {
            let exact: f64 = (0..cfg.n_inputs).map(|n| x[n] * weights[m * cfg.n_inputs + n]).sum();
            let error = readout.analog[m] - exact;
            errors.push(error);
            writeln!(
                bench,
                "{trial},{m},{},{},{},{}",
                float17(exact),
                float17(readout.analog[m]),
                readout.digital[m],
                float17(error)
            )?;
        }
        readouts.push(readout);
    }
    drop(bench);

    write_readout_csv(&ctx.path("readout.csv"), &readouts)?;

    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let std = (errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let summary = MvmBenchSummary {
        trials: params.trials,
        channels: cfg.n_fanout,
        products: errors.len(),
        full_scale: OUTPUT_FULL_SCALE,
        target_error_std_pct: (!params.noiseless).then_some(params.error_std_pct),
        measured_error_std_pct: std / OUTPUT_FULL_SCALE * 100.0,
    };
    write_json(&ctx.path("summary.json"), &summary)?;
    emit_manifest(ctx, params, &["mvm_bench.csv", "readout.csv", "summary.json"])?;
    println!(
        "mvm-bench: {} products, error std {:.3}% of full scale",
        summary.products, summary.measured_error_std_pct
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// edge-detect

#[derive(Args)]
struct EdgeDetectArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// IDX image file to draw digits from.
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file paired with --images.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Single grayscale PGM (P5) to edge-detect instead of IDX digits.
    #[arg(long)]
    input_pgm: Option<PathBuf>,
    /// Number of digits to process from the IDX file.
    #[arg(long)]
    count: Option<usize>,
    /// Disable detector noise.
    #[arg(long)]
    noiseless: bool,
    /// Output-referred noise std as percent of full scale.
    #[arg(long)]
    error_std_pct: Option<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct EdgeDetectParams {
    images: Option<PathBuf>,
    labels: Option<PathBuf>,
    input_pgm: Option<PathBuf>,
    count: usize,
    noiseless: bool,
    error_std_pct: f64,
}

impl Default for EdgeDetectParams {
    fn default() -> Self {
        Self {
            images: None,
            labels: None,
            input_pgm: None,
            count: 50,
            noiseless: false,
            error_std_pct: 3.27,
        }
    }
}

impl EdgeDetectArgs {
    fn resolve(self) -> Result<(CommonArgs, EdgeDetectParams)> {
        let mut p: EdgeDetectParams = load_params(&self.common.config)?;
        if self.images.is_some() {
            p.images = self.images.clone();
        }
        if self.labels.is_some() {
            p.labels = self.labels.clone();
        }
        if self.input_pgm.is_some() {
            p.input_pgm = self.input_pgm.clone();
        }
        if let Some(v) = self.count {
            p.count = v;
        }
        if self.noiseless {
            p.noiseless = true;
        }
        if let Some(v) = self.error_std_pct {
            p.error_std_pct = v;
        }
        Ok((self.common, p))
    }
}

#[derive(Serialize)]
struct EdgeDetectSummary {
    images: usize,
    mean_agreement: f64,
    min_agreement: f64,
}

fn run_edge_detect(ctx: &RunContext, params: &EdgeDetectParams) -> Result<()> {
    let cfg = HardwareConfig::new(9, 1);
    let noise = if params.noiseless {
        None
    } else {
        Some(optical_noise(&cfg, params.error_std_pct))
    };
    let backend = Backend::Optical(OpticalBackend { config: cfg, noise });

    let inputs: Vec<(Vec<f64>, usize, usize)> = if let Some(pgm) = &params.input_pgm {
        let (values, h, w) = read_pgm(pgm)?;
        vec![(values, h, w)]
    } else {
        let images_path = params.images.as_ref().ok_or_else(|| {
            Error::Config("edge-detect needs --images/--labels or --input-pgm".into())
        })?;
        let labels_path = params
            .labels
            .as_ref()
            .ok_or_else(|| Error::Config("edge-detect needs --labels with --images".into()))?;
        let set = load_idx(images_path, labels_path)?;
        let count = params.count.min(set.len());
        (0..count)
            .map(|i| (set.normalized(i), set.rows(), set.cols()))
            .collect()
    };

    let mut agreement_csv = BufWriter::new(File::create(ctx.path("agreement.csv"))?);
    writeln!(agreement_csv, "image_index,agreement")?;
    let mut agreements = Vec::with_capacity(inputs.len());
    for (i, (values, h, w)) in inputs.iter().enumerate() {
        let edges = edge_detect(values, *h, *w, &backend, rng::derive(ctx.seed, &[i as u64]))?;
        write_pgm(&ctx.path(&format!("edge_{i:03}.pgm")), &edges.map, *h, *w)?;
        writeln!(agreement_csv, "{i},{}", float17(edges.agreement))?;
        agreements.push(edges.agreement);
    }
    drop(agreement_csv);

    let summary = EdgeDetectSummary {
        images: agreements.len(),
        mean_agreement: agreements.iter().sum::<f64>() / agreements.len().max(1) as f64,
        min_agreement: agreements.iter().cloned().fold(f64::INFINITY, f64::min),
    };
    write_json(&ctx.path("summary.json"), &summary)?;
    emit_manifest(ctx, params, &["agreement.csv", "summary.json"])?;
    println!(
        "edge-detect: {} images, mean agreement {:.4}",
        summary.images, summary.mean_agreement
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Activation-noise std injected during training.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Detector-noise operating point for the optical backend.
    #[arg(long)]
    error_std_pct: Option<f64>,
    /// Train on a fixed-seed random subset of this size.
    #[arg(long)]
    train_subset: Option<usize>,
    /// Evaluate on a fixed-seed random subset of this size.
    #[arg(long)]
    test_subset: Option<usize>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainParams {
    train_images: Option<PathBuf>,
    train_labels: Option<PathBuf>,
    test_images: Option<PathBuf>,
    test_labels: Option<PathBuf>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    backend: BackendKind,
    noise_sigma: f64,
    error_std_pct: f64,
    train_subset: Option<usize>,
    test_subset: Option<usize>,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            backend: BackendKind::Digital,
            noise_sigma: 0.0,
            error_std_pct: 3.27,
            train_subset: None,
            test_subset: None,
        }
    }
}

impl TrainArgs {
    fn resolve(self) -> Result<(CommonArgs, TrainParams)> {
        let mut p: TrainParams = load_params(&self.common.config)?;
        if self.train_images.is_some() {
            p.train_images = self.train_images.clone();
        }
        if self.train_labels.is_some() {
            p.train_labels = self.train_labels.clone();
        }
        if self.test_images.is_some() {
            p.test_images = self.test_images.clone();
        }
        if self.test_labels.is_some() {
            p.test_labels = self.test_labels.clone();
        }
        if let Some(v) = self.epochs {
            p.epochs = v;
        }
        if let Some(v) = self.batch_size {
            p.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            p.learning_rate = v;
        }
        if let Some(v) = self.backend {
            p.backend = v;
        }
        if let Some(v) = self.noise_sigma {
            p.noise_sigma = v;
        }
        if let Some(v) = self.error_std_pct {
            p.error_std_pct = v;
        }
        if self.train_subset.is_some() {
            p.train_subset = self.train_subset;
        }
        if self.test_subset.is_some() {
            p.test_subset = self.test_subset;
        }
        Ok((self.common, p))
    }
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    train_images: usize,
    test_images: Option<usize>,
    final_train_accuracy: f64,
    final_test_accuracy: Option<f64>,
}

fn run_train(ctx: &RunContext, params: &TrainParams) -> Result<()> {
    let train_images = params
        .train_images
        .as_ref()
        .ok_or_else(|| Error::Config("train needs --train-images".into()))?;
    let train_labels = params
        .train_labels
        .as_ref()
        .ok_or_else(|| Error::Config("train needs --train-labels".into()))?;
    let mut train_set = load_idx(train_images, train_labels)?;
    if let Some(n) = params.train_subset {
        train_set = train_set.random_subset(n, rng::derive(ctx.seed, &[10]))?;
    }
    let mut test_set = match (&params.test_images, &params.test_labels) {
        (Some(ip), Some(lp)) => Some(load_idx(ip, lp)?),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "test set needs both --test-images and --test-labels".into(),
            ))
        }
    };
    if let (Some(set), Some(n)) = (test_set.as_mut(), params.test_subset) {
        *set = set.random_subset(n, rng::derive(ctx.seed, &[11]))?;
    }

    let config = TrainConfig {
        learning_rate: params.learning_rate,
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
        epochs: params.epochs,
        batch_size: params.batch_size,
        seed: ctx.seed,
        backend: cnn_backend(params.backend, false, params.error_std_pct),
        noise_sigma: params.noise_sigma,
    };

    let mut model = CnnModel::init(ctx.seed);
    let history = cnn::train(&mut model, &train_set, test_set.as_ref(), &config)?;
    model.save(&ctx.path("model.fonn"))?;
    cnn::write_history_csv(&ctx.path("history.csv"), &history)?;

    let last = history.last().expect("at least one epoch");
    let summary = TrainSummary {
        epochs: params.epochs,
        train_images: train_set.len(),
        test_images: test_set.as_ref().map(ImageSet::len),
        final_train_accuracy: last.train_accuracy,
        final_test_accuracy: last.test_accuracy,
    };
    write_json(&ctx.path("summary.json"), &summary)?;
    emit_manifest(ctx, params, &["model.fonn", "history.csv", "summary.json"])?;
    println!(
        "train: {} epochs, final train acc {:.4}, test acc {:?}",
        params.epochs, last.train_accuracy, last.test_accuracy
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// infer

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    error_std_pct: Option<f64>,
    /// Evaluate only the first N images.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct InferParams {
    model: Option<PathBuf>,
    images: Option<PathBuf>,
    labels: Option<PathBuf>,
    backend: BackendKind,
    noise_sigma: f64,
    error_std_pct: f64,
    count: Option<usize>,
}

impl Default for InferParams {
    fn default() -> Self {
        Self {
            model: None,
            images: None,
            labels: None,
            backend: BackendKind::Digital,
            noise_sigma: 0.0,
            error_std_pct: 3.27,
            count: None,
        }
    }
}

impl InferArgs {
    fn resolve(self) -> Result<(CommonArgs, InferParams)> {
        let mut p: InferParams = load_params(&self.common.config)?;
        if self.model.is_some() {
            p.model = self.model.clone();
        }
        if self.images.is_some() {
            p.images = self.images.clone();
        }
        if self.labels.is_some() {
            p.labels = self.labels.clone();
        }
        if let Some(v) = self.backend {
            p.backend = v;
        }
        if let Some(v) = self.noise_sigma {
            p.noise_sigma = v;
        }
        if let Some(v) = self.error_std_pct {
            p.error_std_pct = v;
        }
        if self.count.is_some() {
            p.count = self.count;
        }
        Ok((self.common, p))
    }
}

#[derive(Serialize)]
struct InferSummary {
    images: usize,
    accuracy: f64,
}

fn truncate_set(set: ImageSet, count: Option<usize>) -> Result<ImageSet> {
    match count {
        None => Ok(set),
        Some(n) => {
            let n = n.min(set.len());
            let mut images = Vec::with_capacity(n * set.rows() * set.cols());
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                images.extend_from_slice(set.pixels(i));
                labels.push(set.label(i));
            }
            ImageSet::from_parts(set.rows(), set.cols(), images, labels)
        }
    }
}

fn run_infer(ctx: &RunContext, params: &InferParams) -> Result<()> {
    let model_path = params
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("infer needs --model".into()))?;
    let images = params
        .images
        .as_ref()
        .ok_or_else(|| Error::Config("infer needs --images".into()))?;
    let labels = params
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("infer needs --labels".into()))?;
    let model = CnnModel::load(model_path)?;
    let set = truncate_set(load_idx(images, labels)?, params.count)?;
    let backend = cnn_backend(params.backend, false, params.error_std_pct);
    let eval = cnn::evaluate(&model, &set, &backend, params.noise_sigma, ctx.seed)?;

    let mut w = BufWriter::new(File::create(ctx.path("confusion.csv"))?);
    writeln!(
        w,
        "true_class,{}",
        (0..10).map(|c| format!("pred_{c}")).collect::<Vec<_>>().join(",")
    )?;
    for (t, row) in eval.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u32::to_string).collect();
        writeln!(w, "{t},{}", cells.join(","))?;
    }
    drop(w);

    let summary = InferSummary {
        images: set.len(),
        accuracy: eval.accuracy,
    };
    write_json(&ctx.path("summary.json"), &summary)?;
    emit_manifest(ctx, params, &["confusion.csv", "summary.json"])?;
    println!("infer: {} images, accuracy {:.4}", set.len(), eval.accuracy);
    Ok(())
}

// ---------------------------------------------------------------------------
// noise-sweep

#[derive(Args)]
struct NoiseSweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct NoiseSweepParams {
    model: Option<PathBuf>,
    images: Option<PathBuf>,
    labels: Option<PathBuf>,
    sigma_max: f64,
    steps: usize,
    count: usize,
}

impl Default for NoiseSweepParams {
    fn default() -> Self {
        Self {
            model: None,
            images: None,
            labels: None,
            sigma_max: 0.5,
            steps: 6,
            count: 2000,
        }
    }
}

impl NoiseSweepArgs {
    fn resolve(self) -> Result<(CommonArgs, NoiseSweepParams)> {
        let mut p: NoiseSweepParams = load_params(&self.common.config)?;
        if self.model.is_some() {
            p.model = self.model.clone();
        }
        if self.images.is_some() {
            p.images = self.images.clone();
        }
        if self.labels.is_some() {
            p.labels = self.labels.clone();
        }
        if let Some(v) = self.sigma_max {
            p.sigma_max = v;
        }
        if let Some(v) = self.steps {
            p.steps = v;
        }
        if let Some(v) = self.count {
            p.count = v;
        }
        Ok((self.common, p))
    }
}

fn run_noise_sweep(ctx: &RunContext, params: &NoiseSweepParams) -> Result<()> {
    let model_path = params
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("noise-sweep needs --model".into()))?;
    let images = params
        .images
        .as_ref()
        .ok_or_else(|| Error::Config("noise-sweep needs --images".into()))?;
    let labels = params
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("noise-sweep needs --labels".into()))?;
    if params.steps < 2 {
        return Err(Error::Config("noise-sweep needs at least 2 steps".into()));
    }
    let model = CnnModel::load(model_path)?;
    let set = truncate_set(load_idx(images, labels)?, Some(params.count))?;

    let mut w = BufWriter::new(File::create(ctx.path("noise_sweep.csv"))?);
    writeln!(w, "sigma,accuracy")?;
    for i in 0..params.steps {
        let sigma = params.sigma_max * i as f64 / (params.steps - 1) as f64;
        let eval = cnn::evaluate(
            &model,
            &set,
            &Backend::Digital,
            sigma,
            rng::derive(ctx.seed, &[i as u64]),
        )?;
        writeln!(w, "{},{}", float17(sigma), float17(eval.accuracy))?;
    }
    drop(w);

    emit_manifest(ctx, params, &["noise_sweep.csv"])?;
    println!("noise-sweep: {} steps on {} images", params.steps, set.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// snr-curve

#[derive(Args)]
struct SnrCurveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Receiver noise-equivalent power, W/sqrt(Hz).
    #[arg(long)]
    nep: Option<f64>,
    #[arg(long)]
    quantum_efficiency: Option<f64>,
    /// Wavelength in meters.
    #[arg(long)]
    wavelength: Option<f64>,
    /// Relative intensity noise in dBc/Hz.
    #[arg(long)]
    rin_dbc: Option<f64>,
    /// Clock rate in samples/second.
    #[arg(long)]
    clock_rate: Option<f64>,
    #[arg(long)]
    power_min: Option<f64>,
    #[arg(long)]
    power_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct SnrCurveParams {
    nep: f64,
    quantum_efficiency: f64,
    wavelength: f64,
    rin_dbc: f64,
    clock_rate: f64,
    power_min: f64,
    power_max: f64,
    points: usize,
}

impl Default for SnrCurveParams {
    fn default() -> Self {
        Self {
            nep: 5e-12,
            quantum_efficiency: 0.65,
            wavelength: 975e-9,
            rin_dbc: -145.0,
            clock_rate: 25e9,
            power_min: 1e-7,
            power_max: 1e-1,
            points: 121,
        }
    }
}

impl SnrCurveArgs {
    fn resolve(self) -> Result<(CommonArgs, SnrCurveParams)> {
        let mut p: SnrCurveParams = load_params(&self.common.config)?;
        if let Some(v) = self.nep {
            p.nep = v;
        }
        if let Some(v) = self.quantum_efficiency {
            p.quantum_efficiency = v;
        }
        if let Some(v) = self.wavelength {
            p.wavelength = v;
        }
        if let Some(v) = self.rin_dbc {
            p.rin_dbc = v;
        }
        if let Some(v) = self.clock_rate {
            p.clock_rate = v;
        }
        if let Some(v) = self.power_min {
            p.power_min = v;
        }
        if let Some(v) = self.power_max {
            p.power_max = v;
        }
        if let Some(v) = self.points {
            p.points = v;
        }
        Ok((self.common, p))
    }
}

fn run_snr_curve(ctx: &RunContext, params: &SnrCurveParams) -> Result<()> {
    if params.points < 2 {
        return Err(Error::Config("snr-curve needs at least 2 points".into()));
    }
    if !(params.power_min > 0.0 && params.power_max > params.power_min) {
        return Err(Error::Config(
            "snr-curve needs 0 < power_min < power_max".into(),
        ));
    }
    let noise = NoiseParams::new(
        params.nep,
        params.quantum_efficiency,
        params.wavelength,
        dbc_to_linear(params.rin_dbc),
        params.clock_rate,
    )?;

    let mut w = BufWriter::new(File::create(ctx.path("snr_curve.csv"))?);
    writeln!(w, "power_w,snr_det,snr_shot,snr_rin,snr_total,bits")?;
    let log_min = params.power_min.ln();
    let log_max = params.power_max.ln();
    for i in 0..params.points {
        let power = (log_min + (log_max - log_min) * i as f64 / (params.points - 1) as f64).exp();
        let b = snr_breakdown(power, &noise)?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            float17(power),
            float17(b.snr_detector),
            float17(b.snr_shot),
            float17(b.snr_rin),
            float17(b.total.snr),
            float17(b.total.effective_bits)
        )?;
    }
    drop(w);

    emit_manifest(ctx, params, &["snr_curve.csv"])?;
    println!("snr-curve: {} points", params.points);
    Ok(())
}

// ---------------------------------------------------------------------------
// energy-report

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum EnergyPreset {
    /// Demonstrated 9x9 system at 100 MS/s.
    Current,
    /// Projected 1000x1000 system at 25 GS/s.
    NearTerm,
}

#[derive(Args)]
struct EnergyReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    preset: Option<EnergyPreset>,
    #[arg(long)]
    n_inputs: Option<f64>,
    #[arg(long)]
    n_fanout: Option<f64>,
    #[arg(long)]
    clock_rate: Option<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct EnergyReportParams {
    preset: EnergyPreset,
    n_inputs: Option<f64>,
    n_fanout: Option<f64>,
    clock_rate: Option<f64>,
    energy: Option<EnergyParams>,
}

impl Default for EnergyReportParams {
    fn default() -> Self {
        Self {
            preset: EnergyPreset::Current,
            n_inputs: None,
            n_fanout: None,
            clock_rate: None,
            energy: None,
        }
    }
}

impl EnergyReportArgs {
    fn resolve(self) -> Result<(CommonArgs, EnergyReportParams)> {
        let mut p: EnergyReportParams = load_params(&self.common.config)?;
        if let Some(v) = self.preset {
            p.preset = v;
        }
        if self.n_inputs.is_some() {
            p.n_inputs = self.n_inputs;
        }
        if self.n_fanout.is_some() {
            p.n_fanout = self.n_fanout;
        }
        if self.clock_rate.is_some() {
            p.clock_rate = self.clock_rate;
        }
        Ok((self.common, p))
    }
}

fn run_energy_report(ctx: &RunContext, params: &EnergyReportParams) -> Result<()> {
    let (energy, n_default, m_default, r_default) = match params.preset {
        EnergyPreset::Current => (EnergyParams::current_system(), 9.0, 9.0, 1e8),
        EnergyPreset::NearTerm => (EnergyParams::near_term(), 1000.0, 1000.0, 25e9),
    };
    let energy = params.energy.clone().unwrap_or(energy);
    energy.validate()?;
    let n = params.n_inputs.unwrap_or(n_default);
    let m = params.n_fanout.unwrap_or(m_default);
    let r = params.clock_rate.unwrap_or(r_default);
    let breakdown = energy_per_op(&energy, n, m, r);
    let ops = throughput(n, m, r);

    let mut csv = BufWriter::new(File::create(ctx.path("energy_report.csv"))?);
    writeln!(csv, "component,energy_per_op_j")?;
    for (name, value) in breakdown.rows() {
        writeln!(csv, "{name},{}", float17(value))?;
    }
    writeln!(csv, "total,{}", float17(breakdown.total))?;
    drop(csv);

    let mut txt = BufWriter::new(File::create(ctx.path("energy_report.txt"))?);
    writeln!(txt, "N = {n}, M = {m}, R = {r:.3e} S/s")?;
    writeln!(txt, "throughput: {:.4e} OP/s", ops)?;
    writeln!(txt, "{:<14} {:>14}", "component", "fJ/OP")?;
    for (name, value) in breakdown.rows() {
        writeln!(txt, "{name:<14} {:>14.3}", value * 1e15)?;
    }
    writeln!(txt, "{:<14} {:>14.3}", "total", breakdown.total * 1e15)?;
    writeln!(
        txt,
        "efficiency: {:.3} TOPS/W",
        1e-12 / breakdown.total.max(f64::MIN_POSITIVE)
    )?;
    drop(txt);

    emit_manifest(ctx, params, &["energy_report.csv", "energy_report.txt"])?;
    println!(
        "energy-report: total {:.3} fJ/OP ({:.3} TOPS/W)",
        breakdown.total * 1e15,
        1e-12 / breakdown.total.max(f64::MIN_POSITIVE)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    gray_levels: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    /// Measurement noise std (normalized intensity units).
    #[arg(long)]
    noise_std: Option<f64>,
    /// Use the ideal linear-phase device instead of the perturbed one.
    #[arg(long)]
    ideal_device: bool,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct CalibrateParams {
    gray_levels: usize,
    channels: usize,
    noise_std: f64,
    ideal_device: bool,
}

impl Default for CalibrateParams {
    fn default() -> Self {
        Self {
            gray_levels: 256,
            channels: 9,
            noise_std: 0.01,
            ideal_device: false,
        }
    }
}

impl CalibrateArgs {
    fn resolve(self) -> Result<(CommonArgs, CalibrateParams)> {
        let mut p: CalibrateParams = load_params(&self.common.config)?;
        if let Some(v) = self.gray_levels {
            p.gray_levels = v;
        }
        if let Some(v) = self.channels {
            p.channels = v;
        }
        if let Some(v) = self.noise_std {
            p.noise_std = v;
        }
        if self.ideal_device {
            p.ideal_device = true;
        }
        Ok((self.common, p))
    }
}

#[derive(Serialize)]
struct CalibrateSummary {
    gray_levels: usize,
    channels: usize,
    lut_step: f64,
    max_fit_residual: f64,
    max_true_error: f64,
}

fn run_calibrate(ctx: &RunContext, params: &CalibrateParams) -> Result<()> {
    if params.gray_levels < 2 {
        return Err(Error::Config("calibrate needs >= 2 gray levels".into()));
    }
    if params.channels < 1 {
        return Err(Error::Config("calibrate needs >= 1 channel".into()));
    }
    let device = if params.ideal_device {
        SlmDeviceModel::ideal(params.gray_levels, params.channels)
    } else {
        SlmDeviceModel::perturbed(params.gray_levels, params.channels)
    };
    let samples = measure_response(&device, 0, params.noise_std, ctx.seed)?;
    let grid = default_weight_grid();
    let lut = build_lut(&samples, &grid)?.with_gain_map(flat_field(&device)?);
    write_lut_csv(&ctx.path("lut.csv"), &lut)?;

    let mut residuals = BufWriter::new(File::create(ctx.path("residuals.csv"))?);
    writeln!(residuals, "weight_knot,true_realized_weight,residual")?;
    let mut max_true_error: f64 = 0.0;
    for (i, &w) in lut.knots().iter().enumerate() {
        let realized = device.realized_weight(lut.gray_levels()[i] as usize);
        let residual = realized - w;
        max_true_error = max_true_error.max(residual.abs());
        writeln!(
            residuals,
            "{},{},{}",
            float17(w),
            float17(realized),
            float17(residual)
        )?;
    }
    drop(residuals);

    let summary = CalibrateSummary {
        gray_levels: params.gray_levels,
        channels: params.channels,
        lut_step: lut.lut_step(),
        max_fit_residual: lut.max_residual(),
        max_true_error,
    };
    write_json(&ctx.path("summary.json"), &summary)?;
    emit_manifest(ctx, params, &["lut.csv", "residuals.csv", "summary.json"])?;
    println!(
        "calibrate: max true weight error {:.5} (lut step {:.5})",
        summary.max_true_error, summary.lut_step
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// replay

#[derive(Args)]
struct ReplayArgs {
    /// Manifest file written by a previous run.
    manifest: PathBuf,
    /// Output directory for the replayed artifacts (defaults to the
    /// manifest's directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_replay(args: &ReplayArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.manifest)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", args.manifest.display())))?;
    let out = match &args.out {
        Some(out) => out.clone(),
        None => args
            .manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let common = CommonArgs {
        config: None,
        seed: Some(manifest.seed),
        out: Some(out),
    };

    fn params<T: for<'de> Deserialize<'de>>(value: &serde_json::Value) -> Result<T> {
        serde_json::from_value(value.clone())
            .map_err(|e| Error::Config(format!("manifest params: {e}")))
    }

    match manifest.command.as_str() {
        "mvm-bench" => {
            let ctx = RunContext::new(&common, "mvm-bench")?;
            run_mvm_bench(&ctx, &params(&manifest.params)?)
        }
        "edge-detect" => {
            let ctx = RunContext::new(&common, "edge-detect")?;
            run_edge_detect(&ctx, &params(&manifest.params)?)
        }
        "train" => {
            let ctx = RunContext::new(&common, "train")?;
            run_train(&ctx, &params(&manifest.params)?)
        }
        "infer" => {
            let ctx = RunContext::new(&common, "infer")?;
            run_infer(&ctx, &params(&manifest.params)?)
        }
        "noise-sweep" => {
            let ctx = RunContext::new(&common, "noise-sweep")?;
            run_noise_sweep(&ctx, &params(&manifest.params)?)
        }
        "snr-curve" => {
            let ctx = RunContext::new(&common, "snr-curve")?;
            run_snr_curve(&ctx, &params(&manifest.params)?)
        }
        "energy-report" => {
            let ctx = RunContext::new(&common, "energy-report")?;
            run_energy_report(&ctx, &params(&manifest.params)?)
        }
        "calibrate" => {
            let ctx = RunContext::new(&common, "calibrate")?;
            run_calibrate(&ctx, &params(&manifest.params)?)
        }
        other => Err(Error::Config(format!("unknown command {other} in manifest"))),
    }
}
