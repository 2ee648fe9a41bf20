//! Command-line surface: one thin subcommand per library capability.
//!
//! Every subcommand resolves its configuration in three layers (built-in
//! defaults, then an optional JSON `--config` file, then explicit flags),
//! prints the resolved configuration to stderr, and exits 0 on success, 1 on
//! usage errors, 2 on runtime failures. Artifacts land under `--out`
//! together with a `produced.txt` listing every file written.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::archive::WeightArchive;
use crate::data::{load_clip, load_manifest, synth_generate, AugmentMode, Split, SynthConfig};
use crate::edge::{EdgeConfig, EdgeRunner, Sink, WebhookConfig};
use crate::error::{Error, Result};
use crate::optim::OptimKind;
use crate::tensor::Tensor;
use crate::train::{
    evaluate, predict, resolution_study, study_csv, train, TrainConfig, REFERENCE_ACCURACY,
    REFERENCE_RESOLUTION_ACCURACY,
};
use crate::vision::{Clip, PreprocessConfig};

#[derive(Parser, Debug)]
#[command(
    name = "ar3d",
    version,
    about = "Video activity recognition with 3D convolutional networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled motion dataset (RVID clips + manifest)
    SynthData(SynthDataArgs),
    /// Run the preprocessing pipeline on one clip and store the result
    Preprocess(PreprocessArgs),
    /// Train a model preset on a dataset manifest
    Train(TrainArgs),
    /// Evaluate an archived model on a manifest's test split
    Eval(EvalArgs),
    /// Classify a single clip with an archived model
    Predict(PredictArgs),
    /// Re-train at several input resolutions and tabulate accuracy/cost
    ResolutionStudy(ResolutionStudyArgs),
    /// Watch a directory and classify clips as they arrive
    Watch(WatchArgs),
}

/// Entry point used by the binary; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::SynthData(args) => cmd_synth_data(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::ResolutionStudy(args) => cmd_resolution_study(args),
        Command::Watch(args) => cmd_watch(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            2
        }
    }
}

fn announce_config<T: Serialize>(what: &str, cfg: &T) {
    eprintln!(
        "resolved {} config: {}",
        what,
        serde_json::to_string(cfg).expect("config serializes")
    );
}

fn load_config_file<T: serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> Result<Option<T>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {}", p.display(), e)))?;
            let value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {}", p.display(), e)))?;
            Ok(Some(value))
        }
    }
}

/// Artifact directory with a record of everything written into it.
struct OutDir {
    root: PathBuf,
    produced: Vec<String>,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .map_err(|e| Error::Config(format!("--out {}: {}", root.display(), e)))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            produced: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        fs::write(&path, contents)?;
        self.produced.push(rel.to_string());
        Ok(path)
    }

    fn record(&mut self, rel: String) {
        self.produced.push(rel);
    }

    /// Writes `produced.txt` and echoes the artifact list.
    fn finish(mut self) -> Result<()> {
        self.produced.sort();
        let listing = self.produced.join("\n") + "\n";
        fs::write(self.root.join("produced.txt"), &listing)?;
        eprintln!("artifacts under {}:", self.root.display());
        for name in &self.produced {
            eprintln!("  {}", name);
        }
        eprintln!("  produced.txt");
        Ok(())
    }
}

// ---------------------------------------------------------------- synth-data

#[derive(Args, Debug)]
struct SynthDataArgs {
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// JSON config file (flags win over file values)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of motion classes (1-6)
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    clips_per_class: Option<usize>,
    /// Frames per clip
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    /// Background texture amplitude around mid-gray, 0..=0.3
    #[arg(long)]
    bg_amplitude: Option<f32>,
    /// Per-pixel Gaussian noise sigma, 0..0.2
    #[arg(long)]
    noise_sigma: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_synth_data(args: SynthDataArgs) -> Result<()> {
    let mut cfg: SynthConfig = load_config_file(&args.config)?.unwrap_or_default();
    set(&mut cfg.classes, args.classes);
    set(&mut cfg.clips_per_class, args.clips_per_class);
    set(&mut cfg.frames, args.frames);
    set(&mut cfg.height, args.height);
    set(&mut cfg.width, args.width);
    set(&mut cfg.fps, args.fps);
    set(&mut cfg.bg_amplitude, args.bg_amplitude);
    set(&mut cfg.noise_sigma, args.noise_sigma);
    set(&mut cfg.seed, args.seed);
    announce_config("synth-data", &cfg);

    let mut out = OutDir::create(&args.out)?;
    let manifest = synth_generate(&cfg, &args.out)?;
    out.record("manifest.txt".into());
    for entry in &manifest.entries {
        let rel = entry
            .path
            .strip_prefix(&args.out)
            .unwrap_or(&entry.path)
            .display()
            .to_string();
        out.record(rel);
    }
    let counts = manifest.split_counts();
    println!(
        "generated {} clips across {} classes (train {}, val {}, test {})",
        manifest.entries.len(),
        manifest.classes.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    out.finish()
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

// ---------------------------------------------------------------- preprocess

#[derive(Args, Debug)]
struct PreprocessFlags {
    /// JSON config file (flags win over file values)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seconds of video considered from the clip start
    #[arg(long)]
    seconds: Option<f64>,
    /// Frames sampled from that window
    #[arg(long)]
    num_frames: Option<usize>,
    #[arg(long)]
    target_h: Option<usize>,
    #[arg(long)]
    target_w: Option<usize>,
    /// Enable background subtraction
    #[arg(long, conflicts_with = "no_bg_sub")]
    bg_sub: bool,
    /// Disable background subtraction
    #[arg(long)]
    no_bg_sub: bool,
    /// Binarization threshold for subtracted frames, in (0,1)
    #[arg(long)]
    bg_threshold: Option<f32>,
}

impl PreprocessFlags {
    fn resolve(&self) -> Result<PreprocessConfig> {
        let mut cfg: PreprocessConfig =
            load_config_file(&self.config)?.unwrap_or_else(PreprocessConfig::kth);
        set(&mut cfg.seconds, self.seconds);
        set(&mut cfg.num_frames, self.num_frames);
        set(&mut cfg.target_h, self.target_h);
        set(&mut cfg.target_w, self.target_w);
        if self.bg_sub {
            cfg.bg_sub = true;
        }
        if self.no_bg_sub {
            cfg.bg_sub = false;
        }
        if self.bg_threshold.is_some() {
            cfg.bg_threshold = self.bg_threshold;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Input clip: an RVID file or a directory of PGM frames
    #[arg(long)]
    input: PathBuf,
    /// Frame rate for PGM directories lacking an fps.txt sidecar
    #[arg(long)]
    fps: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    preprocess: PreprocessFlags,
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let cfg = args.preprocess.resolve()?;
    announce_config("preprocess", &cfg);
    let clip = load_clip(&args.input, args.fps)?;
    let tensor = crate::vision::preprocess(&clip, &cfg)?;

    // store the processed frames as a clip for inspection and re-use
    let shape = tensor.shape().to_vec();
    let frames = Tensor::new(shape[1..].to_vec(), tensor.into_data())?;
    let processed = Clip::new(frames, clip.fps())?;
    let mut out = OutDir::create(&args.out)?;
    let bytes = crate::data::encode_rvid(&processed)?;
    out.write("preprocessed.rvid", &bytes)?;
    println!(
        "preprocessed {} -> [1, {}, {}, {}]",
        args.input.display(),
        shape[1],
        shape[2],
        shape[3]
    );
    out.finish()
}

// --------------------------------------------------------------------- train

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OptimArg {
    Adam,
    Nadam,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AugmentArg {
    None,
    Model4,
}

#[derive(Args, Debug)]
struct TrainFlags {
    /// Model preset 1-4
    #[arg(long)]
    model: Option<u8>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Optimizer kind
    #[arg(long, value_enum)]
    optim: Option<OptimArg>,
    /// Initial learning rate
    #[arg(long)]
    lr0: Option<f64>,
    /// Learning-rate decay constant k in lr0 / (1 + k * epoch)
    #[arg(long)]
    decay: Option<f64>,
    /// Training-set augmentation mode
    #[arg(long, value_enum)]
    augment: Option<AugmentArg>,
    #[command(flatten)]
    preprocess: PreprocessFlags,
}

impl TrainFlags {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match load_config_file::<TrainConfig>(&self.preprocess.config)? {
            Some(cfg) => cfg,
            None => TrainConfig::for_model(self.model.unwrap_or(3))?,
        };
        set(&mut cfg.model_id, self.model);
        set(&mut cfg.epochs, self.epochs);
        set(&mut cfg.batch_size, self.batch_size);
        set(&mut cfg.seed, self.seed);
        if let Some(kind) = self.optim {
            cfg.optim.kind = match kind {
                OptimArg::Adam => OptimKind::Adam,
                OptimArg::Nadam => OptimKind::Nadam,
            };
        }
        set(&mut cfg.optim.lr0, self.lr0);
        set(&mut cfg.optim.decay, self.decay);
        if let Some(mode) = self.augment {
            cfg.augment = match mode {
                AugmentArg::None => AugmentMode::None,
                AugmentArg::Model4 => AugmentMode::Model4,
            };
        }

        // the preprocess sub-config shares the same flag overlay
        let flags = &self.preprocess;
        set(&mut cfg.preprocess.seconds, flags.seconds);
        set(&mut cfg.preprocess.num_frames, flags.num_frames);
        set(&mut cfg.preprocess.target_h, flags.target_h);
        set(&mut cfg.preprocess.target_w, flags.target_w);
        if flags.bg_sub {
            cfg.preprocess.bg_sub = true;
        }
        if flags.no_bg_sub {
            cfg.preprocess.bg_sub = false;
        }
        if flags.bg_threshold.is_some() {
            cfg.preprocess.bg_threshold = flags.bg_threshold;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest path
    #[arg(long)]
    data: PathBuf,
    /// Output directory for weights, history, and metrics
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    cfg.validate()?;
    announce_config("train", &cfg);
    let manifest = load_manifest(&args.data)?;
    let result = train(&manifest, &cfg)?;

    let mut out = OutDir::create(&args.out)?;
    out.write("history.csv", result.history.to_csv().as_bytes())?;
    out.write(
        "config.json",
        serde_json::to_string_pretty(&cfg)?.as_bytes(),
    )?;

    let final_archive = WeightArchive::new(
        result.spec.clone(),
        result.final_params.clone(),
        cfg.preprocess.clone(),
        manifest.classes.clone(),
    )?;
    out.write("archive.ar3d", &final_archive.to_bytes())?;
    let best_archive = WeightArchive::new(
        result.spec.clone(),
        result.best_params.clone(),
        cfg.preprocess.clone(),
        manifest.classes.clone(),
    )?;
    out.write("archive-best.ar3d", &best_archive.to_bytes())?;

    let last = result.history.rows().last().expect("epochs >= 1");
    println!(
        "trained model {} for {} epochs: final train loss {:.6}, val loss {:.6}, val acc {:.4}",
        cfg.model_id, cfg.epochs, last.train_loss, last.val_loss, last.val_acc
    );
    println!(
        "best validation loss at epoch {} (archive-best.ar3d), fingerprint {}",
        result.best_epoch,
        best_archive.fingerprint()
    );

    if manifest.split_entries(Split::Test).next().is_some() {
        let (accuracy, matrix) = evaluate(
            &result.spec,
            &result.best_params,
            &manifest,
            &cfg.preprocess,
        )?;
        out.write("confusion.csv", matrix.to_csv().as_bytes())?;
        println!("test accuracy (best checkpoint): {:.4}", accuracy);
    }
    out.finish()
}

// ---------------------------------------------------------------------- eval

#[derive(Args, Debug)]
struct EvalArgs {
    /// Weight archive produced by `train`
    #[arg(long)]
    archive: PathBuf,
    /// Dataset manifest path (test split is evaluated)
    #[arg(long)]
    data: PathBuf,
    /// Optional output directory for the confusion matrix
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let archive = WeightArchive::load(&args.archive)?;
    announce_config("preprocess (from archive)", &archive.preprocess);
    let manifest = load_manifest(&args.data)?;
    if manifest.classes != archive.classes {
        return Err(Error::Config(format!(
            "manifest classes {:?} do not match archive classes {:?}",
            manifest.classes, archive.classes
        )));
    }
    let (accuracy, matrix) = evaluate(&archive.spec, &archive.params, &manifest, &archive.preprocess)?;

    println!("test accuracy: {:.4} ({} / {} clips)", accuracy, matrix.trace(), matrix.total());
    println!("confusion matrix (rows = true class):");
    print!("{}", matrix.to_csv());

    println!();
    println!("reference targets (percent) on the public datasets, models 1-4:");
    println!("dataset,without_subtraction,with_subtraction");
    for (name, without, with) in REFERENCE_ACCURACY {
        println!(
            "{},{},{}",
            name,
            without.map(|v| format!("{:.2}", v)).join("/"),
            with.map(|v| format!("{:.2}", v)).join("/")
        );
    }
    println!("measured accuracy above is on the supplied manifest, shown for side-by-side comparison");

    if let Some(dir) = args.out {
        let mut out = OutDir::create(&dir)?;
        out.write("confusion.csv", matrix.to_csv().as_bytes())?;
        out.write(
            "accuracy.txt",
            format!("{:.6}\n", accuracy).as_bytes(),
        )?;
        out.finish()?;
    }
    Ok(())
}

// ------------------------------------------------------------------- predict

#[derive(Args, Debug)]
struct PredictArgs {
    /// Weight archive produced by `train`
    #[arg(long)]
    archive: PathBuf,
    /// Clip to classify: RVID file or PGM directory
    #[arg(long)]
    input: PathBuf,
    /// Frame rate for PGM directories lacking an fps.txt sidecar
    #[arg(long)]
    fps: Option<f64>,
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let archive = WeightArchive::load(&args.archive)?;
    announce_config("preprocess (from archive)", &archive.preprocess);
    let clip = load_clip(&args.input, args.fps)?;
    let prediction = predict(
        &archive.spec,
        &archive.params,
        &archive.classes,
        &clip,
        &archive.preprocess,
    )?;
    println!(
        "{}",
        json!({
            "input": args.input.display().to_string(),
            "class": prediction.class_name,
            "class_index": prediction.class_index,
            "probs": prediction.probs,
            "model_fingerprint": archive.fingerprint(),
        })
    );
    Ok(())
}

// ---------------------------------------------------------- resolution-study

#[derive(Args, Debug)]
struct ResolutionStudyArgs {
    /// Dataset manifest path
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the study table
    #[arg(long)]
    out: PathBuf,
    /// Square input resolutions to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 40, 60])]
    sizes: Vec<usize>,
    #[command(flatten)]
    flags: TrainFlags,
}

fn cmd_resolution_study(args: ResolutionStudyArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    cfg.validate()?;
    announce_config("resolution-study", &cfg);
    let manifest = load_manifest(&args.data)?;
    let rows = resolution_study(&manifest, &cfg, &args.sizes)?;

    let csv = study_csv(&rows);
    print!("{}", csv);
    println!(
        "reference targets (percent): {}",
        REFERENCE_RESOLUTION_ACCURACY
            .map(|(s, a)| format!("{}x{} {:.2}", s, s, a))
            .join(", ")
    );
    let mut out = OutDir::create(&args.out)?;
    out.write("study.csv", csv.as_bytes())?;
    out.finish()
}

// --------------------------------------------------------------------- watch

#[derive(Args, Debug)]
struct WatchArgs {
    /// Directory to watch for incoming clips
    #[arg(long)]
    input: PathBuf,
    /// Weight archive that defines preprocessing and the model
    #[arg(long)]
    archive: PathBuf,
    /// POST events to this http URL instead of printing to stdout
    #[arg(long)]
    webhook: Option<String>,
    /// Poll interval in milliseconds
    #[arg(long, default_value_t = 500)]
    poll_ms: u64,
    /// Frame rate for PGM directories lacking an fps.txt sidecar
    #[arg(long)]
    fps: Option<f64>,
}

fn cmd_watch(args: WatchArgs) -> Result<()> {
    let archive = WeightArchive::load(&args.archive)?;
    announce_config("preprocess (from archive)", &archive.preprocess);
    let mut cfg = EdgeConfig::new(&args.input);
    cfg.poll_interval = Duration::from_millis(args.poll_ms);
    cfg.fps_override = args.fps;
    let sink = match &args.webhook {
        Some(url) => Sink::Webhook(WebhookConfig::new(url.clone())),
        None => Sink::Stdout,
    };
    eprintln!(
        "watching {} every {} ms with model fingerprint {}",
        args.input.display(),
        args.poll_ms,
        archive.fingerprint()
    );
    let mut runner = EdgeRunner::new(archive, cfg, sink)?;
    let stop = AtomicBool::new(false);
    runner.run(&stop)
}
