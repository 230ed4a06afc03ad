use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use qbye_core::audio::{load_wav, standardize_duration};
use qbye_core::eval::{run_eval, load_eval_set, write_roc_csv, DEFAULT_TARGET_FA_PER_HOUR};
use qbye_core::features::{Frontend, FrontendConfig};
use qbye_core::mixer::{MixerConfig, ModelSize};
use qbye_core::rng::{seeded, stream};
use qbye_core::runtime::{detect, embed_utterance, enroll, EnrollmentProfile, Model};
use qbye_core::training::synth::{generate_dataset, SynthSpec};
use qbye_core::training::{load_manifest, train, write_metrics_jsonl, Checkpoint, TrainConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_FINGERPRINT: u8 = 3;

/// Query-by-example keyword spotting with an MLP-Mixer encoder.
#[derive(Parser)]
#[command(name = "qbye", version)]
struct Cli {
    /// Worker threads for data-parallel work. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic keyword dataset (WAVs, noise clips, manifest.jsonl).
    GenSynthetic {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute the CMVN-normalised MFCC matrix of one clip as JSON.
    Featurize {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Picks the crop of clips longer than the model window.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the frontend settings stored in this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train a classifier and write model.qbem plus metrics.jsonl.
    Train(TrainArgs),
    /// Report parameter and MAC counts.
    Info {
        /// Model config JSON; missing fields take their defaults.
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the embedding sequence of one utterance as JSON.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an enrollment profile from example utterances.
    Enroll {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        keyword: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        clips: Vec<PathBuf>,
    },
    /// Score one utterance against a profile.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Sweep an evaluation set and report FRR at a false-alarm rate.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL rows with audio_path, speaker, keyword and role.
        #[arg(long)]
        eval_set: PathBuf,
        /// False alarms per hour.
        #[arg(long, default_value_t = DEFAULT_TARGET_FA_PER_HOUR)]
        target_fa: f64,
        #[arg(long)]
        roc_out: PathBuf,
        #[arg(long)]
        report_out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Training config JSON; missing fields take their defaults.
    #[arg(long)]
    train_config: Option<PathBuf>,
    /// Model config JSON; missing fields take their defaults.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the training config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Directory of noise WAVs; overrides the training config.
    #[arg(long)]
    noise_dir: Option<PathBuf>,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(EXIT_USAGE);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(qbye_core::Error::FingerprintMismatch { .. }) = cause.downcast_ref() {
            return EXIT_FINGERPRINT;
        }
    }
    EXIT_RUNTIME
}

fn require_file(path: &Path, what: &str, hint: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("{what} {} not found\n\nsee `qbye {hint} --help`", path.display())).into());
    }
    Ok(())
}

/// Reads a JSON object and fills missing fields from `T::default()`.
fn load_overlay<T: Serialize + DeserializeOwned + Default>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let patch: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut base = serde_json::to_value(T::default())?;
    match (base.as_object_mut(), patch) {
        (Some(obj), serde_json::Value::Object(fields)) => obj.extend(fields),
        _ => bail!("{} must hold a JSON object", path.display()),
    }
    serde_json::from_value(base).with_context(|| format!("invalid config {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<Model> {
    require_file(path, "checkpoint", "<command>")?;
    let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(Model::from_checkpoint(&ck)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn millions(n: u64) -> String {
    format!("{n} ({:.2}M)", n as f64 / 1e6)
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenSynthetic { classes, per_class, seed, out_dir } => {
            let spec = SynthSpec::new(classes, per_class, seed);
            let summary = generate_dataset(&out_dir, &spec)?;
            println!(
                "wrote {} utterances in {} classes and {} noise clips to {}",
                summary.utterances,
                summary.classes,
                summary.noise_files,
                out_dir.display()
            );
        }
        Command::Featurize { audio, out, seed, checkpoint } => {
            require_file(&audio, "audio file", "featurize")?;
            let cfg = match checkpoint {
                Some(p) => Checkpoint::load(&p)?.frontend,
                None => FrontendConfig::default(),
            };
            let frontend = Frontend::new(cfg)?;
            let clip = load_wav(&audio)?;
            let clip = standardize_duration(&clip, frontend.config().clip_s, &mut seeded(seed, stream::FEATURIZE))?;
            let feat = frontend.features(&clip)?;
            let rows: Vec<Vec<f32>> = feat.values.outer_iter().map(|r| r.to_vec()).collect();
            let doc = serde_json::json!({ "shape": [feat.n_coeffs(), feat.n_frames()], "values": rows });
            write_file(&out, serde_json::to_string(&doc)?.as_bytes())?;
            println!("features {}x{} -> {}", feat.n_coeffs(), feat.n_frames(), out.display());
        }
        Command::Train(args) => cmd_train(args)?,
        Command::Info { config, checkpoint } => {
            let (mixer, ck) = match (config, checkpoint) {
                (Some(p), _) => (load_overlay::<MixerConfig>(&p)?, None),
                (None, Some(p)) => {
                    let ck = Checkpoint::load(&p).with_context(|| format!("loading checkpoint {}", p.display()))?;
                    (ck.mixer.clone(), Some(ck))
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            mixer.validate()?;
            let size = ModelSize::of(&mixer);
            println!("params: {}, macs: {}", millions(size.encoder_params), millions(size.encoder_macs));
            if mixer.num_classes > 0 {
                println!(
                    "with decoder: params: {}, macs: {}",
                    millions(size.total_params()),
                    millions(size.encoder_macs + size.decoder_macs)
                );
            }
            if let Some(ck) = ck {
                println!("fingerprint: {}", ck.fingerprint());
                println!("labels: {}", ck.labels.len());
                println!("step: {}", ck.step);
            }
        }
        Command::Embed { checkpoint, audio, out } => {
            let model = load_model(&checkpoint)?;
            require_file(&audio, "audio file", "embed")?;
            let seq = embed_utterance(&load_wav(&audio)?, &model)?;
            let doc = serde_json::json!({
                "fingerprint": model.fingerprint,
                "dim": seq.dim(),
                "window_offsets_ms": seq.window_offsets_ms,
                "vectors": seq.vectors,
            });
            write_file(&out, serde_json::to_string(&doc)?.as_bytes())?;
            println!("{} windows of dim {} -> {}", seq.len(), seq.dim(), out.display());
        }
        Command::Enroll { checkpoint, keyword, out, clips } => {
            let model = load_model(&checkpoint)?;
            let audio = clips
                .iter()
                .map(|p| {
                    require_file(p, "audio file", "enroll")?;
                    Ok(load_wav(p)?)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let profile = enroll(&keyword, &audio, &model)?;
            profile.save(&out)?;
            println!("enrolled {keyword:?} from {} clips -> {}", audio.len(), out.display());
        }
        Command::Detect { checkpoint, profile, audio, threshold } => {
            let model = load_model(&checkpoint)?;
            require_file(&profile, "profile", "detect")?;
            require_file(&audio, "audio file", "detect")?;
            let profile = EnrollmentProfile::load(&profile)?;
            let query = embed_utterance(&load_wav(&audio)?, &model)?;
            let r = detect(&profile, &query, threshold, &model.fingerprint)?;
            let verdict = if r.triggered { "TRIGGERED" } else { "NO" };
            println!("{verdict} score={:.6}", r.score);
        }
        Command::Eval { checkpoint, eval_set, target_fa, roc_out, report_out } => {
            let model = load_model(&checkpoint)?;
            require_file(&eval_set, "eval set", "eval")?;
            let set = load_eval_set(&eval_set)?;
            let (report, _) = run_eval(&set, &model, target_fa)?;
            write_roc_csv(&report.roc, &roc_out)?;
            write_file(&report_out, report.to_json().as_bytes())?;
            println!(
                "frr at {} fa/h: {:.2}% ({} positives, {} negatives, {:.4} h)",
                report.target, report.frr_at_target, report.n_pos, report.n_neg, report.negative_hours
            );
            if report.warning {
                eprintln!("warning: no threshold reaches the target false-alarm rate");
            }
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    require_file(&args.manifest, "manifest", "train")?;
    let mut cfg: TrainConfig = match &args.train_config {
        Some(p) => load_overlay(p)?,
        None => TrainConfig::default(),
    };
    let mixer: MixerConfig = match &args.model_config {
        Some(p) => load_overlay(p)?,
        None => MixerConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if args.noise_dir.is_some() {
        cfg.noise_dir = args.noise_dir.clone();
    }
    let manifest = load_manifest(&args.manifest)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let outcome = train(&manifest, &cfg, &mixer, &FrontendConfig::default(), |m| {
        match m.valid_acc {
            Some(acc) => println!("epoch {:>3}  loss {:.4}  valid {:.3}", m.epoch, m.train_loss, acc),
            None => println!("epoch {:>3}  loss {:.4}", m.epoch, m.train_loss),
        }
    })?;
    let ck_path = args.out.join("model.qbem");
    outcome.checkpoint.save(&ck_path)?;
    write_metrics_jsonl(&outcome.metrics, args.out.join("metrics.jsonl"))?;
    println!(
        "best epoch {} -> {} (fingerprint {})",
        outcome.best_epoch,
        ck_path.display(),
        outcome.checkpoint.fingerprint()
    );
    Ok(())
}
