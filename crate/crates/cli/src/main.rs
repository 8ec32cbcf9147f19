use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use gaitlab_cli::metrics::{extract_torque_profiles, MetricsError};
use gaitlab_cli::report::{self, ReportError};
use gaitlab_core::config::default_skeleton;
use gaitlab_core::dynamics::{build_model, ExoDeviceSpec};
use gaitlab_core::env::{EnvAssets, EnvConfig, EnvError};
use gaitlab_core::refmotion::io::{read_clip, write_clip};
use gaitlab_core::refmotion::synth::{synthetic_clip, SynthParams};
use gaitlab_core::refmotion::{estimate_belt_speed, to_overground, with_mirror, RefError, ReferenceClip};
use gaitlab_core::trace::EpisodeTrace;
use gaitlab_train::{evaluate, train, PolicyCheckpoint, TrainError, TrainPhase, TrainSetup, TrainerConfig};
use serde::Deserialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "gaitlab", version, about = "Musculoskeletal gait imitation toolkit")]
struct Cli {
    /// TOML file with optional [env] and [trainer] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "gaitlab-out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Full-scale base phase.
    Base,
    /// Full-scale fine-tune phases.
    Finetune,
    /// Desktop-sized runs.
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic reference clip for the default walker.
    GenerateClip {
        /// m/s
        #[arg(long, default_value_t = 1.2)]
        speed: f64,
        /// s
        #[arg(long, default_value_t = 1.1)]
        stride: f64,
        #[arg(long, default_value_t = 12)]
        cycles: usize,
        /// Hz
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
    },
    /// Converts a treadmill clip to overground, mirrors and resamples it.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// m/s; estimated from the left toe marker when omitted.
        #[arg(long)]
        belt_speed: Option<f64>,
        /// Appends the left/right mirrored copy.
        #[arg(long)]
        mirror: bool,
        /// Hz
        #[arg(long)]
        resample: Option<f64>,
    },
    /// Trains one phase and writes policy.ckpt, metrics.csv and summary.json.
    Train {
        #[arg(long, default_value = "base")]
        phase: String,
        /// Reference clip CSV; the built-in synthetic walk when omitted.
        #[arg(long)]
        clip: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        device: Option<String>,
        #[arg(long)]
        weakness: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        envs: Option<usize>,
    },
    /// Rolls out a checkpoint and writes traces.json and eval_summary.json.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        clip: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Sample actions instead of using the policy mean.
        #[arg(long)]
        stochastic: bool,
    },
    /// Computes metrics over traces and writes the report bundle.
    Report {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        clip: Option<PathBuf>,
        /// Comparison traces for the symmetry and energy deltas.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Writes cycle-averaged assistive torque profiles.
    ExportProfiles {
        #[arg(long)]
        traces: PathBuf,
    },
}

enum Failure {
    Config(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Fingerprint { .. } => Self::Config(e.to_string()),
            TrainError::Env(EnvError::Config(_)) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<RefError> for Failure {
    fn from(e: RefError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Self::Data(e.to_string())
    }
}

fn data<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    env: Option<toml::Table>,
    trainer: Option<toml::Table>,
}

struct RunConfig {
    env: EnvConfig,
    trainer: TrainerConfig,
}

/// Replaces top-level keys of `base` with those given in `patch`.
fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: &T, patch: Option<&toml::Table>) -> Result<T, Failure> {
    let mut table = toml::Table::try_from(base).map_err(|e| Failure::Config(e.to_string()))?;
    for (k, v) in patch.into_iter().flatten() {
        table.insert(k.clone(), v.clone());
    }
    table.try_into().map_err(|e: toml::de::Error| Failure::Config(e.to_string()))
}

fn trainer_preset(preset: Preset, phase: TrainPhase) -> TrainerConfig {
    match (preset, phase) {
        (Preset::Base, _) => TrainerConfig::full(),
        (Preset::Finetune, _) => TrainerConfig::full_finetune(),
        (Preset::Desk, TrainPhase::Base) => TrainerConfig::desk(),
        (Preset::Desk, _) => TrainerConfig::desk_finetune(),
    }
}

fn load_config(cli: &Cli, phase: TrainPhase) -> Result<RunConfig, Failure> {
    let file: ConfigFile = match &cli.config {
        Some(p) => {
            let src = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&src).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => ConfigFile::default(),
    };
    let env: EnvConfig = overlay(&EnvConfig::default(), file.env.as_ref())?;
    let mut trainer: TrainerConfig = overlay(&trainer_preset(cli.preset, phase), file.trainer.as_ref())?;
    if let Some(seed) = cli.seed {
        trainer.seed = seed;
    }
    env.validate()?;
    Ok(RunConfig { env, trainer })
}

fn load_clip(path: Option<&Path>) -> Result<Option<ReferenceClip>, Failure> {
    path.map(|p| read_clip(p).map_err(data(p))).transpose()
}

fn assets(env: &EnvConfig, clip: Option<ReferenceClip>) -> Result<std::sync::Arc<EnvAssets>, Failure> {
    Ok(match clip {
        Some(c) => EnvAssets::new(env, c)?,
        None => EnvAssets::synthetic(env, &SynthParams::default())?,
    })
}

fn synth(params: &SynthParams) -> Result<ReferenceClip, Failure> {
    let model = build_model(&default_skeleton(), &ExoDeviceSpec::none()).map_err(|e| Failure::Data(e.to_string()))?;
    synthetic_clip(&model, params).map_err(|e| Failure::Config(e.to_string()))
}

fn create_out(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(data(out))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let bytes = serde_json::to_vec_pretty(value).map_err(data(path))?;
    fs::write(path, bytes).map_err(data(path))
}

fn read_traces(path: &Path) -> Result<Vec<EpisodeTrace>, Failure> {
    let src = fs::read(path).map_err(data(path))?;
    serde_json::from_slice(&src).map_err(data(path))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenerateClip {
            speed,
            stride,
            cycles,
            rate,
        } => {
            let params = SynthParams {
                speed: *speed,
                stride_period: *stride,
                cycles: *cycles,
                sample_rate: *rate,
                ..SynthParams::default()
            };
            let clip = synth(&params)?;
            create_out(&cli.out)?;
            let path = cli.out.join("clip.csv");
            write_clip(&clip, &path)?;
            println!("wrote {} ({} frames)", path.display(), clip.len());
        }
        Command::Preprocess {
            input,
            belt_speed,
            mirror,
            resample,
        } => {
            let mut clip = read_clip(input).map_err(data(input))?;
            if clip.meta.treadmill {
                let v = match belt_speed {
                    Some(v) => *v,
                    None => {
                        let toe: Vec<f64> = clip.channel(|f| f.landmarks[0][0]);
                        let stance: Vec<bool> = clip
                            .frames
                            .iter()
                            .map(|f| f.contact.map(|c| c[0]))
                            .collect::<Option<_>>()
                            .ok_or_else(|| Failure::Data("belt speed estimation needs contact flags".into()))?;
                        let est = estimate_belt_speed(&toe, &stance, clip.sample_rate)?;
                        log::info!("estimated belt speed {:.4} m/s", est.overall);
                        est.overall
                    }
                };
                clip = to_overground(&clip, v)?;
            }
            if *mirror {
                clip = with_mirror(&clip)?;
            }
            if let Some(rate) = resample {
                clip = clip.resample(*rate)?;
            }
            create_out(&cli.out)?;
            let path = cli.out.join("clip.csv");
            write_clip(&clip, &path)?;
            println!("wrote {} ({} frames at {} Hz)", path.display(), clip.len(), clip.sample_rate);
        }
        Command::Train {
            phase,
            clip,
            init,
            device,
            weakness,
            steps,
            envs,
        } => {
            let phase = TrainPhase::parse(phase)?;
            let RunConfig { mut env, mut trainer } = load_config(cli, phase)?;
            if let Some(d) = device {
                env.device = d.clone();
            }
            if let Some(w) = weakness {
                env.weakness = Some(w.clone());
            }
            if let Some(s) = steps {
                trainer.total_steps = *s;
            }
            if let Some(n) = envs {
                trainer.n_envs = *n;
            }
            let init = init
                .as_deref()
                .map(|p| PolicyCheckpoint::load(p).map_err(data(p)))
                .transpose()?;
            let assets = assets(&env, load_clip(clip.as_deref())?)?;
            create_out(&cli.out)?;
            let started = Instant::now();
            let outcome = train(TrainSetup {
                assets,
                env,
                trainer,
                phase,
                init,
                log_path: Some(cli.out.join("metrics.csv")),
            })?;
            let ckpt = cli.out.join("policy.ckpt");
            outcome.checkpoint.save(&ckpt).map_err(data(&ckpt))?;
            write_json(
                &cli.out.join("summary.json"),
                &json!({
                    "phase": phase,
                    "steps": outcome.checkpoint.header.steps,
                    "env_fingerprint": outcome.checkpoint.header.env_fingerprint,
                    "config_fingerprint": outcome.checkpoint.header.config_fingerprint,
                    "seconds": started.elapsed().as_secs_f64(),
                    "random_baseline": outcome.random_baseline,
                    "final_eval": outcome.final_eval,
                }),
            )?;
            println!(
                "{}: mean return {:.3} (random {:.3}), checkpoint {}",
                phase.name(),
                outcome.final_eval.mean_reward,
                outcome.random_baseline.mean_reward,
                ckpt.display()
            );
        }
        Command::Evaluate {
            checkpoint,
            clip,
            episodes,
            stochastic,
        } => {
            let ck = PolicyCheckpoint::load(checkpoint).map_err(data(checkpoint))?;
            let assets = assets(&ck.header.env, load_clip(clip.as_deref())?)?;
            let seed = cli.seed.unwrap_or(ck.header.trainer.seed);
            let ev = evaluate(&ck, assets, *episodes, !stochastic, seed)?;
            create_out(&cli.out)?;
            write_json(&cli.out.join("traces.json"), &ev.traces)?;
            write_json(&cli.out.join("eval_summary.json"), &ev.summary)?;
            println!(
                "{} episodes: mean return {:.3}, mean length {:.1}",
                ev.summary.episodes, ev.summary.mean_reward, ev.summary.mean_length
            );
        }
        Command::Report { traces, clip, baseline } => {
            let set = read_traces(traces)?;
            let base = baseline.as_deref().map(read_traces).transpose()?;
            let clip = match load_clip(clip.as_deref())? {
                Some(c) => c,
                None => synth(&SynthParams::default())?,
            };
            let r = report::report(&set, &clip, base.as_deref(), &cli.out)?;
            println!("gross cost {:.3} W/kg over {} episodes", r.gross_cost, r.episodes);
            if let Some(note) = &r.tracking_note {
                println!("tracking metrics unavailable: {note}");
            }
        }
        Command::ExportProfiles { traces } => {
            let set = read_traces(traces)?;
            let mass = set.first().map(|t| t.meta.model_mass).unwrap_or(1.0);
            let profiles = extract_torque_profiles(&set, mass)?;
            create_out(&cli.out)?;
            write_json(&cli.out.join("torque_profiles.json"), &profiles)?;
            let csv_path = cli.out.join(report::TORQUE_FILE);
            fs::write(&csv_path, report::torque_table(&profiles)?).map_err(data(&csv_path))?;
            for p in &profiles.profiles {
                println!("{}: peak {:.3} N·m/kg at {:.0}%", p.joint, p.peak, p.peak_timing);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (Failure::Config(m) | Failure::Data(m)) = &e;
            eprintln!("error: {m}");
            ExitCode::from(e.code())
        }
    }
}
