use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scenecraft::audio_retrieval::{write_demo_catalog, AudioCatalog, CATALOG_VERSION};
use scenecraft::diffusion::{moving_squares, TrainStage};
use scenecraft::pipeline::{self, read_json, AudioPlan, PipelineConfig, Run, AUDIO_PLAN_FILE, MOVIE_DIR, SAMPLES_DIR};
use scenecraft::script_gen::ScriptSequence;

/// Text-to-movie pipeline.
#[derive(Parser)]
#[command(name = "scenecraft", version)]
struct Cli {
    /// JSON config file. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding `io.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `io.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a brief into per-scene scripts (scripts.json).
    Expand {
        #[arg(long)]
        brief: String,
        #[arg(long, default_value_t = 10)]
        scenes: usize,
    },
    /// Run one training stage.
    Train {
        /// BASE_PRETRAIN, SPATIAL_FINETUNE, TEMPORAL_TRAIN or MOVIE_FINETUNE.
        #[arg(long)]
        stage: TrainStage,
        /// Dataset directory of clip_*/frame_*.png with clip.json sidecars.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint from the previous stage.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Sample one clip per prompt into <out>/samples.
    Sample {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, required_unless_present = "scripts")]
        prompt: Vec<String>,
        #[arg(long, conflicts_with = "prompt")]
        scripts: Option<PathBuf>,
    },
    /// Retrieve sound effects and music for sampled scenes (audio.json).
    RetrieveAudio {
        #[arg(long)]
        scripts: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Assemble and export a movie into <out>/movie.
    Assemble {
        #[arg(long)]
        scripts: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        audio: PathBuf,
    },
    /// Compare sampled clips with reference clips (metrics.json).
    Evaluate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Brief to exported movie in one go.
    MakeMovie {
        #[arg(long)]
        brief: String,
        #[arg(long, default_value_t = 10)]
        scenes: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Write the synthetic moving-squares dataset.
    MakeDataset {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        per_domain: usize,
        /// Frames per clip; defaults to the model's clip length.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Write a demo audio catalog of synthetic tones.
    MakeCatalog {
        #[arg(long)]
        dir: PathBuf,
        /// Write a catalog with no assets.
        #[arg(long)]
        empty: bool,
    },
    /// Print the resolved config as JSON.
    ShowConfig,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Expand { .. } => "expand",
            Command::Train { .. } => "train",
            Command::Sample { .. } => "sample",
            Command::RetrieveAudio { .. } => "retrieve-audio",
            Command::Assemble { .. } => "assemble",
            Command::Evaluate { .. } => "evaluate",
            Command::MakeMovie { .. } => "make-movie",
            Command::MakeDataset { .. } => "make-dataset",
            Command::MakeCatalog { .. } => "make-catalog",
            Command::ShowConfig => "show-config",
        }
    }
}

fn resolve_config(cli: &Cli) -> pipeline::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.io.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.io.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_clips(cfg: &PipelineConfig, dir: &Path) -> pipeline::Result<Vec<scenecraft::VideoArray>> {
    let m = &cfg.model;
    Ok(pipeline::load_clips(dir, m.frames, m.height, m.width)?
        .into_iter()
        .map(|(_, v)| v)
        .collect())
}

fn run(cli: Cli) -> pipeline::Result<()> {
    let cfg = resolve_config(&cli)?;
    let out = cfg.io.out_dir.clone();
    let name = cli.command.name();
    match cli.command {
        Command::Expand { brief, scenes } => {
            let (seq, _) = Run::execute(&cfg, name, |r| pipeline::expand(r, &brief, scenes, &out))?;
            println!("{} scenes -> {}", seq.scenes.len(), out.join(pipeline::SCRIPTS_FILE).display());
        }
        Command::Train { stage, data, init } => {
            let (report, _) = Run::execute(&cfg, name, |r| pipeline::train(r, stage, &data, init.as_deref()))?;
            println!(
                "{stage}: smoothed loss {:.4} -> {:.4}, frozen groups unchanged: {}",
                report.initial_smoothed_loss,
                report.final_smoothed_loss,
                report.frozen_unchanged()
            );
        }
        Command::Sample { checkpoint, prompt, scripts } => {
            let prompts = match scripts {
                Some(p) => read_json::<ScriptSequence>(&p)?.texts().map(String::from).collect(),
                None => prompt,
            };
            let dir = out.join(SAMPLES_DIR);
            let ((clips, _), _) = Run::execute(&cfg, name, |r| pipeline::sample(r, checkpoint.as_deref(), &prompts, &dir))?;
            println!("{} clips -> {}", clips.len(), dir.display());
        }
        Command::RetrieveAudio { scripts, samples, catalog } => {
            let (plan, _) = Run::execute(&cfg, name, |r| {
                let seq: ScriptSequence = read_json(&scripts)?;
                let clips = model_clips(&r.config, &samples)?;
                pipeline::retrieve_audio(r, &seq, &clips, catalog.as_deref(), &out)
            })?;
            println!(
                "tone {}, music {} -> {}",
                plan.tone.category,
                plan.music.as_ref().map_or("none", |m| m.asset_id.as_str()),
                out.join(AUDIO_PLAN_FILE).display()
            );
        }
        Command::Assemble { scripts, samples, audio } => {
            let dir = out.join(MOVIE_DIR);
            let (m, _) = Run::execute(&cfg, name, |r| {
                let seq: ScriptSequence = read_json(&scripts)?;
                let plan: AudioPlan = read_json(&audio)?;
                let clips = model_clips(&r.config, &samples)?;
                pipeline::assemble(r, &seq, clips, &plan, None, &dir)
            })?;
            println!("{} scenes, {} s -> {}", m.scenes.len(), m.total_duration, dir.display());
        }
        Command::Evaluate { samples, reference } => {
            let (report, _) = Run::execute(&cfg, name, |r| pipeline::evaluate(r, &samples, &reference))?;
            for m in &report.metrics {
                println!("{} = {:.6} ({})", m.metric, m.value, m.extractor_id);
            }
        }
        Command::MakeMovie { brief, scenes, checkpoint, catalog } => {
            let (m, _) = Run::execute(&cfg, name, |r| {
                pipeline::make_movie(r, &brief, scenes, checkpoint.as_deref(), catalog.as_deref())
            })?;
            println!("{} scenes, {} s -> {}", m.scenes.len(), m.total_duration, out.join(MOVIE_DIR).display());
        }
        Command::MakeDataset { dir, per_domain, frames } => {
            let m = &cfg.model;
            let (h, w) = scenecraft::diffusion::data::load_size(m.height, m.width);
            let domains: Vec<usize> = (0..m.n_domains).collect();
            let ds = moving_squares(cfg.io.seed, &domains, per_domain, frames.unwrap_or(m.frames), h, w);
            ds.save(&dir)?;
            println!("{} clips -> {}", ds.len(), dir.display());
        }
        Command::MakeCatalog { dir, empty } => {
            let cat = if empty {
                let cat = AudioCatalog {
                    version: CATALOG_VERSION,
                    assets: Vec::new(),
                };
                cat.save(&dir)?;
                cat
            } else {
                write_demo_catalog(&dir)?
            };
            println!("{} assets -> {}", cat.assets.len(), dir.display());
        }
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
