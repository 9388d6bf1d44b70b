use clap::{Parser, Subcommand};
use motioncal_cli::{
    cmd_eval, cmd_pipeline, cmd_pose, cmd_refine, cmd_simulate, cmd_sync, exit_code,
    PipelineConfig,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "motioncal",
    about = "Spatio-temporal calibration of unsynchronized multi-camera rigs from human motion"
)]
struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for pipeline artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dataset directory (written by `simulate`, read by the other stages).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    /// Master seed for simulation, sampling and training.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Named preset applied before the config file: desk, sync or full.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Caps worker threads (0 = library default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fully ground-truthed synthetic dataset.
    Simulate {
        /// Additionally write the five robustness-noise variants.
        #[arg(long)]
        table2: bool,
    },
    /// Estimate global time offsets by dynamic time warping.
    Sync,
    /// Estimate SIM(3)-consistent camera poses from aligned motion.
    Pose,
    /// Jointly refine the field, poses and offsets.
    Refine,
    /// Score estimates against the dataset ground truth.
    Eval,
    /// Run simulate, sync, pose, refine and eval in order.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig::default();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(preset) = &cli.preset {
        cfg.apply_preset(preset)?;
    }
    let mut value = serde_json::to_value(&cfg).map_err(|e| e.to_string())?;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let overrides: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| format!("cannot parse config {}: {e}", path.display()))?;
        merge(&mut value, overrides);
    }
    PipelineConfig::apply_env_overrides(&mut value, std::env::vars());
    let mut cfg: PipelineConfig =
        serde_json::from_value(value).map_err(|e| format!("invalid configuration: {e}"))?;
    // explicit flags win over file and environment
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(dataset) = &cli.dataset {
        cfg.dataset_dir = dataset.clone();
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("configuration error: {msg}");
            return ExitCode::from(2);
        }
    };
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
        {
            eprintln!("configuration error: cannot set thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match cli.command {
        Command::Simulate { table2 } => {
            cfg.simulate.table2_variants |= table2;
            cmd_simulate(&cfg)
        }
        Command::Sync => cmd_sync(&cfg),
        Command::Pose => cmd_pose(&cfg),
        Command::Refine => cmd_refine(&cfg).map(|_| ()),
        Command::Eval => cmd_eval(&cfg).map(|report| {
            println!(
                "init: rot {:.4} deg, trans {:.6}, dt {:.4} frames",
                report.init.mean_rotation_deg,
                report.init.mean_translation,
                report.init.mean_offset_frames
            );
            if let Some(r) = &report.refine {
                println!(
                    "refine: rot {:.4} deg, trans {:.6}, dt {:.4} frames",
                    r.mean_rotation_deg, r.mean_translation, r.mean_offset_frames
                );
            }
        }),
        Command::Pipeline => cmd_pipeline(&cfg).map(|report| {
            println!(
                "pipeline complete: init dt err {:.4} frames{}",
                report.init.mean_offset_frames,
                report
                    .refine
                    .as_ref()
                    .map(|r| format!(", refine dt err {:.4} frames", r.mean_offset_frames))
                    .unwrap_or_default()
            );
        }),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
