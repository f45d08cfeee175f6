//! Command-line front end: every stage reads the run config, writes its
//! outputs under `<output>/<stage>/` atomically together with a manifest of
//! hashes, and runs the stages it depends on when they are missing.

mod commands;
mod config;
mod stage;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use commands::{session_pipeline, subject_id, truth_scores, Ctx, MethodName, SessionResult, Sessions};
pub use config::{EvalConfig, LstmSettings, Paths, RunConfig, SeedTable};
pub use stage::{canonical_json, hash_file, sha256_hex, Manifest, StageWriter, Status, Workspace, MANIFEST};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fbn", version, about = "Functional brain network identification")]
pub struct Cli {
    /// JSON run config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed, added to every module seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-session and per-sweep-point work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overwrite stage outputs produced from a different config or inputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic cohort with its ground truth.
    Synth,
    /// Run the preprocessing chain on every catalog session.
    Preprocess,
    /// Seed maps, seed FC matrices and group templates.
    Sbc,
    /// Spatial FastICA per session.
    Ica,
    /// Train or apply the LSTM autoencoder.
    Lstm {
        #[command(subcommand)]
        action: LstmAction,
    },
    /// OLS maps of every session from its latent time courses.
    Regress,
    /// Template-match a method's maps.
    Match {
        #[arg(long, value_enum, default_value = "lstm")]
        method: MethodName,
    },
    /// Encode, regress, match and correlate the test sessions.
    Pipeline,
    /// Evaluation battery.
    Eval {
        #[command(subcommand)]
        kind: EvalKind,
    },
    /// Train and run the pipeline for several latent sizes.
    SweepC {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        values: Vec<usize>,
    },
    /// Epoch-length stability of all three methods.
    SweepEpochs {
        /// Epoch lengths in seconds; the config's list when omitted.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<f64>>,
    },
}

#[derive(Debug, Subcommand)]
pub enum LstmAction {
    Train,
    Encode,
}

#[derive(Debug, Subcommand)]
pub enum EvalKind {
    /// Dice overlap of thresholded maps with reference maps.
    Dice(MethodArg),
    /// t-SNE embedding and subject silhouette.
    Variation(MethodArg),
    /// Intra- and inter-subject reproducibility.
    Repro(MethodArg),
    /// Similarity to the templates against epoch length.
    Epochs(MethodArg),
    /// Inter- and intra-subject standard deviation maps.
    Stdmaps(MethodArg),
}

#[derive(Debug, clap::Args)]
pub struct MethodArg {
    #[arg(long, value_enum, default_value = "lstm")]
    pub method: MethodName,
}

impl Cli {
    pub fn context(&self) -> Result<Ctx> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => {
                let cwd = std::env::current_dir().map_err(|e| Error::io("reading the working directory", e))?;
                RunConfig::parse("{}", &cwd)?
            }
        };
        let cfg = cfg.with_global_seed(self.seed);
        let root = cfg.paths.output.clone();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(format!("creating {}", root.display()), e))?;
        let root = std::fs::canonicalize(&root).map_err(|e| Error::io(format!("resolving {}", root.display()), e))?;
        Ok(Ctx {
            cfg,
            ws: Workspace {
                root,
                force: self.force,
            },
        })
    }

    pub fn execute(&self) -> Result<Status> {
        if let Some(k) = self.jobs {
            if k == 0 {
                return Err(Error::InvalidInput("--jobs must be >= 1".into()));
            }
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                log::debug!("thread pool already configured: {e}");
            }
        }
        let ctx = self.context()?;
        match &self.command {
            Command::Synth => ctx.synth(),
            Command::Preprocess => ctx.preprocess(),
            Command::Sbc => ctx.sbc(),
            Command::Ica => ctx.ica(),
            Command::Lstm { action: LstmAction::Train } => ctx.lstm_train(),
            Command::Lstm { action: LstmAction::Encode } => ctx.lstm_encode(),
            Command::Regress => ctx.regress(),
            Command::Match { method } => ctx.match_maps(*method),
            Command::Pipeline => ctx.pipeline(),
            Command::Eval { kind } => match kind {
                EvalKind::Dice(m) => ctx.eval_dice(m.method),
                EvalKind::Variation(m) => ctx.eval_variation(m.method),
                EvalKind::Repro(m) => ctx.eval_repro(m.method),
                EvalKind::Epochs(m) => ctx.eval_epochs(m.method),
                EvalKind::Stdmaps(m) => ctx.eval_stdmaps(m.method),
            },
            Command::SweepC { values } => ctx.sweep_c(values),
            Command::SweepEpochs { lengths } => ctx.sweep_epochs(lengths.as_deref()),
        }
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 on success, 1 for user errors, 2 for internal failures.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| cli.execute()) {
        Ok(Ok(_)) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(2)
        }
    }
}

/// Initializes logging from `FBN_LOG` (default `info`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("FBN_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
