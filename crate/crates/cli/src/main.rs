use avsad::corpus::Condition;
use avsad::features::FeatureKind;
use avsad::zoo::{Frontend, ModelKind};
use avsad::Error;
use avsad_cli::commands::{self, GenData, Train};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "avsad", version, about = "Audiovisual speech activity detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrontendArg {
    Mel,
    Spectrogram,
    Sadjadi,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 26)]
        speakers: usize,
        #[arg(long, default_value_t = 3)]
        utts: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write one feature matrix file per manifest row.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// mel, mfcc, spec, sadjadi, visual26 or flowvar.
        #[arg(long)]
        features: FeatureKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the ideal-clean training speakers.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        split_seed: u64,
        /// brnn, ryant, tao2017, ariav, audio-only or video-only.
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.125)]
        width_scale: f64,
        #[arg(long, value_enum, default_value_t = FrontendArg::Mel)]
        frontend: FrontendArg,
        /// Unscaled A-RNN width, overriding the front-end default.
        #[arg(long)]
        audio_width: Option<usize>,
        /// Trained BRNN whose subnet a unimodal model reuses.
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on the test speakers under one condition.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        condition: Condition,
        #[arg(long, default_value_t = 1)]
        split_seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
    /// One-tailed paired t-test of report A over report B on per-speaker F1.
    Compare {
        #[arg(long)]
        report_a: PathBuf,
        #[arg(long)]
        report_b: PathBuf,
    },
    /// Finite-difference gradient check of every layer type and the BRNN.
    Gradcheck,
    /// Full desk-scale protocol followed by the acceptance table.
    Repro {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run the protocol a second time and compare the bytes.
        #[arg(long)]
        verify: bool,
        /// Comma-separated subset of models.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
}

fn hint(e: &Error) -> &'static str {
    match e {
        Error::Dimension(_) => "the model's feature contract does not match its input; check --model and --features",
        Error::Sequencing(_) => "train the BRNN first and pass it with --pretrained",
        Error::Split(_) => "the manifest needs at least three speakers of both genders",
        Error::Io { .. } => "check that the path exists and is writable",
        _ => "",
    }
}

fn run(cmd: Command) -> avsad::Result<bool> {
    let (text, ok) = match cmd {
        Command::GenData { out, speakers, utts, seed } => (
            commands::gen_data(&GenData {
                out,
                speakers,
                utts,
                seed,
            })?,
            true,
        ),
        Command::Extract { manifest, features, out } => (commands::extract(&manifest, features, &out)?, true),
        Command::Train {
            manifest,
            split_seed,
            model,
            config,
            width_scale,
            frontend,
            audio_width,
            pretrained,
            seed,
            out,
        } => {
            let frontend = match frontend {
                FrontendArg::Mel => Frontend::Mel,
                FrontendArg::Spectrogram => Frontend::Spectrogram,
                FrontendArg::Sadjadi => Frontend::Sadjadi,
            };
            let a = Train {
                manifest,
                split_seed,
                model,
                config,
                width_scale,
                frontend,
                audio_width,
                pretrained,
                seed,
                out,
            };
            (commands::train(&a)?, true)
        }
        Command::Eval {
            manifest,
            model,
            condition,
            split_seed,
            report,
        } => (commands::eval(&manifest, &model, condition, split_seed, &report)?, true),
        Command::Compare { report_a, report_b } => (commands::compare(&report_a, &report_b)?, true),
        Command::Gradcheck => commands::gradcheck()?,
        Command::Repro {
            seed,
            out,
            verify,
            models,
        } => (commands::repro(seed, &out, verify, models)?, true),
    };
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check exceeded tolerance");
            ExitCode::FAILURE
        }
        Err(e) => {
            let h = hint(&e);
            eprintln!("error: {e}");
            if !h.is_empty() {
                eprintln!("hint: {h}");
            }
            ExitCode::FAILURE
        }
    }
}
