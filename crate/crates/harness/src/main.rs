use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wavelab::csv::Table;
use wavelab::experiments::{acpr_obo, ber, ccdf, gradcheck, psd, train};
use wavelab::{load_config, ExperimentConfig, HarnessError, Result, Runner};

/// MIMO-OFDM waveform lab: Monte Carlo experiments and autoencoder training.
#[derive(Debug, Parser)]
#[command(name = "wavelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the autoencoder; --out is the checkpoint path, the log lands
    /// next to it.
    Train(Common),
    /// Bit error rate against peak SNR.
    Ber(Common),
    /// PAPR complementary CDF of the band-pass filter output.
    Ccdf(Common),
    /// Averaged amplifier-output PSD with a linear reference trace.
    Psd(Common),
    /// ACPR and OBO per transmit method.
    AcprObo(Common),
    /// Finite-difference checks of every layer and the full link.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the frame count of the chosen experiment.
    #[arg(long)]
    frames: Option<usize>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn prepare(args: &Common, set_frames: impl FnOnce(&mut ExperimentConfig, usize)) -> Result<(ExperimentConfig, Runner)> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(frames) = args.frames {
        set_frames(&mut cfg, frames);
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok((cfg, Runner::new(args.workers)?))
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => table.write(path),
        None => {
            print!("{}", table.render());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let (cfg, _) = prepare(&args, |_, _| {})?;
            let path = cfg
                .output
                .clone()
                .ok_or_else(|| HarnessError::Config("train needs --out or output for the checkpoint".into()))?;
            train::run_train(&cfg, &path, |r| eprintln!("{}", r.csv_row()))?;
            Ok(())
        }
        Command::Ber(args) => {
            let (cfg, runner) = prepare(&args, |c, n| c.ber.frames = n)?;
            emit(&ber::ber_table(&ber::run_ber(&cfg, &runner)?), cfg.output.as_deref())
        }
        Command::Ccdf(args) => {
            let (cfg, runner) = prepare(&args, |c, n| c.ccdf.frames = n)?;
            emit(&ccdf::ccdf_table(&ccdf::run_ccdf(&cfg, &runner)?), cfg.output.as_deref())
        }
        Command::Psd(args) => {
            let (cfg, runner) = prepare(&args, |c, n| c.psd.frames = n)?;
            emit(&psd::psd_table(&psd::run_psd(&cfg, &runner)?), cfg.output.as_deref())
        }
        Command::AcprObo(args) => {
            let (cfg, runner) = prepare(&args, |c, n| c.acpr_obo.frames = n)?;
            let rows = acpr_obo::run_acpr_obo(&cfg, &runner)?;
            emit(&acpr_obo::acpr_obo_table(&rows), cfg.output.as_deref())
        }
        Command::Gradcheck(args) => {
            let report = gradcheck::run_gradcheck(args.seed)?;
            emit(&report.table(), args.out.as_deref())?;
            if report.passed() {
                Ok(())
            } else {
                Err(HarnessError::Validation(format!(
                    "gradient checks failed: {}",
                    report.failures().join(", ")
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wavelab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
