#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlcl_core::cli::{self, Config};
use mlcl_core::pipeline::Mode;
use mlcl_core::Error;

#[derive(Parser)]
#[command(name = "mlcl", version, about = "Multi-label contrastive learning on generated progressive matrices")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// key=value, applied after the config file (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> mlcl_core::Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        for o in &self.overrides {
            c.apply_override(o)?;
        }
        if let Some(s) = self.seed {
            c.set("seed", &s.to_string())?;
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train under one protocol and write checkpoint and reports.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// mlcl, mlcl-noaug, ce, ce-aux-dense or ce-aux-sparse.
        #[arg(long, default_value = "mlcl")]
        mode: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run the ablation grid.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Check that every instance has a unique correct answer.
    Verify {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Summarize a run directory, ablation directory or report.json.
    Report {
        /// Path to summarize.
        path: PathBuf,
    },
}

fn run(args: Args) -> mlcl_core::Result<u8> {
    match args.command {
        Command::Generate { common, out } => {
            let s = cli::cmd_generate(&common.resolve()?, &out)?;
            println!(
                "wrote {} {} instances ({} grammar) to {}",
                s.count,
                s.layout,
                s.layout.grammar(),
                out.display()
            );
            println!("sha256 {}", s.checksum);
        }
        Command::Train {
            common,
            dataset,
            mode,
            out,
        } => {
            let mode: Mode = mode.parse()?;
            let o = cli::cmd_train(&common.resolve()?, &dataset, mode, &out)?;
            println!("{}", o.dir.display());
            println!(
                "{mode}: val accuracy {:.4}, test accuracy {:.4}",
                o.report.val_accuracy, o.report.test_accuracy
            );
        }
        Command::Ablate { common, dataset, out } => {
            let o = cli::cmd_ablate(&common.resolve()?, &dataset, &out)?;
            println!("{} cells, summary in {}", o.rows.len(), o.dir.join("summary.csv").display());
        }
        Command::Verify { dataset } => {
            let r = cli::cmd_verify(&dataset)?;
            for f in &r.failures {
                println!(
                    "instance {} (seed {}): correct {} but satisfying {:?}",
                    f.index, f.seed, f.correct_index, f.satisfying
                );
            }
            println!("{} instances, {} failures", r.count, r.failures.len());
            if !r.passed() {
                return Ok(2);
            }
        }
        Command::Report { path } => print!("{}", cli::cmd_report(&path)?),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::UnknownConfigKey { .. } = e {
                eprintln!("(see README for the configuration keys)");
            }
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
