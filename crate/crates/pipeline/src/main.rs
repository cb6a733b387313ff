use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dfc_pipeline::{Pipeline, PipelineError, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "dfc", version, about = "Sensorimotor dynamic functional connectivity pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate babbling and record trajectory and sensor streams.
    Simulate(Common),
    /// Sliding-window MI and the binarized graph series.
    Imi(Common),
    /// Functional modules and link densities.
    Irm(Common),
    /// Factorize the module link densities.
    Nnmf(Common),
    /// Render SVG figures from a finished run.
    Plot(Common),
    /// All stages in order.
    Run(Common),
    /// Print qualitative checks on a finished run directory as JSON.
    Report {
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Skip stages whose inputs, outputs and config are unchanged.
    #[arg(long)]
    resume: bool,
}

fn execute(stages: &[Stage], c: Common) -> Result<(), PipelineError> {
    let mut config = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        config.seed = s;
    }
    let mut p = Pipeline::open(config, &c.out, c.resume)?;
    for &s in stages {
        p.run_stage(s)?;
    }
    let d = &p.manifest.derived;
    let show = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    println!(
        "N_s={} windows={} N_c={} N_f={} D={}",
        show(d.n_s.map(|x| x.to_string())),
        show(d.n_windows.map(|x| x.to_string())),
        show(d.n_c.map(|x| x.to_string())),
        show(d.n_f.map(|x| x.to_string())),
        show(d.d.map(|x| format!("{x:.4}"))),
    );
    for w in &d.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => execute(&[Stage::Simulate], c),
        Command::Imi(c) => execute(&[Stage::Imi], c),
        Command::Irm(c) => execute(&[Stage::Irm], c),
        Command::Nnmf(c) => execute(&[Stage::Nnmf], c),
        Command::Plot(c) => execute(&[Stage::Plot], c),
        Command::Run(c) => execute(&Stage::ALL, c),
        Command::Report { out } => dfc_pipeline::report::qualitative_report(&out).map(|r| {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
        }),
        Command::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.stage() {
                Some(s) => eprintln!("error [{s}]: {e}"),
                None => eprintln!("error: {e}"),
            }
            ExitCode::FAILURE
        }
    }
}
