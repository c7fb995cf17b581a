use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use stringkern_cli::{load_config, run, CliError};

#[derive(Parser)]
#[command(name = "stringkern", version, about = "String-kernel elastostatics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Run on a single thread.
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value = "warn")]
        log_level: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Action::Run { config, out, threads, deterministic, log_level } = cli.command;
    env_logger::Builder::new().parse_filters(&log_level).init();
    let threads = if deterministic { 1 } else { threads };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::warn!("thread pool already initialised: {e}");
    }
    let result = load_config(&config).and_then(|cfg| {
        log::info!("running {:?}", cfg.command);
        run(&cfg, &out)
    });
    match result {
        Ok(output) => {
            for line in &output.summary {
                println!("{line}");
            }
            for f in &output.files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
