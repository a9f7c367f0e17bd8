mod args;
mod commands;
mod run;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;
use run::RunManifest;

const USAGE_ERROR: i32 = 2;

fn execute(cli: &Cli, argv: &[String]) -> Result<Outcome> {
    match &cli.command {
        Command::Generate(a) => commands::generate(a, argv),
        Command::Solve(a) => commands::solve_cmd(a, argv),
        Command::Verify(a) => commands::verify_cmd(a, argv),
        Command::Benchmark(a) => commands::benchmark_cmd(a, argv),
        Command::Replay(a) => {
            let manifest = RunManifest::load(&a.manifest)?;
            let out = match &a.out {
                Some(dir) => dir.clone(),
                None => a.manifest.parent().unwrap_or(std::path::Path::new(".")).to_path_buf(),
            };
            let mut replay = manifest.argv.clone();
            replay.push("--out".into());
            replay.push(out.display().to_string());
            let cli = Cli::try_parse_from(std::iter::once("onp".to_string()).chain(replay.iter().cloned()))
                .context("run manifest holds an invalid command line")?;
            anyhow::ensure!(!matches!(cli.command, Command::Replay(_)), "a run manifest cannot replay a replay");
            execute(&cli, &replay)
        }
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            std::process::exit(USAGE_ERROR);
        }
    }
    match execute(&cli, &argv) {
        Ok(outcome) => std::process::exit(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(USAGE_ERROR);
        }
    }
}
