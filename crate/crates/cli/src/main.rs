use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dapo::experiments::{
    cmd_compare, cmd_gen_mdp, cmd_run, cmd_sweep, cmd_verify, median_final_gap, ExperimentConfig, VerifyOptions,
};
use dapo::Error;

/// Dual approximation policy optimization on tabular MDPs.
#[derive(Parser)]
#[command(name = "dapo", version)]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded repetitions of one configuration.
    Run(Common),
    /// Cartesian product over the [sweep] lists.
    Sweep(Common),
    /// Algorithms from [compare] on the same seeded MDPs.
    Compare(Common),
    /// Fuzz the analysis lemmas: `all` or one lemma key.
    Verify {
        #[arg(default_value = "all")]
        selector: String,
        /// Where witness files go.
        #[arg(long, default_value = "verify_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Samples per campaign instead of the defaults.
        #[arg(long)]
        samples: Option<usize>,
        /// Adds a constant to every Bregman divergence; exercises failure reporting.
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_bregman_fault: f64,
    },
    /// Write the MDP described by a config's [mdp] table as JSON.
    GenMdp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "mdp.json")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn report(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        // a closed pipe (e.g. `| head`) is not an error worth dying over
        let _ = writeln!(std::io::stdout(), "{}", msg.as_ref());
    }
}

fn gap_line(mean: f64, hw: Option<f64>) -> String {
    match hw {
        Some(h) => format!("{mean:.6e} ± {h:.3e}"),
        None => format!("{mean:.6e}"),
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Run(common) => {
            let (cfg, out) = load(&common)?;
            let o = cmd_run(&cfg, &out)?;
            report(quiet, format!("{} run(s) written to {}", o.csv_files.len(), out.display()));
            report(
                quiet,
                format!("final value gap: {}", gap_line(o.aggregate.final_mean(), o.aggregate.final_half_width())),
            );
        }
        Command::Sweep(common) => {
            let (cfg, out) = load(&common)?;
            let points = cmd_sweep(&cfg, &out)?;
            for p in &points {
                let line = match &p.result {
                    Ok((m, hw)) => gap_line(*m, *hw),
                    Err(e) => format!("failed: {e}"),
                };
                report(quiet, format!("{}: {line}", p.dir.display()));
            }
            report(quiet, format!("summary: {}", out.join("summary.csv").display()));
        }
        Command::Compare(common) => {
            let (cfg, out) = load(&common)?;
            let runs = cmd_compare(&cfg, &out)?;
            if let Some(spec) = &cfg.compare {
                for alg in &spec.algorithms {
                    for &m in &spec.m {
                        report(
                            quiet,
                            format!("{alg} m={m}: median final gap {:.6e}", median_final_gap(&runs, *alg, m)),
                        );
                    }
                }
            }
            report(quiet, format!("{} runs; long table: {}", runs.len(), out.join("compare.csv").display()));
        }
        Command::Verify { selector, out, seed, samples, inject_bregman_fault } => {
            let opts = VerifyOptions { samples, seed, bregman_offset: inject_bregman_fault };
            let outcome = cmd_verify(&selector, &opts, &out)?;
            for r in &outcome.reports {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                report(quiet, format!("{status} {}: {}/{} held", r.lemma, r.samples - r.violations, r.samples));
            }
            for w in &outcome.witnesses {
                // failures are reported even in quiet mode
                eprintln!("witness: {}", w.display());
            }
            if !outcome.passed() {
                return Ok(1);
            }
        }
        Command::GenMdp { config, out, seed } => {
            let mdp = cmd_gen_mdp(&config, seed, &out)?;
            report(quiet, format!("wrote {} ({} states, {} actions)", display(&out), mdp.n_states(), mdp.n_actions()));
        }
    }
    Ok(0)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
