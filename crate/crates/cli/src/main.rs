use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use divmin_cli::config::ExperimentConfig;
use divmin_cli::run::{gradcheck, run, write_artifacts, RunError};
use divmin_cli::suite::{run_suite, SuiteOptions};
use divmin_cli::{exit, list_text, thread_limit};

#[derive(Parser)]
#[command(name = "divmin", version, about = "Exact joint-KL decompositions, objectives and optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity, bound and gradient suite on seeded random instances.
    Verify {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// Multiply every tolerance by this factor.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// Also write the JSON summary to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only run checks with these tags.
        #[arg(long = "check")]
        only: Vec<String>,
        #[arg(long, hide = true)]
        corrupt: Vec<String>,
    },
    /// Optimize the configured objective and write trace.csv, report.json, terms.svg.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate and print the resolved config without computing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Compare analytic and central-difference gradients at five seeded points.
    Gradcheck { config: PathBuf },
    /// List objective families, presets and schema versions.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::PASS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    ExitCode::from(dispatch(cli.command) as u8)
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, i32> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e:#}");
        exit::USAGE
    })
}

fn report_run_error(e: RunError) -> i32 {
    match e {
        RunError::Divergent(m) => {
            eprintln!("diverged: {m}");
            exit::DIVERGENCE
        }
        RunError::Other(e) => {
            eprintln!("error: {e:#}");
            exit::USAGE
        }
    }
}

fn dispatch(command: Command) -> i32 {
    match command {
        Command::List => {
            print!("{}", list_text());
            exit::PASS
        }
        Command::Verify {
            seeds,
            tol_scale,
            out,
            only,
            corrupt,
        } => {
            if !(tol_scale > 0.0 && tol_scale.is_finite()) {
                eprintln!("error: --tol-scale must be positive");
                return exit::USAGE;
            }
            let known: Vec<&str> = divmin_cli::suite::CHECKS.iter().map(|c| c.tag).collect();
            if let Some(t) = only.iter().chain(&corrupt).find(|t| !known.contains(&t.as_str())) {
                eprintln!("error: unknown check `{t}`; known: {}", known.join(", "));
                return exit::USAGE;
            }
            let mut pool = rayon::ThreadPoolBuilder::new();
            match thread_limit() {
                Ok(Some(n)) => pool = pool.num_threads(n),
                Ok(None) => {}
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit::USAGE;
                }
            }
            let pool = match pool.build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit::USAGE;
                }
            };
            let options = SuiteOptions {
                seeds,
                tol_scale,
                corrupt,
                only,
            };
            let result = pool.install(|| run_suite(&options));
            for c in &result.checks {
                eprintln!(
                    "{} {:<22} max {:.3e}  tol {:.0e}  seeds {}{}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.tag,
                    c.max_violation,
                    c.tolerance,
                    c.seeds_run,
                    c.errors.first().map(|e| format!("  ({e})")).unwrap_or_default()
                );
            }
            let json = serde_json::to_string_pretty(&result).expect("suite result serializes") + "\n";
            print!("{json}");
            if let Some(path) = out {
                if let Err(e) = std::fs::write(&path, &json) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return exit::USAGE;
                }
            }
            if result.passed {
                exit::PASS
            } else {
                let failing: Vec<&str> = result.failing().map(|c| c.tag.as_str()).collect();
                eprintln!("failing: {}", failing.join(", "));
                exit::FAILURE
            }
        }
        Command::Run { config, out, dry_run } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if dry_run {
                if let Err(e) = cfg.objective() {
                    eprintln!("error: {e:#}");
                    return exit::USAGE;
                }
                println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
                return exit::PASS;
            }
            let outcome = match run(&cfg) {
                Ok(o) => o,
                Err(e) => return report_run_error(e),
            };
            let dir = cfg.out_dir(out.as_deref());
            if let Err(e) = write_artifacts(&outcome, &dir) {
                eprintln!("error: {e:#}");
                return exit::USAGE;
            }
            let r = &outcome.report;
            eprintln!(
                "{}: {} after {} iterations, total {:.9}, joint KL {:.9}",
                r.family,
                r.termination.as_str(),
                r.iterations,
                r.breakdown.total(),
                r.breakdown.report.joint_kl
            );
            for (name, value) in &r.breakdown.report.terms {
                eprintln!("  {name:<28} {value:.9}");
            }
            eprintln!("wrote {}", dir.display());
            exit::PASS
        }
        Command::Gradcheck { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let result = match gradcheck(&cfg) {
                Ok(r) => r,
                Err(e) => return report_run_error(e),
            };
            for p in &result.points {
                eprintln!(
                    "point {}: max relative deviation {:.3e} at {}",
                    p.index,
                    p.max_relative_deviation,
                    if p.worst_coordinate.is_empty() { "-" } else { &p.worst_coordinate }
                );
            }
            println!("{}", serde_json::to_string_pretty(&result).expect("result serializes"));
            if result.passed {
                exit::PASS
            } else {
                exit::FAILURE
            }
        }
    }
}
