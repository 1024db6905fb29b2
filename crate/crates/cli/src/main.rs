use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use uwbbounds_cli::error::exit;
use uwbbounds_cli::figure::write_figure_csv;
use uwbbounds_cli::oracle_suite::run_oracle_suite;
use uwbbounds_cli::{emit_figure_data, load_config, run_sweep, write_csv, CliError, RunOptions, SweepVar};
use uwbbounds_core::Preset;

/// Monte-Carlo bounds on the achievable rate of IR-UWB links under
/// multi-user interference. Rates are in bits per symbol.
#[derive(Debug, Parser)]
#[command(name = "uwbbounds", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    /// N = 80, M = 5
    Paper,
    /// N = 40, M = 3
    Desk,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the configured sweep and write a CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `seed` key.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Defaults applied before the config file's keys.
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// Also write lower-bound rates normalized by the rate at the
        /// reference interferer distance.
        #[arg(long)]
        figure: Option<PathBuf>,
        #[arg(long, default_value_t = 100.0)]
        reference_distance: f64,
        /// Fill the wall_s column (makes the CSV run-dependent).
        #[arg(long)]
        record_timing: bool,
    },
    /// Check a config and print the effective configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Cross-check the closed-form overlap against the brute-force oracle.
    Oracle {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_rows(path: &Path, rows: &[uwbbounds_cli::ResultRow]) -> Result<(), CliError> {
    write_csv(rows, BufWriter::new(File::create(path)?))
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    preset: Option<PresetArg>,
    figure: Option<&Path>,
    reference: f64,
    record_timing: bool,
) -> Result<(), CliError> {
    let mut spec = load_config(config, preset.map(Into::into))?;
    if let Some(seed) = seed {
        spec = spec.with_seed(seed);
    }
    if figure.is_some() && spec.base.num_nodes >= 2 {
        let has_reference = match spec.sweep.0.iter().find(|(v, _)| *v == SweepVar::D) {
            Some((_, values)) => values.contains(&reference),
            None => spec.base.interferer_distances_m[0] == reference,
        };
        if !has_reference || !spec.bounds.lower() {
            return Err(CliError::Invariant {
                key: "sweep.d".into(),
                message: format!("must include the reference distance {reference} m for --figure"),
            });
        }
    }
    std::fs::write(sidecar(out, ".config.json"), spec.to_json() + "\n")?;
    eprintln!("{} sweep point(s), seed {}", spec.num_points(), spec.seed());
    let rows = match run_sweep(
        &spec,
        RunOptions {
            record_timing,
            progress: true,
        },
    ) {
        Ok(rows) => rows,
        Err(failure) => {
            let partial = sidecar(out, ".partial");
            write_rows(&partial, &failure.completed)?;
            eprintln!("partial results written to {}", partial.display());
            return Err(failure.error);
        }
    };
    write_rows(out, &rows)?;
    eprintln!("wrote {} row(s) to {}", rows.len(), out.display());
    if let Some(path) = figure {
        let table = emit_figure_data(&rows, reference).map_err(|e| CliError::Invariant {
            key: "sweep.d".into(),
            message: e.to_string(),
        })?;
        write_figure_csv(&table, BufWriter::new(File::create(path)?))?;
        eprintln!("wrote figure table to {}", path.display());
    }
    Ok(())
}

fn oracle(instances: usize, seed: u64) -> bool {
    let outcomes = run_oracle_suite(instances, seed);
    for o in &outcomes {
        for c in &o.checks {
            println!(
                "{} instance {:>3} (I={}, MN={}) {:<11} closed={:.9e} oracle={:.9e} se={:.2e}",
                if c.passed { "PASS" } else { "FAIL" },
                o.index,
                o.nodes,
                o.dim,
                c.mode,
                o.closed_form,
                c.oracle,
                c.std_error
            );
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    println!("{} of {} instances passed", outcomes.len() - failed, outcomes.len());
    failed == 0
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("UWBBOUNDS_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| format!("UWBBOUNDS_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            preset,
            figure,
            reference_distance,
            record_timing,
        } => run(&config, seed, &out, preset, figure.as_deref(), reference_distance, record_timing),
        Command::Validate { config, preset } => load_config(&config, preset.map(Into::into)).map(|spec| {
            println!("{}", spec.to_json());
            eprintln!("valid: {} sweep point(s)", spec.num_points());
        }),
        Command::Oracle { instances, seed } => {
            return if oracle(instances, seed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(exit::IO as u8))
        }
    }
}
