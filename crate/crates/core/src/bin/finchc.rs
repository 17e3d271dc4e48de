use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use finch::afe::Mode;
use finch::analysis::dump_facts;
use finch::frontend::{load, pretty};
use finch::harness::{bench, pipeline, summarize, write_csv, write_jsonl, BenchConfig, Built, HarnessError, OptLevel};
use finch::runtime::{run, serial_oracle, Exc, RuntimeConfig};

#[derive(Parser)]
#[command(name = "finchc", version, about = "Finch optimizer, runner and benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a program and print it.
    Build {
        file: PathBuf,
        #[command(flatten)]
        opt: OptArgs,
        /// Print which loops were chunked and why others were not.
        #[arg(long)]
        dump_dlbc: bool,
        /// Print every AFE rule firing as JSON lines.
        #[arg(long)]
        afe_trace: bool,
        /// Print the analysis facts of the input program as JSON.
        #[arg(long)]
        dump_facts: bool,
    },
    /// Optimize and execute a program, checking it against the serial oracle.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opt: OptArgs,
        /// Worker count; defaults to FINCH_NTHREADS, then 1.
        #[arg(long)]
        workers: Option<usize>,
        /// Print the event trace as JSON lines.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Arguments for `main`, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        input: Vec<i64>,
    },
    /// Run the kernel corpus across levels and worker counts.
    Bench {
        #[arg(long, value_delimiter = ',')]
        kernels: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<OptLevel>>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// JSON-lines output; the aggregated CSV goes next to it.
        #[arg(long, default_value = "report.jsonl")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct OptArgs {
    #[arg(long, default_value = "none")]
    opt: OptLevel,
    /// Optimize for programs that throw.
    #[arg(long)]
    exceptions: bool,
}

impl OptArgs {
    fn mode(&self) -> Mode {
        if self.exceptions {
            Mode::Exceptions
        } else {
            Mode::Plain
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Frontend(#[from] finch::frontend::FrontendError),
    #[error(transparent)]
    Run(#[from] finch::runtime::RunError),
    #[error("semantic violation: optimized run gave {got}, serial oracle gave {want}")]
    Mismatch { want: String, got: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Harness(e) if e.is_semantic() => 2,
            CliError::Run(_) | CliError::Mismatch { .. } => 2,
            _ => 1,
        }
    }
}

fn build(file: &Path, opt: &OptArgs) -> Result<(finch::ir::Program, Built), CliError> {
    let program = load(file)?;
    let built = pipeline(&program, opt.opt, opt.mode())?;
    Ok((program, built))
}

fn outcome(checksum: u64, exception: &Option<Exc>) -> String {
    match exception {
        Some(e) => format!("checksum {checksum:016x}, exception {}", e.canonical()),
        None => format!("checksum {checksum:016x}"),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Build {
            file,
            opt,
            dump_dlbc,
            afe_trace,
            dump_facts: facts,
        } => {
            let (source, built) = build(&file, &opt)?;
            if facts {
                serde_json::to_writer_pretty(&mut out, &dump_facts(&source))?;
                writeln!(out)?;
            }
            if afe_trace {
                if let Some(r) = &built.afe {
                    write!(out, "{}", r.trace_jsonl())?;
                }
            }
            if dump_dlbc {
                if let Some(r) = &built.dlbc {
                    serde_json::to_writer_pretty(&mut out, r)?;
                    writeln!(out)?;
                }
            }
            write!(out, "{}", pretty(&built.program))?;
        }
        Command::Run {
            file,
            opt,
            workers,
            trace,
            seed,
            input,
        } => {
            let (source, built) = build(&file, &opt)?;
            let mut config = match workers {
                Some(w) => RuntimeConfig::with_workers(w.max(1)),
                None => RuntimeConfig::from_env(),
            };
            config.seed = seed;
            config.trace = trace;
            let want = serial_oracle(&source, &input)?;
            let r = run(&built.program, &config, &input)?;
            if trace {
                for e in &r.trace {
                    serde_json::to_writer(&mut out, e)?;
                    writeln!(out)?;
                }
            }
            writeln!(out, "{}", outcome(r.checksum, &r.exception))?;
            writeln!(
                out,
                "asyncs {} finishes {} advances {} on {} workers in {:?}",
                r.counters.asyncs, r.counters.finishes, r.counters.advances, config.workers, r.elapsed
            )?;
            let (want, got) = (
                outcome(want.checksum, &want.exception),
                outcome(r.checksum, &r.exception),
            );
            if want != got {
                return Err(CliError::Mismatch { want, got });
            }
        }
        Command::Bench {
            kernels,
            levels,
            workers,
            repeats,
            seeds,
            out: path,
        } => {
            let defaults = BenchConfig::default();
            let cfg = BenchConfig {
                kernels: kernels.unwrap_or(defaults.kernels),
                levels: levels.unwrap_or(defaults.levels),
                workers,
                repeats,
                seeds,
            };
            let reports = bench(&cfg, |r| {
                eprintln!(
                    "{:12} {:6} w={:<2} #{:<2} asyncs={:<7} finishes={:<6} {}us",
                    r.kernel, r.opt_level, r.n_workers, r.repeat, r.counters.asyncs, r.counters.finishes, r.elapsed_us
                )
            })?;
            write_jsonl(&reports, BufWriter::new(File::create(&path)?))?;
            let csv_path = path.with_extension("csv");
            write_csv(&summarize(&reports), BufWriter::new(File::create(&csv_path)?))?;
            writeln!(out, "{} runs -> {} and {}", reports.len(), path.display(), csv_path.display())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors; 2 is reserved for semantic
    // violations here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("finchc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
