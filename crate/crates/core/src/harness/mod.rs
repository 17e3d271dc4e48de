//! Benchmark kernels, the optimization pipeline and report emission.

mod kernels;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernels::{kernel, Kernel, KERNELS};
pub use report::{read_jsonl, summarize, write_csv, write_jsonl, Report, Summary};

use crate::afe::{lower_pending, run_afe, AfeReport, Mode};
use crate::dlbc::{chunk_program, Chunking, DlbcReport};
use crate::frontend::{parse_str, FrontendError};
use crate::ir::{well_formed, Diagnostic, Program};
use crate::runtime::{run, serial_oracle, Exc, RunError, RuntimeConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptLevel {
    None,
    /// Static loop chunking, one chunk per worker.
    Lc,
    Afe,
    Dlbc,
    /// AFE followed by DLBC.
    Dcafe,
}

impl OptLevel {
    pub const ALL: [OptLevel; 5] = [OptLevel::None, OptLevel::Lc, OptLevel::Afe, OptLevel::Dlbc, OptLevel::Dcafe];

    pub fn name(self) -> &'static str {
        match self {
            OptLevel::None => "none",
            OptLevel::Lc => "lc",
            OptLevel::Afe => "afe",
            OptLevel::Dlbc => "dlbc",
            OptLevel::Dcafe => "dcafe",
        }
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptLevel {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OptLevel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| HarnessError::Usage(format!("unknown opt level `{s}`")))
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("{stage} produced an ill-formed program:\n{}", render(.diagnostics))]
    IllFormed {
        stage: &'static str,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{kernel} at {level} on {workers} workers: {source}")]
    Run {
        kernel: String,
        level: OptLevel,
        workers: usize,
        #[source]
        source: RunError,
    },
    #[error("semantic violation: {kernel} at {level} on {workers} workers gave {got}, oracle gave {want}")]
    SemanticViolation {
        kernel: String,
        level: OptLevel,
        workers: usize,
        want: String,
        got: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Errors where an optimized program diverged from its source.
    pub fn is_semantic(&self) -> bool {
        matches!(
            self,
            HarnessError::SemanticViolation { .. } | HarnessError::Run { .. } | HarnessError::IllFormed { .. }
        )
    }
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// An optimized program together with what each pass did.
#[derive(Clone, Debug)]
pub struct Built {
    pub program: Program,
    pub afe: Option<AfeReport>,
    pub dlbc: Option<DlbcReport>,
}

fn checked(stage: &'static str, program: Program) -> Result<Program, HarnessError> {
    let diagnostics = well_formed(&program);
    if diagnostics.is_empty() {
        Ok(program)
    } else {
        Err(HarnessError::IllFormed { stage, diagnostics })
    }
}

/// Applies the passes of `level` in order, re-checking the program after
/// each one.
pub fn pipeline(program: &Program, level: OptLevel, mode: Mode) -> Result<Built, HarnessError> {
    let mut built = Built {
        program: program.clone(),
        afe: None,
        dlbc: None,
    };
    if matches!(level, OptLevel::Afe | OptLevel::Dcafe) {
        let (p, report) = run_afe(&built.program, mode);
        built.program = checked("afe", p)?;
        built.afe = Some(report);
    }
    let chunking = match level {
        OptLevel::Lc => Some(Chunking::Static),
        OptLevel::Dlbc | OptLevel::Dcafe => Some(Chunking::LoadBalanced),
        _ => None,
    };
    if let Some(how) = chunking {
        let (p, report) = chunk_program(&built.program, how);
        built.program = checked("dlbc", p)?;
        built.dlbc = Some(report);
    }
    if built.afe.is_some() {
        built.program = checked("lowering", lower_pending(&built.program))?;
    }
    Ok(built)
}

/// Parses a kernel and runs the pipeline on it.
pub fn build_kernel(k: &Kernel, level: OptLevel) -> Result<Built, HarnessError> {
    let program = parse_str(k.source)?;
    pipeline(&program, level, mode_for(k))
}

pub fn mode_for(k: &Kernel) -> Mode {
    if k.throws {
        Mode::Exceptions
    } else {
        Mode::Plain
    }
}

/// What a run must reproduce: the final store and the escaped exception,
/// up to task completion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expected {
    pub checksum: u64,
    pub exception: Option<Exc>,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "checksum {:016x}", self.checksum)?;
        match &self.exception {
            Some(e) => write!(f, ", exception {e}"),
            None => write!(f, ", no exception"),
        }
    }
}

/// Serial run of the unoptimized kernel.
pub fn oracle(k: &Kernel, input: &[i64]) -> Result<Expected, HarnessError> {
    let program = parse_str(k.source)?;
    let r = serial_oracle(&program, input).map_err(|source| HarnessError::Run {
        kernel: k.name.into(),
        level: OptLevel::None,
        workers: 1,
        source,
    })?;
    Ok(Expected {
        checksum: r.checksum,
        exception: r.exception.as_ref().map(Exc::canonical),
    })
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub kernels: Vec<String>,
    pub levels: Vec<OptLevel>,
    pub workers: Vec<usize>,
    pub repeats: usize,
    /// Scheduling jitter seed per repeat; `None` runs the plain policy.
    pub seeds: Option<Vec<u64>>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            kernels: KERNELS.iter().map(|k| k.name.to_string()).collect(),
            levels: OptLevel::ALL.to_vec(),
            workers: vec![1, 2, 4, 8],
            repeats: 10,
            seeds: None,
        }
    }
}

/// Runs the cross product of kernels, levels and worker counts, one cell
/// after the other, checking every run against the serial oracle.
pub fn bench(cfg: &BenchConfig, mut progress: impl FnMut(&Report)) -> Result<Vec<Report>, HarnessError> {
    let mut out = Vec::new();
    for name in &cfg.kernels {
        let k = kernel(name).ok_or_else(|| HarnessError::Usage(format!("unknown kernel `{name}`")))?;
        let want = oracle(k, k.input)?;
        for &level in &cfg.levels {
            let built = build_kernel(k, level)?;
            let rule_log = built
                .afe
                .as_ref()
                .map(|r| r.firings.iter().map(|f| f.rule).collect())
                .unwrap_or_default();
            for &workers in &cfg.workers {
                for repeat in 0..cfg.repeats.max(1) {
                    let seed = cfg.seeds.as_ref().and_then(|s| s.get(repeat % s.len().max(1)).copied());
                    let config = RuntimeConfig {
                        seed,
                        ..RuntimeConfig::with_workers(workers)
                    };
                    let r = run(&built.program, &config, k.input).map_err(|source| HarnessError::Run {
                        kernel: k.name.into(),
                        level,
                        workers,
                        source,
                    })?;
                    let got = Expected {
                        checksum: r.checksum,
                        exception: r.exception.as_ref().map(Exc::canonical),
                    };
                    if got != want {
                        return Err(HarnessError::SemanticViolation {
                            kernel: k.name.into(),
                            level,
                            workers,
                            want: want.to_string(),
                            got: got.to_string(),
                        });
                    }
                    let report = Report {
                        kernel: k.name.into(),
                        opt_level: level,
                        n_workers: workers,
                        repeat,
                        seed,
                        counters: r.counters,
                        checksum: r.checksum,
                        exception: got.exception.map(|e| e.to_string()),
                        elapsed_us: r.elapsed.as_micros() as u64,
                        rule_log: Vec::clone(&rule_log),
                    };
                    progress(&report);
                    out.push(report);
                }
            }
        }
    }
    Ok(out)
}
