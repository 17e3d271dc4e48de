//! A small benchmark table: counts per kernel and level, aggregated the
//! way `finchc bench` writes its CSV.

use finch::harness::{bench, summarize, write_csv, BenchConfig, OptLevel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BenchConfig {
        kernels: vec!["nqueens".into(), "byzantine".into(), "clocked_bfs".into()],
        levels: vec![OptLevel::None, OptLevel::Lc, OptLevel::Afe, OptLevel::Dcafe],
        workers: vec![4],
        repeats: 3,
        seeds: None,
    };
    let reports = bench(&cfg, |_| {})?;
    write_csv(&summarize(&reports), std::io::stdout())?;
    Ok(())
}
