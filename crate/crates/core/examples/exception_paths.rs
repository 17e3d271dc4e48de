//! Finish elimination in exceptions mode keeps the exception a program
//! ends with, including how deeply it is wrapped.

use finch::afe::Mode;
use finch::frontend::pretty;
use finch::harness::{kernel, pipeline, OptLevel};
use finch::runtime::{run, serial_oracle, RuntimeConfig};

fn main() {
    let k = kernel("exc_nested").unwrap();
    let source = finch::frontend::parse_str(k.source).unwrap();
    let optimized = pipeline(&source, OptLevel::Dcafe, Mode::Exceptions).unwrap().program;
    print!("{}", pretty(&optimized));

    let want = serial_oracle(&source, k.input).unwrap().exception.unwrap();
    println!("\nunoptimized: {want}");
    for workers in [1, 4] {
        let got = run(&optimized, &RuntimeConfig::with_workers(workers), k.input)
            .unwrap()
            .exception
            .unwrap();
        println!(
            "optimized on {workers} workers: {got} (same up to order: {})",
            got.canonical() == want.canonical()
        );
    }
}
