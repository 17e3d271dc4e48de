use std::ops::Range;

use serde::Serialize;

use super::DlbcError;

/// How one template entry splits the remaining iterations: one range per
/// spawned chunk, then whatever the current worker keeps for itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub chunks: Vec<Range<i64>>,
    pub parent: Range<i64>,
}

impl Partition {
    /// Lengths of every assigned range, chunks first.
    pub fn lengths(&self) -> Vec<i64> {
        self.chunks
            .iter()
            .chain(std::iter::once(&self.parent))
            .map(|r| r.end - r.start)
            .collect()
    }

    /// Chunk sizes followed by the parent size, e.g. `{3,3,2|2}`.
    pub fn describe(&self) -> String {
        let sizes: Vec<String> = self.chunks.iter().map(|r| (r.end - r.start).to_string()).collect();
        format!("{{{}|{}}}", sizes.join(","), self.parent.end - self.parent.start)
    }
}

/// Replays the chunking arithmetic of the generated template for `actualn`
/// remaining iterations starting at `start`, with `workers` idle workers.
pub fn compute_partition(actualn: i64, workers: i64, start: i64) -> Result<Partition, DlbcError> {
    if workers < 1 || actualn < 1 {
        return Err(DlbcError::Domain { actualn, workers });
    }
    let tot_workers = workers + 1;
    let eq_chunk = actualn / tot_workers;
    let new_n = actualn - eq_chunk;
    let mut rem = actualn % tot_workers + workers;
    let mut chunks = Vec::new();
    let mut ii = 0;
    while ii < new_n {
        let kx = ii + eq_chunk + rem / tot_workers;
        chunks.push(start + ii..start + kx);
        rem -= 1;
        ii = kx;
    }
    Ok(Partition {
        chunks,
        parent: start + new_n..start + actualn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uneven_split_gives_parent_the_small_share() {
        let p = compute_partition(10, 3, 0).unwrap();
        assert_eq!(p.chunks, vec![0..3, 3..6, 6..8]);
        assert_eq!(p.parent, 8..10);
        assert_eq!(p.describe(), "{3,3,2|2}");
    }

    #[test]
    fn even_split() {
        let p = compute_partition(12, 3, 0).unwrap();
        assert_eq!(p.lengths(), vec![3, 3, 3, 3]);
    }

    #[test]
    fn fewer_iterations_than_workers() {
        let p = compute_partition(1, 3, 0).unwrap();
        assert_eq!(p.chunks, vec![0..1]);
        assert!(p.parent.is_empty());
    }

    #[test]
    fn offset_by_start() {
        let p = compute_partition(10, 3, 5).unwrap();
        assert_eq!(p.chunks[0], 5..8);
        assert_eq!(p.parent, 13..15);
    }

    #[test]
    fn rejects_empty_domain() {
        assert!(compute_partition(0, 3, 0).is_err());
        assert!(compute_partition(3, 0, 0).is_err());
    }
}
