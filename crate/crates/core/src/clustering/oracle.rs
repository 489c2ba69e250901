use super::{check_threshold, Partition};
use crate::{Error, ResponseId, Result};

pub const ORACLE_MAX_SIZE: usize = 16;

/// Textbook O(n³) complete-linkage agglomeration over a dense symmetric
/// matrix. Same merge rule, threshold semantics and tie-break as
/// [`complete_linkage_cluster`](super::complete_linkage_cluster); exists to
/// check it.
pub fn naive_complete_linkage_oracle(d: &[Vec<f64>], threshold: f64) -> Result<Partition> {
    check_threshold(threshold)?;
    let n = d.len();
    if n > ORACLE_MAX_SIZE {
        return Err(Error::InvalidArgument(format!(
            "oracle limited to {ORACLE_MAX_SIZE} items, got {n}"
        )));
    }
    for (i, row) in d.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        for j in 0..n {
            if d[i][j] != d[j][i] {
                return Err(Error::InvalidArgument(format!("not symmetric at ({i}, {j})")));
            }
        }
    }

    // kept sorted by lowest member, so list index order is cluster id order
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut linkage = f64::NEG_INFINITY;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        linkage = linkage.max(d[i][j]);
                    }
                }
                if best.is_none_or(|(l, _, _)| linkage < l) {
                    best = Some((linkage, a, b));
                }
            }
        }
        match best {
            Some((l, a, b)) if l < threshold => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
                clusters[a].sort_unstable();
            }
            _ => break,
        }
    }
    Ok(Partition::new(
        clusters
            .into_iter()
            .map(|c| c.into_iter().map(|i| i as ResponseId).collect())
            .collect(),
    ))
}
