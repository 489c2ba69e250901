use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Partition;
use crate::embeddings::EmbeddingMatrix;
use crate::{Error, Exec, ResponseId, Result};

pub const KMEANS_MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm on the rows of `mat` (squared Euclidean distance).
///
/// Initial centroids are the first `k` pairwise-distinct rows of a seeded
/// shuffle (duplicates fill in when there are fewer distinct rows). Runs
/// until assignments stop changing or for [`KMEANS_MAX_ITERATIONS`]. Empty
/// clusters keep their previous centroid and are dropped from the output.
pub fn kmeans_baseline(mat: &EmbeddingMatrix, k: usize, seed: u64, exec: Exec) -> Result<KMeansResult> {
    let n = mat.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={n}"
        )));
    }
    let points: Vec<Vec<f64>> = (0..n as ResponseId).map(|i| mat.row_dense(i)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for &i in &order {
        if chosen.len() == k {
            break;
        }
        if chosen.iter().all(|&c| points[c] != points[i]) {
            chosen.push(i);
        }
    }
    for &i in &order {
        if chosen.len() == k {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();

    let dim = mat.dimension();
    let mut assignment: Vec<usize> = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < KMEANS_MAX_ITERATIONS {
        iterations += 1;
        let next: Vec<usize> = exec.map(&points, |p| nearest(p, &centroids).0);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    let inertia: f64 = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    let mut groups: Vec<Vec<ResponseId>> = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        groups[c].push(i as ResponseId);
    }
    groups.retain(|g| !g.is_empty());
    Ok(KMeansResult {
        partition: Partition::new(groups),
        inertia,
        iterations,
        converged,
    })
}
