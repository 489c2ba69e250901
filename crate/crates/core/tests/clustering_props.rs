use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use replyclass_core::clustering::{
    clique_violations, complete_linkage_cluster, kmeans_baseline, naive_complete_linkage_oracle, Partition,
};
use replyclass_core::embeddings::{EmbeddingMatrix, EncoderSpec};
use replyclass_core::similarity::SparseDistanceMatrix;
use replyclass_core::Exec;

/// Random sparse instance: each pair is a candidate with probability
/// `density`; distances are multiples of 0.05 when `coarse` so ties are common.
fn instance(n: usize, density: f64, coarse: bool, seed: u64) -> (SparseDistanceMatrix, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sparse = SparseDistanceMatrix::new(n);
    let mut dense = vec![vec![1.0; n]; n];
    for (i, row) in dense.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                let d = if coarse {
                    rng.gen_range(0..=20) as f64 * 0.05
                } else {
                    rng.gen::<f64>()
                };
                sparse.insert(i as u32, j as u32, d).unwrap();
                dense[i][j] = d;
                dense[j][i] = d;
            }
        }
    }
    (sparse, dense)
}

fn permuted(d: &[Vec<f64>], perm: &[usize]) -> (SparseDistanceMatrix, Vec<Vec<f64>>) {
    let n = d.len();
    let mut sparse = SparseDistanceMatrix::new(n);
    let mut dense = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            dense[perm[i]][perm[j]] = d[i][j];
            if i < j && d[i][j] < 1.0 {
                sparse.insert(perm[i] as u32, perm[j] as u32, d[i][j]).unwrap();
            }
        }
    }
    (sparse, dense)
}

fn unpermute(p: &Partition, perm: &[usize]) -> Partition {
    let mut inverse = vec![0; perm.len()];
    for (i, &pi) in perm.iter().enumerate() {
        inverse[pi] = i as u32;
    }
    Partition::new(p.groups().iter().map(|g| g.iter().map(|&m| inverse[m as usize]).collect()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_oracle(n in 1usize..=12, density in 0.3f64..=1.0, t in prop::sample::select(vec![0.1, 0.25, 0.5]), seed: u64) {
        let (sparse, dense) = instance(n, density, true, seed);
        let fast = complete_linkage_cluster(&sparse, t).unwrap();
        prop_assert_eq!(&fast, &naive_complete_linkage_oracle(&dense, t).unwrap());
        prop_assert!(clique_violations(&fast, &sparse, t).is_empty());
    }

    #[test]
    fn refines_across_thresholds(n in 1usize..=30, density in 0.1f64..=1.0, seed: u64, t1 in 0.01f64..1.0, t2 in 0.01f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (sparse, _) = instance(n, density, true, seed);
        let fine = complete_linkage_cluster(&sparse, lo).unwrap();
        let coarse = complete_linkage_cluster(&sparse, hi).unwrap();
        prop_assert!(fine.refines(&coarse));
    }

    #[test]
    fn permutation_with_tie_rule(n in 2usize..=12, density in 0.3f64..=1.0, seed: u64, perm_seed: u64) {
        let (_, dense) = instance(n, density, true, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(perm_seed));
        let (ps, pd) = permuted(&dense, &perm);
        prop_assert_eq!(complete_linkage_cluster(&ps, 0.25).unwrap(), naive_complete_linkage_oracle(&pd, 0.25).unwrap());
    }

    #[test]
    fn permutation_invariant_without_ties(n in 2usize..=40, density in 0.2f64..=1.0, seed: u64, perm_seed: u64) {
        let (sparse, dense) = instance(n, density, false, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(perm_seed));
        let (ps, _) = permuted(&dense, &perm);
        let base = complete_linkage_cluster(&sparse, 0.5).unwrap();
        prop_assert_eq!(unpermute(&complete_linkage_cluster(&ps, 0.5).unwrap(), &perm), base);
    }
}

#[test]
fn large_instance_keeps_cliques() {
    let (sparse, _) = instance(400, 0.05, true, 99);
    let p = complete_linkage_cluster(&sparse, 0.25).unwrap();
    assert!(clique_violations(&p, &sparse, 0.25).is_empty());
    assert_eq!(p.groups().iter().map(Vec::len).sum::<usize>(), 400);
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = Vec::new();
    for i in 0..40 {
        let center = if i < 20 { [10.0, 0.0] } else { [-10.0, 5.0] };
        rows.push(vec![center[0] + rng.gen_range(-1.0..1.0), center[1] + rng.gen_range(-1.0..1.0)]);
    }
    let mat = EmbeddingMatrix::from_dense(EncoderSpec::AvgWordvec, 2, rows.clone()).unwrap();
    let r = kmeans_baseline(&mat, 2, 3, Exec::default()).unwrap();
    assert_eq!(r.partition, Partition::new(vec![(0..20).collect(), (20..40).collect()]));

    // brute-force check: every point sits with the nearer of the two means
    let means: Vec<Vec<f64>> = r
        .partition
        .groups()
        .iter()
        .map(|g| {
            let n = g.len() as f64;
            (0..2).map(|d| g.iter().map(|&i| rows[i as usize][d]).sum::<f64>() / n).collect()
        })
        .collect();
    for (gi, g) in r.partition.groups().iter().enumerate() {
        for &i in g {
            let dist = |m: &Vec<f64>| (0..2).map(|d| (rows[i as usize][d] - m[d]).powi(2)).sum::<f64>();
            assert!(dist(&means[gi]) <= dist(&means[1 - gi]));
        }
    }
    assert!(r.converged);
}
