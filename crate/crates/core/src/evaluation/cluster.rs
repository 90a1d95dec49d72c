use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn check_draws(label_draws: &[Vec<usize>]) -> Result<usize> {
    let first = label_draws
        .first()
        .ok_or_else(|| Error::InvalidInput("no label draws".into()))?;
    let p = first.len();
    if let Some(bad) = label_draws.iter().position(|d| d.len() != p) {
        return Err(Error::DimensionMismatch(format!(
            "label draw {bad} has {} entries, expected {p}",
            label_draws[bad].len()
        )));
    }
    Ok(p)
}

/// Fraction of draws in which each pair of predictors shares a label. The
/// null label counts as a shared label.
pub fn coclustering_matrix(label_draws: &[Vec<usize>]) -> Result<DMatrix<f64>> {
    let p = check_draws(label_draws)?;
    let mut counts = DMatrix::<u64>::zeros(p, p);
    for draw in label_draws {
        for i in 0..p {
            for j in i + 1..p {
                if draw[i] == draw[j] {
                    counts[(i, j)] += 1;
                }
            }
        }
    }
    let s = label_draws.len() as f64;
    Ok(DMatrix::from_fn(p, p, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => counts[(i, j)] as f64 / s,
        std::cmp::Ordering::Greater => counts[(j, i)] as f64 / s,
    }))
}

/// Per-predictor fraction of draws with the null label.
pub fn percent_zero(label_draws: &[Vec<usize>]) -> Result<Vec<f64>> {
    let p = check_draws(label_draws)?;
    let s = label_draws.len() as f64;
    Ok((0..p)
        .map(|i| label_draws.iter().filter(|d| d[i] == 0).count() as f64 / s)
        .collect())
}

/// Indices of predictors whose null frequency is below `cutoff`.
pub fn select_nonzero(percent_zero: &[f64], cutoff: f64) -> Vec<usize> {
    (0..percent_zero.len()).filter(|&i| percent_zero[i] < cutoff).collect()
}

/// The stored draw whose co-clustering indicator matrix is closest in squared
/// error to the posterior co-clustering matrix.
pub fn least_squares_partition(label_draws: &[Vec<usize>]) -> Result<Vec<usize>> {
    let pi = coclustering_matrix(label_draws)?;
    let p = pi.nrows();
    let loss = |draw: &[usize]| -> f64 {
        let mut acc = 0.0;
        for i in 0..p {
            for j in i + 1..p {
                let d = if draw[i] == draw[j] { 1.0 } else { 0.0 } - pi[(i, j)];
                acc += d * d;
            }
        }
        acc
    };
    let mut best = 0;
    let mut best_loss = f64::INFINITY;
    for (s, draw) in label_draws.iter().enumerate() {
        let l = loss(draw);
        if l < best_loss {
            best_loss = l;
            best = s;
        }
    }
    Ok(label_draws[best].clone())
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed at step `s`
/// gets id `n + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub step: usize,
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Average-linkage agglomerative clustering on `1 - coclustering`.
///
/// Ties go to the pair found first in a row-major scan over active clusters
/// ordered by id.
pub fn dendrogram(coclustering: &DMatrix<f64>) -> Result<Vec<Merge>> {
    let n = coclustering.nrows();
    if coclustering.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "co-clustering matrix is {}x{}",
            n,
            coclustering.ncols()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = coclustering[(i, j)];
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite entry at ({i}, {j})")));
            }
            if (v - coclustering[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidInput(format!(
                    "co-clustering matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    // distances between active clusters, indexed by slot; slot i starts as leaf i
    let mut dist = DMatrix::from_fn(n, n, |i, j| 1.0 - coclustering[(i, j)]);
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        active.sort_by_key(|&s| ids[s]);
        let mut best = (active[0], active[1]);
        let mut best_d = f64::INFINITY;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                if dist[(a, b)] < best_d {
                    best_d = dist[(a, b)];
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
        for &k in &active {
            if k != a && k != b {
                let d = (na * dist[(a, k)] + nb * dist[(b, k)]) / (na + nb);
                dist[(a, k)] = d;
                dist[(k, a)] = d;
            }
        }
        let (left, right) = (ids[a].min(ids[b]), ids[a].max(ids[b]));
        sizes[a] += sizes[b];
        ids[a] = n + step;
        active.retain(|&s| s != b);
        merges.push(Merge {
            step,
            left,
            right,
            height: best_d,
            size: sizes[a],
        });
    }
    Ok(merges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_draws(seed: u64, s: usize, p: usize, k: usize) -> Vec<Vec<usize>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..s).map(|_| (0..p).map(|_| rng.random_range(0..k)).collect()).collect()
    }

    #[test]
    fn coclustering_matches_loop_count() {
        let draws = random_draws(1, 37, 6, 3);
        let m = coclustering_matrix(&draws).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let mut hits = 0;
                for d in &draws {
                    if d[i] == d[j] {
                        hits += 1;
                    }
                }
                assert_eq!(m[(i, j)], hits as f64 / 37.0);
            }
        }
    }

    #[test]
    fn always_and_never_colabeled() {
        let draws = vec![vec![1, 1, 2], vec![3, 3, 1]];
        let m = coclustering_matrix(&draws).unwrap();
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert!(coclustering_matrix(&[]).is_err());
        assert!(coclustering_matrix(&[vec![1, 2], vec![1]]).is_err());
    }

    #[test]
    fn percent_zero_examples() {
        let draws = vec![vec![0, 1, 0], vec![0, 2, 1], vec![0, 1, 1], vec![0, 3, 0]];
        assert_eq!(percent_zero(&draws).unwrap(), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn cutoff_reproduces_six_of_fifteen() {
        let pz = [
            0.000, 0.000, 0.000, 0.006, 0.007, 0.012, 0.148, 0.291, 0.556, 0.579, 0.814, 0.861, 0.901, 0.948, 0.959,
        ];
        assert_eq!(select_nonzero(&pz, 0.05), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn least_squares_picks_modal_partition() {
        let mut draws = vec![vec![1, 1, 2, 2]; 6];
        draws.push(vec![1, 2, 1, 2]);
        draws.push(vec![1, 1, 1, 1]);
        assert_eq!(least_squares_partition(&draws).unwrap(), vec![1, 1, 2, 2]);
    }

    #[test]
    fn two_blocks_merge_at_zero_then_one() {
        let draws = vec![vec![1, 1, 2, 2, 2]; 4];
        let merges = dendrogram(&coclustering_matrix(&draws).unwrap()).unwrap();
        assert_eq!(merges.len(), 4);
        for m in &merges[..3] {
            assert_eq!(m.height, 0.0);
        }
        assert_eq!(merges[3].height, 1.0);
        assert_eq!(merges[3].size, 5);
    }

    #[test]
    fn two_predictors_single_merge() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let merges = dendrogram(&s).unwrap();
        assert_eq!(merges.len(), 1);
        assert_eq!((merges[0].left, merges[0].right), (0, 1));
        assert!((merges[0].height - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.4, 1.0]);
        assert!(dendrogram(&s).is_err());
        assert!(dendrogram(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn matches_reference_average_linkage() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = 5;
            let mut s = DMatrix::identity(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    let v: f64 = rng.random();
                    s[(i, j)] = v;
                    s[(j, i)] = v;
                }
            }
            let mine = dendrogram(&s).unwrap();
            let mut condensed = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    condensed.push(1.0 - s[(i, j)]);
                }
            }
            let reference = kodama::linkage(&mut condensed, n, kodama::Method::Average);
            for (m, r) in mine.iter().zip(reference.steps()) {
                let (l, h) = (r.cluster1.min(r.cluster2), r.cluster1.max(r.cluster2));
                assert_eq!((m.left, m.right), (l, h));
                assert!((m.height - r.dissimilarity).abs() < 1e-10);
                assert_eq!(m.size, r.size);
            }
        }
    }

    proptest! {
        #[test]
        fn coclustering_is_symmetric_with_unit_diagonal(seed in any::<u64>(), p in 1usize..9) {
            let draws = random_draws(seed, 20, p, 3);
            let m = coclustering_matrix(&draws).unwrap();
            for i in 0..p {
                prop_assert_eq!(m[(i, i)], 1.0);
                for j in 0..p {
                    prop_assert_eq!(m[(i, j)], m[(j, i)]);
                    prop_assert!((0.0..=1.0).contains(&m[(i, j)]));
                }
            }
        }

        #[test]
        fn merge_heights_are_nondecreasing(seed in any::<u64>(), p in 2usize..12) {
            let draws = random_draws(seed, 30, p, 4);
            let merges = dendrogram(&coclustering_matrix(&draws).unwrap()).unwrap();
            prop_assert_eq!(merges.len(), p - 1);
            for w in merges.windows(2) {
                prop_assert!(w[1].height >= w[0].height - 1e-12);
            }
            prop_assert_eq!(merges.last().unwrap().size, p);
        }

        #[test]
        fn percent_zero_is_a_fraction(seed in any::<u64>()) {
            let draws = random_draws(seed, 25, 7, 3);
            for v in percent_zero(&draws).unwrap() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
