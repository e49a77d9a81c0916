//! Average-linkage agglomerative clustering.

use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingVector};
use crate::scalar::Scalar;

/// One agglomeration step. Leaves are clusters `0..n`; the cluster created by
/// step `i` gets id `n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge<S> {
    pub a: usize,
    pub b: usize,
    pub distance: S,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram<S> {
    leaves: usize,
    steps: Vec<Merge<S>>,
}

impl<S: Scalar> Dendrogram<S> {
    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn steps(&self) -> &[Merge<S>] {
        &self.steps
    }

    /// Flat clustering keeping every merge at distance `<= threshold`.
    /// Returns a cluster label per leaf, numbered by first appearance.
    pub fn cut(&self, threshold: S) -> Vec<usize> {
        let n = self.leaves;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        // any leaf of each cluster id works as its union-find handle
        let mut handle: Vec<usize> = (0..n).collect();
        for step in &self.steps {
            let (ha, hb) = (handle[step.a], handle[step.b]);
            if step.distance <= threshold {
                let (ra, rb) = (find(&mut parent, ha), find(&mut parent, hb));
                parent[ra.max(rb)] = ra.min(rb);
            }
            handle.push(ha);
        }
        let mut labels = vec![usize::MAX; n];
        let mut next = 0;
        let mut by_root = vec![usize::MAX; n];
        for (leaf, label) in labels.iter_mut().enumerate() {
            let r = find(&mut parent, leaf);
            if by_root[r] == usize::MAX {
                by_root[r] = next;
                next += 1;
            }
            *label = by_root[r];
        }
        labels
    }
}

/// Clusters a symmetric distance matrix with average linkage.
///
/// At every step the closest pair of active clusters is merged; equal
/// distances are resolved in favour of the pair with the lowest
/// `(min id, max id)`.
pub fn average_linkage<S: Scalar>(distances: &[Vec<S>]) -> Dendrogram<S> {
    let n = distances.len();
    let total = if n == 0 { 0 } else { 2 * n - 1 };
    let mut dist = vec![vec![S::zero(); total]; total];
    for (i, row) in distances.iter().enumerate() {
        assert_eq!(row.len(), n, "distance matrix must be square");
        dist[i][..n].copy_from_slice(row);
    }
    let mut size = vec![0usize; total];
    size[..n].fill(1);
    let mut active: Vec<usize> = (0..n).collect();
    let mut steps = Vec::with_capacity(n.saturating_sub(1));

    while active.len() > 1 {
        let mut best: Option<(S, usize, usize)> = None;
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                let d = dist[i][j];
                // `active` ascends, so (i, j) pairs arrive in tie-break order
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (d, a, b) = best.expect("at least two active clusters");
        let new = n + steps.len();
        let (sa, sb) = (size[a], size[b]);
        size[new] = sa + sb;
        let (wa, wb, w) = (S::lit(sa as f64), S::lit(sb as f64), S::lit((sa + sb) as f64));
        active.retain(|&c| c != a && c != b);
        for &k in &active {
            let v = (wa * dist[a][k] + wb * dist[b][k]) / w;
            dist[new][k] = v;
            dist[k][new] = v;
        }
        active.push(new);
        steps.push(Merge {
            a,
            b,
            distance: d,
            size: sa + sb,
        });
    }
    Dendrogram { leaves: n, steps }
}

/// Pairwise cosine distances `1 - cos(a, b)`.
pub fn cosine_distance_matrix<S: Scalar>(
    points: &[&EmbeddingVector<S>],
) -> Result<Vec<Vec<S>>, EmbeddingError> {
    let n = points.len();
    let mut m = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = S::one() - cosine_similarity(points[i], points[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_leaf_has_no_steps() {
        let d = average_linkage(&[vec![0.0f64]]);
        assert!(d.steps().is_empty());
        assert_eq!(d.cut(0.5), vec![0]);
        assert!(average_linkage::<f64>(&[]).cut(1.0).is_empty());
    }

    #[test]
    fn four_points_two_pairs() {
        // Hand-worked: pairs (0,1) at 0.1 and (2,3) at 0.2 merge first; the
        // two pairs then sit at the mean of their four cross distances,
        // (0.8 + 0.9 + 0.7 + 0.8) / 4 = 0.8.
        let m = vec![
            vec![0.0f64, 0.1, 0.8, 0.9],
            vec![0.1, 0.0, 0.7, 0.8],
            vec![0.8, 0.7, 0.0, 0.2],
            vec![0.9, 0.8, 0.2, 0.0],
        ];
        let d = average_linkage(&m);
        let s = d.steps();
        assert_eq!((s[0].a, s[0].b, s[0].size), (0, 1, 2));
        assert_eq!((s[1].a, s[1].b, s[1].size), (2, 3, 2));
        assert_eq!((s[2].a, s[2].b, s[2].size), (4, 5, 4));
        assert!((s[0].distance - 0.1).abs() < 1e-12);
        assert!((s[1].distance - 0.2).abs() < 1e-12);
        assert!((s[2].distance - 0.8).abs() < 1e-12);
        assert_eq!(d.cut(0.05), vec![0, 1, 2, 3]);
        assert_eq!(d.cut(0.5), vec![0, 0, 1, 1]);
        assert_eq!(d.cut(0.8), vec![0, 0, 0, 0]);
    }

    #[test]
    fn equal_distances_merge_lowest_pair_first() {
        let m = vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]];
        let d = average_linkage(&m);
        assert_eq!((d.steps()[0].a, d.steps()[0].b), (0, 1));
        assert_eq!((d.steps()[1].a, d.steps()[1].b), (2, 3));
    }

    #[test]
    fn heights_never_decrease() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(2..12);
            let pts: Vec<EmbeddingVector<f64>> = (0..n)
                .map(|_| EmbeddingVector::normalized((0..4).map(|_| rng.gen_range(0.01..1.0)).collect()).unwrap())
                .collect();
            let refs: Vec<_> = pts.iter().collect();
            let d = average_linkage(&cosine_distance_matrix(&refs).unwrap());
            for w in d.steps().windows(2) {
                assert!(w[0].distance <= w[1].distance + 1e-12);
            }
        }
    }
}
