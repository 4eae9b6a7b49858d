//! Exact Euclidean k-nearest neighbors by brute force.
//!
//! The scaling-law and dimension estimates react to small changes in the
//! neighbor sets, so no approximate search is offered.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;


use crate::data::{NeighborGraph, PointCloud};
use crate::error::{param, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Squared Euclidean distance, summed in coordinate order.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

#[inline]
fn by_dist_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// The `k` nearest samples to `query`, nearest first, ties by index.
///
/// `skip` excludes one index (the query's own row when it is a sample).
fn nearest(
    points: &PointCloud,
    query: &[f64],
    count: usize,
    skip: Option<usize>,
    scratch: &mut Vec<(f64, usize)>,
) -> usize {
    scratch.clear();
    for j in 0..points.len() {
        if Some(j) != skip {
            scratch.push((sq_dist(query, points.point(j)), j));
        }
    }
    let count = count.min(scratch.len());
    if count == 0 {
        return 0;
    }
    if count < scratch.len() {
        scratch.select_nth_unstable_by(count - 1, by_dist_then_index);
    }
    scratch[..count].sort_unstable_by(by_dist_then_index);
    count
}

/// Builds the k-NN graph; each list starts with the point itself.
///
/// Ties are broken by ascending index. `k` may be 1 (self only).
pub fn knn(points: &PointCloud, k: usize) -> Result<NeighborGraph> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(param(format!("k = {k} must lie in 1..={n}")));
    }
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    let mut scratch = Vec::with_capacity(n);
    for i in 0..n {
        indices.push(i);
        distances.push(0.0);
        let got = nearest(points, points.point(i), k - 1, Some(i), &mut scratch);
        for &(d2, j) in &scratch[..got] {
            indices.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborGraph {
        n,
        k,
        indices,
        distances,
    })
}

/// Nearest samples to an arbitrary query point, as `(index, distance)`.
pub fn knn_query(points: &PointCloud, query: &[f64], count: usize) -> Result<Vec<(usize, f64)>> {
    if query.len() != points.dim() {
        return Err(crate::Error::Shape(format!(
            "query has dimension {}, cloud has {}",
            query.len(),
            points.dim()
        )));
    }
    let mut scratch = Vec::with_capacity(points.len());
    let got = nearest(points, query, count, None, &mut scratch);
    Ok(scratch[..got].iter().map(|&(d2, j)| (j, d2.sqrt())).collect())
}

/// Neighbor list of sample `i` as `knn` would produce it, without building
/// the full graph.
pub fn knn_of_sample(points: &PointCloud, i: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    let n = points.len();
    if k == 0 || k > n || i >= n {
        return Err(param(format!("need 1 <= k <= {n} and i < {n}")));
    }
    let mut scratch = Vec::with_capacity(n);
    let got = nearest(points, points.point(i), k - 1, Some(i), &mut scratch);
    let mut out = Vec::with_capacity(k);
    out.push((i, 0.0));
    out.extend(scratch[..got].iter().map(|&(d2, j)| (j, d2.sqrt())));
    Ok(out)
}

/// Graph over a single base point, for analyses that touch one chart only.
pub fn single_point_graph(points: &PointCloud, i: usize, k: usize) -> Result<(NeighborGraph, usize)> {
    let list = knn_of_sample(points, i, k)?;
    Ok((
        NeighborGraph {
            n: 1,
            k,
            indices: list.iter().map(|p| p.0).collect(),
            distances: list.iter().map(|p| p.1).collect(),
        },
        0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds;
    use alloc::vec;
    use proptest::prelude::*;

    fn line(values: &[f64]) -> PointCloud {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        PointCloud::from_rows(&rows).unwrap()
    }

    // All-pairs oracle: sort every other point by (distance, index).
    fn oracle(points: &PointCloud, k: usize) -> (Vec<usize>, Vec<f64>) {
        let n = points.len();
        let mut idx = Vec::new();
        let mut dist = Vec::new();
        for i in 0..n {
            let mut all: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = points
                        .point(i)
                        .iter()
                        .zip(points.point(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d, j)
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            idx.push(i);
            dist.push(0.0);
            for &(d, j) in all.iter().take(k - 1) {
                idx.push(j);
                dist.push(d.sqrt());
            }
        }
        (idx, dist)
    }

    #[test]
    fn collinear_hand_example() {
        let g = knn(&line(&[0.0, 1.0, 3.0]), 2).unwrap();
        assert_eq!(g.indices(1), &[1, 0]);
        assert_eq!(g.distances(1), &[0.0, 1.0]);
    }

    #[test]
    fn k_one_is_self_only() {
        let g = knn(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        for i in 0..3 {
            assert_eq!(g.indices(i), &[i]);
            assert_eq!(g.distances(i), &[0.0]);
        }
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        assert!(knn(&line(&[0.0, 1.0]), 3).is_err());
        assert!(knn(&line(&[0.0, 1.0]), 0).is_err());
    }

    #[test]
    fn ties_break_by_index_and_self_stays_first() {
        // Duplicate points: self must still come first.
        let g = knn(&line(&[5.0, 5.0, 4.0, 6.0]), 4).unwrap();
        assert_eq!(g.indices(1), &[1, 0, 2, 3]);
        assert_eq!(g.indices(0), &[0, 1, 2, 3]);
    }

    #[test]
    fn circle_2000_matches_oracle() {
        let fx = manifolds::circle(2000).unwrap();
        let g = knn(&fx.cloud, 500).unwrap();
        let (idx, dist) = oracle(&fx.cloud, 500);
        assert_eq!(g.indices, idx);
        assert_eq!(g.distances, dist);
    }

    #[test]
    fn query_matches_graph_rows() {
        let fx = manifolds::circle(50).unwrap();
        let g = knn(&fx.cloud, 7).unwrap();
        let q = knn_of_sample(&fx.cloud, 13, 7).unwrap();
        assert_eq!(q.iter().map(|p| p.0).collect::<Vec<_>>(), g.indices(13));
    }

    proptest! {
        #[test]
        fn matches_oracle_on_random_clouds(
            raw in proptest::collection::vec(-3i32..3, 6..60),
            k in 1usize..6,
        ) {
            // Small integer grid forces many ties.
            let rows: Vec<Vec<f64>> = raw.chunks(2).filter(|c| c.len() == 2)
                .map(|c| vec![c[0] as f64, c[1] as f64]).collect();
            let cloud = PointCloud::from_rows(&rows).unwrap();
            let k = k.min(cloud.len());
            let g = knn(&cloud, k).unwrap();
            let (idx, dist) = oracle(&cloud, k);
            prop_assert_eq!(&g.indices, &idx);
            prop_assert_eq!(&g.distances, &dist);
            for i in 0..cloud.len() {
                prop_assert_eq!(g.distances(i)[0], 0.0);
                prop_assert!(g.distances(i).windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
