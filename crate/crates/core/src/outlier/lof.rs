//! Local Outlier Factor with exact neighbour search.
//!
//! Neighbourhoods contain exactly `k` points; equal distances are broken by
//! ascending index. Pairwise distances are floored at [`MIN_DISTANCE`] so
//! duplicated points keep a finite reachability density.

use super::{DetectorKind, OutlierError, OutlierScoreVector};
use crate::data::{squared_distance, FeatureMatrix};

pub(crate) const MIN_DISTANCE: f64 = 1e-12;

/// `k` nearest neighbours of every row as `(index, distance)`, nearest first.
pub fn k_nearest(x: &FeatureMatrix, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = x.n_rows();
    let mut out = Vec::with_capacity(n);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let a = x.row(i);
        scratch.clear();
        scratch.extend((0..n).filter(|&j| j != i).map(|j| (squared_distance(a, x.row(j)), j)));
        let cmp = |p: &(f64, usize), q: &(f64, usize)| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1));
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, cmp);
            scratch.truncate(k);
        }
        scratch.sort_unstable_by(cmp);
        out.push(scratch.iter().map(|&(d2, j)| (j, d2.sqrt().max(MIN_DISTANCE))).collect());
    }
    out
}

pub fn lof_scores(x: &FeatureMatrix, k: usize) -> Result<OutlierScoreVector, OutlierError> {
    if k == 0 {
        return Err(OutlierError::InvalidParameter("LOF needs k >= 1".into()));
    }
    let n = x.n_rows();
    if n <= k {
        return Err(OutlierError::TooFewPoints { detector: DetectorKind::Lof, required: k, found: n });
    }
    let neighbours = k_nearest(x, k);
    let k_distance: Vec<f64> = neighbours.iter().map(|nb| nb[k - 1].1).collect();
    let lrd: Vec<f64> = neighbours
        .iter()
        .map(|nb| {
            let reach: f64 = nb.iter().map(|&(j, d)| d.max(k_distance[j])).sum();
            k as f64 / reach
        })
        .collect();
    let scores = neighbours.iter().enumerate().map(|(i, nb)| nb.iter().map(|&(j, _)| lrd[j]).sum::<f64>() / (k as f64 * lrd[i])).collect();
    Ok(OutlierScoreVector { detector: DetectorKind::Lof, scores })
}
