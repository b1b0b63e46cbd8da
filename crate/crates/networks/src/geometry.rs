//! Neighborhood and sampling operators on point positions.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rosepoint_core::Point3;

use crate::{NetworkError, Result};

pub fn dist2(a: Point3, b: Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Greedy farthest-first traversal starting at `start`. Ties on the maximal
/// distance go to the lowest index.
pub fn farthest_point_sampling(positions: &[Point3], p: usize, start: usize) -> Result<Vec<usize>> {
    let n = positions.len();
    if p == 0 || p > n {
        return Err(NetworkError::Argument(format!("cannot sample {p} of {n} points")));
    }
    if start >= n {
        return Err(NetworkError::Argument(format!("start index {start} out of {n} points")));
    }
    let mut chosen = Vec::with_capacity(p);
    let mut nearest = vec![f64::INFINITY; n];
    let mut current = start;
    for _ in 0..p {
        chosen.push(current);
        let c = positions[current];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, q) in positions.iter().enumerate() {
            let d = dist2(*q, c);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > best.0 {
                best = (nearest[i], i);
            }
        }
        current = best.1;
    }
    Ok(chosen)
}

/// Groups of exactly `m` point indices within `radius` of each center.
/// Oversized balls are subsampled with a seeded generator; undersized ones
/// are padded by cycling through the candidates.
pub fn ball_query(positions: &[Point3], centers: &[usize], radius: f64, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if !(radius > 0.0) || m == 0 {
        return Err(NetworkError::Argument(format!("ball query needs radius > 0 and m >= 1, got {radius}, {m}")));
    }
    let r2 = radius * radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::with_capacity(centers.len());
    for &c in centers {
        let centre = *positions
            .get(c)
            .ok_or_else(|| NetworkError::Argument(format!("center {c} out of {} points", positions.len())))?;
        let mut candidates: Vec<usize> = (0..positions.len()).filter(|&i| i == c || dist2(positions[i], centre) <= r2).collect();
        if candidates.len() > m {
            let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), m).into_iter().collect();
            picked.sort_unstable();
            candidates = picked.into_iter().map(|k| candidates[k]).collect();
        }
        let found = candidates.len();
        for k in found..m {
            candidates.push(candidates[k % found]);
        }
        groups.push(candidates);
    }
    Ok(groups)
}

/// `k` nearest base rows for every query row (rows of width `dim`), sorted
/// by distance with ties going to the lower index. Output is flat, `k`
/// entries per query.
pub fn knn_rows(query: &[f64], base: &[f64], dim: usize, k: usize) -> Result<Vec<usize>> {
    if dim == 0 || query.len() % dim != 0 || base.len() % dim != 0 {
        return Err(NetworkError::Argument(format!("knn rows not divisible by dimension {dim}")));
    }
    let n_base = base.len() / dim;
    if k == 0 || k > n_base {
        return Err(NetworkError::Argument(format!("knn asks for {k} neighbors among {n_base} rows")));
    }
    let mut out = Vec::with_capacity(query.len() / dim * k);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n_base);
    for q in query.chunks_exact(dim) {
        scored.clear();
        for (j, b) in base.chunks_exact(dim).enumerate() {
            let d: f64 = q.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            scored.push((d, j));
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n_base {
            scored.select_nth_unstable_by(k - 1, cmp);
        }
        let head = &mut scored[..k];
        head.sort_unstable_by(cmp);
        out.extend(head.iter().map(|&(_, j)| j));
    }
    Ok(out)
}

/// `k` nearest positions for every query, one vector per query.
pub fn knn(query: &[Point3], base: &[Point3], k: usize) -> Result<Vec<Vec<usize>>> {
    let flat = knn_rows(query.as_flattened(), base.as_flattened(), 3, k)?;
    Ok(flat.chunks_exact(k).map(<[usize]>::to_vec).collect())
}

/// Every `dilation`-th of the `k·dilation` nearest positions.
pub fn dilated_knn(query: &[Point3], base: &[Point3], k: usize, dilation: usize) -> Result<Vec<Vec<usize>>> {
    if dilation == 0 {
        return Err(NetworkError::Argument("dilation must be at least 1".into()));
    }
    let wide = knn(query, base, k * dilation)?;
    Ok(wide.into_iter().map(|g| g.into_iter().step_by(dilation).collect()).collect())
}

/// The `k·shells` nearest positions of each query split into `shells`
/// consecutive shells of `k`, from the innermost outwards.
pub fn shell_groups(query: &[Point3], base: &[Point3], k: usize, shells: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    if shells == 0 {
        return Err(NetworkError::Argument("at least one shell is required".into()));
    }
    let wide = knn(query, base, k * shells)?;
    Ok(wide.into_iter().map(|g| g.chunks(k).map(<[usize]>::to_vec).collect()).collect())
}

/// Inverse squared distance weights of the (up to) 3 nearest coarse points of
/// each fine point. Returns flat `(rows, weights)` with `k` entries per fine
/// point, where `k = min(3, coarse.len())`. An exact hit takes all the weight.
pub fn interpolation_weights(fine: &[Point3], coarse: &[Point3]) -> Result<(Vec<usize>, Vec<f64>, usize)> {
    let k = coarse.len().min(3);
    let neighbors = knn(fine, coarse, k)?;
    let mut rows = Vec::with_capacity(fine.len() * k);
    let mut weights = Vec::with_capacity(fine.len() * k);
    for (p, group) in fine.iter().zip(&neighbors) {
        let d: Vec<f64> = group.iter().map(|&j| dist2(*p, coarse[j])).collect();
        if d[0] < 1e-20 {
            weights.push(1.0);
            weights.extend(std::iter::repeat_n(0.0, k - 1));
        } else {
            let inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
            let total: f64 = inv.iter().sum();
            weights.extend(inv.iter().map(|w| w / total));
        }
        rows.extend_from_slice(group);
    }
    Ok((rows, weights, k))
}

fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len() as f64;
    std::array::from_fn(|k| points.iter().map(|p| p[k]).sum::<f64>() / n)
}

/// Rotation-invariant descriptors of a neighbor group around
/// `representative`: distance to the representative, distance to the group
/// centroid and the unsigned angle between `p - r` and `c - r` (0 when either
/// vector is degenerate).
pub fn ri_features(points: &[Point3], representative: Point3) -> Vec<[f64; 3]> {
    if points.is_empty() {
        return Vec::new();
    }
    let c = centroid(points);
    let axis: Point3 = std::array::from_fn(|k| c[k] - representative[k]);
    let axis_len = dist2(c, representative).sqrt();
    points
        .iter()
        .map(|&p| {
            let v: Point3 = std::array::from_fn(|k| p[k] - representative[k]);
            let v_len = dist2(p, representative).sqrt();
            let angle = if axis_len < 1e-9 || v_len < 1e-9 {
                0.0
            } else {
                let cos = (v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2]) / (v_len * axis_len);
                cos.clamp(-1.0, 1.0).acos()
            };
            [v_len, dist2(p, c).sqrt(), angle]
        })
        .collect()
}

/// Order of `points` by projection onto the representative-to-centroid
/// axis (ties by index); consecutive equal chunks of this order form bins.
pub fn ri_bin_order(points: &[Point3], representative: Point3) -> Vec<usize> {
    let c = centroid(points);
    let axis: Point3 = std::array::from_fn(|k| c[k] - representative[k]);
    let len = dist2(c, representative).sqrt();
    let proj: Vec<f64> = points
        .iter()
        .map(|p| {
            if len < 1e-9 {
                0.0
            } else {
                (0..3).map(|k| (p[k] - representative[k]) * axis[k]).sum::<f64>() / len
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
    order
}
