use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::IdentityEmbedding;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};

const MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityConfig {
    pub k_grid: Vec<usize>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self {
            k_grid: (2..=20).collect(),
            restarts: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub count: usize,
    pub n_embeddings: usize,
    pub original_count: Option<usize>,
    pub ratio: Option<f64>,
    /// `min(ratio, 1)`.
    pub ratio_capped: Option<f64>,
    /// Mean silhouette per evaluated `k`.
    pub silhouettes: Vec<(usize, f64)>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Seeded k-means++ followed by Lloyd iterations. Returns assignments and
/// inertia.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> (Vec<usize>, f64) {
    let mut r = rng(seed);
    let mut centers = vec![points[r.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let w: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        match WeightedIndex::new(&w) {
            Ok(dist) => centers.push(points[dist.sample(&mut r)].clone()),
            Err(_) => break,
        }
    }
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..MAX_ITERS {
        for (k, c) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == k).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (d, v) in c.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let inertia = points.iter().zip(&assign).map(|(p, &a)| sq_dist(p, &centers[a])).sum();
    (assign, inertia)
}

/// Mean silhouette; points in singleton clusters score 0.
pub fn silhouette(dist: &[Vec<f64>], assign: &[usize], k: usize) -> f64 {
    let n = assign.len();
    let sizes = (0..k).map(|c| assign.iter().filter(|&&a| a == c).count()).collect::<Vec<_>>();
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = assign[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[assign[j]] += dist[i][j];
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / n as f64
}

/// Estimates the number of distinct identities by clustering embeddings and
/// choosing the `k` with the highest mean silhouette.
pub fn identity_diversity(
    embeddings: &[IdentityEmbedding],
    original_count: Option<usize>,
    cfg: &DiversityConfig,
) -> Result<DiversityReport> {
    if embeddings.len() < 2 {
        return Err(Error::InvalidArgument("diversity needs at least 2 embeddings".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("k-means needs at least one restart".into()));
    }
    // canonical order makes the result independent of input order
    let mut points: Vec<Vec<f64>> = embeddings.iter().map(|e| e.values().to_vec()).collect();
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut distinct = points.clone();
    distinct.dedup();
    let n = points.len();
    let mut silhouettes = Vec::new();
    let mut count = 1;
    if distinct.len() > 1 {
        let dist: Vec<Vec<f64>> = points
            .par_iter()
            .map(|p| points.iter().map(|q| sq_dist(p, q).sqrt()).collect())
            .collect();
        let mut best = f64::NEG_INFINITY;
        let mut grid = cfg.k_grid.clone();
        grid.sort_unstable();
        grid.dedup();
        for k in grid.into_iter().filter(|&k| k >= 2 && k < n && k <= distinct.len()) {
            let (assign, _) = (0..cfg.restarts)
                .map(|r| kmeans(&points, k, derive_seed(cfg.seed, (k * 1000 + r) as u64)))
                .fold((Vec::new(), f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            let s = silhouette(&dist, &assign, k);
            silhouettes.push((k, s));
            if s > best {
                best = s;
                count = k;
            }
        }
    }
    let ratio = original_count.filter(|&c| c > 0).map(|c| count as f64 / c as f64);
    Ok(DiversityReport {
        count,
        n_embeddings: n,
        original_count,
        ratio,
        ratio_capped: ratio.map(|r| r.min(1.0)),
        silhouettes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn clusters(n_clusters: usize, per: usize, spread: f64, seed: u64) -> Vec<IdentityEmbedding> {
        let mut r = rng(seed);
        let mut out = Vec::new();
        for c in 0..n_clusters {
            for _ in 0..per {
                let v: Vec<f64> = (0..4)
                    .map(|d| {
                        let centre = if d == c % 4 { 10.0 * (1 + c / 4) as f64 } else { 0.0 };
                        let z: f64 = StandardNormal.sample(&mut r);
                        centre + spread * z
                    })
                    .collect();
                out.push(IdentityEmbedding::new(v).unwrap());
            }
        }
        out
    }

    #[test]
    fn separated_clusters_are_counted() {
        let e = clusters(5, 12, 0.1, 1);
        let cfg = DiversityConfig {
            k_grid: (2..=10).collect(),
            ..Default::default()
        };
        let r = identity_diversity(&e, Some(5), &cfg).unwrap();
        assert_eq!(r.count, 5);
        assert_eq!(r.ratio, Some(1.0));
    }

    #[test]
    fn identical_embeddings_count_one() {
        let e = vec![IdentityEmbedding::new(vec![0.5, 0.5]).unwrap(); 10];
        let r = identity_diversity(&e, None, &DiversityConfig::default()).unwrap();
        assert_eq!(r.count, 1);
        assert!(identity_diversity(&e[..1], None, &DiversityConfig::default()).is_err());
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut e = clusters(3, 8, 2.0, 2);
        let cfg = DiversityConfig::default();
        let a = identity_diversity(&e, None, &cfg).unwrap();
        e.reverse();
        e.swap(1, 7);
        let b = identity_diversity(&e, None, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
