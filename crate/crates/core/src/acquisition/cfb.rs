//! Cluster-first baseline: PCA, k-means, then clusters ordered by how
//! censored they are.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm components, largest variance first.
    pub components: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl Pca {
    /// Eigendecomposition of the sample covariance.
    pub fn fit(points: &[&[f64]], dims: usize) -> Result<Self> {
        let n = points.len();
        let d = points.first().map_or(0, |p| p.len());
        if n < 2 || d == 0 {
            return Err(Error::Validation(format!("PCA needs at least 2 points, got {n}")));
        }
        let mut mean = vec![0.0; d];
        for p in points {
            for (m, v) in mean.iter_mut().zip(*p) {
                *m += v / n as f64;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for p in points {
            for a in 0..d {
                for b in 0..=a {
                    cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = cov[(a, b)] / (n - 1) as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let keep = dims.clamp(1, d);
        let components = order[..keep]
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect();
        let variances = order[..keep].iter().map(|&k| eig.eigenvalues[k]).collect();
        Ok(Self {
            mean,
            components,
            variances,
        })
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect()
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
}

/// Lloyd's algorithm from `k` distinct seeded points. A cluster that empties
/// is re-seeded at the point farthest from its centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    if k == 0 || points.len() < k {
        return Err(Error::Validation(format!("{} points for {k} clusters", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init: Vec<usize> = sample(&mut rng, points.len(), k).into_vec();
    init.sort_unstable();
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| points[i].clone()).collect();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = dist2(p, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = dist2(&points[a], &centroids[assignment[a]]);
                        let db = dist2(&points[b], &centroids[assignment[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty points");
                centroids[c] = points[far].clone();
                assignment[far] = c;
                changed = true;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfbConfig {
    pub pca_dims: usize,
    pub n_clusters: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for CfbConfig {
    fn default() -> Self {
        Self {
            pca_dims: 2,
            n_clusters: 5,
            max_iter: 100,
            seed: 0,
        }
    }
}

/// Ranks `candidates` (indices into `points`): clusters with the higher mean
/// `censoring` measure first, then by ascending distance to the centroid.
/// Clustering uses every point.
pub fn score_cfb(points: &[&[f64]], censoring: &[f64], candidates: &[usize], cfg: &CfbConfig) -> Result<Vec<usize>> {
    if candidates.len() < cfg.n_clusters {
        return Err(Error::Validation(format!(
            "{} candidates for {} clusters",
            candidates.len(),
            cfg.n_clusters
        )));
    }
    let pca = Pca::fit(points, cfg.pca_dims)?;
    let projected: Vec<Vec<f64>> = points.iter().map(|p| pca.project(p)).collect();
    let km = kmeans(&projected, cfg.n_clusters, cfg.seed, cfg.max_iter)?;
    let mut total = vec![0.0; cfg.n_clusters];
    let mut count = vec![0usize; cfg.n_clusters];
    for (&a, &c) in km.assignment.iter().zip(censoring) {
        total[a] += c;
        count[a] += 1;
    }
    let mean: Vec<f64> = total.iter().zip(&count).map(|(t, &c)| t / c.max(1) as f64).collect();
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (km.assignment[a], km.assignment[b]);
        mean[cb]
            .total_cmp(&mean[ca])
            .then(ca.cmp(&cb))
            .then(
                dist2(&projected[a], &km.centroids[ca]).total_cmp(&dist2(&projected[b], &km.centroids[cb])),
            )
            .then(a.cmp(&b))
    });
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn pca_matches_closed_form_2x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a: f64 = rng.random_range(-3.0..3.0);
                let b: f64 = rng.random_range(-0.5..0.5);
                vec![a + b, 0.5 * a - b]
            })
            .collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let pca = Pca::fit(&refs, 2).unwrap();
        let n = pts.len() as f64;
        let (mx, my) = (
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        );
        let sxx = pts.iter().map(|p| (p[0] - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let syy = pts.iter().map(|p| (p[1] - my).powi(2)).sum::<f64>() / (n - 1.0);
        let sxy = pts.iter().map(|p| (p[0] - mx) * (p[1] - my)).sum::<f64>() / (n - 1.0);
        let tr = sxx + syy;
        let det = sxx * syy - sxy * sxy;
        let disc = (tr * tr / 4.0 - det).sqrt();
        let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
        assert!((pca.variances[0] - l1).abs() < 1e-9);
        assert!((pca.variances[1] - l2).abs() < 1e-9);
        // eigenvector of l1 is parallel to (sxy, l1 - sxx)
        let (vx, vy) = (sxy, l1 - sxx);
        let norm = (vx * vx + vy * vy).sqrt();
        let c = &pca.components[0];
        let cos = (c[0] * vx + c[1] * vy) / norm;
        assert!((cos.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn censored_blob_goes_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = Vec::new();
        let mut cens = Vec::new();
        for i in 0..60 {
            let centre = if i < 30 { -10.0 } else { 10.0 };
            pts.push(vec![centre + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            cens.push(if i < 30 { 0.2 } else { 0.9 });
        }
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let cands: Vec<usize> = (0..60).collect();
        let cfg = CfbConfig { n_clusters: 2, ..CfbConfig::default() };
        let order = score_cfb(&refs, &cens, &cands, &cfg).unwrap();
        assert!(order[..30].iter().all(|&i| i >= 30));
    }

    #[test]
    fn single_cluster_is_proximity() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![1.0, 0.0], vec![2.5, 0.0], vec![2.0, 0.1]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let cfg = CfbConfig { n_clusters: 1, ..CfbConfig::default() };
        let order = score_cfb(&refs, &[0.0; 5], &[0, 1, 2, 3, 4], &cfg).unwrap();
        // centroid at x = 1.9
        let mean: Vec<f64> = vec![1.9, 0.02];
        let mut want: Vec<usize> = (0..5).collect();
        want.sort_by(|&a, &b| dist2(&pts[a], &mean).total_cmp(&dist2(&pts[b], &mean)));
        assert_eq!(order, want);
    }

    #[test]
    fn too_few_candidates() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        assert!(score_cfb(&refs, &[1.0, 1.0], &[0], &CfbConfig::default()).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // duplicate points force an initial centroid collision
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![0.0], vec![0.0], vec![5.0]];
        let km = kmeans(&pts, 3, 0, 50).unwrap();
        let mut used = km.assignment.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(km.assignment.len(), 4);
        assert!(used.len() >= 2);
    }
}
