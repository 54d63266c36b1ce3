//! k-means over embedding rows and a two-component PCA projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective: Vec<f64>,
    pub projection: Vec<[f64; 2]>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding followed by at most `max_iter` Lloyd steps.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<(Vec<usize>, Vec<Vec<f64>>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::config(format!("k = {k} exceeds the {} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }
    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut objective = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let (j, _) = nearest(p, &centroids);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        objective.push(assignment.iter().zip(points).map(|(&a, p)| dist2(p, &centroids[a])).sum());
        if !changed {
            break;
        }
    }
    Ok((assignment, centroids, objective))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and matching unit eigenvectors.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-24 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = idx.iter().map(|&i| a[i * n + i]).collect();
    let vectors = idx
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = (0..n).map(|k| v[k * n + i]).collect();
            // Fix the sign so the largest-magnitude entry is positive.
            let big = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if big < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    (values, vectors)
}

/// Projects centred points onto the top two covariance eigenvectors.
pub fn pca_2d(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    if points.is_empty() {
        return Vec::new();
    }
    let d = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let mut cov = vec![0.0; d * d];
    for p in points {
        for i in 0..d {
            let a = p[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += a * (p[j] - mean[j]) / n;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    let (_, vecs) = symmetric_eigen(&cov, d);
    let axis = |k: usize| vecs.get(k).cloned().unwrap_or_else(|| vec![0.0; d]);
    let (a, b) = (axis(0), axis(1));
    points
        .iter()
        .map(|p| {
            let c: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
            [
                c.iter().zip(&a).map(|(x, y)| x * y).sum(),
                c.iter().zip(&b).map(|(x, y)| x * y).sum(),
            ]
        })
        .collect()
}

/// k-means (100 iterations at most) plus a 2-D PCA projection.
pub fn cluster_embeddings(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    let (assignment, centroids, objective) = kmeans(points, k, 100, seed)?;
    Ok(Clustering {
        assignment,
        centroids,
        objective,
        projection: pca_2d(points),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..40)
            .map(|i| {
                let c = if i < 20 { -5.0 } else { 5.0 };
                (0..3).map(|_| c + rng.gen_range(-1.0..1.0)).collect()
            })
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = blobs(1);
        let c = cluster_embeddings(&pts, 1, 0).unwrap();
        assert!(c.assignment.iter().all(|&a| a == 0));
        for j in 0..3 {
            let m = pts.iter().map(|p| p[j]).sum::<f64>() / 40.0;
            assert!((c.centroids[0][j] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_blobs() {
        let pts = blobs(2);
        let c = cluster_embeddings(&pts, 2, 5).unwrap();
        let first = c.assignment[0];
        assert!(c.assignment[..20].iter().all(|&a| a == first));
        assert!(c.assignment[20..].iter().all(|&a| a != first));
        for w in c.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert!(cluster_embeddings(&pts, 41, 0).is_err());
    }

    #[test]
    fn pca_recovers_dominant_axis() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.1 * ((i * 7) % 3) as f64]).collect();
        let proj = pca_2d(&pts);
        let spread0 = proj.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
        let spread1 = proj.iter().map(|p| p[1].abs()).fold(0.0, f64::max);
        assert!(spread0 > 5.0 * spread1);
    }

    #[test]
    fn jacobi_known_matrix() {
        let (vals, vecs) = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[0][0] - r).abs() < 1e-12 && (vecs[0][1] - r).abs() < 1e-12);
    }
}
