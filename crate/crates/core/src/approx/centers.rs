use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, RbfNet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterPlacement {
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

impl CenterPlacement {
    pub fn into_net(self, num_actions: usize) -> Result<RbfNet> {
        RbfNet::new(self.centers, self.widths, num_actions)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean distance from each center to its nearest neighbour.
fn mean_nn_distance(centers: &[Vec<f64>]) -> f64 {
    let total: f64 = centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            centers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, d)| dist2(c, d))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / centers.len() as f64
}

/// k-means centers over `samples` with a shared width equal to the mean
/// nearest-neighbour distance between centers.
///
/// All-identical samples give a single center of unit width; `count` equal to
/// the number of samples uses the samples themselves.
pub fn place_rbf_centers<R: Rng + ?Sized>(
    samples: &[Vec<f64>],
    count: usize,
    rng: &mut R,
) -> Result<CenterPlacement> {
    if samples.is_empty() {
        return Err(Error::config("rbf.samples", "no samples to place centers on"));
    }
    if count == 0 || count > samples.len() {
        return Err(Error::config(
            "rbf.centers",
            format!("count {count} must lie in 1..={}", samples.len()),
        ));
    }
    let dim = samples[0].len();
    for s in samples {
        check_dim(dim, s)?;
    }
    if samples.iter().all(|s| s == &samples[0]) {
        return Ok(CenterPlacement {
            centers: vec![samples[0].clone()],
            widths: vec![1.0],
        });
    }
    let centers = if count == samples.len() {
        samples.to_vec()
    } else {
        kmeans(samples, count, rng)
    };
    let width = if centers.len() == 1 {
        let c = &centers[0];
        (samples.iter().map(|s| dist2(s, c)).sum::<f64>() / samples.len() as f64).sqrt()
    } else {
        mean_nn_distance(&centers)
    };
    let width = if width > 0.0 { width } else { 1.0 };
    Ok(CenterPlacement {
        widths: vec![width; centers.len()],
        centers,
    })
}

fn kmeans<R: Rng + ?Sized>(samples: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    // k-means++ seeding
    let mut centers = vec![samples[rng.random_range(0..samples.len())].clone()];
    let mut d2: Vec<f64> = samples.iter().map(|s| dist2(s, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = samples.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..samples.len())
        };
        centers.push(samples[pick].clone());
        for (d, s) in d2.iter_mut().zip(samples) {
            *d = d.min(dist2(s, &centers[centers.len() - 1]));
        }
    }

    let dim = samples[0].len();
    let mut assign = vec![usize::MAX; samples.len()];
    for _ in 0..200 {
        let mut changed = false;
        for (i, s) in samples.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| dist2(s, &centers[a]).total_cmp(&dist2(s, &centers[b])))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (s, &a) in samples.iter().zip(&assign) {
            counts[a] += 1;
            for (acc, x) in sums[a].iter_mut().zip(s) {
                *acc += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|x| x / counts[j] as f64).collect();
            }
        }
    }
    centers
}

/// Regular grid of centers over the box `[lo, hi]`, width = mean grid spacing.
pub fn grid_centers(lo: &[f64], hi: &[f64], per_dim: &[usize]) -> Result<CenterPlacement> {
    check_dim(lo.len(), hi)?;
    if per_dim.len() != lo.len() {
        return Err(Error::DimensionMismatch {
            expected: lo.len(),
            got: per_dim.len(),
        });
    }
    if per_dim.contains(&0) {
        return Err(Error::config("rbf.grid", "every axis needs at least one center"));
    }
    let axes: Vec<Vec<f64>> = (0..lo.len())
        .map(|d| {
            let n = per_dim[d];
            if n == 1 {
                vec![0.5 * (lo[d] + hi[d])]
            } else {
                (0..n)
                    .map(|i| lo[d] + (hi[d] - lo[d]) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let spacings: Vec<f64> = (0..lo.len())
        .filter(|&d| per_dim[d] > 1)
        .map(|d| (hi[d] - lo[d]) / (per_dim[d] - 1) as f64)
        .collect();
    let width = if spacings.is_empty() {
        1.0
    } else {
        spacings.iter().sum::<f64>() / spacings.len() as f64
    };
    let mut centers: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        centers = centers
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    Ok(CenterPlacement {
        widths: vec![width; centers.len()],
        centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_clusters_on_a_line() {
        let samples: Vec<Vec<f64>> = [0.0, 0.02, 0.04, 0.96, 0.98, 1.0]
            .iter()
            .map(|&x| vec![x])
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = place_rbf_centers(&samples, 2, &mut rng).unwrap();
        p.centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((p.centers[0][0] - 0.02).abs() < 1e-12);
        assert!((p.centers[1][0] - 0.98).abs() < 1e-12);
        assert_eq!(p.widths[0], p.widths[1]);
    }

    #[test]
    fn degenerate_samples_give_unit_width() {
        let samples = vec![vec![0.3, 0.3]; 7];
        let p = place_rbf_centers(&samples, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.centers, vec![vec![0.3, 0.3]]);
        assert_eq!(p.widths, vec![1.0]);
    }

    #[test]
    fn count_equal_to_samples_uses_samples() {
        let samples = vec![vec![0.0, 1.0], vec![0.5, 0.2], vec![0.9, 0.9]];
        let p = place_rbf_centers(&samples, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.centers, samples);
    }

    #[test]
    fn too_many_centers_rejected() {
        let samples = vec![vec![0.0], vec![1.0]];
        assert!(place_rbf_centers(&samples, 3, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn grid_layout() {
        let p = grid_centers(&[0.0, 0.0], &[1.0, 2.0], &[3, 5]).unwrap();
        assert_eq!(p.centers.len(), 15);
        assert!((p.widths[0] - 0.5).abs() < 1e-15);
        assert_eq!(p.centers[0], vec![0.0, 0.0]);
        assert_eq!(p.centers[14], vec![1.0, 2.0]);
    }
}
