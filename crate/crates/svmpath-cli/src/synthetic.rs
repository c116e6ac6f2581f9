//! Deterministic synthetic two-cluster datasets for desk-scale runs.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use svmpath::dataset::Dataset;
use svmpath::{PathError, Result};

/// Generate `n` points in `p` dimensions: two unit-covariance Gaussian
/// clusters with means `+1/sqrt(p) * 1` (labeled `+1`, first half) and
/// `-1/sqrt(p) * 1` (labeled `-1`, second half). Byte-deterministic for a
/// fixed `(n, p, seed)`.
pub fn generate_synthetic(n: usize, p: usize, seed: u64) -> Result<Dataset> {
    if n < 4 || n % 2 != 0 {
        return Err(PathError::InvalidData(format!(
            "synthetic datasets need an even n of at least 4, got {n}"
        )));
    }
    if p == 0 {
        return Err(PathError::InvalidData(
            "synthetic datasets need at least one feature".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = 1.0 / (p as f64).sqrt();
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i < n / 2;
        let mean = if positive { shift } else { -shift };
        for j in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = mean + z;
        }
        y.push(if positive { 1.0 } else { -1.0 });
    }
    Dataset::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(20, 3, 7).unwrap();
        let b = generate_synthetic(20, 3, 7).unwrap();
        assert_eq!(a.y, b.y);
        for i in 0..20 {
            assert_eq!(a.point(i), b.point(i));
        }
        let c = generate_synthetic(20, 3, 8).unwrap();
        assert_ne!(a.point(0), c.point(0));
    }

    #[test]
    fn even_split_with_separated_means() {
        let d = generate_synthetic(60, 2, 42).unwrap();
        assert_eq!(d.n, 60);
        assert_eq!(d.y.iter().filter(|&&v| v > 0.0).count(), 30);
        let mut mean_pos = vec![0.0; 2];
        let mut mean_neg = vec![0.0; 2];
        for i in 0..60 {
            let pt = d.point(i);
            for j in 0..2 {
                if d.y[i] > 0.0 {
                    mean_pos[j] += pt[j] / 30.0;
                } else {
                    mean_neg[j] += pt[j] / 30.0;
                }
            }
        }
        for j in 0..2 {
            assert!(
                mean_pos[j] > mean_neg[j],
                "cluster means overlap on coordinate {j}"
            );
        }
    }

    #[test]
    fn odd_or_tiny_sizes_are_rejected() {
        assert!(generate_synthetic(5, 2, 1).is_err());
        assert!(generate_synthetic(2, 2, 1).is_err());
        assert!(generate_synthetic(8, 0, 1).is_err());
    }
}
