use rayon::prelude::*;

use super::Feature;

pub const DEFAULT_RATIO: f64 = 0.8;

fn distance2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For each query, `(nearest index, nearest distance², second distance²)`.
fn nearest_two(queries: &[Feature], pool: &[Feature]) -> Vec<(usize, f64, f64)> {
    queries
        .par_iter()
        .map(|q| {
            let mut best = (usize::MAX, f64::INFINITY, f64::INFINITY);
            for (j, p) in pool.iter().enumerate() {
                let d = distance2(&q.descriptor, &p.descriptor);
                if d < best.1 {
                    best = (j, d, best.1);
                } else if d < best.2 {
                    best.2 = d;
                }
            }
            best
        })
        .collect()
}

/// Mutual nearest neighbours passing the distance-ratio test in both
/// directions, so `match_features(b, a)` mirrors `match_features(a, b)`.
/// Sorted by index into `a`.
pub fn match_features(a: &[Feature], b: &[Feature], ratio: f64) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let ab = nearest_two(a, b);
    let ba = nearest_two(b, a);
    let r2 = ratio * ratio;
    ab.iter()
        .enumerate()
        .filter_map(|(i, &(j, d, second))| {
            let (back, _, second_b) = ba[j];
            let passes = |second: f64| second.is_infinite() || d < r2 * second;
            (back == i && passes(second) && passes(second_b)).then_some((i, j))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelPoint;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_features(rng: &mut ChaCha8Rng, n: usize) -> Vec<Feature> {
        (0..n)
            .map(|i| {
                let mut d = [0.0; 64];
                d.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                d.iter_mut().for_each(|v| *v /= norm);
                Feature { position: PixelPoint::new(i as f64, 0.0), scale: 1.0, orientation: 0.0, response: 1.0, descriptor: d }
            })
            .collect()
    }

    #[test]
    fn identical_lists_match_identically() {
        let f = random_features(&mut ChaCha8Rng::seed_from_u64(1), 50);
        let m = match_features(&f, &f, DEFAULT_RATIO);
        assert_eq!(m, (0..50).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn permutation_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_features(&mut rng, 80);
        let mut perm: Vec<usize> = (0..80).collect();
        perm.shuffle(&mut rng);
        let g: Vec<Feature> = perm.iter().map(|&i| f[i].clone()).collect();
        let m = match_features(&f, &g, DEFAULT_RATIO);
        assert_eq!(m.len(), 80);
        for (i, j) in m {
            assert_eq!(perm[j], i);
        }
    }

    #[test]
    fn unrelated_descriptors_rarely_match() {
        let mut total = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (a, b) = (random_features(&mut rng, 100), random_features(&mut rng, 100));
            total += match_features(&a, &b, DEFAULT_RATIO).len();
        }
        assert!((total as f64 / 20.0) < 5.0, "{total} matches over 20 seeds");
    }

    #[test]
    fn matching_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_features(&mut rng, 60);
        let mut b = random_features(&mut rng, 40);
        // plant noisy copies so there is something to match
        for (k, f) in a.iter().take(30).enumerate() {
            let mut d = f.descriptor;
            d[k % 64] += 0.05;
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.iter_mut().for_each(|v| *v /= n);
            b[k].descriptor = d;
        }
        let ab = match_features(&a, &b, DEFAULT_RATIO);
        let mut ba: Vec<(usize, usize)> = match_features(&b, &a, DEFAULT_RATIO).into_iter().map(|(j, i)| (i, j)).collect();
        ba.sort();
        assert_eq!(ab, ba);
        assert!(ab.len() >= 25);
    }

    #[test]
    fn empty_side() {
        let f = random_features(&mut ChaCha8Rng::seed_from_u64(4), 3);
        assert!(match_features(&f, &[], DEFAULT_RATIO).is_empty());
    }
}
