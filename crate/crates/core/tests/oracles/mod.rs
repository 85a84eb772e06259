//! Independent reference implementations used by the integration tests and
//! the acceptance suite. Deliberately naive.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttta_core::{MaskImage, ScoreMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Score map with values drawn from `levels` distinct integers, so ties and
/// plateaus are common.
pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, levels: u32) -> ScoreMap {
    let v = (0..h * w).map(|_| rng.random_range(0..levels) as f32).collect();
    ScoreMap::new(h, w, v).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> MaskImage {
    MaskImage::from_fn(h, w, |_, _| rng.random_bool(p))
}

/// Exhaustive 8-neighbor scan.
pub fn peaks(s: &ScoreMap, exclude: Option<&MaskImage>) -> Vec<(usize, usize)> {
    let (h, w) = s.size();
    let offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    let mut out = Vec::new();
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            if exclude.is_some_and(|m| m.is_on(r as usize, c as usize)) {
                continue;
            }
            let v = s.get(r as usize, c as usize);
            let neighbors: Vec<f32> = offsets
                .iter()
                .map(|(dr, dc)| (r + dr, c + dc))
                .filter(|&(rr, cc)| rr >= 0 && cc >= 0 && rr < h as i64 && cc < w as i64)
                .map(|(rr, cc)| s.get(rr as usize, cc as usize))
                .collect();
            if neighbors.iter().all(|&n| v >= n) && neighbors.iter().any(|&n| v > n) {
                out.push((r as usize, c as usize));
            }
        }
    }
    out
}

/// Sort the values and read the `ceil(p N / 100)`-th smallest.
pub fn percentile(values: &[f32], p: f64) -> f32 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut rank = (p / 100.0 * n as f64).ceil() as usize;
    if rank < 1 {
        rank = 1;
    }
    if rank > n {
        rank = n;
    }
    sorted[rank - 1]
}

pub fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

/// Plain hinge objective on row-major `x` (`n x d`).
pub fn objective(x: &[f64], y: &[f64], d: usize, w: &[f64], b: f64, c: f64, mean: bool) -> f64 {
    let n = y.len();
    let mut hinge = 0.0;
    for i in 0..n {
        let z: f64 = (0..d).map(|k| w[k] * x[i * d + k]).sum();
        hinge += (1.0 - y[i] * (z - b)).max(0.0);
    }
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    if mean {
        norm2 + c * hinge / n as f64
    } else {
        0.5 * norm2 + c * hinge
    }
}

/// Long-horizon subgradient descent on the same objective with diminishing
/// steps and best-iterate tracking. Returns the best objective seen.
pub fn svm_subgradient(x: &[f64], y: &[f64], d: usize, c: f64, mean: bool, steps: usize) -> f64 {
    let n = y.len();
    let reg = if mean { 2.0 } else { 1.0 };
    let hinge_scale = if mean { c / n as f64 } else { c };
    let max_norm = (0..n)
        .map(|i| (0..d).map(|k| x[i * d + k].powi(2)).sum::<f64>().sqrt())
        .fold(1.0, f64::max);
    // step scale from the Lipschitz constant of the hinge part
    let base = 1.0 / (reg + hinge_scale * n as f64 * (max_norm + 1.0));
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = objective(x, y, d, &w, b, c, mean);
    let mut gw = vec![0.0; d];
    for t in 0..steps {
        gw.iter_mut().zip(&w).for_each(|(g, wk)| *g = reg * wk);
        let mut gb = 0.0;
        for i in 0..n {
            let z: f64 = (0..d).map(|k| w[k] * x[i * d + k]).sum();
            if y[i] * (z - b) < 1.0 {
                for k in 0..d {
                    gw[k] -= hinge_scale * y[i] * x[i * d + k];
                }
                gb += hinge_scale * y[i];
            }
        }
        let eta = base / (1.0 + t as f64 / 1000.0).sqrt();
        for k in 0..d {
            w[k] -= eta * gw[k];
        }
        b -= eta * gb;
        if t % 16 == 0 || t + 1 == steps {
            best = best.min(objective(x, y, d, &w, b, c, mean));
        }
    }
    best
}

fn dist2(points: &[f64], dim: usize, a: usize, b: usize) -> f64 {
    (0..dim).map(|k| (points[a * dim + k] - points[b * dim + k]).powi(2)).sum()
}

/// Largest distance from any point to its nearest chosen center.
pub fn covering_radius(points: &[f64], dim: usize, centers: &[usize]) -> f64 {
    let n = points.len() / dim;
    (0..n)
        .map(|i| centers.iter().map(|&c| dist2(points, dim, i, c)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        .sqrt()
}

/// Exact optimal k-center radius with centers drawn from the points: binary
/// search over pairwise distances, each probe an exhaustive branch and bound
/// over which center covers the hardest uncovered point.
pub fn optimal_k_center_radius(points: &[f64], dim: usize, k: usize) -> f64 {
    let n = points.len() / dim;
    let mut cands: Vec<f64> = Vec::new();
    for a in 0..n {
        for b in a..n {
            cands.push(dist2(points, dim, a, b));
        }
    }
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    let (mut lo, mut hi) = (0, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if coverable(points, dim, n, k, cands[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    cands[lo].sqrt()
}

fn coverable(points: &[f64], dim: usize, n: usize, k: usize, r2: f64) -> bool {
    let covers: Vec<Vec<usize>> = (0..n)
        .map(|c| (0..n).filter(|&i| dist2(points, dim, c, i) <= r2).collect())
        .collect();
    let mut count = vec![0u32; n];
    search(&covers, &mut count, k)
}

fn search(covers: &[Vec<usize>], count: &mut [u32], left: usize) -> bool {
    let n = count.len();
    let uncovered: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    if uncovered.is_empty() {
        return true;
    }
    if left == 0 {
        return false;
    }
    let widest = covers
        .iter()
        .map(|c| c.iter().filter(|&&i| count[i] == 0).count())
        .max()
        .unwrap_or(0);
    if widest * left < uncovered.len() {
        return false;
    }
    // the uncovered point with the fewest candidate centers
    let target = *uncovered
        .iter()
        .min_by_key(|&&i| covers.iter().filter(|c| c.contains(&i)).count())
        .unwrap();
    for members in covers {
        if !members.contains(&target) {
            continue;
        }
        for &i in members {
            count[i] += 1;
        }
        let ok = search(covers, count, left - 1);
        for &i in members {
            count[i] -= 1;
        }
        if ok {
            return true;
        }
    }
    false
}

/// Counts positive/negative pairs ordered correctly, ties worth one half.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                den += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}
