//! Brute-force oracles shared by integration tests. Nothing here calls the
//! occupation solver; the interpolation, sampling and iteration are written out
//! directly so that agreement with the library is a real check.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub type P3 = [f64; 3];

fn d2(a: &P3, b: &P3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Cell-centered node coordinates of an `m`-per-axis grid over the unit cube.
pub fn node(m: usize, idx: usize) -> P3 {
    let h = 1.0 / m as f64;
    let (i, j, k) = (idx / (m * m), (idx / m) % m, idx % m);
    [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h]
}

/// Trilinear interpolation on the cell-centered grid, constant beyond the
/// outermost nodes.
pub fn trilinear(m: usize, vals: &[f64], r: &P3) -> f64 {
    let h = 1.0 / m as f64;
    let mut lo = [0usize; 3];
    let mut t = [0.0; 3];
    for d in 0..3 {
        let u = (r[d] / h - 0.5).clamp(0.0, (m - 1) as f64);
        let i = (u.floor() as usize).min(m - 2);
        lo[d] = i;
        t[d] = u - i as f64;
    }
    let mut acc = 0.0;
    for c in 0..8 {
        let (a, b, e) = (c >> 2 & 1, c >> 1 & 1, c & 1);
        let w = (if a == 1 { t[0] } else { 1.0 - t[0] })
            * (if b == 1 { t[1] } else { 1.0 - t[1] })
            * (if e == 1 { t[2] } else { 1.0 - t[2] });
        acc += w * vals[((lo[0] + a) * m + lo[1] + b) * m + lo[2] + e];
    }
    acc
}

fn wall_ok(r: &P3, sigma: f64) -> bool {
    r.iter().all(|&x| x > sigma / 2.0 && x < 1.0 - sigma / 2.0)
}

/// Fixed point of `k = K[rho_sigma / k]` for the uniform pdf on the unit cube.
/// Scaling `k` by `c` scales `K` by `c^-(N-1)`, so plain Picard never settles the
/// overall scale; the oracle steps `k <- k^((N-1)/N) K^(1/N)` instead, which has
/// the same fixed point and removes the scale mode in one step.
pub struct K1Oracle {
    pub m: usize,
    pub k: Vec<f64>,
    pub se: Vec<f64>,
    pub iterations: usize,
}

/// Draws the N-1 other particles uniformly over the whole cube, applies wall and
/// pair thetas explicitly and weights each by `rho_sigma / k` (density
/// `1/(1-sigma)^3` on the cleared cube). The sample set is held fixed across
/// iterations, so the iteration converges to the fixed point of the sampled map.
pub fn k1_oracle(n: usize, sigma: f64, m: usize, samples: usize, seed: u64) -> K1Oracle {
    let mut rng = StdRng::seed_from_u64(seed);
    let nodes: Vec<P3> = (0..m * m * m).map(|i| node(m, i)).collect();
    let rho = 1.0 / (1.0 - sigma).powi(3);
    // admissible samples only: positions and blocked node lists
    let mut kept: Vec<(Vec<P3>, Vec<u32>)> = Vec::new();
    for _ in 0..samples {
        let pts: Vec<P3> = (0..n - 1)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        if !pts.iter().all(|p| wall_ok(p, sigma)) {
            continue;
        }
        let mut ok = true;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if d2(&pts[i], &pts[j]) <= sigma * sigma {
                    ok = false;
                }
            }
        }
        if !ok {
            continue;
        }
        let blocked: Vec<u32> = (0..nodes.len())
            .filter(|&j| pts.iter().any(|p| d2(p, &nodes[j]) <= sigma * sigma))
            .map(|j| j as u32)
            .collect();
        kept.push((pts, blocked));
    }
    let s = samples as f64;
    let mut k = vec![1.0; nodes.len()];
    let mut se = vec![0.0; nodes.len()];
    let mut iterations = 0;
    for it in 1..=100 {
        iterations = it;
        let mut tot = 0.0;
        let mut tot2 = 0.0;
        let mut blk = vec![0.0; nodes.len()];
        let mut blk2 = vec![0.0; nodes.len()];
        for (pts, blocked) in &kept {
            let w: f64 = pts.iter().map(|p| rho / trilinear(m, &k, p)).product();
            tot += w;
            tot2 += w * w;
            for &j in blocked {
                blk[j as usize] += w;
                blk2[j as usize] += w * w;
            }
        }
        let mut change: f64 = 0.0;
        for j in 0..nodes.len() {
            // per-sample value is w when clear, 0 otherwise
            let mean = (tot - blk[j]) / s;
            let sq = (tot2 - blk2[j]) / s;
            se[j] = ((sq - mean * mean).max(0.0) / s).sqrt();
            let next = k[j].powf((n - 1) as f64 / n as f64) * mean.powf(1.0 / n as f64);
            change = change.max((next - k[j]).abs());
            k[j] = next;
        }
        if change < 1e-9 {
            break;
        }
    }
    K1Oracle { m, k, se, iterations }
}

/// Direct estimate of `k_2(r1, r2)` for N = 3: one free particle drawn uniformly
/// over the cube, weighted by `rho_sigma / k1` and required to clear the walls
/// and both fixed points.
pub fn k2_oracle(sigma: f64, k1: &K1Oracle, r1: P3, r2: P3, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let rho = 1.0 / (1.0 - sigma).powi(3);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let p = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        if wall_ok(&p, sigma) && d2(&p, &r1) > sigma * sigma && d2(&p, &r2) > sigma * sigma {
            let w = rho / trilinear(k1.m, &k1.k, &p);
            s1 += w;
            s2 += w * w;
        }
    }
    let n = samples as f64;
    let mean = s1 / n;
    (mean, ((s2 / n - mean * mean).max(0.0) / n).sqrt())
}

/// Nodes of the `m`-grid farther than `margin` from every face.
pub fn bulk(m: usize, margin: f64) -> Vec<usize> {
    (0..m * m * m)
        .filter(|&i| node(m, i).iter().all(|&x| x > margin && x < 1.0 - margin))
        .collect()
}
