//! Shared Monte Carlo kernel for occupation integrals.
//!
//! One sample = `particles` positions drawn from a proposal density, weighted by
//! `prod 1/A(r_i)` (A interpolated on a grid, or 1). The sample is admissible
//! when all particles clear the walls (if checked) and each other. For
//! admissible samples the kernel records which targets are blocked: grid nodes
//! within sigma of a particle, and point tuples with any point within sigma of
//! a particle. Optionally one extra particle is drawn and tested against the
//! admissible set (used for the insertion probabilities beta_m).
//!
//! Each sample has its own ChaCha stream (stream id = sample index), so early
//! exits never shift other samples and runs at different sigma share common
//! random numbers.

use rand::SeedableRng;
use rayon::prelude::*;

use super::SpatialGrid;
use crate::geometry::{wall_theta, HardSphereModel, OverlapGrid};
use crate::pdf::OneBodyPdf;
use crate::rng::{child_seed, SimRng};
use crate::Vec3;

pub(crate) struct KernelSpec<'a> {
    pub proposal: &'a dyn OneBodyPdf,
    pub check_walls: bool,
    pub shape: Option<(&'a SpatialGrid, &'a [f64])>,
    pub particles: usize,
    pub model: HardSphereModel,
    pub grid_targets: Option<&'a SpatialGrid>,
    pub tuple_targets: &'a [Vec<Vec3>],
    pub extra_probe: bool,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Accum {
    pub n: u64,
    /// sum of w over admissible samples, and of w^2
    pub s0: f64,
    pub s2: f64,
    /// per target: sum of w and w^2 over admissible samples that block it
    pub blocked: Vec<f64>,
    pub blocked2: Vec<f64>,
    /// extra probe: sums of w w_x (and squares) over admissible samples, total and blocked
    pub e0: f64,
    pub e2: f64,
    pub eb: f64,
    pub eb2: f64,
}

impl Accum {
    fn new(targets: usize) -> Self {
        Self {
            blocked: vec![0.0; targets],
            blocked2: vec![0.0; targets],
            ..Default::default()
        }
    }

    fn merge(mut self, o: &Accum) -> Self {
        self.n += o.n;
        self.s0 += o.s0;
        self.s2 += o.s2;
        for (a, b) in self.blocked.iter_mut().zip(&o.blocked) {
            *a += b;
        }
        for (a, b) in self.blocked2.iter_mut().zip(&o.blocked2) {
            *a += b;
        }
        self.e0 += o.e0;
        self.e2 += o.e2;
        self.eb += o.eb;
        self.eb2 += o.eb2;
        self
    }

    /// Ratio estimate `P(blocked_j | admissible)` and its standard error.
    pub fn blocked_fraction(&self, j: usize) -> (f64, f64) {
        ratio_se(self.blocked[j], self.blocked2[j], self.s0, self.s2)
    }

    /// `P(extra particle blocked | admissible)` and its standard error.
    pub fn extra_blocked_fraction(&self) -> (f64, f64) {
        ratio_se(self.eb, self.eb2, self.e0, self.e2)
    }

    /// Mean of `w * adm` over all samples and its standard error.
    pub fn mean_weight(&self) -> (f64, f64) {
        let n = self.n as f64;
        let m = self.s0 / n;
        let var = (self.s2 / n - m * m).max(0.0);
        (m, (var / n).sqrt())
    }
}

/// Self-normalized ratio `p = sum(w y) / sum(w)` for 0/1 outcomes `y`, with the
/// delta-method standard error `sqrt(sum w^2 (y - p)^2) / sum w`.
fn ratio_se(num: f64, num2: f64, den: f64, den2: f64) -> (f64, f64) {
    if den <= 0.0 {
        return (0.0, f64::INFINITY);
    }
    let p = num / den;
    let ss = num2 * (1.0 - 2.0 * p) + p * p * den2;
    (p, ss.max(0.0).sqrt() / den)
}

const SHARDS: u64 = 64;

pub(crate) fn run(spec: &KernelSpec<'_>, samples: u64, seed: u64) -> Accum {
    let targets = spec.grid_targets.map_or(0, |g| g.len()) + spec.tuple_targets.len();
    let base = child_seed(seed, "occupation/kernel", 0);
    let per = samples.div_ceil(SHARDS);
    let parts: Vec<Accum> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let lo = (shard * per).min(samples);
            let hi = ((shard + 1) * per).min(samples);
            run_range(spec, lo..hi, base, targets)
        })
        .collect();
    parts
        .iter()
        .fold(Accum::new(targets), |acc, p| acc.merge(p))
}

fn run_range(spec: &KernelSpec<'_>, range: std::ops::Range<u64>, base: u64, targets: usize) -> Accum {
    let sigma = spec.model.sigma();
    let edge = spec.model.edge();
    let mut acc = Accum::new(targets);
    let mut grid = OverlapGrid::new(edge, sigma, spec.particles + 1);
    let mut stamp = vec![u64::MAX; targets];
    let mut marked: Vec<usize> = Vec::with_capacity(64);
    let mut rng = SimRng::seed_from_u64(base);
    let n_grid = spec.grid_targets.map_or(0, |g| g.len());
    let weight_at = |r: &Vec3| match spec.shape {
        Some((g, a)) => 1.0 / g.interpolate(a, r),
        None => 1.0,
    };
    for sample in range {
        acc.n += 1;
        rng.set_stream(sample);
        rng.set_word_pos(0);
        grid.clear();
        marked.clear();
        let mut w = 1.0;
        let mut admissible = true;
        for _ in 0..spec.particles {
            let r = spec.proposal.sample_position(&mut rng);
            if spec.check_walls && !wall_theta(&r, &spec.model) {
                admissible = false;
                break;
            }
            if grid.overlaps(&r) {
                admissible = false;
                break;
            }
            grid.insert(r);
            w *= weight_at(&r);
            if let Some(g) = spec.grid_targets {
                g.for_each_node_within(&r, sigma, |j| {
                    if stamp[j] != sample {
                        stamp[j] = sample;
                        marked.push(j);
                    }
                });
            }
        }
        if !admissible {
            continue;
        }
        acc.s0 += w;
        acc.s2 += w * w;
        for (t, tuple) in spec.tuple_targets.iter().enumerate() {
            if tuple.iter().any(|p| grid.overlaps(p)) {
                marked.push(n_grid + t);
            }
        }
        for &j in &marked {
            acc.blocked[j] += w;
            acc.blocked2[j] += w * w;
        }
        if spec.extra_probe {
            let r = spec.proposal.sample_position(&mut rng);
            // the proposal must put the extra particle in the cleared cube
            let wx = if spec.check_walls && !wall_theta(&r, &spec.model) {
                0.0
            } else {
                weight_at(&r)
            };
            let ww = w * wx;
            acc.e0 += ww;
            acc.e2 += ww * ww;
            if grid.overlaps(&r) {
                acc.eb += ww;
                acc.eb2 += ww * ww;
            }
        }
    }
    acc
}
