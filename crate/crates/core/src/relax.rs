//! Spatially homogeneous Boltzmann relaxation `d f / dt = C_B[f]` on a
//! cell-centered velocity grid, explicit Euler in time.
//!
//! The collision integral is discretized as a conservative discrete-velocity
//! model: a pair of nodes `(i, j)` with relative lattice vector `g` scatters
//! into `(k, l) = ((i + j + g') / 2, (i + j - g') / 2)` for every lattice vector
//! `g'` with `|g'| = |g|` and the parity of `g`, each output carrying an equal
//! share of the sphere. Every collision conserves mass, momentum and energy on
//! the grid exactly, discrete Maxwellians are stationary, and each symmetric
//! four-node update raises the entropy to first order.
//!
//! The sum over pairs and outputs is sampled per step: every active node is
//! paired with `i + d` for a set of random displacements `d`, and each pair
//! with a few random outputs. Updates are applied symmetrically to all four
//! nodes with the inverse sampling probability, so the step is an unbiased
//! estimate of the full operator that keeps the conservation laws exactly.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::HardSphereModel;
use crate::pdf::maxwellian;
use crate::pdf::EntropyReport;
use crate::quadrature::QuadratureSpec;
use crate::rng::{child_seed, SimRng};
use crate::{Error, Result, Vec3};

/// Velocity density on an `n^3` cell-centered grid over `center +- half`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    pub n: usize,
    pub center: Vec3,
    pub half: f64,
    pub values: Vec<f64>,
}

impl VelocityGrid {
    pub fn from_fn(n: usize, center: Vec3, half: f64, f: impl Fn(&Vec3) -> f64) -> Self {
        let mut g = Self {
            n,
            center,
            half,
            values: vec![0.0; n * n * n],
        };
        for i in 0..g.values.len() {
            g.values[i] = f(&g.node(i));
        }
        g
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(3)
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        let n = self.n;
        let h = self.h();
        let c = |a: usize| -self.half + (a as f64 + 0.5) * h;
        self.center + Vec3::new(c(idx / (n * n)), c((idx / n) % n), c(idx % n))
    }

    /// Mass, momentum (3) and `int |v|^2 f`.
    pub fn moments(&self) -> [f64; 5] {
        let dv = self.cell_volume();
        let mut m = [0.0; 5];
        for (i, &f) in self.values.iter().enumerate() {
            let v = self.node(i);
            let p = phi(&v);
            for k in 0..5 {
                m[k] += p[k] * f * dv;
            }
        }
        m
    }

    /// Mean velocity and temperature (per-axis variance) from the moments.
    pub fn mean_and_temperature(&self) -> (f64, Vec3, f64) {
        let m = self.moments();
        let u = Vec3::new(m[1], m[2], m[3]) / m[0];
        let t = (m[4] / m[0] - u.norm_squared()) / 3.0;
        (m[0], u, t)
    }

    /// Velocity part of the Boltzmann-Shannon entropy `-sum f ln f dv`, with the
    /// difference from the stride-2 sub-lattice sum as error estimate.
    pub fn entropy(&self) -> EntropyReport {
        let dv = self.cell_volume();
        let n = self.n;
        let term = |f: f64| if f > 0.0 { -f * f.ln() } else { 0.0 };
        let mut s = 0.0;
        let mut sub = 0.0;
        for (i, &f) in self.values.iter().enumerate() {
            let t = term(f);
            s += t;
            let (a, b, c) = (i / (n * n), (i / n) % n, i % n);
            if a % 2 == 0 && b % 2 == 0 && c % 2 == 0 {
                sub += t;
            }
        }
        let s = s * dv;
        EntropyReport {
            s,
            quadrature_error: (s - sub * 8.0 * dv).abs(),
        }
    }

    /// `sum |f - g(v)| dv` against a function on the same nodes.
    pub fn l1_distance(&self, g: impl Fn(&Vec3) -> f64) -> f64 {
        let dv = self.cell_volume();
        self.values
            .iter()
            .enumerate()
            .map(|(i, f)| (f - g(&self.node(i))).abs())
            .sum::<f64>()
            * dv
    }

    /// Maxwellian with the grid's own mass, mean velocity and temperature.
    pub fn matched_maxwellian(&self) -> impl Fn(&Vec3) -> f64 {
        let (m, u, t) = self.mean_and_temperature();
        move |v: &Vec3| m * maxwellian(v, &u, t.sqrt())
    }
}

fn phi(v: &Vec3) -> [f64; 5] {
    [1.0, v.x, v.y, v.z, v.norm_squared()]
}

/// Two beams `(M(u e_x, T_b) + M(-u e_x, T_b)) / 2` with unit mass.
pub fn two_beam(n: usize, half: f64, u: f64, t_beam: f64) -> VelocityGrid {
    let s = t_beam.sqrt();
    let a = Vec3::new(u, 0.0, 0.0);
    VelocityGrid::from_fn(n, Vec3::zeros(), half, |v| {
        0.5 * (maxwellian(v, &a, s) + maxwellian(v, &(-a), s))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxOptions {
    /// Random partner displacements per node and step.
    pub displacements: usize,
    /// Random outputs per pair.
    pub outputs: usize,
    /// Largest displacement per axis in nodes (0: three quarters of the grid).
    pub reach: usize,
    /// Nodes below `cutoff * max f` take no part in collisions as `i` or `j`.
    pub cutoff: f64,
    /// Keep a grid snapshot every this many steps (0: final only).
    pub snapshot_every: usize,
    pub seed: u64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            displacements: 256,
            outputs: 2,
            reach: 0,
            cutoff: 1e-10,
            snapshot_every: 0,
            seed: 0,
        }
    }
}

impl RelaxOptions {
    fn reach(&self, n: usize) -> usize {
        if self.reach == 0 {
            (3 * n / 4).max(1)
        } else {
            self.reach.min(n - 1)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxRecord {
    pub t: f64,
    pub moments: [f64; 5],
    pub entropy: EntropyReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Relaxation {
    pub dt: f64,
    pub records: Vec<RelaxRecord>,
    pub snapshots: Vec<(f64, VelocityGrid)>,
    pub last: VelocityGrid,
}

/// `d f / dt = (N sigma^2 / V) C[f]` for the homogeneous one-body pdf
/// `rho = f / V` of the model.
fn prefactor(model: &HardSphereModel) -> f64 {
    model.n_sigma2() / model.domain_measure()
}

/// Mean collision frequency `(N sigma^2 / V) int int f f pi |g| / mass`, on a
/// stride-2 sub-lattice.
pub fn collision_frequency(f: &VelocityGrid, model: &HardSphereModel) -> f64 {
    let sub: Vec<(Vec3, f64)> = lattice(f, 2, [0, 0, 0])
        .into_iter()
        .map(|i| (f.node(i), f.values[i] * 8.0 * f.cell_volume()))
        .collect();
    let mass: f64 = sub.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (a, wa) in &sub {
        for (b, wb) in &sub {
            acc += wa * wb * (a - b).norm();
        }
    }
    prefactor(model) * std::f64::consts::PI * acc / mass
}

/// Largest step the driver accepts: `0.1 / nu_hat`.
pub fn stable_dt(f: &VelocityGrid, model: &HardSphereModel) -> f64 {
    0.1 / collision_frequency(f, model)
}

fn lattice(f: &VelocityGrid, stride: usize, off: [usize; 3]) -> Vec<usize> {
    let n = f.n;
    let mut out = Vec::new();
    for a in (off[0]..n).step_by(stride) {
        for b in (off[1]..n).step_by(stride) {
            for c in (off[2]..n).step_by(stride) {
                out.push((a * n + b) * n + c);
            }
        }
    }
    out
}

/// Integer lattice vectors grouped by `(|g|^2, parity)`.
struct SphereTable {
    offsets: Vec<usize>,
    vectors: Vec<[i16; 3]>,
    max_e: usize,
}

impl SphereTable {
    fn new(reach: i32) -> Self {
        let max_e = 3 * (reach as usize).pow(2);
        let key = |v: [i32; 3]| {
            let e = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) as usize;
            let p = ((v[0] & 1) << 2 | (v[1] & 1) << 1 | (v[2] & 1)) as usize;
            e * 8 + p
        };
        let r = (max_e as f64).sqrt() as i32;
        let span = 2 * r + 1;
        let mut counts = vec![0usize; (max_e + 1) * 8 + 1];
        let all: Vec<[i32; 3]> = (0..span.pow(3))
            .map(|c| [c / (span * span) - r, (c / span) % span - r, c % span - r])
            .filter(|v| ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) as usize) <= max_e)
            .collect();
        for v in &all {
            counts[key(*v) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut vectors = vec![[0i16; 3]; all.len()];
        for v in &all {
            let k = key(*v);
            vectors[fill[k]] = [v[0] as i16, v[1] as i16, v[2] as i16];
            fill[k] += 1;
        }
        Self {
            offsets: counts,
            vectors,
            max_e,
        }
    }

    /// Vectors sharing the squared length and parity of `g`.
    fn shell(&self, g: [i32; 3]) -> &[[i16; 3]] {
        let e = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) as usize;
        if e > self.max_e {
            return &[];
        }
        let p = ((g[0] & 1) << 2 | (g[1] & 1) << 1 | (g[2] & 1)) as usize;
        let k = e * 8 + p;
        &self.vectors[self.offsets[k]..self.offsets[k + 1]]
    }
}

/// Sampled collision rates (density per unit time) at every node.
fn collision_rates(f: &VelocityGrid, model: &HardSphereModel, opts: &RelaxOptions, step: u64, table: &SphereTable) -> Vec<f64> {
    let n = f.n as i32;
    let h = f.h();
    let fmax = f.values.iter().copied().fold(0.0, f64::max);
    let thr = opts.cutoff * fmax;
    let reach = opts.reach(f.n) as i32;
    let box_count = ((2 * reach + 1).pow(3) - 1) as f64;
    let mut rng = SimRng::seed_from_u64(child_seed(opts.seed, "relax/displacements", step));
    let displacements: Vec<[i32; 3]> = (0..opts.displacements)
        .map(|_| loop {
            let d = [0; 3].map(|_: i32| rng.random_range(-reach..=reach));
            if d != [0, 0, 0] {
                break d;
            }
        })
        .collect();
    let outputs = opts.outputs.max(1);
    // each sampled output stands for pi |g| h^3 of the sphere-and-partner
    // integral; the 1/4 spreads a tuple over its four nodes
    let base = 0.25 * prefactor(model) * std::f64::consts::PI * h * h.powi(3) * box_count
        / (opts.displacements as f64 * outputs as f64);
    let active: Vec<usize> = (0..f.values.len()).filter(|&i| f.values[i] > thr).collect();
    let idx = |c: [i32; 3]| ((c[0] * n + c[1]) * n + c[2]) as usize;
    let inside = |c: [i32; 3]| c.iter().all(|&x| (0..n).contains(&x));
    let stream = child_seed(opts.seed, "relax/outputs", step);
    active
        .par_chunks(512)
        .fold(
            || vec![0.0; f.values.len()],
            |mut acc, chunk| {
                for &i in chunk {
                    let mut rng = SimRng::seed_from_u64(stream);
                    rng.set_stream(i as u64);
                    let ci = [(i / (f.n * f.n)) as i32, ((i / f.n) % f.n) as i32, (i % f.n) as i32];
                    let fi = f.values[i];
                    for d in &displacements {
                        let cj = [ci[0] + d[0], ci[1] + d[1], ci[2] + d[2]];
                        if !inside(cj) {
                            continue;
                        }
                        let j = idx(cj);
                        let fj = f.values[j];
                        if fj <= thr {
                            continue;
                        }
                        let g = [-d[0], -d[1], -d[2]];
                        let shell = table.shell(g);
                        if shell.len() < 2 {
                            continue;
                        }
                        let gn = ((g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) as f64).sqrt();
                        let w = base * gn;
                        let s = [ci[0] + cj[0], ci[1] + cj[1], ci[2] + cj[2]];
                        for _ in 0..outputs {
                            let gp = shell[rng.random_range(0..shell.len())];
                            let ck = [(s[0] + gp[0] as i32) / 2, (s[1] + gp[1] as i32) / 2, (s[2] + gp[2] as i32) / 2];
                            let cl = [(s[0] - gp[0] as i32) / 2, (s[1] - gp[1] as i32) / 2, (s[2] - gp[2] as i32) / 2];
                            if !inside(ck) || !inside(cl) {
                                continue;
                            }
                            let (k, l) = (idx(ck), idx(cl));
                            let delta = w * (f.values[k] * f.values[l] - fi * fj);
                            acc[i] += delta;
                            acc[j] += delta;
                            acc[k] -= delta;
                            acc[l] -= delta;
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0.0; f.values.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        )
}

/// Advances `initial` to `t_end` with step `dt` (the last step is shortened to
/// land on `t_end`). `quad` supplies the grid sizes: `velocity_nodes` per axis
/// and `v_max` (in units of the initial thermal speed) as half-width; a grid
/// that does not match them is rejected.
pub fn homogeneous_relax(
    initial: &VelocityGrid,
    model: &HardSphereModel,
    quad: &QuadratureSpec,
    t_end: f64,
    dt: f64,
    opts: &RelaxOptions,
) -> Result<Relaxation> {
    quad.validate()?;
    if initial.n != quad.velocity_nodes {
        return Err(Error::InvalidArgument(format!(
            "grid has {} nodes per axis, quadrature asks for {}",
            initial.n, quad.velocity_nodes
        )));
    }
    let (mass, _, temp) = initial.mean_and_temperature();
    if !((mass - 1.0).abs() < 1e-3) {
        return Err(Error::InvalidArgument(format!("initial mass {mass} is not normalized")));
    }
    if initial.half < 0.999 * quad.v_max * temp.sqrt() {
        return Err(Error::InvalidArgument(format!(
            "grid half-width {} below v_max = {} thermal speeds",
            initial.half, quad.v_max
        )));
    }
    let bound = stable_dt(initial, model);
    if !(dt > 0.0 && dt <= bound * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("dt = {dt} outside (0, 0.1/nu] = (0, {bound}]")));
    }
    let table = SphereTable::new(opts.reach(initial.n) as i32);
    let mut f = initial.clone();
    let mut t = 0.0;
    let mut records = vec![RelaxRecord {
        t,
        moments: f.moments(),
        entropy: f.entropy(),
    }];
    let mut snapshots = Vec::new();
    let mut step = 0u64;
    while t < t_end * (1.0 - 1e-12) {
        let h = dt.min(t_end - t);
        let rates = collision_rates(&f, model, opts, step, &table);
        for (v, r) in f.values.iter_mut().zip(&rates) {
            *v += h * r;
        }
        if let Some((i, &v)) = f
            .values
            .iter()
            .enumerate()
            .find(|(_, &v)| v < 0.0 && v < -1e-12 * (f.values.iter().copied().fold(0.0, f64::max)))
        {
            return Err(Error::NegativeDensity {
                node: i,
                value: v,
                step: step as usize,
            });
        }
        for v in f.values.iter_mut() {
            *v = v.max(0.0);
        }
        t += h;
        step += 1;
        records.push(RelaxRecord {
            t,
            moments: f.moments(),
            entropy: f.entropy(),
        });
        if opts.snapshot_every > 0 && step as usize % opts.snapshot_every == 0 {
            snapshots.push((t, f.clone()));
        }
    }
    Ok(Relaxation {
        dt,
        records,
        snapshots,
        last: f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shells_share_length_and_parity() {
        let t = SphereTable::new(6);
        let g = [3, -1, 2];
        let shell = t.shell(g);
        assert!(shell.contains(&[3, -1, 2]) && shell.contains(&[1, -3, -2]) && !shell.contains(&[-1, 2, 3]));
        for v in shell {
            let v = [v[0] as i32, v[1] as i32, v[2] as i32];
            assert_eq!(v.iter().map(|x| x * x).sum::<i32>(), 14);
            assert!((0..3).all(|d| (v[d] - g[d]).rem_euclid(2) == 0));
        }
        assert!(t.shell([7, 7, 7]).is_empty());
    }

    #[test]
    fn rates_conserve_and_vanish_on_discrete_maxwellian() {
        let model = HardSphereModel::new(1000, 0.01, 1.0).unwrap();
        let opts = RelaxOptions { displacements: 64, ..Default::default() };
        let g = two_beam(12, 5.0, 1.2, 0.52);
        let table = SphereTable::new(opts.reach(12) as i32);
        let r = collision_rates(&g, &model, &opts, 0, &table);
        let mut m = [0.0; 5];
        for (i, x) in r.iter().enumerate() {
            let p = phi(&g.node(i));
            for k in 0..5 {
                m[k] += p[k] * x;
            }
        }
        let scale: f64 = r.iter().map(|x| x.abs()).sum();
        assert!(scale > 0.0);
        assert!(m.iter().all(|x| x.abs() < 1e-12 * scale * 30.0), "{m:?}");
        let mx = VelocityGrid::from_fn(12, Vec3::zeros(), 5.0, |v| maxwellian(v, &Vec3::new(0.3, 0.0, 0.0), 1.1));
        let r = collision_rates(&mx, &model, &opts, 0, &table);
        let top = mx.values.iter().copied().fold(0.0, f64::max);
        assert!(r.iter().all(|x| x.abs() < 1e-12 * top), "maxwellian not stationary");
    }

    #[test]
    fn two_beam_moments() {
        let g = two_beam(32, 5.0, 1.2, 0.52);
        let (m, u, t) = g.mean_and_temperature();
        assert!((m - 1.0).abs() < 1e-6);
        assert!(u.norm() < 1e-12);
        assert!((t - (0.52 + 1.44 / 3.0)).abs() < 1e-6);
    }

    #[test]
    fn rejects_large_step_and_unnormalized_input() {
        let model = HardSphereModel::new(1000, 0.01, 1.0).unwrap();
        let quad = QuadratureSpec::new(5.0, 12, 302).unwrap();
        let g = VelocityGrid::from_fn(12, Vec3::zeros(), 5.0, |v| maxwellian(v, &Vec3::zeros(), 1.0));
        let dt = stable_dt(&g, &model);
        let opts = RelaxOptions::default();
        assert!(homogeneous_relax(&g, &model, &quad, 1.0, 2.0 * dt, &opts).is_err());
        let mut h = g.clone();
        h.values.iter_mut().for_each(|v| *v *= 2.0);
        assert!(homogeneous_relax(&h, &model, &quad, 1.0, dt, &opts).is_err());
    }
}
