//! Observables of MD trajectories and their dilute-gas predictions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EventKind, Trajectory};
use crate::occupation::{contact_k2, solve_k1, McParams, Renormalized, SpatialGrid};
use crate::pdf::{Estimate, TabulatedPdf, UniformMaxwellian};
use crate::quadrature::{gauss_legendre_on, sphere_rule};
use crate::{Error, HardSphereModel, NBodyConfig, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub pos_bins: usize,
    pub vel_bins: usize,
    /// Velocity histogram box `[-v_max, v_max]^3`.
    pub v_max: f64,
    /// Snapshots before `t_start` are discarded (equilibration).
    pub t_start: f64,
    pub windows: usize,
    /// Relative width of the near-contact shell `[sigma, sigma (1 + eta)]`.
    pub eta: f64,
    /// Bins with fewer counts are reported as under-populated.
    pub min_count: u64,
}

impl Default for ObservableSpec {
    fn default() -> Self {
        Self {
            pos_bins: 2,
            vel_bins: 4,
            v_max: 3.0,
            t_start: 0.0,
            windows: 4,
            eta: 0.05,
            min_count: 5,
        }
    }
}

/// Position x velocity histogram, row-major `x,y,z,vx,vy,vz`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub pos_bins: usize,
    pub vel_bins: usize,
    pub v_max: f64,
    pub edge: f64,
    pub counts: Vec<u64>,
    pub samples: u64,
    /// Samples whose velocity falls outside the box.
    pub outside: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub stderr: f64,
}

impl Histogram {
    fn new(spec: &ObservableSpec, edge: f64) -> Self {
        Self {
            pos_bins: spec.pos_bins,
            vel_bins: spec.vel_bins,
            v_max: spec.v_max,
            edge,
            counts: vec![0; spec.pos_bins.pow(3) * spec.vel_bins.pow(3)],
            samples: 0,
            outside: 0,
        }
    }

    fn add(&mut self, s: &NBodyConfig) {
        let (np, nv) = (self.pos_bins as f64, self.vel_bins as f64);
        for p in &s.points {
            self.samples += 1;
            if p.v.iter().any(|c| c.abs() >= self.v_max) {
                self.outside += 1;
                continue;
            }
            let mut idx = 0;
            for d in 0..3 {
                let b = ((p.r[d] / self.edge * np) as usize).min(self.pos_bins - 1);
                idx = idx * self.pos_bins + b;
            }
            for d in 0..3 {
                let b = (((p.v[d] + self.v_max) / (2.0 * self.v_max) * nv) as usize).min(self.vel_bins - 1);
                idx = idx * self.vel_bins + b;
            }
            self.counts[idx] += 1;
        }
    }

    fn bin_volume(&self) -> f64 {
        (self.edge / self.pos_bins as f64).powi(3) * (2.0 * self.v_max / self.vel_bins as f64).powi(3)
    }

    /// `-sum p ln(p / vol)` with the Miller-Madow correction and a delta-method
    /// standard error that treats samples as independent.
    pub fn entropy(&self) -> EntropyEstimate {
        let m = self.samples as f64;
        if m == 0.0 {
            return EntropyEstimate { value: 0.0, stderr: f64::INFINITY };
        }
        let vol = self.bin_volume();
        let (mut s1, mut s2, mut occupied) = (0.0, 0.0, 0usize);
        for &c in self.counts.iter().filter(|&&c| c > 0) {
            let p = c as f64 / m;
            let l = (p / vol).ln();
            s1 += p * l;
            s2 += p * l * l;
            occupied += 1;
        }
        EntropyEstimate {
            value: -s1 + (occupied as f64 - 1.0) / (2.0 * m),
            stderr: ((s2 - s1 * s1).max(0.0) / m).sqrt(),
        }
    }

    pub fn under_populated(&self, min_count: u64) -> Vec<usize> {
        (0..self.counts.len()).filter(|&i| self.counts[i] < min_count).collect()
    }

    /// Density at bin centers as a tabulated pdf.
    pub fn to_tabulated(&self) -> Result<TabulatedPdf> {
        let centers = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
            (0..n).map(|k| lo + (k as f64 + 0.5) * (hi - lo) / n as f64).collect()
        };
        let p = centers(self.pos_bins, 0.0, self.edge);
        let v = centers(self.vel_bins, -self.v_max, self.v_max);
        let norm = self.samples.max(1) as f64 * self.bin_volume();
        let values = self.counts.iter().map(|&c| c as f64 / norm).collect();
        TabulatedPdf::new([p.clone(), p.clone(), p, v.clone(), v.clone(), v], values, self.edge)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContactStats {
    pub pair_events: u64,
    pub span: f64,
    /// Per-particle pair collision frequency `2 events / (N span)`.
    pub frequency: f64,
    pub frequency_stderr: f64,
    pub shell_counts: Vec<u64>,
    pub shell_mean: f64,
    pub shell_stderr: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VelocityMoments {
    pub mean: Vec3,
    /// `<v_d^2>` per axis.
    pub second: Vec3,
    /// Temperature implied by the conserved kinetic energy.
    pub temperature: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observables {
    pub histogram: Histogram,
    pub under_populated: Vec<usize>,
    pub window_entropy: Vec<EntropyEstimate>,
    pub contact: ContactStats,
    pub moments: VelocityMoments,
}

/// Measures an ensemble of trajectories sharing one model.
pub fn measure(trajs: &[Trajectory], spec: &ObservableSpec) -> Result<Observables> {
    let Some(first) = trajs.first() else {
        return Err(Error::InvalidArgument("no trajectories".into()));
    };
    let model = first.model;
    if trajs.iter().any(|t| t.model != model) {
        return Err(Error::InvalidArgument("trajectories use different models".into()));
    }
    if spec.pos_bins == 0 || spec.vel_bins == 0 || spec.windows == 0 {
        return Err(Error::InvalidArgument("bin and window counts must be positive".into()));
    }
    let snaps: Vec<Vec<&NBodyConfig>> = trajs
        .iter()
        .map(|t| t.snapshots.iter().filter(|s| s.0 >= spec.t_start).map(|s| &s.1).collect())
        .collect();
    let per = snaps.iter().map(Vec::len).min().unwrap_or(0);
    if per < spec.windows {
        return Err(Error::InvalidArgument(format!(
            "{per} snapshots after t_start, need at least {} windows",
            spec.windows
        )));
    }
    let mut histogram = Histogram::new(spec, model.edge());
    let mut window_entropy = Vec::new();
    for w in 0..spec.windows {
        let mut h = Histogram::new(spec, model.edge());
        for s in &snaps {
            for snap in &s[w * per / spec.windows..(w + 1) * per / spec.windows] {
                h.add(snap);
            }
        }
        window_entropy.push(h.entropy());
    }
    let (mut sum, mut sq, mut count) = (Vec3::zeros(), Vec3::zeros(), 0u64);
    let sigma = model.sigma();
    let shell2 = (sigma * (1.0 + spec.eta)).powi(2);
    let mut shell_counts = Vec::new();
    for s in &snaps {
        for snap in s {
            histogram.add(snap);
            for p in &snap.points {
                sum += p.v;
                sq += p.v.component_mul(&p.v);
                count += 1;
            }
            let pts = &snap.points;
            let mut c = 0u64;
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let d2 = (pts[i].r - pts[j].r).norm_squared();
                    if d2 > sigma * sigma && d2 <= shell2 {
                        c += 1;
                    }
                }
            }
            shell_counts.push(c);
        }
    }
    let nf = count as f64;
    let temperature = trajs.iter().map(|t| t.initial.kinetic_energy()).sum::<f64>() * 2.0
        / (3.0 * (model.n() * trajs.len()) as f64);
    let moments = VelocityMoments {
        mean: sum / nf,
        second: sq / nf,
        temperature,
        samples: count,
    };
    let ns = shell_counts.len() as f64;
    let shell_mean = shell_counts.iter().sum::<u64>() as f64 / ns;
    let var = shell_counts.iter().map(|&c| (c as f64 - shell_mean).powi(2)).sum::<f64>() / (ns - 1.0).max(1.0);
    let mut pair_events = 0u64;
    let mut span = 0.0;
    for t in trajs {
        pair_events += t
            .events
            .iter()
            .filter(|e| e.t >= spec.t_start && matches!(e.kind, EventKind::Pair { .. }))
            .count() as u64;
        span += (t.t_final - spec.t_start).max(0.0);
    }
    let n = model.n() as f64;
    let frequency = 2.0 * pair_events as f64 / (n * span);
    let contact = ContactStats {
        pair_events,
        span,
        frequency,
        frequency_stderr: frequency / (pair_events.max(1) as f64).sqrt(),
        shell_counts,
        shell_mean,
        shell_stderr: (var / ns).sqrt(),
    };
    let under_populated = histogram.under_populated(spec.min_count);
    Ok(Observables {
        histogram,
        under_populated,
        window_entropy,
        contact,
        moments,
    })
}

/// Fraction of `(r, n)` with `r` uniform in the cleared cube and `n` uniform on
/// the sphere for which `r + radius n` is also in the cleared cube.
pub fn wall_access_fraction(model: &HardSphereModel, radius: f64) -> f64 {
    let a = model.cleared_edge();
    sphere_rule(&Vec3::z(), 48, 96)
        .iter()
        .map(|(n, w)| w * n.iter().map(|c| (1.0 - radius * c.abs() / a).max(0.0)).product::<f64>())
        .sum::<f64>()
        / (4.0 * std::f64::consts::PI)
}

/// Per-particle pair collision frequency of a dilute gas in the cleared cube:
/// `4 (N-1) sigma^2 sqrt(pi T) g_c F / (L_o - sigma)^3`.
pub fn pair_rate_prediction(model: &HardSphereModel, temperature: f64, g_c: f64) -> f64 {
    let s = model.sigma();
    4.0 * (model.n() as f64 - 1.0) * s * s * (std::f64::consts::PI * temperature).sqrt() * g_c
        * wall_access_fraction(model, s)
        / model.cleared_edge().powi(3)
}

/// Expected number of pairs with separation in `(sigma, sigma (1 + eta)]`.
pub fn shell_count_prediction(model: &HardSphereModel, eta: f64, g_c: f64) -> f64 {
    let s = model.sigma();
    let shell: f64 = gauss_legendre_on(8, s, s * (1.0 + eta))
        .into_iter()
        .map(|(r, w)| w * 4.0 * std::f64::consts::PI * r * r * wall_access_fraction(model, r))
        .sum();
    let n = model.n() as f64;
    0.5 * n * (n - 1.0) * g_c * shell / model.cleared_edge().powi(3)
}

/// Contact value of the pair correlation `g_c = k2(contact) / k1^2` at the cube
/// center for the uniform equilibrium state, from the occupation solvers.
pub fn contact_factor(model: &HardSphereModel, mc: &McParams, seed: u64) -> Result<Estimate> {
    let pdf = Arc::new(UniformMaxwellian::new(model.edge(), 1.0)?);
    let grid = SpatialGrid::cubic(4, model.edge());
    // loose Picard tolerance: g_c only needs k1 to the accuracy of k2
    let tol = 20.0 / (mc.samples as f64).sqrt();
    let field = solve_k1(pdf.clone(), model, &grid, mc, tol, seed)?;
    let center = Vec3::repeat(0.5 * model.edge());
    let k1 = field.k1_at(&center);
    let hat = Renormalized::new(pdf, field)?;
    let dirs: Vec<Vec3> = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()].to_vec();
    let k2 = contact_k2(&hat, &center, &dirs, mc, seed.wrapping_add(17))?;
    Ok(Estimate {
        value: k2.value / (k1 * k1),
        error: k2.error / (k1 * k1),
    })
}
