//! One-body pdf families, the Boltzmann-Shannon entropy and scale-length diagnostics.

mod families;
mod tabulated;

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use families::{
    maxwellian, DriftedMaxwellian, SinusoidalMaxwellian, TiltedExponential, TwoTemperatureMixture,
    UniformMaxwellian,
};
pub(crate) use families::gaussian3;
pub use tabulated::TabulatedPdf;
#[allow(unused_imports)]
pub(crate) use tabulated::write_table_csv;

use crate::geometry::{wall_theta, HardSphereModel};
use crate::quadrature::{gauss_legendre_on, QuadratureSpec};
use crate::rng::{substream, SimRng};
use crate::{Error, PhasePoint, Result, Vec3};

/// Evaluable, sampleable density on Gamma_1 = Omega x R^3.
///
/// Families here are static snapshots: the time argument is accepted for
/// interface uniformity and ignored.
pub trait OneBodyPdf: Send + Sync {
    fn density(&self, x: &PhasePoint, t: f64) -> f64;

    /// Position marginal `n(r) = int rho(r, v) dv`.
    fn position_density(&self, r: &Vec3) -> f64;

    /// Analytic `d ln rho / dr`, if available.
    fn log_position_gradient(&self, _x: &PhasePoint, _t: f64) -> Option<Vec3> {
        None
    }

    fn sample(&self, rng: &mut SimRng) -> PhasePoint;

    fn sample_position(&self, rng: &mut SimRng) -> Vec3 {
        self.sample(rng).r
    }

    fn family_tag(&self) -> &str;

    /// Edge of the cube the pdf lives on.
    fn edge(&self) -> f64;

    /// Largest thermal speed; quadrature boxes are `v_max` multiples of this.
    fn velocity_scale(&self) -> f64;

    fn local_mean_velocity(&self, _r: &Vec3) -> Vec3 {
        Vec3::zeros()
    }

    /// Velocity box used for quadrature at position `r`.
    fn velocity_box(&self, r: &Vec3, v_max: f64) -> (Vec3, Vec3) {
        let c = self.local_mean_velocity(r);
        let h = Vec3::repeat(v_max * self.velocity_scale());
        (c - h, c + h)
    }

    fn position_box(&self) -> (Vec3, Vec3) {
        (Vec3::zeros(), Vec3::repeat(self.edge()))
    }

    /// True when the velocity law is a local Maxwellian at every position.
    fn is_local_maxwellian(&self) -> bool {
        false
    }

    /// Closed-form global mean velocity and mean squared speed.
    fn velocity_moments(&self) -> Option<(Vec3, f64)> {
        None
    }
}

pub type PdfHandle = Arc<dyn OneBodyPdf>;

/// Draws a single phase point from a fresh seeded stream.
pub fn sample_seeded(pdf: &dyn OneBodyPdf, seed: u64) -> PhasePoint {
    pdf.sample(&mut substream(seed, "pdf/sample", 0))
}

/// Value with a quadrature or MC error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Default relative tolerance for [`normalization_integral`].
pub const NORMALIZATION_TOL: f64 = 1e-3;

/// `int_{Gamma_1} rho dx` with an error estimate from a coarser companion rule.
/// Fails when the estimate exceeds `NORMALIZATION_TOL` relative to the value.
pub fn normalization_integral(pdf: &dyn OneBodyPdf, quad: &QuadratureSpec) -> Result<Estimate> {
    quad.validate()?;
    let fine = phase_integral(pdf, quad, |rho| rho);
    let coarse = phase_integral(pdf, &quad.coarse(), |rho| rho);
    let error = (fine - coarse).abs() + 64.0 * f64::EPSILON * fine.abs();
    if error > NORMALIZATION_TOL * fine.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::QuadratureNotConverged {
            error,
            tolerance: NORMALIZATION_TOL * fine.abs(),
        });
    }
    Ok(Estimate { value: fine, error })
}

fn position_nodes(quad: &QuadratureSpec) -> usize {
    (quad.velocity_nodes / 3).max(6)
}

/// Tensor Gauss-Legendre over the position box times the per-position velocity box.
fn phase_integral(pdf: &dyn OneBodyPdf, quad: &QuadratureSpec, f: impl Fn(f64) -> f64 + Sync) -> f64 {
    use rayon::prelude::*;
    let (lo, hi) = pdf.position_box();
    let np = position_nodes(quad);
    let ax: Vec<Vec<(f64, f64)>> = (0..3).map(|d| gauss_legendre_on(np, lo[d], hi[d])).collect();
    let nv = quad.velocity_nodes;
    let unit = gauss_legendre_on(nv, 0.0, 1.0);
    let idx: Vec<(usize, usize, usize)> = (0..np)
        .flat_map(|i| (0..np).flat_map(move |j| (0..np).map(move |k| (i, j, k))))
        .collect();
    idx.par_iter()
        .map(|&(i, j, k)| {
            let r = Vec3::new(ax[0][i].0, ax[1][j].0, ax[2][k].0);
            let wr = ax[0][i].1 * ax[1][j].1 * ax[2][k].1;
            let (vlo, vhi) = pdf.velocity_box(&r, quad.v_max);
            let span = vhi - vlo;
            let mut acc = 0.0;
            for &(a, wa) in &unit {
                for &(b, wb) in &unit {
                    for &(c, wc) in &unit {
                        let v = vlo + Vec3::new(a * span.x, b * span.y, c * span.z);
                        let rho = pdf.density(&PhasePoint::new(r, v), 0.0);
                        acc += wa * wb * wc * f(rho);
                    }
                }
            }
            acc * wr * span.x * span.y * span.z
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    #[serde(rename = "S")]
    pub s: f64,
    pub quadrature_error: f64,
}

/// `S = -int rho ln rho` over Gamma_1. Any vanishing density at a quadrature
/// node inside the support is reported as [`Error::ZeroDensity`].
pub fn bs_entropy(pdf: &dyn OneBodyPdf, quad: &QuadratureSpec) -> Result<EntropyReport> {
    quad.validate()?;
    let zero = std::sync::atomic::AtomicBool::new(false);
    let integrand = |rho: f64| {
        if rho > 0.0 {
            -rho * rho.ln()
        } else {
            zero.store(true, std::sync::atomic::Ordering::Relaxed);
            0.0
        }
    };
    let fine = phase_integral(pdf, quad, integrand);
    let coarse = phase_integral(pdf, &quad.coarse(), integrand);
    if zero.into_inner() {
        return Err(Error::ZeroDensity(format!(
            "{} vanishes inside the quadrature support",
            pdf.family_tag()
        )));
    }
    Ok(EntropyReport {
        s: fine,
        quadrature_error: (fine - coarse).abs() + 64.0 * f64::EPSILON * fine.abs(),
    })
}

/// Shifts a pdf in position: `rho'(r, v) = rho(r - shift, v)` on the shifted box.
pub struct Translated {
    pub inner: PdfHandle,
    pub shift: Vec3,
}

impl OneBodyPdf for Translated {
    fn density(&self, x: &PhasePoint, t: f64) -> f64 {
        self.inner.density(&PhasePoint::new(x.r - self.shift, x.v), t)
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        self.inner.position_density(&(r - self.shift))
    }
    fn log_position_gradient(&self, x: &PhasePoint, t: f64) -> Option<Vec3> {
        self.inner
            .log_position_gradient(&PhasePoint::new(x.r - self.shift, x.v), t)
    }
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        let p = self.inner.sample(rng);
        PhasePoint::new(p.r + self.shift, p.v)
    }
    fn family_tag(&self) -> &str {
        self.inner.family_tag()
    }
    fn edge(&self) -> f64 {
        self.inner.edge()
    }
    fn velocity_scale(&self) -> f64 {
        self.inner.velocity_scale()
    }
    fn local_mean_velocity(&self, r: &Vec3) -> Vec3 {
        self.inner.local_mean_velocity(&(r - self.shift))
    }
    fn velocity_box(&self, r: &Vec3, v_max: f64) -> (Vec3, Vec3) {
        self.inner.velocity_box(&(r - self.shift), v_max)
    }
    fn position_box(&self) -> (Vec3, Vec3) {
        let (lo, hi) = self.inner.position_box();
        (lo + self.shift, hi + self.shift)
    }
    fn is_local_maxwellian(&self) -> bool {
        self.inner.is_local_maxwellian()
    }
}

/// The pdf restricted to wall-cleared centers and renormalized:
/// `rho_sigma = rho Theta_wall / Z_sigma`. This is the one-body marginal
/// actually realizable by an N-body system of diameter sigma.
pub struct WallRestricted {
    inner: PdfHandle,
    model: HardSphereModel,
    mass: f64,
}

/// `int n(r) dr` over the cube of wall-cleared centers.
pub fn cleared_mass(pdf: &dyn OneBodyPdf, sigma: f64) -> f64 {
    let l = pdf.edge();
    let rule = gauss_legendre_on(24, 0.5 * sigma, l - 0.5 * sigma);
    let mut acc = 0.0;
    for &(x, wx) in &rule {
        for &(y, wy) in &rule {
            for &(z, wz) in &rule {
                acc += wx * wy * wz * pdf.position_density(&Vec3::new(x, y, z));
            }
        }
    }
    acc
}

impl WallRestricted {
    pub fn new(inner: PdfHandle, model: HardSphereModel) -> Result<Self> {
        let mass = cleared_mass(inner.as_ref(), model.sigma());
        if !(mass > 0.0) {
            return Err(Error::ZeroDensity("no mass in the wall-cleared cube".into()));
        }
        Ok(Self { inner, model, mass })
    }

    /// `Z_sigma`, the retained mass.
    pub fn retained_mass(&self) -> f64 {
        self.mass
    }

    pub fn inner(&self) -> &PdfHandle {
        &self.inner
    }

    pub fn model(&self) -> &HardSphereModel {
        &self.model
    }
}

impl OneBodyPdf for WallRestricted {
    fn density(&self, x: &PhasePoint, t: f64) -> f64 {
        if wall_theta(&x.r, &self.model) {
            self.inner.density(x, t) / self.mass
        } else {
            0.0
        }
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        if wall_theta(r, &self.model) {
            self.inner.position_density(r) / self.mass
        } else {
            0.0
        }
    }
    fn log_position_gradient(&self, x: &PhasePoint, t: f64) -> Option<Vec3> {
        self.inner.log_position_gradient(x, t)
    }
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        loop {
            let p = self.inner.sample(rng);
            if wall_theta(&p.r, &self.model) {
                return p;
            }
        }
    }
    fn sample_position(&self, rng: &mut SimRng) -> Vec3 {
        loop {
            let r = self.inner.sample_position(rng);
            if wall_theta(&r, &self.model) {
                return r;
            }
        }
    }
    fn family_tag(&self) -> &str {
        self.inner.family_tag()
    }
    fn edge(&self) -> f64 {
        self.inner.edge()
    }
    fn velocity_scale(&self) -> f64 {
        self.inner.velocity_scale()
    }
    fn local_mean_velocity(&self, r: &Vec3) -> Vec3 {
        self.inner.local_mean_velocity(r)
    }
    fn velocity_box(&self, r: &Vec3, v_max: f64) -> (Vec3, Vec3) {
        self.inner.velocity_box(r, v_max)
    }
    fn position_box(&self) -> (Vec3, Vec3) {
        let h = 0.5 * self.model.sigma();
        (Vec3::repeat(h), Vec3::repeat(self.edge() - h))
    }
    fn is_local_maxwellian(&self) -> bool {
        self.inner.is_local_maxwellian()
    }
}

/// Scale pdf by a constant (for linearity checks; not normalized).
pub struct Scaled {
    pub inner: PdfHandle,
    pub factor: f64,
}

impl OneBodyPdf for Scaled {
    fn density(&self, x: &PhasePoint, t: f64) -> f64 {
        self.factor * self.inner.density(x, t)
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        self.factor * self.inner.position_density(r)
    }
    fn log_position_gradient(&self, x: &PhasePoint, t: f64) -> Option<Vec3> {
        self.inner.log_position_gradient(x, t)
    }
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        self.inner.sample(rng)
    }
    fn family_tag(&self) -> &str {
        self.inner.family_tag()
    }
    fn edge(&self) -> f64 {
        self.inner.edge()
    }
    fn velocity_scale(&self) -> f64 {
        self.inner.velocity_scale()
    }
    fn local_mean_velocity(&self, r: &Vec3) -> Vec3 {
        self.inner.local_mean_velocity(r)
    }
    fn velocity_box(&self, r: &Vec3, v_max: f64) -> (Vec3, Vec3) {
        self.inner.velocity_box(r, v_max)
    }
}

/// Log-gradient by central differences with step `1e-5 L`.
pub fn fd_log_gradient(pdf: &dyn OneBodyPdf, x: &PhasePoint, t: f64) -> Option<Vec3> {
    let h = 1e-5 * pdf.edge();
    let mut g = Vec3::zeros();
    for d in 0..3 {
        let mut p = *x;
        let mut m = *x;
        p.r[d] += h;
        m.r[d] -= h;
        let (fp, fm) = (pdf.density(&p, t), pdf.density(&m, t));
        if !(fp > 0.0 && fm > 0.0) {
            return None;
        }
        g[d] = (fp.ln() - fm.ln()) / (2.0 * h);
    }
    Some(g)
}

/// Probe estimate of `L_rho = inf |d ln rho / dr|^-1` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLength {
    /// `f64::INFINITY` when no probe sees a gradient (the unbounded sentinel).
    pub l_rho: f64,
    pub probe_count: usize,
}

impl ScaleLength {
    pub fn is_unbounded(&self) -> bool {
        self.l_rho.is_infinite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    #[serde(rename = "L_rho")]
    pub l_rho: f64,
    #[serde(rename = "L_rho_initial")]
    pub l_rho_initial: f64,
    pub delta: f64,
    pub delta_initial: f64,
    pub probe_count: usize,
}

const GRID_PROBES_PER_AXIS: usize = 16;

/// Reciprocal of the largest log-gradient magnitude over `probes` points drawn
/// from the pdf plus a uniform 16^3 position grid (velocities drawn from the pdf).
pub fn scale_length(pdf: &dyn OneBodyPdf, t: f64, probes: usize, seed: u64) -> ScaleLength {
    let mut rng = substream(seed, "pdf/scale_length", 0);
    let (lo, hi) = pdf.position_box();
    let m = GRID_PROBES_PER_AXIS;
    let mut pts: Vec<PhasePoint> = (0..probes).map(|_| pdf.sample(&mut rng)).collect();
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let f = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) / m as f64;
                let r = lo + (hi - lo).component_mul(&f);
                let v = pdf.local_mean_velocity(&r) + gaussian3(&mut rng) * pdf.velocity_scale();
                pts.push(PhasePoint::new(r, v));
            }
        }
    }
    let mut gmax: f64 = 0.0;
    for p in &pts {
        let g = pdf
            .log_position_gradient(p, t)
            .or_else(|| fd_log_gradient(pdf, p, t));
        if let Some(g) = g {
            gmax = gmax.max(g.norm());
        }
    }
    let l_rho = if gmax > 1e-12 / pdf.edge() {
        1.0 / gmax
    } else {
        f64::INFINITY
    };
    ScaleLength {
        l_rho,
        probe_count: pts.len(),
    }
}

/// Global-in-time `L_rho` (minimum over `times`), its initial value and the
/// ratios `delta = sigma / L_rho`. Unbounded lengths give `delta = 0`.
pub fn smoothness_report(
    pdf: &dyn OneBodyPdf,
    times: &[f64],
    model: &HardSphereModel,
    probes: usize,
    seed: u64,
) -> SmoothnessReport {
    let t0 = times.first().copied().unwrap_or(0.0);
    let initial = scale_length(pdf, t0, probes, seed);
    let mut l = initial.l_rho;
    let mut count = initial.probe_count;
    for (i, &t) in times.iter().enumerate().skip(1) {
        let s = scale_length(pdf, t, probes, seed.wrapping_add(i as u64));
        l = l.min(s.l_rho);
        count += s.probe_count;
    }
    let ratio = |len: f64| if len.is_infinite() { 0.0 } else { model.sigma() / len };
    SmoothnessReport {
        l_rho: l,
        l_rho_initial: initial.l_rho,
        delta: ratio(l),
        delta_initial: ratio(initial.l_rho),
        probe_count: count,
    }
}

/// Serializable description of a pdf family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PdfSpec {
    UniformMaxwellian {
        #[serde(default = "one")]
        v_th: f64,
    },
    DriftedMaxwellian {
        #[serde(default = "one")]
        v_th: f64,
        u0: [f64; 3],
        /// Row-major 3x3 velocity gradient.
        #[serde(default)]
        shear: [[f64; 3]; 3],
    },
    TiltedExponential {
        #[serde(default = "one")]
        v_th: f64,
        a: [f64; 3],
    },
    SinusoidalMaxwellian {
        #[serde(default = "one")]
        v_th: f64,
        alpha: f64,
        #[serde(default)]
        axis: usize,
    },
    TwoTemperatureMixture {
        weight_cold: f64,
        v_cold: f64,
        v_hot: f64,
        #[serde(default)]
        a: [f64; 3],
    },
    Tabulated {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl PdfSpec {
    pub fn build(&self, edge: f64) -> Result<PdfHandle> {
        Ok(match self {
            PdfSpec::UniformMaxwellian { v_th } => Arc::new(UniformMaxwellian::new(edge, *v_th)?),
            PdfSpec::DriftedMaxwellian { v_th, u0, shear } => Arc::new(DriftedMaxwellian::new(
                edge,
                *v_th,
                Vec3::from(*u0),
                Matrix3::from_fn(|i, j| shear[i][j]),
            )?),
            PdfSpec::TiltedExponential { v_th, a } => {
                Arc::new(TiltedExponential::new(edge, *v_th, Vec3::from(*a))?)
            }
            PdfSpec::SinusoidalMaxwellian { v_th, alpha, axis } => {
                Arc::new(SinusoidalMaxwellian::new(edge, *v_th, *alpha, *axis)?)
            }
            PdfSpec::TwoTemperatureMixture {
                weight_cold,
                v_cold,
                v_hot,
                a,
            } => Arc::new(
                TwoTemperatureMixture::new(edge, *weight_cold, *v_cold, *v_hot)?
                    .with_tilt(Vec3::from(*a)),
            ),
            PdfSpec::Tabulated { path } => Arc::new(TabulatedPdf::from_csv_path(path, edge)?),
        })
    }
}

/// Empirical mean velocity and mean squared speed from `n` samples, with
/// standard errors of each.
pub fn sampled_velocity_moments(pdf: &dyn OneBodyPdf, n: usize, seed: u64) -> ((Vec3, Vec3), (f64, f64)) {
    let mut rng = substream(seed, "pdf/moments", 0);
    let mut s1 = Vec3::zeros();
    let mut s2 = Vec3::zeros();
    let (mut e1, mut e2) = (0.0, 0.0);
    for _ in 0..n {
        let v = pdf.sample(&mut rng).v;
        s1 += v;
        s2 += v.component_mul(&v);
        let q = v.norm_squared();
        e1 += q;
        e2 += q * q;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = s2 / nf - mean.component_mul(&mean);
    let se = var.map(|x| (x.max(0.0) / nf).sqrt());
    let em = e1 / nf;
    let ese = ((e2 / nf - em * em).max(0.0) / nf).sqrt();
    ((mean, se), (em, ese))
}

/// Uniform random position inside the cube, for probing.
pub fn uniform_position(edge: f64, rng: &mut SimRng) -> Vec3 {
    Vec3::new(rng.random(), rng.random(), rng.random()) * edge
}

#[cfg(test)]
mod tests;
