//! Quadrature rules: Gauss-Legendre, tensor velocity boxes and hemisphere rules.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    #[default]
    Deterministic,
    MonteCarlo,
}

/// Quadrature settings shared by the collision operators and pdf integrals.
///
/// In deterministic mode `velocity_nodes` is the Gauss-Legendre count per axis
/// and `angle_nodes` the number of nodes over the full sphere (each hemisphere
/// gets half). In MC mode both are sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub v_max: f64,
    pub velocity_nodes: usize,
    pub angle_nodes: usize,
    #[serde(default)]
    pub mode: QuadMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            v_max: 6.0,
            velocity_nodes: 24,
            angle_nodes: 302,
            mode: QuadMode::Deterministic,
            seed: 0,
        }
    }
}

impl QuadratureSpec {
    pub fn new(v_max: f64, velocity_nodes: usize, angle_nodes: usize) -> Result<Self> {
        let q = Self {
            v_max,
            velocity_nodes,
            angle_nodes,
            ..Self::default()
        };
        q.validate()?;
        Ok(q)
    }

    pub fn monte_carlo(v_max: f64, velocity_samples: usize, angle_samples: usize, seed: u64) -> Result<Self> {
        let q = Self {
            v_max,
            velocity_nodes: velocity_samples,
            angle_nodes: angle_samples,
            mode: QuadMode::MonteCarlo,
            seed,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_max >= 4.0) {
            return Err(Error::InvalidArgument(format!(
                "v_max = {} thermal speeds, need >= 4",
                self.v_max
            )));
        }
        if self.velocity_nodes < 8 || self.angle_nodes < 8 {
            return Err(Error::InvalidArgument(format!(
                "node counts must be >= 8 (velocity {}, angle {})",
                self.velocity_nodes, self.angle_nodes
            )));
        }
        Ok(())
    }

    /// Lower-resolution companion rule used for the deterministic error estimate.
    pub fn coarse(&self) -> Self {
        Self {
            velocity_nodes: (self.velocity_nodes * 3 / 4).max(6),
            angle_nodes: (self.angle_nodes * 3 / 4).max(6),
            ..*self
        }
    }

    pub fn hemisphere_rule_shape(&self) -> (usize, usize) {
        hemisphere_shape(self.angle_nodes / 2)
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let (h, c) = (0.5 * (b - a), 0.5 * (b + a));
    x.iter().zip(&w).map(|(&xi, &wi)| (c + h * xi, h * wi)).collect()
}

/// Tensor Gauss-Legendre rule on the cube `center +- half`.
pub fn tensor_box(center: Vec3, half: f64, n: usize) -> Vec<(Vec3, f64)> {
    let h = Vec3::repeat(half);
    box_rule(&(center - h), &(center + h), n)
}

/// Tensor Gauss-Legendre rule on the box `[lo, hi]`, `n` nodes per axis.
pub fn box_rule(lo: &Vec3, hi: &Vec3, n: usize) -> Vec<(Vec3, f64)> {
    let rx = gauss_legendre_on(n, lo.x, hi.x);
    let ry = gauss_legendre_on(n, lo.y, hi.y);
    let rz = gauss_legendre_on(n, lo.z, hi.z);
    let mut out = Vec::with_capacity(n * n * n);
    for &(a, wa) in &rx {
        for &(b, wb) in &ry {
            for &(c, wc) in &rz {
                out.push((Vec3::new(a, b, c), wa * wb * wc));
            }
        }
    }
    out
}

/// Rule on the ball `|v - center| <= radius`: Gauss-Legendre in the radius
/// (weight `c^2`) times [`sphere_rule`] about z.
pub fn ball_rule(center: &Vec3, radius: f64, n_r: usize, n_mu: usize, n_phi: usize) -> Vec<(Vec3, f64)> {
    let dirs = sphere_rule(&Vec3::z(), n_mu, n_phi);
    let mut out = Vec::with_capacity(n_r * dirs.len());
    for (c, wc) in gauss_legendre_on(n_r, 0.0, radius) {
        for (n, wn) in &dirs {
            out.push((center + n * c, wc * c * c * wn));
        }
    }
    out
}

/// Uniform MC rule on the box `[lo, hi]` (weights sum to the volume).
pub fn mc_box_on(lo: &Vec3, hi: &Vec3, n: usize, rng: &mut SimRng) -> Vec<(Vec3, f64)> {
    let d = hi - lo;
    let w = d.x * d.y * d.z / n as f64;
    (0..n)
        .map(|_| {
            let u = Vec3::new(rng.random(), rng.random(), rng.random());
            (lo + d.component_mul(&u), w)
        })
        .collect()
}

/// Uniform MC rule on the cube `center +- half` (weights sum to the volume).
pub fn mc_box(center: Vec3, half: f64, n: usize, rng: &mut SimRng) -> Vec<(Vec3, f64)> {
    let w = (2.0 * half).powi(3) / n as f64;
    (0..n)
        .map(|_| {
            let u = Vec3::new(rng.random(), rng.random(), rng.random());
            (center + (u * 2.0 - Vec3::repeat(1.0)) * half, w)
        })
        .collect()
}

fn hemisphere_shape(count: usize) -> (usize, usize) {
    let n_mu = ((count as f64 / 2.4).sqrt().round() as usize).max(2);
    let n_phi = count.div_ceil(n_mu).max(3);
    (n_mu, n_phi)
}

/// Orthonormal pair completing `a` to a right-handed frame.
pub fn orthonormal_frame(a: &Vec3) -> (Vec3, Vec3) {
    let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = a.cross(&helper).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

/// Product rule on the hemisphere `{n : n . axis > 0}`: Gauss-Legendre in
/// mu = n . axis over (0, 1) times uniform azimuth. Returns (n, mu, weight); the
/// weights sum to 2 pi. Aligning the pole with the relative velocity makes
/// the |g . n| factor polynomial in mu, so the rule is exact in that variable.
pub fn hemisphere_rule(axis: &Vec3, n_mu: usize, n_phi: usize) -> Vec<(Vec3, f64, f64)> {
    let a = axis.normalize();
    let (e1, e2) = orthonormal_frame(&a);
    let mus = gauss_legendre_on(n_mu, 0.0, 1.0);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_mu * n_phi);
    for &(mu, wmu) in &mus {
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            let n = a * mu + (e1 * phi.cos() + e2 * phi.sin()) * s;
            out.push((n, mu, wmu * dphi));
        }
    }
    out
}

/// Uniform MC rule on the hemisphere around `axis`.
pub fn mc_hemisphere(axis: &Vec3, n: usize, rng: &mut SimRng) -> Vec<(Vec3, f64, f64)> {
    let a = axis.normalize();
    let (e1, e2) = orthonormal_frame(&a);
    let w = 2.0 * PI / n as f64;
    (0..n)
        .map(|_| {
            let mu: f64 = rng.random();
            let phi = 2.0 * PI * rng.random::<f64>();
            let s = (1.0 - mu * mu).sqrt();
            (a * mu + (e1 * phi.cos() + e2 * phi.sin()) * s, mu, w)
        })
        .collect()
}

/// Full-sphere product rule in polar angle about `axis` (weights sum to 4 pi).
pub fn sphere_rule(axis: &Vec3, n_mu: usize, n_phi: usize) -> Vec<(Vec3, f64)> {
    let a = axis.normalize();
    let (e1, e2) = orthonormal_frame(&a);
    let mus = gauss_legendre_on(n_mu, -1.0, 1.0);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_mu * n_phi);
    for &(mu, wmu) in &mus {
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            out.push((a * mu + (e1 * phi.cos() + e2 * phi.sin()) * s, wmu * dphi));
        }
    }
    out
}
