//! Analytic one-body pdf families on a cube of edge `edge`.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::OneBodyPdf;
use crate::rng::SimRng;
use crate::{Error, PhasePoint, Result, Vec3};

/// Isotropic Maxwellian with mean `u` and per-axis spread `v_th`.
#[inline]
pub fn maxwellian(v: &Vec3, u: &Vec3, v_th: f64) -> f64 {
    let s2 = v_th * v_th;
    let a = 2.0 * PI * s2;
    (-(v - u).norm_squared() / (2.0 * s2)).exp() / (a * a.sqrt())
}

pub(crate) fn gaussian3(rng: &mut SimRng) -> Vec3 {
    Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

fn uniform_in_cube(edge: f64, rng: &mut SimRng) -> Vec3 {
    Vec3::new(rng.random(), rng.random(), rng.random()) * edge
}

fn check_common(edge: f64, v_th: f64) -> Result<()> {
    if !(edge > 0.0 && edge.is_finite()) {
        return Err(Error::InvalidArgument(format!("edge = {edge}")));
    }
    if !(v_th > 0.0 && v_th.is_finite()) {
        return Err(Error::InvalidArgument(format!("v_th = {v_th}")));
    }
    Ok(())
}

/// (a) Uniform positions, Maxwellian velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformMaxwellian {
    pub edge: f64,
    pub v_th: f64,
}

impl UniformMaxwellian {
    pub fn new(edge: f64, v_th: f64) -> Result<Self> {
        check_common(edge, v_th)?;
        Ok(Self { edge, v_th })
    }
}

impl OneBodyPdf for UniformMaxwellian {
    fn density(&self, x: &PhasePoint, _t: f64) -> f64 {
        self.position_density(&x.r) * maxwellian(&x.v, &Vec3::zeros(), self.v_th)
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        if in_cube(r, self.edge) {
            self.edge.powi(-3)
        } else {
            0.0
        }
    }
    fn log_position_gradient(&self, _x: &PhasePoint, _t: f64) -> Option<Vec3> {
        Some(Vec3::zeros())
    }
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        PhasePoint::new(uniform_in_cube(self.edge, rng), gaussian3(rng) * self.v_th)
    }
    fn sample_position(&self, rng: &mut SimRng) -> Vec3 {
        uniform_in_cube(self.edge, rng)
    }
    fn family_tag(&self) -> &str {
        "uniform_maxwellian"
    }
    fn edge(&self) -> f64 {
        self.edge
    }
    fn velocity_scale(&self) -> f64 {
        self.v_th
    }
    fn is_local_maxwellian(&self) -> bool {
        true
    }
    fn velocity_moments(&self) -> Option<(Vec3, f64)> {
        Some((Vec3::zeros(), 3.0 * self.v_th * self.v_th))
    }
}

/// (b) Uniform positions, Maxwellian with local drift `u(r) = u0 + G (r - c)`,
/// `c` the cube center. `G = 0` gives a globally drifted Maxwellian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftedMaxwellian {
    pub edge: f64,
    pub v_th: f64,
    pub u0: Vec3,
    pub shear: Matrix3<f64>,
}

impl DriftedMaxwellian {
    pub fn new(edge: f64, v_th: f64, u0: Vec3, shear: Matrix3<f64>) -> Result<Self> {
        check_common(edge, v_th)?;
        Ok(Self { edge, v_th, u0, shear })
    }

    pub fn uniform_drift(edge: f64, v_th: f64, u0: Vec3) -> Result<Self> {
        Self::new(edge, v_th, u0, Matrix3::zeros())
    }

    pub fn drift(&self, r: &Vec3) -> Vec3 {
        self.u0 + self.shear * (r - Vec3::repeat(0.5 * self.edge))
    }
}

impl OneBodyPdf for DriftedMaxwellian {
    fn density(&self, x: &PhasePoint, _t: f64) -> f64 {
        self.position_density(&x.r) * maxwellian(&x.v, &self.drift(&x.r), self.v_th)
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        if in_cube(r, self.edge) {
            self.edge.powi(-3)
        } else {
            0.0
        }
    }
    fn log_position_gradient(&self, x: &PhasePoint, _t: f64) -> Option<Vec3> {
        Some(self.shear.transpose() * (x.v - self.drift(&x.r)) / (self.v_th * self.v_th))
    }
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        let r = uniform_in_cube(self.edge, rng);
        PhasePoint::new(r, self.drift(&r) + gaussian3(rng) * self.v_th)
    }
    fn sample_position(&self, rng: &mut SimRng) -> Vec3 {
        uniform_in_cube(self.edge, rng)
    }
    fn family_tag(&self) -> &str {
        "drifted_maxwellian"
    }
    fn edge(&self) -> f64 {
        self.edge
    }
    fn velocity_scale(&self) -> f64 {
        self.v_th
    }
    fn local_mean_velocity(&self, r: &Vec3) -> Vec3 {
        self.drift(r)
    }
    fn is_local_maxwellian(&self) -> bool {
        true
    }
    fn velocity_moments(&self) -> Option<(Vec3, f64)> {
        // uniform r about the center: <G (r - c)> = 0, <|G (r - c)|^2> = |G|_F^2 L^2 / 12
        let spread = self.shear.norm_squared() * self.edge * self.edge / 12.0;
        Some((self.u0, 3.0 * self.v_th * self.v_th + self.u0.norm_squared() + spread))
    }
}

/// (c) Density `n(r) ∝ exp(a . r)` times a Maxwellian at rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedExponential {
    pub edge: f64,
    pub v_th: f64,
    pub a: Vec3,
}

/// Normalized 1D density `a exp(a x) / (exp(a L) - 1)` on [0, L].
fn tilted_1d(a: f64, x: f64, edge: f64) -> f64 {
    if a.abs() * edge < 1e-12 {
        1.0 / edge
    } else {
        a * (a * x).exp() / (a * edge).exp_m1()
    }
}

fn tilted_1d_sample(a: f64, edge: f64, u: f64) -> f64 {
    if a.abs() * edge < 1e-12 {
        u * edge
    } else {
        (u * (a * edge).exp_m1()).ln_1p() / a
    }
}

impl TiltedExponential {
    pub fn new(edge: f64, v_th: f64, a: Vec3) -> Result<Self> {
        check_common(edge, v_th)?;
        Ok(Self { edge, v_th, a })
    }

    /// Tilt along x only.
    pub fn along_x(edge: f64, v_th: f64, a: f64) -> Result<Self> {
        Self::new(edge, v_th, Vec3::new(a, 0.0, 0.0))
    }
}

impl OneBodyPdf for TiltedExponential {
    fn density(&self, x: &PhasePoint, _t: f64) -> f64 {
        self.position_density(&x.r) * maxwellian(&x.v, &Vec3::zeros(), self.v_th)
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        if !in_cube(r, self.edge) {
            return 0.0;
        }
        (0..3).map(|i| tilted_1d(self.a[i], r[i], self.edge)).product()
    }
    fn log_position_gradient(&self, _x: &PhasePoint, _t: f64) -> Option<Vec3> {
        Some(self.a)
    }
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        let r = self.sample_position(rng);
        PhasePoint::new(r, gaussian3(rng) * self.v_th)
    }
    fn sample_position(&self, rng: &mut SimRng) -> Vec3 {
        Vec3::from_fn(|i, _| tilted_1d_sample(self.a[i], self.edge, rng.random()))
    }
    fn family_tag(&self) -> &str {
        "tilted_exponential"
    }
    fn edge(&self) -> f64 {
        self.edge
    }
    fn velocity_scale(&self) -> f64 {
        self.v_th
    }
    fn is_local_maxwellian(&self) -> bool {
        true
    }
    fn velocity_moments(&self) -> Option<(Vec3, f64)> {
        Some((Vec3::zeros(), 3.0 * self.v_th * self.v_th))
    }
}

/// (d) `n(x) ∝ 1 + alpha sin(2 pi x / L)` along one axis, Maxwellian at rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidalMaxwellian {
    pub edge: f64,
    pub v_th: f64,
    pub alpha: f64,
    pub axis: usize,
}

impl SinusoidalMaxwellian {
    pub fn new(edge: f64, v_th: f64, alpha: f64, axis: usize) -> Result<Self> {
        check_common(edge, v_th)?;
        if !(0.0..1.0).contains(&alpha.abs()) || axis > 2 {
            return Err(Error::InvalidArgument(format!(
                "need |alpha| < 1 and axis in 0..3 (alpha {alpha}, axis {axis})"
            )));
        }
        Ok(Self { edge, v_th, alpha, axis })
    }

    fn k(&self) -> f64 {
        2.0 * PI / self.edge
    }

    /// Exact `inf |d ln n / dx|^-1`.
    pub fn exact_scale_length(&self) -> f64 {
        if self.alpha == 0.0 {
            f64::INFINITY
        } else {
            (1.0 - self.alpha * self.alpha).sqrt() / (self.k() * self.alpha.abs())
        }
    }
}

impl OneBodyPdf for SinusoidalMaxwellian {
    fn density(&self, x: &PhasePoint, _t: f64) -> f64 {
        self.position_density(&x.r) * maxwellian(&x.v, &Vec3::zeros(), self.v_th)
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        if !in_cube(r, self.edge) {
            return 0.0;
        }
        (1.0 + self.alpha * (self.k() * r[self.axis]).sin()) / self.edge.powi(3)
    }
    fn log_position_gradient(&self, x: &PhasePoint, _t: f64) -> Option<Vec3> {
        let ph = self.k() * x.r[self.axis];
        let mut g = Vec3::zeros();
        g[self.axis] = self.alpha * self.k() * ph.cos() / (1.0 + self.alpha * ph.sin());
        Some(g)
    }
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        let r = self.sample_position(rng);
        PhasePoint::new(r, gaussian3(rng) * self.v_th)
    }
    fn sample_position(&self, rng: &mut SimRng) -> Vec3 {
        let mut r = uniform_in_cube(self.edge, rng);
        loop {
            let x: f64 = rng.random::<f64>() * self.edge;
            let accept = (1.0 + self.alpha * (self.k() * x).sin()) / (1.0 + self.alpha.abs());
            if rng.random::<f64>() < accept {
                r[self.axis] = x;
                return r;
            }
        }
    }
    fn family_tag(&self) -> &str {
        "sinusoidal_maxwellian"
    }
    fn edge(&self) -> f64 {
        self.edge
    }
    fn velocity_scale(&self) -> f64 {
        self.v_th
    }
    fn is_local_maxwellian(&self) -> bool {
        true
    }
    fn velocity_moments(&self) -> Option<(Vec3, f64)> {
        Some((Vec3::zeros(), 3.0 * self.v_th * self.v_th))
    }
}

/// Uniform positions; velocity law `w M(T_cold) + (1 - w) M(T_hot)`, optionally
/// with a position tilt `exp(a . r)`. Not a local Maxwellian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTemperatureMixture {
    pub edge: f64,
    pub weight_cold: f64,
    pub v_cold: f64,
    pub v_hot: f64,
    #[serde(default)]
    pub a: Vec3,
}

impl TwoTemperatureMixture {
    pub fn new(edge: f64, weight_cold: f64, v_cold: f64, v_hot: f64) -> Result<Self> {
        check_common(edge, v_cold)?;
        check_common(edge, v_hot)?;
        if !(0.0..=1.0).contains(&weight_cold) {
            return Err(Error::InvalidArgument(format!("weight_cold = {weight_cold}")));
        }
        Ok(Self {
            edge,
            weight_cold,
            v_cold,
            v_hot,
            a: Vec3::zeros(),
        })
    }

    pub fn with_tilt(mut self, a: Vec3) -> Self {
        self.a = a;
        self
    }

    pub fn velocity_density(&self, v: &Vec3) -> f64 {
        let z = Vec3::zeros();
        self.weight_cold * maxwellian(v, &z, self.v_cold)
            + (1.0 - self.weight_cold) * maxwellian(v, &z, self.v_hot)
    }
}

impl OneBodyPdf for TwoTemperatureMixture {
    fn density(&self, x: &PhasePoint, _t: f64) -> f64 {
        self.position_density(&x.r) * self.velocity_density(&x.v)
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        if !in_cube(r, self.edge) {
            return 0.0;
        }
        (0..3).map(|i| tilted_1d(self.a[i], r[i], self.edge)).product()
    }
    fn log_position_gradient(&self, _x: &PhasePoint, _t: f64) -> Option<Vec3> {
        Some(self.a)
    }
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        let r = self.sample_position(rng);
        let s = if rng.random::<f64>() < self.weight_cold {
            self.v_cold
        } else {
            self.v_hot
        };
        PhasePoint::new(r, gaussian3(rng) * s)
    }
    fn sample_position(&self, rng: &mut SimRng) -> Vec3 {
        Vec3::from_fn(|i, _| tilted_1d_sample(self.a[i], self.edge, rng.random()))
    }
    fn family_tag(&self) -> &str {
        "two_temperature_mixture"
    }
    fn edge(&self) -> f64 {
        self.edge
    }
    fn velocity_scale(&self) -> f64 {
        self.v_cold.max(self.v_hot)
    }
    fn velocity_moments(&self) -> Option<(Vec3, f64)> {
        let w = self.weight_cold;
        Some((
            Vec3::zeros(),
            3.0 * (w * self.v_cold.powi(2) + (1.0 - w) * self.v_hot.powi(2)),
        ))
    }
}

#[inline]
pub(crate) fn in_cube(r: &Vec3, edge: f64) -> bool {
    r.iter().all(|&c| (0.0..=edge).contains(&c))
}
