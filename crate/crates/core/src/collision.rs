//! Elastic collision map, solid-angle partition and the Boltzmann and Master
//! collision operators as quadratures.
//!
//! Both operators use a hemisphere rule whose pole is aligned with the relative
//! velocity `v12`, so `|v12 . n| = |v12| mu` is polynomial in the Gauss-Legendre
//! variable. The velocity integral over `v2` is a tensor rule on the pdf's
//! velocity box at `r1`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{wall_theta, HardSphereModel};
use crate::occupation::Renormalized;
use crate::pdf::OneBodyPdf;
use crate::quadrature::{
    box_rule, gauss_legendre_on, mc_box_on, orthonormal_frame, QuadMode, QuadratureSpec,
};
use crate::rng::substream;
use crate::{Error, PhasePoint, Result, Vec3};

/// Post-collision velocities of an equal-mass smooth hard-sphere pair.
pub fn elastic_map(v1: &Vec3, v2: &Vec3, n12: &Vec3) -> (Vec3, Vec3) {
    let dv = n12 * (v1 - v2).dot(n12);
    (v1 - dv, v2 + dv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolidAngleSubset {
    Incoming,
    Outgoing,
    /// `v12 . n12 = 0`; excluded from every quadrature.
    Tangential,
}

pub fn classify_solid_angle(v1: &Vec3, v2: &Vec3, n12: &Vec3) -> SolidAngleSubset {
    let s = (v1 - v2).dot(n12);
    if s < 0.0 {
        SolidAngleSubset::Incoming
    } else if s > 0.0 {
        SolidAngleSubset::Outgoing
    } else {
        SolidAngleSubset::Tangential
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorValue {
    pub value: f64,
    pub error: f64,
    pub gain: f64,
    pub loss: f64,
}

/// Reading of the two-body pdf inside the Master operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPdf {
    /// `rho_hat_2 = rho_hat_1 rho_hat_1 k_2`.
    #[default]
    Factorized,
    /// `rho_hat_2 = rho_2 / (k_1 k_1)` with `rho_2 = rho_hat_1 rho_hat_1 k_2`.
    Renormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterOptions {
    pub pair_pdf: PairPdf,
    /// Apply the wall factor of the contact partner.
    pub wall_factor: bool,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            pair_pdf: PairPdf::Factorized,
            wall_factor: true,
        }
    }
}

/// Boltzmann operator over the outgoing hemisphere.
pub fn boltzmann_op(
    pdf: &dyn OneBodyPdf,
    x1: &PhasePoint,
    t: f64,
    model: &HardSphereModel,
    quad: &QuadratureSpec,
) -> Result<OperatorValue> {
    boltzmann_op_on(pdf, x1, t, model, quad, SolidAngleSubset::Outgoing)
}

/// `N sigma^2 int dv2 int dSigma |v12 . n12| [rho(v1') rho(v2') - rho(v1) rho(v2)]`
/// with every density at `r1`, over the chosen hemisphere.
pub fn boltzmann_op_on(
    pdf: &dyn OneBodyPdf,
    x1: &PhasePoint,
    t: f64,
    model: &HardSphereModel,
    quad: &QuadratureSpec,
    hemisphere: SolidAngleSubset,
) -> Result<OperatorValue> {
    let r1 = x1.r;
    let rho1 = pdf.density(x1, t);
    let f = |v2: &Vec3, n12: &Vec3| {
        let (a, b) = elastic_map(&x1.v, v2, n12);
        let gain = pdf.density(&PhasePoint::new(r1, a), t) * pdf.density(&PhasePoint::new(r1, b), t);
        let loss = rho1 * pdf.density(&PhasePoint::new(r1, *v2), t);
        (gain, loss)
    };
    let (lo, hi) = pdf.velocity_box(&r1, quad.v_max);
    integrate(quad, &lo, &hi, &x1.v, hemisphere, model.n_sigma2(), &f)
}

/// Master operator
/// `(N-1) sigma^2 int dv2 int^(-) dSigma |v12 . n12| Theta_wall(r2)
///  [rho_hat_2(r1, v1+, r2, v2+) - rho_hat_2(r1, v1, r2, v2)]`
/// with the partner at contact, `r2 = r1 + sigma n21`. Only the wall factor of
/// `Theta*_2` is kept: its pair factor vanishes identically on the contact
/// sphere under the strong convention.
pub fn master_op(
    pdf_hat: &Renormalized,
    k2_at_contact: &(dyn Fn(&Vec3, &Vec3) -> f64 + Sync),
    x1: &PhasePoint,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<OperatorValue> {
    master_op_with(pdf_hat, k2_at_contact, x1, t, quad, &MasterOptions::default())
}

pub fn master_op_with(
    pdf_hat: &Renormalized,
    k2_at_contact: &(dyn Fn(&Vec3, &Vec3) -> f64 + Sync),
    x1: &PhasePoint,
    t: f64,
    quad: &QuadratureSpec,
    opts: &MasterOptions,
) -> Result<OperatorValue> {
    let model = *pdf_hat.model();
    let sigma = model.sigma();
    let r1 = x1.r;
    if !wall_theta(&r1, &model) {
        return Err(Error::InvalidArgument(format!("r1 = {r1:?} is not wall-cleared")));
    }
    let field = pdf_hat.field();
    let k1_r1 = field.k1_at(&r1);
    let rho1 = pdf_hat.density(x1, t);
    let f = |v2: &Vec3, n12: &Vec3| {
        let r2 = r1 - n12 * sigma;
        if opts.wall_factor && !wall_theta(&r2, &model) {
            return (0.0, 0.0);
        }
        let mut pair = k2_at_contact(&r1, &(-n12));
        if opts.pair_pdf == PairPdf::Renormalized {
            pair /= k1_r1 * field.k1_at(&r2);
        }
        let (a, b) = elastic_map(&x1.v, v2, n12);
        let gain = pdf_hat.density(&PhasePoint::new(r1, a), t) * pdf_hat.density(&PhasePoint::new(r2, b), t);
        let loss = rho1 * pdf_hat.density(&PhasePoint::new(r2, *v2), t);
        (gain * pair, loss * pair)
    };
    let (lo, hi) = pdf_hat.velocity_box(&r1, quad.v_max);
    let prefactor = (model.n() as f64 - 1.0) * sigma * sigma;
    integrate(quad, &lo, &hi, &x1.v, SolidAngleSubset::Incoming, prefactor, &f)
}

/// Canonical hemisphere nodes about +z: (in-plane x, in-plane y, mu, weight).
fn canonical_hemisphere(n_mu: usize, n_phi: usize) -> Vec<[f64; 4]> {
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_mu * n_phi);
    for (mu, wmu) in gauss_legendre_on(n_mu, 0.0, 1.0) {
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            out.push([s * phi.cos(), s * phi.sin(), mu, wmu * dphi]);
        }
    }
    out
}

type Integrand<'a> = dyn Fn(&Vec3, &Vec3) -> (f64, f64) + Sync + 'a;

/// Sum over the hemisphere (pole `+-v12`) of `|v12| mu w f(v2, n)` for one `v2`.
fn angle_sum(v1: &Vec3, v2: &Vec3, sign: f64, rule: &[[f64; 4]], f: &Integrand<'_>) -> (f64, f64) {
    let g = v1 - v2;
    let gn = g.norm();
    if gn == 0.0 {
        return (0.0, 0.0);
    }
    let a = g * (sign / gn);
    let (e1, e2) = orthonormal_frame(&a);
    let (mut gain, mut loss) = (0.0, 0.0);
    for &[x, y, mu, w] in rule {
        let n = a * mu + e1 * x + e2 * y;
        let (p, q) = f(v2, &n);
        gain += w * mu * p;
        loss += w * mu * q;
    }
    (gain * gn, loss * gn)
}

/// Gain and loss integrals on one rule (no error estimate).
fn rule_sums(
    velocity: &[(Vec3, f64)],
    rule: &[[f64; 4]],
    v1: &Vec3,
    sign: f64,
    f: &Integrand<'_>,
) -> Vec<(f64, f64)> {
    velocity
        .par_iter()
        .map(|(v2, wv)| {
            let (p, q) = angle_sum(v1, v2, sign, rule, f);
            (wv * p, wv * q)
        })
        .collect()
}

fn hemisphere_sign(h: SolidAngleSubset) -> Result<f64> {
    match h {
        SolidAngleSubset::Outgoing => Ok(1.0),
        SolidAngleSubset::Incoming => Ok(-1.0),
        SolidAngleSubset::Tangential => Err(Error::InvalidArgument(
            "the tangential set has measure zero and cannot be integrated".into(),
        )),
    }
}

fn integrate(
    quad: &QuadratureSpec,
    lo: &Vec3,
    hi: &Vec3,
    v1: &Vec3,
    hemisphere: SolidAngleSubset,
    prefactor: f64,
    f: &Integrand<'_>,
) -> Result<OperatorValue> {
    quad.validate()?;
    let sign = hemisphere_sign(hemisphere)?;
    match quad.mode {
        QuadMode::Deterministic => {
            let eval = |q: &QuadratureSpec| {
                let (n_mu, n_phi) = q.hemisphere_rule_shape();
                let rule = canonical_hemisphere(n_mu, n_phi);
                let vel = box_rule(lo, hi, q.velocity_nodes);
                rule_sums(&vel, &rule, v1, sign, f)
                    .into_iter()
                    .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
            };
            let (g, l) = eval(quad);
            let (gc, lc) = eval(&quad.coarse());
            let (g, l, gc, lc) = (g * prefactor, l * prefactor, gc * prefactor, lc * prefactor);
            let error = ((g - l) - (gc - lc)).abs() + 64.0 * f64::EPSILON * (g.abs() + l.abs());
            Ok(OperatorValue {
                value: g - l,
                error,
                gain: g,
                loss: l,
            })
        }
        QuadMode::MonteCarlo => {
            // each velocity sample gets its own random hemisphere rule
            let mut rng = substream(quad.seed, "collision/mc", 0);
            let vel = mc_box_on(lo, hi, quad.velocity_nodes, &mut rng);
            let per = (quad.angle_nodes / 2).max(1);
            let rules: Vec<Vec<[f64; 4]>> = (0..vel.len())
                .map(|_| {
                    (0..per)
                        .map(|_| {
                            use rand::Rng;
                            let mu: f64 = rng.random();
                            let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                            let s = (1.0 - mu * mu).sqrt();
                            [s * phi.cos(), s * phi.sin(), mu, 2.0 * std::f64::consts::PI / per as f64]
                        })
                        .collect()
                })
                .collect();
            let parts: Vec<(f64, f64)> = vel
                .par_iter()
                .zip(rules.par_iter())
                .map(|((v2, wv), rule)| {
                    let (p, q) = angle_sum(v1, v2, sign, rule, f);
                    (wv * p * prefactor, wv * q * prefactor)
                })
                .collect();
            let n = parts.len() as f64;
            let g: f64 = parts.iter().map(|p| p.0).sum();
            let l: f64 = parts.iter().map(|p| p.1).sum();
            let mean = (g - l) / n;
            let var = parts.iter().map(|p| (p.0 - p.1 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            Ok(OperatorValue {
                value: g - l,
                error: (var * n).sqrt(),
                gain: g,
                loss: l,
            })
        }
    }
}

/// Moments `int dv1 C_B(v1) phi(v1)` for `phi = 1, vx, vy, vz, |v|^2` on the
/// caller's `outer` rule, with `scale` the same moments of `|phi|` against the
/// loss term (the operator's natural units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionMoments {
    pub moments: [f64; 5],
    pub scale: [f64; 5],
}

impl CollisionMoments {
    pub fn relative(&self) -> [f64; 5] {
        std::array::from_fn(|i| self.moments[i] / self.scale[i])
    }

    pub fn max_relative(&self) -> f64 {
        self.relative().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn collision_moments(
    pdf: &dyn OneBodyPdf,
    r1: &Vec3,
    t: f64,
    model: &HardSphereModel,
    outer: &[(Vec3, f64)],
    quad: &QuadratureSpec,
) -> Result<CollisionMoments> {
    quad.validate()?;
    let (lo, hi) = pdf.velocity_box(r1, quad.v_max);
    let (n_mu, n_phi) = quad.hemisphere_rule_shape();
    let rule = canonical_hemisphere(n_mu, n_phi);
    let inner = box_rule(&lo, &hi, quad.velocity_nodes);
    let mut moments = [0.0; 5];
    let mut scale = [0.0; 5];
    for (v1, w1) in outer {
        let rho1 = pdf.density(&PhasePoint::new(*r1, *v1), t);
        let f = |v2: &Vec3, n12: &Vec3| {
            let (a, b) = elastic_map(v1, v2, n12);
            let gain = pdf.density(&PhasePoint::new(*r1, a), t) * pdf.density(&PhasePoint::new(*r1, b), t);
            let loss = rho1 * pdf.density(&PhasePoint::new(*r1, *v2), t);
            (gain, loss)
        };
        let (g, l) = rule_sums(&inner, &rule, v1, 1.0, &f)
            .into_iter()
            .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let c = (g - l) * model.n_sigma2();
        let loss = l * model.n_sigma2();
        let phi = [1.0, v1.x, v1.y, v1.z, v1.norm_squared()];
        for i in 0..5 {
            moments[i] += w1 * c * phi[i];
            scale[i] += w1 * loss * phi[i].abs();
        }
    }
    Ok(CollisionMoments { moments, scale })
}

/// One row of an operator scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub x: PhasePoint,
    pub value: OperatorValue,
}

/// CSV `x,y,z,vx,vy,vz,C_value,C_error,gain,loss`.
pub fn write_scan_csv(rows: &[ScanRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "z", "vx", "vy", "vz", "C_value", "C_error", "gain", "loss"])?;
    for row in rows {
        let (r, v, c) = (row.x.r, row.x.v, row.value);
        out.write_record(
            [r.x, r.y, r.z, v.x, v.y, v.z, c.value, c.error, c.gain, c.loss].map(|x| x.to_string()),
        )?;
    }
    out.flush()?;
    Ok(())
}
