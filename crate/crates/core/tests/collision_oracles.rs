use std::f64::consts::PI;

use bgkin::collision::{boltzmann_op, collision_moments};
use bgkin::pdf::{OneBodyPdf, TwoTemperatureMixture};
use bgkin::quadrature::{ball_rule, gauss_legendre_on, QuadratureSpec};
use bgkin::{HardSphereModel, PhasePoint, Vec3};

/// Gain minus loss at `v1` in the post-collision relative-velocity form:
/// `v1' = V + |g| w / 2`, `v2' = V - |g| w / 2`, hemisphere measure
/// `|g . n| dn = (|g| / 4) dw` over the full sphere of `w`, which has a fixed
/// pole (z) instead of one aligned with `g`.
fn omega_form(f: &dyn Fn(&Vec3) -> f64, v1: Vec3, half: f64, nv: usize, nt: usize, np: usize) -> f64 {
    let vr = gauss_legendre_on(nv, -half, half);
    let tr = gauss_legendre_on(nt, -1.0, 1.0);
    let dphi = 2.0 * PI / np as f64;
    let dirs: Vec<(Vec3, f64)> = tr
        .iter()
        .flat_map(|&(c, wc)| {
            let s = (1.0 - c * c).sqrt();
            (0..np).map(move |j| {
                let p = (j as f64 + 0.5) * dphi;
                (Vec3::new(s * p.cos(), s * p.sin(), c), wc * dphi)
            })
        })
        .collect();
    let f1 = f(&v1);
    let mut acc = 0.0;
    for &(x, wx) in &vr {
        for &(y, wy) in &vr {
            for &(z, wz) in &vr {
                let v2 = Vec3::new(x, y, z);
                let g = (v1 - v2).norm();
                let c = 0.5 * (v1 + v2);
                let mut gain = 0.0;
                for (w, ww) in &dirs {
                    gain += ww * f(&(c + w * (0.5 * g))) * f(&(c - w * (0.5 * g)));
                }
                acc += wx * wy * wz * (0.25 * g * gain - PI * g * f1 * f(&v2));
            }
        }
    }
    acc
}

#[test]
fn mixture_at_rest_matches_omega_oracle() {
    let mix = TwoTemperatureMixture::new(1.0, 0.5, 0.6, 1.3).unwrap();
    let model = HardSphereModel::new(100, 0.02, 1.0).unwrap();
    let r1 = Vec3::repeat(0.5);
    let x1 = PhasePoint::new(r1, Vec3::zeros());
    let quad = QuadratureSpec::default();
    let c = boltzmann_op(&mix, &x1, 0.0, &model, &quad).unwrap();

    let n1 = mix.position_density(&r1);
    let f = |v: &Vec3| n1 * mix.velocity_density(v);
    let half = 6.0 * 1.3;
    let fine = model.n_sigma2() * omega_form(&f, Vec3::zeros(), half, 40, 24, 48);
    let coarse = model.n_sigma2() * omega_form(&f, Vec3::zeros(), half, 30, 18, 36);
    let oracle_err = (fine - coarse).abs();
    assert!(
        (c.value - fine).abs() <= 2.0 * (c.error + oracle_err),
        "operator {} +- {:.2e}, oracle {fine} +- {oracle_err:.2e}",
        c.value,
        c.error
    );
    assert!(c.value.abs() > 100.0 * c.error);
}

#[test]
fn mixture_collision_invariants() {
    let mix = TwoTemperatureMixture::new(1.0, 0.5, 0.8, 1.2).unwrap();
    let model = HardSphereModel::new(100, 0.02, 1.0).unwrap();
    let quad = QuadratureSpec::new(5.0, 20, 120).unwrap();
    let outer = ball_rule(&Vec3::zeros(), 6.0, 12, 4, 8);
    let m = collision_moments(&mix, &Vec3::repeat(0.5), 0.0, &model, &outer, &quad).unwrap();
    assert!(m.max_relative() < 1e-4, "{m:?}");
}
