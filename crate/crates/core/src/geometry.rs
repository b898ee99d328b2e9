//! Configuration domain, exclusion theta functions and admissible sampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{substream, SimRng};
use crate::{Error, Result, Vec3};

/// The tuple (N, sigma, L_o) of a hard-sphere system in the cube `[0, L_o]^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardSphereModel {
    n: usize,
    sigma: f64,
    edge: f64,
}

impl HardSphereModel {
    pub fn new(n: usize, sigma: f64, edge: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidModel(format!("N = {n} < 2")));
        }
        if !(edge.is_finite() && edge > 0.0) {
            return Err(Error::InvalidModel(format!("edge L_o = {edge} must be positive")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidModel(format!("sigma = {sigma} must be >= 0")));
        }
        if sigma >= edge / 2.0 {
            return Err(Error::InvalidModel(format!(
                "sigma = {sigma} must be below L_o / 2 = {}",
                edge / 2.0
            )));
        }
        Ok(Self { n, sigma, edge })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    /// epsilon = 1/N.
    pub fn epsilon(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// mu(Omega) = L_o^3.
    pub fn domain_measure(&self) -> f64 {
        self.edge.powi(3)
    }

    /// N sigma^2, the quantity held fixed along Boltzmann-Grad sequences.
    pub fn n_sigma2(&self) -> f64 {
        self.n as f64 * self.sigma * self.sigma
    }

    /// Edge of the cube available to sphere centers, `L_o - sigma`.
    pub fn cleared_edge(&self) -> f64 {
        self.edge - self.sigma
    }

    /// Volume fraction occupied by the spheres, `N (pi/6) sigma^3 / L_o^3`.
    pub fn packing_fraction(&self) -> f64 {
        self.n as f64 * std::f64::consts::PI / 6.0 * self.sigma.powi(3) / self.domain_measure()
    }

    pub fn with_n_sigma(&self, n: usize, sigma: f64) -> Result<Self> {
        Self::new(n, sigma, self.edge)
    }

    /// Model at a given packing fraction, with the edge fixed and sigma derived.
    pub fn from_packing(n: usize, packing: f64, edge: f64) -> Result<Self> {
        let sigma = (6.0 * packing * edge.powi(3) / (n as f64 * std::f64::consts::PI)).cbrt();
        Self::new(n, sigma, edge)
    }
}

/// Single-particle state `{r, v}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub r: Vec3,
    pub v: Vec3,
}

impl PhasePoint {
    pub fn new(r: Vec3, v: Vec3) -> Self {
        Self { r, v }
    }

    pub fn at_rest(r: Vec3) -> Self {
        Self { r, v: Vec3::zeros() }
    }

    pub fn in_domain(&self, model: &HardSphereModel) -> bool {
        self.r.iter().all(|&c| (0.0..=model.edge()).contains(&c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBodyConfig {
    pub points: Vec<PhasePoint>,
}

impl NBodyConfig {
    pub fn new(points: Vec<PhasePoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.points.iter().map(|p| p.v.norm_squared()).sum::<f64>()
    }

    pub fn momentum(&self) -> Vec3 {
        self.points.iter().map(|p| p.v).sum()
    }
}

/// Unit normals and relative velocity of a pair at contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactGeometry {
    pub n12: Vec3,
    pub n21: Vec3,
    pub v12: Vec3,
    pub contact_point: Vec3,
}

impl ContactGeometry {
    /// Geometry of a pair whose separation equals sigma within `tol * sigma`.
    pub fn at_contact(a: &PhasePoint, b: &PhasePoint, sigma: f64, tol: f64) -> Option<Self> {
        let d = a.r - b.r;
        let dist = d.norm();
        if sigma <= 0.0 || (dist - sigma).abs() > tol * sigma {
            return None;
        }
        let n12 = d / dist;
        Some(Self::from_normal(a, n12, b.v, sigma))
    }

    /// Places particle 2 at `r1 + sigma n21` for a prescribed `n12`.
    pub fn from_normal(a: &PhasePoint, n12: Vec3, v2: Vec3, sigma: f64) -> Self {
        let n21 = -n12;
        Self {
            n12,
            n21,
            v12: a.v - v2,
            contact_point: a.r + sigma * n21,
        }
    }
}

/// Strong theta function: 1 for `x > 0`, 0 for `x <= 0`.
#[inline]
pub fn strong_theta(x: f64) -> bool {
    x > 0.0
}

/// Smallest distance from `r` to a face of the cube (negative outside).
#[inline]
pub fn wall_clearance(r: &Vec3, edge: f64) -> f64 {
    r.iter()
        .map(|&c| c.min(edge - c))
        .fold(f64::INFINITY, f64::min)
}

/// Wall factor: 1 iff every face is farther than sigma/2 from the center.
#[inline]
pub fn wall_theta(r: &Vec3, model: &HardSphereModel) -> bool {
    strong_theta(wall_clearance(r, model.edge()) - 0.5 * model.sigma())
}

/// Pair factor: 1 iff `|r_i - r_j| > sigma`.
#[inline]
pub fn pair_theta(ri: &Vec3, rj: &Vec3, sigma: f64) -> bool {
    // compare squares; exact at the strict boundary |d| = sigma up to rounding of the norm
    (ri - rj).norm_squared() > sigma * sigma
}

/// Per-particle factors Theta*_i: wall factor times pair factors against j < i.
pub fn per_particle_theta(config: &NBodyConfig, model: &HardSphereModel) -> Vec<bool> {
    let pts = &config.points;
    (0..pts.len())
        .map(|i| {
            wall_theta(&pts[i].r, model)
                && pts[..i]
                    .iter()
                    .all(|pj| pair_theta(&pts[i].r, &pj.r, model.sigma()))
        })
        .collect()
}

/// Ensemble theta: product of every wall factor and every unordered pair factor.
pub fn ensemble_theta(config: &NBodyConfig, model: &HardSphereModel) -> bool {
    let pts = &config.points;
    pts.iter().all(|p| wall_theta(&p.r, model))
        && pts.iter().enumerate().all(|(i, pi)| {
            pts[i + 1..]
                .iter()
                .all(|pj| pair_theta(&pi.r, &pj.r, model.sigma()))
        })
}

/// Admissibility on the closure of the admissible set: contacts within
/// `tol * sigma` count as admissible. Event-driven trajectories sit exactly on
/// contact at collision instants, where the strong theta is 0.
pub fn closure_admissible(config: &NBodyConfig, model: &HardSphereModel, tol: f64) -> bool {
    let s = model.sigma();
    let slack = tol * s.max(f64::MIN_POSITIVE);
    let pts = &config.points;
    pts.iter()
        .all(|p| wall_clearance(&p.r, model.edge()) >= 0.5 * s - slack)
        && pts.iter().enumerate().all(|(i, pi)| {
            pts[i + 1..]
                .iter()
                .all(|pj| (pi.r - pj.r).norm() >= s - slack)
        })
}

/// Maxwellian velocity law with per-axis standard deviation `v_th`.
pub fn maxwellian_velocity(v_th: f64) -> impl Fn(&mut SimRng) -> Vec3 {
    move |rng: &mut SimRng| {
        Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ) * v_th
    }
}

/// Diagnostics from [`uniform_admissible_sample_with_stats`].
#[derive(Debug, Clone, Copy)]
pub struct SampleStats {
    pub attempts: u64,
    pub acceptance: f64,
}

pub const DEFAULT_SAMPLING_BUDGET: u64 = 10_000_000;

/// Uniform sample from the admissible subset of Omega^N with unit-temperature
/// Maxwellian velocities.
pub fn uniform_admissible_sample(model: &HardSphereModel, seed: u64) -> Result<NBodyConfig> {
    uniform_admissible_sample_with_stats(model, seed, maxwellian_velocity(1.0), DEFAULT_SAMPLING_BUDGET)
        .map(|(c, _)| c)
}

/// Rejection sampler over Omega^N. Positions are drawn uniformly in the cube of
/// wall-cleared centers (which is exactly the wall factor of the ensemble theta)
/// and whole configurations are rejected on any pair overlap, so accepted
/// configurations are uniform on the admissible set.
pub fn uniform_admissible_sample_with_stats(
    model: &HardSphereModel,
    seed: u64,
    velocity_law: impl Fn(&mut SimRng) -> Vec3,
    budget: u64,
) -> Result<(NBodyConfig, SampleStats)> {
    let mut rng = substream(seed, "geometry/admissible", 0);
    let half = 0.5 * model.sigma();
    let span = model.edge() - model.sigma();
    let n = model.n();
    let mut pos: Vec<Vec3> = Vec::with_capacity(n);
    let mut attempts = 0u64;
    'attempt: while attempts < budget {
        attempts += 1;
        pos.clear();
        for _ in 0..n {
            let r = Vec3::new(
                half + span * rng.random::<f64>(),
                half + span * rng.random::<f64>(),
                half + span * rng.random::<f64>(),
            );
            if pos.iter().any(|q| !pair_theta(&r, q, model.sigma())) {
                continue 'attempt;
            }
            pos.push(r);
        }
        let points = pos
            .iter()
            .map(|&r| PhasePoint::new(r, velocity_law(&mut rng)))
            .collect();
        let stats = SampleStats {
            attempts,
            acceptance: 1.0 / attempts as f64,
        };
        return Ok((NBodyConfig::new(points), stats));
    }
    Err(Error::SamplingStalled {
        acceptance: 0.0,
        attempts,
    })
}

/// Cell grid for fast "does this point overlap any inserted point" queries with
/// a fixed cutoff. Cells have edge >= 2 cutoff, so a query only needs the 2x2x2
/// block of cells nearest to it. Reset is O(1) via generation stamps.
pub(crate) struct OverlapGrid {
    m: usize,
    cell: f64,
    cutoff2: f64,
    head: Vec<u32>,
    stamp: Vec<u32>,
    generation: u32,
    next: Vec<u32>,
    pts: Vec<Vec3>,
}

const NIL: u32 = u32::MAX;

impl OverlapGrid {
    pub fn new(edge: f64, cutoff: f64, capacity: usize) -> Self {
        let m = if cutoff > 0.0 {
            ((edge / (2.0 * cutoff)).floor() as usize).clamp(1, 64)
        } else {
            1
        };
        Self {
            m,
            cell: edge / m as f64,
            cutoff2: cutoff * cutoff,
            head: vec![NIL; m * m * m],
            stamp: vec![0; m * m * m],
            generation: 1,
            next: Vec::with_capacity(capacity),
            pts: Vec::with_capacity(capacity),
        }
    }

    pub fn clear(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.next.clear();
        self.pts.clear();
    }

    #[inline]
    fn coord(&self, x: f64) -> usize {
        ((x / self.cell) as isize).clamp(0, self.m as isize - 1) as usize
    }

    /// Cell index along one axis and the neighbor on the side nearer to `x`.
    #[inline]
    fn pair(&self, x: f64) -> (usize, usize) {
        let u = x / self.cell;
        let c = (u as isize).clamp(0, self.m as isize - 1);
        let nb = if u - (c as f64) < 0.5 { c - 1 } else { c + 1 };
        let nb = if (0..self.m as isize).contains(&nb) { nb } else { c };
        (c as usize, nb as usize)
    }

    /// True if `r` lies within the cutoff (strictly closer, i.e. the pair theta
    /// vanishes) of any inserted point.
    pub fn overlaps(&self, r: &Vec3) -> bool {
        if self.cutoff2 == 0.0 {
            return false;
        }
        let (ax, bx) = self.pair(r.x);
        let (ay, by) = self.pair(r.y);
        let (az, bz) = self.pair(r.z);
        let m = self.m;
        for (ix, x) in [ax, bx].into_iter().enumerate() {
            if ix == 1 && x == ax {
                continue;
            }
            for (iy, y) in [ay, by].into_iter().enumerate() {
                if iy == 1 && y == ay {
                    continue;
                }
                for (iz, z) in [az, bz].into_iter().enumerate() {
                    if iz == 1 && z == az {
                        continue;
                    }
                    let idx = (x * m + y) * m + z;
                    if self.stamp[idx] != self.generation {
                        continue;
                    }
                    let mut k = self.head[idx];
                    while k != NIL {
                        if (self.pts[k as usize] - r).norm_squared() <= self.cutoff2 {
                            return true;
                        }
                        k = self.next[k as usize];
                    }
                }
            }
        }
        false
    }

    pub fn insert(&mut self, r: Vec3) {
        let m = self.m;
        let idx = (self.coord(r.x) * m + self.coord(r.y)) * m + self.coord(r.z);
        if self.stamp[idx] != self.generation {
            self.stamp[idx] = self.generation;
            self.head[idx] = NIL;
        }
        self.next.push(self.head[idx]);
        self.head[idx] = self.pts.len() as u32;
        self.pts.push(r);
    }

    #[allow(dead_code)]
    pub fn points(&self) -> &[Vec3] {
        &self.pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, Strategy};

    fn model(n: usize, sigma: f64) -> HardSphereModel {
        HardSphereModel::new(n, sigma, 1.0).unwrap()
    }

    fn cfg(rs: &[[f64; 3]]) -> NBodyConfig {
        NBodyConfig::new(
            rs.iter()
                .map(|r| PhasePoint::at_rest(Vec3::new(r[0], r[1], r[2])))
                .collect(),
        )
    }

    #[test]
    fn model_validation() {
        assert!(HardSphereModel::new(1, 0.1, 1.0).is_err());
        assert!(HardSphereModel::new(4, -0.1, 1.0).is_err());
        assert!(HardSphereModel::new(4, 0.5, 1.0).is_err());
        let m = model(16, 0.05);
        assert_eq!(m.epsilon() * m.n() as f64, 1.0);
        assert_eq!(m.domain_measure(), 1.0);
    }

    #[test]
    fn wall_theta_cases() {
        let m = model(2, 0.1);
        assert!(wall_theta(&Vec3::new(0.5, 0.5, 0.5), &m));
        assert!(!wall_theta(&Vec3::new(0.0, 0.5, 0.5), &m));
        assert!(!wall_theta(&Vec3::new(0.5, 1.0, 0.5), &m));
        // exactly sigma/2 from a face: strong theta gives 0
        assert!(!wall_theta(&Vec3::new(0.5, 0.5, 0.05), &m));
        assert!(wall_theta(&Vec3::new(0.5, 0.5, 0.0500001), &m));
        // any positive sigma: on a face is excluded; corner uses minimum over faces
        assert!(!wall_theta(&Vec3::new(0.04, 0.04, 0.5), &m));
    }

    #[test]
    fn pair_theta_cases() {
        let a = Vec3::new(0.5, 0.5, 0.5);
        assert!(pair_theta(&a, &Vec3::new(0.7, 0.5, 0.5), 0.1));
        assert!(!pair_theta(&a, &a, 0.1));
        assert!(!pair_theta(&a, &Vec3::new(0.75, 0.5, 0.5), 0.25));
    }

    #[test]
    fn ensemble_theta_cases() {
        let m = model(3, 0.1);
        assert!(ensemble_theta(&cfg(&[[0.2, 0.2, 0.2], [0.5, 0.5, 0.5], [0.8, 0.8, 0.8]]), &m));
        assert!(!ensemble_theta(&cfg(&[[0.2, 0.2, 0.2], [0.5, 0.5, 0.5], [0.55, 0.5, 0.5]]), &m));
    }

    #[test]
    fn sigma_zero_sampling_accepts_first_try() {
        let m = model(50, 0.0);
        let (c, s) =
            uniform_admissible_sample_with_stats(&m, 3, maxwellian_velocity(1.0), 10).unwrap();
        assert_eq!(s.attempts, 1);
        assert_eq!(s.acceptance, 1.0);
        assert_eq!(c.len(), 50);
    }

    #[test]
    fn dense_packing_reports_stall() {
        let m = HardSphereModel::new(200, 0.2, 1.0).unwrap();
        let err = uniform_admissible_sample_with_stats(&m, 1, maxwellian_velocity(1.0), 1000)
            .unwrap_err();
        assert!(matches!(err, Error::SamplingStalled { .. }));
    }

    #[test]
    fn sampled_configs_are_admissible() {
        for seed in 0..20 {
            let m = model(30, 0.08);
            let c = uniform_admissible_sample(&m, seed).unwrap();
            assert!(ensemble_theta(&c, &m));
        }
    }

    #[test]
    fn overlap_grid_matches_brute_force() {
        let mut rng = substream(11, "test", 0);
        let sigma = 0.07;
        let mut grid = OverlapGrid::new(1.0, sigma, 64);
        for _ in 0..50 {
            grid.clear();
            let pts: Vec<Vec3> = (0..40)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            for (i, p) in pts.iter().enumerate() {
                let brute = pts[..i].iter().any(|q| !pair_theta(p, q, sigma));
                assert_eq!(grid.overlaps(p), brute);
                grid.insert(*p);
            }
        }
    }

    fn arb_config() -> impl Strategy<Value = (Vec<[f64; 3]>, f64)> {
        (
            prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 2..12),
            0.0f64..0.3,
        )
    }

    proptest! {
        #[test]
        fn per_particle_factorization_reproduces_product((rs, sigma) in arb_config()) {
            let m = HardSphereModel::new(rs.len(), sigma, 1.0).unwrap();
            let c = cfg(&rs);
            let fact = per_particle_theta(&c, &m).into_iter().all(|b| b);
            prop_assert_eq!(fact, ensemble_theta(&c, &m));
        }

        #[test]
        fn permutation_invariance((rs, sigma) in arb_config(), rot in 0usize..12) {
            let m = HardSphereModel::new(rs.len(), sigma, 1.0).unwrap();
            let mut perm = rs.clone();
            perm.rotate_left(rot % rs.len());
            perm.reverse();
            prop_assert_eq!(ensemble_theta(&cfg(&rs), &m), ensemble_theta(&cfg(&perm), &m));
        }

        #[test]
        fn monotone_in_sigma((rs, sigma) in arb_config(), shrink in 0.0f64..1.0) {
            let m = HardSphereModel::new(rs.len(), sigma, 1.0).unwrap();
            let smaller = HardSphereModel::new(rs.len(), sigma * shrink, 1.0).unwrap();
            let c = cfg(&rs);
            if ensemble_theta(&c, &m) {
                prop_assert!(ensemble_theta(&c, &smaller));
            }
        }
    }
}
