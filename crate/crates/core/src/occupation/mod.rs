//! Occupation coefficients k_1, k_s, correlation functions and the contact
//! surface integral.
//!
//! The one-body pdf of an N-body system of diameter sigma is supported on the
//! wall-cleared cube; every routine here works with the wall restriction
//! `rho_sigma` of the family pdf it is given (see [`WallRestricted`]).
//!
//! Writing `k_1 = lambda A`, with `A` the probability that a node is clear of
//! N-1 particles drawn from `g ∝ rho_sigma / A` given that they are mutually
//! admissible, the integral equation fixes the scale in closed form:
//! `lambda^N = E_{rho_sigma}[prod_i 1/A(r_i) * admissible]`. Only the shape `A`
//! is iterated.

mod kernel;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{pair_theta, wall_theta, HardSphereModel};
use crate::pdf::{Estimate, OneBodyPdf, PdfHandle, WallRestricted};
use crate::quadrature::{gauss_legendre_on, sphere_rule, tensor_box, QuadratureSpec};
use crate::rng::SimRng;
use crate::{Error, PhasePoint, Result, Vec3};
use kernel::{KernelSpec, run as run_kernel};

/// Cell-centered rectilinear grid over the cube: node `(i, j, k)` sits at
/// `((i + 1/2) h_x, (j + 1/2) h_y, (k + 1/2) h_z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub n: [usize; 3],
    pub edge: f64,
}

impl SpatialGrid {
    pub fn cubic(n: usize, edge: f64) -> Self {
        Self { n: [n; 3], edge }
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn h(&self, d: usize) -> f64 {
        self.edge / self.n[d] as f64
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        let k = idx % self.n[2];
        let j = (idx / self.n[2]) % self.n[1];
        let i = idx / (self.n[1] * self.n[2]);
        Vec3::new(
            (i as f64 + 0.5) * self.h(0),
            (j as f64 + 0.5) * self.h(1),
            (k as f64 + 0.5) * self.h(2),
        )
    }

    pub fn nodes(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Trilinear interpolation of nodal values; constant extrapolation beyond
    /// the outermost node planes.
    pub fn interpolate(&self, values: &[f64], r: &Vec3) -> f64 {
        let mut i0 = [0usize; 3];
        let mut f = [0.0; 3];
        for d in 0..3 {
            let n = self.n[d];
            let u = r[d] / self.h(d) - 0.5;
            if n == 1 || u <= 0.0 {
                i0[d] = 0;
                f[d] = 0.0;
            } else if u >= (n - 1) as f64 {
                i0[d] = n - 2;
                f[d] = 1.0;
            } else {
                let fl = u.floor();
                i0[d] = fl as usize;
                f[d] = u - fl;
            }
        }
        let mut acc = 0.0;
        for c in 0..8usize {
            let mut w = 1.0;
            let mut ijk = [0usize; 3];
            for d in 0..3 {
                let bit = (c >> d) & 1;
                ijk[d] = (i0[d] + bit).min(self.n[d] - 1);
                w *= if bit == 1 { f[d] } else { 1.0 - f[d] };
            }
            if w != 0.0 {
                acc += w * values[self.index(ijk[0], ijk[1], ijk[2])];
            }
        }
        acc
    }

    /// Calls `f(node index)` for each node with `|node - r| <= radius`.
    pub fn for_each_node_within(&self, r: &Vec3, radius: f64, mut f: impl FnMut(usize)) {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for d in 0..3 {
            let h = self.h(d);
            let a = ((r[d] - radius) / h - 0.5).ceil().max(0.0);
            let b = ((r[d] + radius) / h - 0.5).floor();
            if b < a || b < 0.0 {
                return;
            }
            lo[d] = a as usize;
            hi[d] = (b as usize).min(self.n[d] - 1);
            if lo[d] > hi[d] {
                return;
            }
        }
        let r2 = radius * radius;
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let idx = self.index(i, j, k);
                    if (self.node(idx) - r).norm_squared() <= r2 {
                        f(idx);
                    }
                }
            }
        }
    }

    /// Node coordinates per axis.
    fn axis(&self, d: usize) -> Vec<f64> {
        (0..self.n[d]).map(|i| (i as f64 + 0.5) * self.h(d)).collect()
    }

    /// Indices of nodes farther than `margin` from every face.
    pub fn bulk_nodes(&self, margin: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| crate::geometry::wall_clearance(&self.node(i), self.edge) > margin)
            .collect()
    }
}

/// Monte Carlo budget for occupation solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub samples: u64,
    pub max_iterations: usize,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            max_iterations: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupationField {
    pub grid: SpatialGrid,
    pub k1_values: Vec<f64>,
    pub mc_error: Vec<f64>,
    pub iterations: usize,
    pub sample_count: u64,
    /// Scale factor `lambda` with `k1 = lambda A`.
    pub lambda: f64,
    /// Shape `A` at the nodes.
    pub shape: Vec<f64>,
    /// Sup-norm change of each Picard step.
    pub history: Vec<f64>,
    pub model: HardSphereModel,
}

impl OccupationField {
    pub fn k1_at(&self, r: &Vec3) -> f64 {
        self.grid.interpolate(&self.k1_values, r)
    }

    /// `sup_nodes |k1 - 1|` over the given node indices (all nodes if `None`).
    pub fn sup_deviation(&self, nodes: Option<&[usize]>) -> f64 {
        match nodes {
            Some(ix) => ix.iter().map(|&i| (self.k1_values[i] - 1.0).abs()).fold(0.0, f64::max),
            None => self.k1_values.iter().map(|k| (k - 1.0).abs()).fold(0.0, f64::max),
        }
    }

    /// MC standard error at the node attaining the sup deviation.
    pub fn sup_deviation_error(&self) -> f64 {
        let (i, _) = self
            .k1_values
            .iter()
            .enumerate()
            .map(|(i, k)| (i, (k - 1.0).abs()))
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        self.mc_error[i]
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y", "z", "k1", "stderr"])?;
        for (i, (k, e)) in self.k1_values.iter().zip(&self.mc_error).enumerate() {
            let r = self.grid.node(i);
            out.write_record([r.x, r.y, r.z, *k, *e].map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn trivial_field(model: &HardSphereModel, grid: &SpatialGrid) -> OccupationField {
    OccupationField {
        grid: grid.clone(),
        k1_values: vec![1.0; grid.len()],
        mc_error: vec![0.0; grid.len()],
        iterations: 1,
        sample_count: 0,
        lambda: 1.0,
        shape: vec![1.0; grid.len()],
        history: vec![0.0],
        model: *model,
    }
}

fn check_grid(model: &HardSphereModel, pdf: &dyn OneBodyPdf, grid: &SpatialGrid) -> Result<()> {
    if (grid.edge - model.edge()).abs() > 1e-12 * model.edge() || (pdf.edge() - model.edge()).abs() > 1e-12 * model.edge() {
        return Err(Error::InvalidArgument("grid, pdf and model edges differ".into()));
    }
    if grid.n.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument("grid needs >= 2 nodes per axis".into()));
    }
    Ok(())
}

/// Solves the one-body occupation integral equation by Picard iteration on the
/// shape `A` with the scale `lambda` in closed form. Iteration stops when the
/// sup-norm change of `k1` drops below `tol`; the shape update is damped by 0.5
/// once the change grows between steps.
pub fn solve_k1(
    pdf: PdfHandle,
    model: &HardSphereModel,
    grid: &SpatialGrid,
    mc: &McParams,
    tol: f64,
    seed: u64,
) -> Result<OccupationField> {
    check_grid(model, pdf.as_ref(), grid)?;
    if model.sigma() == 0.0 {
        return Ok(trivial_field(model, grid));
    }
    let rho_sigma = WallRestricted::new(pdf, *model)?;
    let n = model.n();
    let mut shape = vec![1.0; grid.len()];
    let mut k_old = vec![1.0; grid.len()];
    let mut history = Vec::new();
    let mut damping = false;
    for it in 1..=mc.max_iterations {
        let spec = KernelSpec {
            proposal: &rho_sigma,
            check_walls: false,
            shape: (it > 1).then_some((grid, shape.as_slice())),
            particles: n - 1,
            model: *model,
            grid_targets: Some(grid),
            tuple_targets: &[],
            extra_probe: false,
        };
        let acc = run_kernel(&spec, mc.samples, seed);
        let (mw, mw_se) = acc.mean_weight();
        if !(mw > 0.0) {
            return Err(Error::SamplingStalled {
                acceptance: 0.0,
                attempts: acc.n,
            });
        }
        let lambda = (mw.ln() / n as f64).exp();
        let rel_lambda = mw_se / mw / n as f64;
        let mut errs = vec![0.0; grid.len()];
        let mut new_shape = vec![0.0; grid.len()];
        for j in 0..grid.len() {
            let (p, se) = acc.blocked_fraction(j);
            let a = 1.0 - p;
            new_shape[j] = if damping { 0.5 * (shape[j] + a) } else { a };
            errs[j] = lambda * (se * se + (a * rel_lambda).powi(2)).sqrt();
        }
        let k_new: Vec<f64> = new_shape.iter().map(|a| lambda * a).collect();
        let change = k_new
            .iter()
            .zip(&k_old)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if history.last().is_some_and(|&prev| change > prev) {
            damping = true;
        }
        history.push(change);
        shape = new_shape;
        k_old = k_new;
        if change < tol && it > 1 {
            let worst = errs.iter().copied().fold(0.0, f64::max);
            if worst > tol / 2.0 {
                let node = errs.iter().position(|&e| e == worst).unwrap_or(0);
                return Err(Error::SampleBudget {
                    node,
                    stderr: worst,
                    tolerance: tol / 2.0,
                });
            }
            return Ok(OccupationField {
                grid: grid.clone(),
                k1_values: k_old,
                mc_error: errs,
                iterations: it,
                sample_count: acc.n,
                lambda,
                shape,
                history,
                model: *model,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: mc.max_iterations,
        last_change: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// First Picard iterate from `k1 = 1`: `K[rho_sigma](r1)`, the probability that
/// N-1 particles drawn from `rho_sigma` are admissible and clear `r1`.
pub fn first_iterate_k1(
    pdf: PdfHandle,
    model: &HardSphereModel,
    grid: &SpatialGrid,
    mc: &McParams,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_grid(model, pdf.as_ref(), grid)?;
    let rho_sigma = WallRestricted::new(pdf, *model)?;
    Ok(raw_integral(&rho_sigma, false, model, grid, mc.samples, seed))
}

/// `K[rho](node)` with `rho` held fixed and the wall factors applied
/// explicitly: the probability that N-1 draws from `rho` clear the walls, each
/// other and the node. Exactly non-increasing in sigma for a fixed seed.
pub fn picard_image_fixed(
    pdf: &dyn OneBodyPdf,
    model: &HardSphereModel,
    grid: &SpatialGrid,
    samples: u64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    raw_integral(pdf, true, model, grid, samples, seed)
}

fn raw_integral(
    proposal: &dyn OneBodyPdf,
    check_walls: bool,
    model: &HardSphereModel,
    grid: &SpatialGrid,
    samples: u64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let spec = KernelSpec {
        proposal,
        check_walls,
        shape: None,
        particles: model.n() - 1,
        model: *model,
        grid_targets: Some(grid),
        tuple_targets: &[],
        extra_probe: false,
    };
    let acc = run_kernel(&spec, samples, seed);
    let n = acc.n as f64;
    let mut vals = Vec::with_capacity(grid.len());
    let mut errs = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        // plain mean of a 0/1 outcome
        let p = (acc.s0 - acc.blocked[j]) / n;
        vals.push(p);
        errs.push((p * (1.0 - p) / n).sqrt());
    }
    (vals, errs)
}

/// The renormalized pdf `rho_hat = rho_sigma / k1`.
#[derive(Clone)]
pub struct Renormalized {
    base: Arc<WallRestricted>,
    field: OccupationField,
    w: f64,
}

impl Renormalized {
    pub fn new(pdf: PdfHandle, field: OccupationField) -> Result<Self> {
        let base = Arc::new(WallRestricted::new(pdf, field.model)?);
        let w = renormalized_mass(base.as_ref(), &field);
        Ok(Self { base, field, w })
    }

    pub fn field(&self) -> &OccupationField {
        &self.field
    }

    pub fn base(&self) -> &Arc<WallRestricted> {
        &self.base
    }

    /// `W = int rho_hat dx`.
    pub fn mass(&self) -> f64 {
        self.w
    }

    pub fn model(&self) -> &HardSphereModel {
        &self.field.model
    }
}

impl OneBodyPdf for Renormalized {
    fn density(&self, x: &PhasePoint, t: f64) -> f64 {
        let d = self.base.density(x, t);
        if d == 0.0 {
            0.0
        } else {
            d / self.field.k1_at(&x.r)
        }
    }
    fn position_density(&self, r: &Vec3) -> f64 {
        let d = self.base.position_density(r);
        if d == 0.0 {
            0.0
        } else {
            d / self.field.k1_at(r)
        }
    }
    fn log_position_gradient(&self, _x: &PhasePoint, _t: f64) -> Option<Vec3> {
        None
    }
    /// Draws from `rho_sigma`; callers reweight by `1/k1`.
    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        self.base.sample(rng)
    }
    fn sample_position(&self, rng: &mut SimRng) -> Vec3 {
        self.base.sample_position(rng)
    }
    fn family_tag(&self) -> &str {
        self.base.family_tag()
    }
    fn edge(&self) -> f64 {
        self.base.edge()
    }
    fn velocity_scale(&self) -> f64 {
        self.base.velocity_scale()
    }
    fn local_mean_velocity(&self, r: &Vec3) -> Vec3 {
        self.base.local_mean_velocity(r)
    }
    fn velocity_box(&self, r: &Vec3, v_max: f64) -> (Vec3, Vec3) {
        self.base.velocity_box(r, v_max)
    }
    fn is_local_maxwellian(&self) -> bool {
        self.base.is_local_maxwellian()
    }
}

/// `int rho_sigma / k1` over the cleared cube. The interpolant is trilinear
/// between node planes, so the cube is split at those planes and each piece
/// integrated with 4-point Gauss-Legendre per axis.
fn renormalized_mass(rho_sigma: &WallRestricted, field: &OccupationField) -> f64 {
    let model = rho_sigma.model();
    let (a, b) = (0.5 * model.sigma(), model.edge() - 0.5 * model.sigma());
    let rules: Vec<Vec<(f64, f64)>> = (0..3)
        .map(|d| {
            let mut cuts = vec![a];
            cuts.extend(field.grid.axis(d).into_iter().filter(|&x| x > a && x < b));
            cuts.push(b);
            cuts.windows(2)
                .flat_map(|w| gauss_legendre_on(4, w[0], w[1]))
                .collect()
        })
        .collect();
    let mut acc = 0.0;
    for &(x, wx) in &rules[0] {
        for &(y, wy) in &rules[1] {
            for &(z, wz) in &rules[2] {
                let r = Vec3::new(x, y, z);
                acc += wx * wy * wz * rho_sigma.inner().position_density(&r) / field.k1_at(&r);
            }
        }
    }
    acc / rho_sigma.retained_mass()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairOccupation {
    pub s: usize,
    pub points: Vec<Vec<Vec3>>,
    pub ks_values: Vec<f64>,
    pub mc_error: Vec<f64>,
}

impl PairOccupation {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = Vec::new();
        for i in 1..=self.s {
            header.extend([format!("x{i}"), format!("y{i}"), format!("z{i}")]);
        }
        header.extend(["ks".to_string(), "stderr".to_string()]);
        out.write_record(&header)?;
        for ((tuple, k), e) in self.points.iter().zip(&self.ks_values).zip(&self.mc_error) {
            let mut rec: Vec<String> = tuple
                .iter()
                .flat_map(|p| [p.x, p.y, p.z])
                .map(|v| v.to_string())
                .collect();
            rec.push(k.to_string());
            rec.push(e.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// s-body occupation coefficients at position tuples.
///
/// With `m = N - s` integration variables, `k_s = lambda A_s / (W^{s-1}
/// prod_{m'=m}^{N-2} beta_{m'})`, where `A_s` is the probability that `m`
/// admissible particles from `g = rho_hat / W` clear every point of the tuple
/// and `beta_{m'}` the probability that one more particle from `g` clears `m'`
/// admissible ones. Every factor is a ratio estimate close to 1, which keeps the
/// variance proportional to the blocked fraction.
pub fn estimate_ks(
    pdf_hat: &Renormalized,
    tuples: &[Vec<Vec3>],
    mc: &McParams,
    seed: u64,
) -> Result<PairOccupation> {
    let model = *pdf_hat.model();
    let s = tuples.first().map_or(0, Vec::len);
    if s < 2 || tuples.iter().any(|t| t.len() != s) {
        return Err(Error::InvalidArgument("tuples must share one order s >= 2".into()));
    }
    if s > model.n() {
        return Err(Error::InvalidArgument(format!("s = {s} exceeds N = {}", model.n())));
    }
    for t in tuples {
        for i in 0..s {
            for j in i + 1..s {
                if !pair_theta(&t[i], &t[j], model.sigma()) {
                    return Err(Error::InvalidArgument(format!("tuple {t:?} overlaps")));
                }
            }
        }
    }
    let ones = || PairOccupation {
        s,
        points: tuples.to_vec(),
        ks_values: vec![1.0; tuples.len()],
        mc_error: vec![0.0; tuples.len()],
    };
    if s == model.n() || model.sigma() == 0.0 {
        return Ok(ones());
    }
    let field = pdf_hat.field();
    let n = model.n();
    let m = n - s;
    let shape = (&field.grid, field.shape.as_slice());
    let base: &dyn OneBodyPdf = pdf_hat.base().as_ref();
    let spec = KernelSpec {
        proposal: base,
        check_walls: false,
        shape: Some(shape),
        particles: m,
        model,
        grid_targets: None,
        tuple_targets: tuples,
        extra_probe: true,
    };
    let acc = run_kernel(&spec, mc.samples, seed);
    let mut ln_beta = 0.0;
    let mut rel2_beta = 0.0;
    let (pb, pb_se) = acc.extra_blocked_fraction();
    ln_beta += (1.0 - pb).ln();
    rel2_beta += (pb_se / (1.0 - pb)).powi(2);
    for (t, mm) in (m + 1..=n - 2).enumerate() {
        let spec = KernelSpec {
            proposal: base,
            check_walls: false,
            shape: Some(shape),
            particles: mm,
            model,
            grid_targets: None,
            tuple_targets: &[],
            extra_probe: true,
        };
        let a = run_kernel(&spec, mc.samples, seed.wrapping_add(1 + t as u64));
        let (p, se) = a.extra_blocked_fraction();
        ln_beta += (1.0 - p).ln();
        rel2_beta += (se / (1.0 - p)).powi(2);
    }
    let w = pdf_hat.mass();
    let prefactor = (field.lambda.ln() - (s as f64 - 1.0) * w.ln() - ln_beta).exp();
    let mut vals = Vec::with_capacity(tuples.len());
    let mut errs = Vec::with_capacity(tuples.len());
    for j in 0..tuples.len() {
        let (p, se) = acc.blocked_fraction(j);
        let a = 1.0 - p;
        let k = prefactor * a;
        vals.push(k);
        errs.push(k * ((se / a).powi(2) + rel2_beta).sqrt());
    }
    Ok(PairOccupation {
        s,
        points: tuples.to_vec(),
        ks_values: vals,
        mc_error: errs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationSample {
    pub s: usize,
    pub phase_tuples: Vec<Vec<PhasePoint>>,
    /// `Theta^(s) prod rho_hat (k_s - 1)`
    pub delta_rho: Vec<f64>,
    /// `rho_s - Theta^(s) prod rho_hat`, evaluated as two separate terms
    pub direct: Vec<f64>,
}

/// s-body correlation functions at phase-space tuples whose positions match
/// `pair_occ.points` entry by entry.
pub fn correlation_delta(
    pdf_hat: &Renormalized,
    pair_occ: &PairOccupation,
    tuples: &[Vec<PhasePoint>],
) -> Result<CorrelationSample> {
    if tuples.len() != pair_occ.points.len() {
        return Err(Error::InvalidArgument("tuple count differs from pair_occ".into()));
    }
    let model = pdf_hat.model();
    let mut delta = Vec::with_capacity(tuples.len());
    let mut direct = Vec::with_capacity(tuples.len());
    for (t, (tuple, pos)) in tuples.iter().zip(&pair_occ.points).enumerate() {
        if tuple.len() != pair_occ.s || tuple.iter().zip(pos).any(|(x, r)| (x.r - r).norm() > 1e-12) {
            return Err(Error::InvalidArgument(format!("tuple {t} does not match pair_occ")));
        }
        let theta = s_body_theta(tuple, model);
        let prod: f64 = tuple.iter().map(|x| pdf_hat.density(x, 0.0)).product();
        let ks = pair_occ.ks_values[t];
        delta.push(if theta { prod * (ks - 1.0) } else { 0.0 });
        let rho_s = if theta { prod * ks } else { 0.0 };
        let factorized = if theta { prod } else { 0.0 };
        direct.push(rho_s - factorized);
    }
    Ok(CorrelationSample {
        s: pair_occ.s,
        phase_tuples: tuples.to_vec(),
        delta_rho: delta,
        direct,
    })
}

/// `Theta^(s)`: wall factors of the tuple and all its pair factors.
pub fn s_body_theta(tuple: &[PhasePoint], model: &HardSphereModel) -> bool {
    tuple.iter().all(|x| wall_theta(&x.r, model))
        && (0..tuple.len()).all(|i| {
            (i + 1..tuple.len()).all(|j| pair_theta(&tuple[i].r, &tuple[j].r, model.sigma()))
        })
}

/// Contact-pair k_2 at `r1` as a constant: the average of [`estimate_ks`] over
/// `directions` contact partners `r1 + sigma n` (separation `sigma (1 + 1e-9)`).
pub fn contact_k2(
    pdf_hat: &Renormalized,
    r1: &Vec3,
    directions: &[Vec3],
    mc: &McParams,
    seed: u64,
) -> Result<Estimate> {
    let sigma = pdf_hat.model().sigma();
    let tuples: Vec<Vec<Vec3>> = directions
        .iter()
        .map(|n| vec![*r1, r1 + n.normalize() * sigma * (1.0 + 1e-9)])
        .collect();
    let occ = estimate_ks(pdf_hat, &tuples, mc, seed)?;
    let m = occ.ks_values.len() as f64;
    let value = occ.ks_values.iter().sum::<f64>() / m;
    let error = (occ.mc_error.iter().map(|e| e * e).sum::<f64>()).sqrt() / m;
    Ok(Estimate { value, error })
}

/// Signed contact surface integral
/// `(N-1) sigma^2 int dv2 ∮ dSigma (v12 . n12) rho(r2, v2) k2(r1, n21) Theta_wall(r2)`
/// with `r2 = r1 + sigma n21 = r1 - sigma n12`. The pair factor of Theta*_2 is
/// identically 0 on the contact sphere under the strong convention, so only
/// the wall factor is kept. Error from a 3/4-resolution companion rule.
pub fn l1_k1_contact_integral(
    pdf: &dyn OneBodyPdf,
    k2_at_contact: &(dyn Fn(&Vec3, &Vec3) -> f64 + Sync),
    model: &HardSphereModel,
    x1: &PhasePoint,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    quad.validate()?;
    let fine = contact_integral_rule(pdf, k2_at_contact, model, x1, t, quad);
    let coarse = contact_integral_rule(pdf, k2_at_contact, model, x1, t, &quad.coarse());
    let error = (fine - coarse).abs() + 64.0 * f64::EPSILON * fine.abs();
    Ok(Estimate { value: fine, error })
}

fn contact_integral_rule(
    pdf: &dyn OneBodyPdf,
    k2: &(dyn Fn(&Vec3, &Vec3) -> f64 + Sync),
    model: &HardSphereModel,
    x1: &PhasePoint,
    t: f64,
    quad: &QuadratureSpec,
) -> f64 {
    use rayon::prelude::*;
    let sigma = model.sigma();
    let (n_mu, n_phi) = quad.hemisphere_rule_shape();
    let sphere = sphere_rule(&Vec3::z(), 2 * n_mu, n_phi);
    sphere
        .par_iter()
        .map(|(n12, w_ang)| {
            let r2 = x1.r - n12 * sigma;
            if !wall_theta(&r2, model) {
                return 0.0;
            }
            let n21 = -n12;
            let (lo, hi) = pdf.velocity_box(&r2, quad.v_max);
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo).max();
            let mut acc = 0.0;
            for (v2, wv) in tensor_box(center, half, quad.velocity_nodes) {
                let rho = pdf.density(&PhasePoint::new(r2, v2), t);
                acc += wv * (x1.v - v2).dot(n12) * rho;
            }
            w_ang * acc * k2(&x1.r, &n21)
        })
        .sum::<f64>()
        * (model.n() as f64 - 1.0)
        * sigma
        * sigma
}
