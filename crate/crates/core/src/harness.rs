//! Boltzmann-Grad sequences, convergence sweeps and rate fits.
//!
//! A sequence keeps `N sigma^2 = C` and the cube edge fixed while N grows, so
//! `sigma ~ eps^(1/2)` with `eps = 1/N`. Each sweep evaluates one metric per
//! entry and fits `ln metric` against `ln eps`.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collision::{boltzmann_op, master_op_with, MasterOptions};
use crate::occupation::{
    contact_k2, correlation_delta, estimate_ks, l1_k1_contact_integral, solve_k1, McParams, OccupationField,
    Renormalized, SpatialGrid,
};
use crate::pdf::{OneBodyPdf, PdfHandle};
use crate::quadrature::QuadratureSpec;
use crate::rng::child_seed;
use crate::{Error, HardSphereModel, PhasePoint, Result, Vec3};

/// Sequence entries must share `N sigma^2` to this relative tolerance.
pub const INVARIANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonSequence {
    pub entries: Vec<HardSphereModel>,
    pub invariant_c: f64,
    pub edge: f64,
}

impl EpsilonSequence {
    pub fn check(&self) -> Result<()> {
        for m in &self.entries {
            let dev = (m.n_sigma2() - self.invariant_c).abs();
            if dev > INVARIANT_TOL * self.invariant_c.max(f64::MIN_POSITIVE) || m.edge() != self.edge {
                return Err(Error::Validation(format!(
                    "entry N = {} breaks the sequence invariants (N sigma^2 = {}, L_o = {})",
                    m.n(),
                    m.n_sigma2(),
                    m.edge()
                )));
            }
        }
        Ok(())
    }

    pub fn largest_sigma(&self) -> f64 {
        self.entries.iter().map(HardSphereModel::sigma).fold(0.0, f64::max)
    }
}

pub const DEFAULT_NS: [usize; 5] = [16, 32, 64, 128, 256];

/// Models with `sigma_k = sqrt(C / N_k)` on a shared edge.
pub fn build_sequence(c: f64, edge: f64, ns: &[usize]) -> Result<EpsilonSequence> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::InvalidArgument(format!("C = {c} must be >= 0")));
    }
    if ns.is_empty() || ns[0] < 2 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("Ns must start at >= 2 and ascend strictly".into()));
    }
    let entries = ns
        .iter()
        .map(|&n| HardSphereModel::new(n, (c / n as f64).sqrt(), edge))
        .collect::<Result<Vec<_>>>()?;
    let seq = EpsilonSequence {
        entries,
        invariant_c: c,
        edge,
    };
    seq.check()?;
    Ok(seq)
}

/// One sequence entry of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub value: f64,
    pub error: f64,
    pub seed: u64,
    pub samples: u64,
    /// Secondary quantities of the entry (named).
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub chi2_per_dof: f64,
}

impl RateFit {
    /// `slope +- 2 stderr` overlaps `target`.
    pub fn covers(&self, target: f64) -> bool {
        (self.slope - target).abs() <= 2.0 * self.stderr
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub metric_name: String,
    pub rows: Vec<ReportRow>,
    pub fit: Option<RateFit>,
    pub residuals: Vec<f64>,
    /// Set when the metric is degenerate (e.g. identically 0) and no fit is made.
    pub flag: Option<String>,
    pub metadata: BTreeMap<String, String>,
}

impl ConvergenceReport {
    fn new(metric_name: &str, rows: Vec<ReportRow>, metadata: BTreeMap<String, String>) -> Self {
        let triples: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.epsilon, r.value, r.error)).collect();
        let (fit, residuals, flag) = if rows.iter().all(|r| r.value == 0.0) {
            (None, vec![], Some("metric identically 0".to_string()))
        } else {
            match fit_rate_detailed(&triples) {
                Ok((f, res)) => (Some(f), res, None),
                Err(e) => (None, vec![], Some(e.to_string())),
            }
        };
        Self {
            metric_name: metric_name.to_string(),
            rows,
            fit,
            residuals,
            flag,
            metadata,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// Each value below the previous one by more than their combined error.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].value - w[1].value > (w[0].error.powi(2) + w[1].error.powi(2)).sqrt())
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let keys: Vec<String> = self.rows.first().map(|r| r.extra.keys().cloned().collect()).unwrap_or_default();
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["N", "epsilon", "sigma", "value", "error", "seed", "samples"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(keys.iter().cloned());
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.n.to_string(),
                r.epsilon.to_string(),
                r.sigma.to_string(),
                r.value.to_string(),
                r.error.to_string(),
                r.seed.to_string(),
                r.samples.to_string(),
            ];
            rec.extend(keys.iter().map(|k| r.extra.get(k).map_or(String::new(), |v| v.to_string())));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Weighted least squares of `ln value` on `ln eps`.
pub fn fit_rate(rows: &[(f64, f64, f64)]) -> Result<(f64, f64)> {
    fit_rate_detailed(rows).map(|(f, _)| (f.slope, f.stderr))
}

/// As [`fit_rate`], with intercept and residuals. Weights are `(value / error)^2`
/// (equal weights when any error is 0); the slope error comes from the weights
/// and is inflated by `sqrt(chi2 / dof)` when the scatter exceeds the errors.
pub fn fit_rate_detailed(rows: &[(f64, f64, f64)]) -> Result<(RateFit, Vec<f64>)> {
    if rows.len() < 4 {
        return Err(Error::Fit(format!("{} rows, need at least 4", rows.len())));
    }
    for &(eps, v, e) in rows {
        if !(eps > 0.0 && v > 0.0) {
            return Err(Error::Fit(format!("non-positive row (eps {eps}, value {v})")));
        }
        if v < 3.0 * e {
            return Err(Error::Fit(format!("value {v:.3e} below 3x its error {e:.3e}")));
        }
    }
    let unweighted = rows.iter().any(|r| r.2 == 0.0);
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|&(eps, v, e)| (eps.ln(), v.ln(), if unweighted { 1.0 } else { (v / e).powi(2) }))
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = pts.iter().map(|p| p.1 - intercept - slope * p.0).collect();
    let dof = (pts.len() - 2) as f64;
    let chi2: f64 = pts.iter().zip(&residuals).map(|(p, r)| p.2 * r * r).sum::<f64>() / dof;
    let stderr = if unweighted {
        (chi2 / sxx).sqrt()
    } else {
        (chi2.max(1.0) / sxx).sqrt()
    };
    Ok((
        RateFit {
            slope,
            stderr,
            intercept,
            chi2_per_dof: chi2,
        },
        residuals,
    ))
}

/// Options shared by the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub grid_nodes: usize,
    pub mc: McParams,
    /// Picard stopping tolerance for `k1`.
    pub k1_tol: f64,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            grid_nodes: 8,
            mc: McParams::default(),
            k1_tol: 5e-3,
            seed: 0,
        }
    }
}

fn meta(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn entry_err(entry: usize, m: &HardSphereModel) -> impl FnOnce(Error) -> Error {
    let n = m.n();
    move |e| Error::Entry {
        entry,
        n,
        source: Box::new(e),
    }
}

/// `k1` fields along the sequence, all with the same seed (common random numbers).
pub fn solve_sequence(seq: &EpsilonSequence, pdf: &PdfHandle, opts: &SweepOptions) -> Result<Vec<OccupationField>> {
    seq.check()?;
    let grid = SpatialGrid::cubic(opts.grid_nodes, seq.edge);
    seq.entries
        .iter()
        .enumerate()
        .map(|(k, m)| solve_k1(pdf.clone(), m, &grid, &opts.mc, opts.k1_tol, opts.seed).map_err(entry_err(k, m)))
        .collect()
}

/// `sup |k1 - 1|` over bulk nodes (wall clearance above twice the largest sigma).
pub fn sweep_k1(seq: &EpsilonSequence, pdf: &PdfHandle, opts: &SweepOptions) -> Result<ConvergenceReport> {
    let fields = solve_sequence(seq, pdf, opts)?;
    Ok(k1_report(seq, &fields, opts, pdf.family_tag()))
}

pub fn k1_report(seq: &EpsilonSequence, fields: &[OccupationField], opts: &SweepOptions, family: &str) -> ConvergenceReport {
    let margin = 2.0 * seq.largest_sigma();
    let rows = seq
        .entries
        .iter()
        .zip(fields)
        .map(|(m, f)| {
            let bulk = f.grid.bulk_nodes(margin);
            let (node, value) = bulk
                .iter()
                .map(|&i| (i, (f.k1_values[i] - 1.0).abs()))
                .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            let mut extra = BTreeMap::new();
            extra.insert("iterations".into(), f.iterations as f64);
            extra.insert("lambda".into(), f.lambda);
            ReportRow {
                n: m.n(),
                epsilon: m.epsilon(),
                sigma: m.sigma(),
                value,
                error: f.mc_error[node],
                seed: opts.seed,
                samples: f.sample_count,
                extra,
            }
        })
        .collect();
    ConvergenceReport::new(
        "sup_bulk |k1 - 1|",
        rows,
        meta(&[
            ("pdf", family.to_string()),
            ("grid_nodes", opts.grid_nodes.to_string()),
            ("bulk_margin", margin.to_string()),
            ("C", seq.invariant_c.to_string()),
            ("k1_tol", opts.k1_tol.to_string()),
        ]),
    )
}

/// Axis directions used to average `k2` over the contact sphere.
pub fn axis_directions() -> Vec<Vec3> {
    vec![Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()]
}

/// Master vs Boltzmann at bulk probes: metric `max |C_master - C_B| / loss_B`.
/// `k2` at contact is the constant [`contact_k2`] at the cube center.
pub fn sweep_operators(
    seq: &EpsilonSequence,
    pdf: &PdfHandle,
    fields: &[OccupationField],
    probes: &[PhasePoint],
    quad: &QuadratureSpec,
    opts: &SweepOptions,
) -> Result<ConvergenceReport> {
    seq.check()?;
    let s_max = seq.largest_sigma();
    if probes.iter().any(|p| crate::geometry::wall_clearance(&p.r, seq.edge) <= 1.5 * s_max) {
        return Err(Error::InvalidArgument("probes must clear the walls by more than sigma_max".into()));
    }
    let center = Vec3::repeat(0.5 * seq.edge);
    let mut rows = Vec::new();
    for (k, (m, field)) in seq.entries.iter().zip(fields).enumerate() {
        let hat = Renormalized::new(pdf.clone(), field.clone()).map_err(entry_err(k, m))?;
        let seed = child_seed(opts.seed, "harness/contact_k2", k as u64);
        let k2 = contact_k2(&hat, &center, &axis_directions(), &opts.mc, seed).map_err(entry_err(k, m))?;
        let k2f = move |_: &Vec3, _: &Vec3| k2.value;
        let (mut worst, mut worst_err, mut max_b) = (0.0, 0.0, 0.0f64);
        let mut degenerate = true;
        for x in probes {
            let c = master_op_with(&hat, &k2f, x, 0.0, quad, &MasterOptions::default()).map_err(entry_err(k, m))?;
            let b = boltzmann_op(pdf.as_ref(), x, 0.0, m, quad).map_err(entry_err(k, m))?;
            max_b = max_b.max(b.value.abs() / b.loss);
            if b.value.abs() > 3.0 * b.error {
                degenerate = false;
            }
            let rel = (c.value - b.value).abs() / b.loss;
            if rel >= worst {
                worst = rel;
                worst_err = (c.error + b.error) / b.loss + (c.value.abs() / b.loss) * k2.error / k2.value;
            }
        }
        let mut extra = BTreeMap::new();
        extra.insert("k2_contact".into(), k2.value);
        extra.insert("k2_contact_err".into(), k2.error);
        extra.insert("max_rel_boltzmann".into(), max_b);
        extra.insert("boltzmann_degenerate".into(), degenerate as u8 as f64);
        rows.push(ReportRow {
            n: m.n(),
            epsilon: m.epsilon(),
            sigma: m.sigma(),
            value: worst,
            error: worst_err,
            seed: opts.seed,
            samples: opts.mc.samples,
            extra,
        });
    }
    let mut report = ConvergenceReport::new(
        "max_probes |C_master - C_B| / loss_B",
        rows,
        meta(&[
            ("pdf", pdf.family_tag().to_string()),
            ("probes", probes.len().to_string()),
            ("quadrature", serde_json::to_string(quad).unwrap_or_default()),
            ("C", seq.invariant_c.to_string()),
        ]),
    );
    if report.rows.iter().all(|r| r.extra["boltzmann_degenerate"] == 1.0) {
        report.flag = Some("C_B vanishes within tolerance at every probe; the metric is |C_master| / loss_B".into());
    }
    Ok(report)
}

/// Per-entry non-commutativity content.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonCommutativityRow {
    pub n: usize,
    pub epsilon: f64,
    /// Left-limit content: the contact integral at each probe.
    pub left: Vec<f64>,
    pub left_error: Vec<f64>,
    /// Right-limit content (identically 0 by construction).
    pub right: f64,
    pub sup_k1_dev: f64,
    pub sup_k1_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonCommutativityReport {
    pub rows: Vec<NonCommutativityRow>,
    /// `C_B` at each probe, evaluated once on the same pdf (local velocity
    /// integral of the left content's Boltzmann counterpart).
    pub boltzmann_at_probes: Vec<f64>,
    /// `max_probes |left_last - left_prev| / |left_last|`.
    pub plateau_change: f64,
    /// `min_probes |left_last| / error_last`.
    pub plateau_significance: f64,
    pub flag: Option<String>,
}

/// Left limit: the contact integral with `k2 = 1` at contact; right limit: 0.
pub fn noncommutativity_report(
    seq: &EpsilonSequence,
    pdf: &PdfHandle,
    fields: &[OccupationField],
    probes: &[PhasePoint],
    quad: &QuadratureSpec,
) -> Result<NonCommutativityReport> {
    seq.check()?;
    let one = |_: &Vec3, _: &Vec3| 1.0;
    let margin = 2.0 * seq.largest_sigma();
    let mut rows = Vec::new();
    for (k, (m, f)) in seq.entries.iter().zip(fields).enumerate() {
        let mut left = Vec::new();
        let mut left_error = Vec::new();
        for x in probes {
            let e = l1_k1_contact_integral(pdf.as_ref(), &one, m, x, 0.0, quad).map_err(entry_err(k, m))?;
            left.push(e.value);
            left_error.push(e.error);
        }
        let bulk = f.grid.bulk_nodes(margin);
        let (node, dev) = bulk
            .iter()
            .map(|&i| (i, (f.k1_values[i] - 1.0).abs()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        rows.push(NonCommutativityRow {
            n: m.n(),
            epsilon: m.epsilon(),
            left,
            left_error,
            right: 0.0,
            sup_k1_dev: dev,
            sup_k1_err: f.mc_error[node],
        });
    }
    let last = seq.entries.last().ok_or_else(|| Error::InvalidArgument("empty sequence".into()))?;
    let boltzmann_at_probes = probes
        .iter()
        .map(|x| boltzmann_op(pdf.as_ref(), x, 0.0, last, quad).map(|c| c.value))
        .collect::<Result<Vec<_>>>()?;
    let (mut change, mut significance) = (0.0f64, f64::INFINITY);
    let mut flag = None;
    if rows.len() >= 2 {
        let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
        for p in 0..probes.len() {
            change = change.max((b.left[p] - a.left[p]).abs() / b.left[p].abs());
            significance = significance.min(b.left[p].abs() / b.left_error[p]);
        }
    }
    if rows.iter().all(|r| r.left.iter().zip(&r.left_error).all(|(v, e)| v.abs() <= 3.0 * e)) {
        flag = Some("left-limit content vanishes at every entry (commuting, degenerate case)".into());
    }
    Ok(NonCommutativityReport {
        rows,
        boltzmann_at_probes,
        plateau_change: change,
        plateau_significance: significance,
        flag,
    })
}

/// `sup_tuples |Delta rho_2|` per entry, with `sup |k2 - 1|` as a second report.
pub fn chaos_sweep(
    seq: &EpsilonSequence,
    pdf: &PdfHandle,
    fields: &[OccupationField],
    tuples: &[[PhasePoint; 2]],
    opts: &SweepOptions,
) -> Result<(ConvergenceReport, ConvergenceReport)> {
    seq.check()?;
    let s_max = seq.largest_sigma();
    if tuples.iter().any(|t| (t[0].r - t[1].r).norm() <= s_max) {
        return Err(Error::InvalidArgument("tuples overlap at the largest sigma".into()));
    }
    let positions: Vec<Vec<Vec3>> = tuples.iter().map(|t| vec![t[0].r, t[1].r]).collect();
    let phase: Vec<Vec<PhasePoint>> = tuples.iter().map(|t| t.to_vec()).collect();
    let mut drows = Vec::new();
    let mut krows = Vec::new();
    for (k, (m, f)) in seq.entries.iter().zip(fields).enumerate() {
        let hat = Renormalized::new(pdf.clone(), f.clone()).map_err(entry_err(k, m))?;
        let occ = estimate_ks(&hat, &positions, &opts.mc, opts.seed).map_err(entry_err(k, m))?;
        let corr = correlation_delta(&hat, &occ, &phase).map_err(entry_err(k, m))?;
        let (mut dsup, mut derr, mut ksup, mut kerr) = (0.0, 0.0, 0.0, 0.0);
        for (t, x) in phase.iter().enumerate() {
            let prod: f64 = x.iter().map(|p| hat.density(p, 0.0)).product();
            let d = corr.delta_rho[t].abs();
            if d >= dsup {
                dsup = d;
                derr = prod * occ.mc_error[t];
            }
            let kd = (occ.ks_values[t] - 1.0).abs();
            if kd >= ksup {
                ksup = kd;
                kerr = occ.mc_error[t];
            }
        }
        let row = |value, error| ReportRow {
            n: m.n(),
            epsilon: m.epsilon(),
            sigma: m.sigma(),
            value,
            error,
            seed: opts.seed,
            samples: opts.mc.samples,
            extra: BTreeMap::new(),
        };
        drows.push(row(dsup, derr));
        krows.push(row(ksup, kerr));
    }
    let md = meta(&[
        ("pdf", pdf.family_tag().to_string()),
        ("tuples", tuples.len().to_string()),
        ("C", seq.invariant_c.to_string()),
    ]);
    Ok((
        ConvergenceReport::new("sup_tuples |Delta rho_2|", drows, md.clone()),
        ConvergenceReport::new("sup_tuples |k2 - 1|", krows, md),
    ))
}

/// Deterministic bulk probes: a 2x2x3 lattice of positions inside
/// `[0.3, 0.7]^3` with velocities cycling through a fixed set.
pub fn bulk_probes(edge: f64, count: usize) -> Vec<PhasePoint> {
    let vels = [
        Vec3::new(0.5, 0.8, 0.0),
        Vec3::new(-0.7, 0.2, 0.4),
        Vec3::new(0.1, -0.6, 0.9),
        Vec3::new(1.1, 0.3, -0.5),
    ];
    (0..count)
        .map(|k| {
            let (a, b, c) = (k % 2, (k / 2) % 2, (k / 4) % 3);
            let r = Vec3::new(0.38 + 0.24 * a as f64, 0.38 + 0.24 * b as f64, 0.35 + 0.15 * c as f64) * edge;
            PhasePoint::new(r, vels[k % vels.len()])
        })
        .collect()
}

/// Deterministic bulk pair tuples with separations spread over `[0.15, 0.35]`.
pub fn bulk_pair_tuples(edge: f64, count: usize) -> Vec<[PhasePoint; 2]> {
    (0..count)
        .map(|k| {
            let f = k as f64 / count.max(1) as f64;
            let a = 2.0 * std::f64::consts::PI * f * 3.0;
            let dir = Vec3::new(a.cos(), a.sin(), (2.0 * f - 1.0) * 0.8).normalize();
            let sep = 0.15 + 0.2 * f;
            let mid = Vec3::new(0.5, 0.5 + 0.05 * (f - 0.5), 0.5) * edge;
            let v = Vec3::new(0.3 - f, 0.5 * f, -0.2);
            [
                PhasePoint::new(mid + 0.5 * sep * edge * dir, v),
                PhasePoint::new(mid - 0.5 * sep * edge * dir, -v),
            ]
        })
        .collect()
}

/// Convenience: shared pdf handle.
pub fn handle<P: OneBodyPdf + 'static>(p: P) -> PdfHandle {
    Arc::new(p)
}
