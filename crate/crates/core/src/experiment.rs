//! Runs a [`RunConfig`] and writes its artifacts.
//!
//! Every experiment writes into `output_dir` only: its CSV/JSON artifacts plus
//! `manifest.json` (config echo, version, derived seeds, file list, checks and
//! wall-clock time). Artifact bodies depend only on the config, so identical
//! configs give byte-identical CSV files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::collision::{boltzmann_op, master_op_with, write_scan_csv, MasterOptions, ScanRow};
use crate::config::{Experiment, ModelParams, RunConfig};
use crate::geometry::uniform_admissible_sample;
use crate::harness::{
    axis_directions, build_sequence, bulk_pair_tuples, bulk_probes, chaos_sweep, noncommutativity_report,
    solve_sequence, sweep_k1, EpsilonSequence, SweepOptions,
};
use crate::md::{measure, pair_rate_prediction, run_with, ObservableSpec, RunOptions};
use crate::occupation::{contact_k2, estimate_ks, solve_k1, OccupationField, Renormalized, SpatialGrid};
use crate::pdf::{bs_entropy, normalization_integral, PdfHandle};
use crate::quadrature::QuadratureSpec;
use crate::relax::{homogeneous_relax, stable_dt, two_beam, RelaxOptions};
use crate::rng::child_seed;
use crate::{Error, HardSphereModel, Result, Vec3};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

impl Manifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Sink {
    dir: PathBuf,
    files: Vec<String>,
    seeds: BTreeMap<String, u64>,
    checks: Vec<Check>,
}

impl Sink {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let w = self.create(name)?;
        serde_json::to_writer_pretty(w, value)?;
        Ok(())
    }

    fn seed(&mut self, name: &str, root: u64, task: u64) -> u64 {
        let s = child_seed(root, &format!("experiment/{name}"), task);
        self.seeds.insert(format!("{name}/{task}"), s);
        s
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

fn model_of(p: &ModelParams) -> Result<HardSphereModel> {
    match (p.sigma, p.packing) {
        (Some(s), _) => HardSphereModel::new(p.n, s, p.edge),
        (None, Some(phi)) => HardSphereModel::from_packing(p.n, phi, p.edge),
        _ => Err(Error::Config {
            path: "model".into(),
            message: "give sigma or packing".into(),
        }),
    }
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    SweepOptions {
        grid_nodes: cfg.grid_nodes,
        mc: cfg.mc.unwrap_or_default(),
        k1_tol: cfg.k1_tol,
        seed: cfg.seed,
    }
}

fn pdf_of(cfg: &RunConfig, edge: f64) -> Result<PdfHandle> {
    cfg.pdf
        .as_ref()
        .ok_or_else(|| Error::Config {
            path: "pdf".into(),
            message: "missing".into(),
        })?
        .build(edge)
}

fn sequence_of(cfg: &RunConfig) -> Result<EpsilonSequence> {
    let s = cfg.sequence.as_ref().ok_or_else(|| Error::Config {
        path: "sequence".into(),
        message: "missing".into(),
    })?;
    build_sequence(s.c, s.edge, &s.ns)
}

/// Runs the experiment with `output_dir` from the config.
pub fn run_experiment(cfg: &RunConfig) -> Result<Manifest> {
    run_experiment_in(cfg, &cfg.output_dir)
}

/// Runs the experiment writing into `dir`. Artifacts are written before the
/// internal checks are judged; a failed check returns [`Error::Validation`]
/// after `manifest.json` is on disk.
pub fn run_experiment_in(cfg: &RunConfig, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let start = Instant::now();
    let mut sink = Sink {
        dir: dir.to_path_buf(),
        files: Vec::new(),
        seeds: BTreeMap::new(),
        checks: Vec::new(),
    };
    match cfg.experiment {
        Experiment::K1 => k1(cfg, &mut sink)?,
        Experiment::Ks => ks(cfg, &mut sink)?,
        Experiment::Ops => ops(cfg, &mut sink)?,
        Experiment::Md => md(cfg, &mut sink)?,
        Experiment::BgSweep => bg_sweep(cfg, &mut sink)?,
        Experiment::Noncomm => noncomm(cfg, &mut sink)?,
        Experiment::Chaos => chaos(cfg, &mut sink)?,
        Experiment::Relax => relax(cfg, &mut sink)?,
        Experiment::Entropy => entropy(cfg, &mut sink)?,
    }
    let mut files = sink.files.clone();
    files.push("manifest.json".into());
    let manifest = Manifest {
        experiment: cfg.experiment.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds: sink.seeds.clone(),
        files,
        checks: sink.checks.clone(),
        threads: rayon::current_num_threads(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    sink.json("manifest.json", &manifest)?;
    let failed: Vec<String> = manifest
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} ({})", c.name, c.detail))
        .collect();
    if failed.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Validation(failed.join("; ")))
    }
}

fn field_for(cfg: &RunConfig, sink: &mut Sink, model: &HardSphereModel, pdf: &PdfHandle) -> Result<OccupationField> {
    let grid = SpatialGrid::cubic(cfg.grid_nodes, model.edge());
    let seed = sink.seed("k1", cfg.seed, 0);
    solve_k1(pdf.clone(), model, &grid, &cfg.mc.unwrap_or_default(), cfg.k1_tol, seed)
}

fn k1(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let model = model_of(cfg.model.as_ref().unwrap())?;
    let pdf = pdf_of(cfg, model.edge())?;
    let field = field_for(cfg, sink, &model, &pdf)?;
    field.write_csv(sink.create("k1.csv")?)?;
    let ok = field.k1_values.iter().all(|k| k.is_finite() && *k > 0.0);
    sink.check("k1 finite and positive", ok, format!("{} nodes", field.k1_values.len()));
    sink.json(
        "report.json",
        &serde_json::json!({
            "sup_deviation": field.sup_deviation(None),
            "sup_deviation_error": field.sup_deviation_error(),
            "iterations": field.iterations,
            "lambda": field.lambda,
            "history": field.history,
            "samples": field.sample_count,
        }),
    )
}

fn ks(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let model = model_of(cfg.model.as_ref().unwrap())?;
    let pdf = pdf_of(cfg, model.edge())?;
    let field = field_for(cfg, sink, &model, &pdf)?;
    let hat = Renormalized::new(pdf, field)?;
    let tuples: Vec<Vec<Vec3>> = bulk_pair_tuples(model.edge(), cfg.probes.unwrap_or(20))
        .iter()
        .map(|t| vec![t[0].r, t[1].r])
        .collect();
    let seed = sink.seed("ks", cfg.seed, 0);
    let pairs = estimate_ks(&hat, &tuples, &cfg.mc.unwrap_or_default(), seed)?;
    pairs.write_csv(sink.create("ks.csv")?)?;
    let ok = pairs.ks_values.iter().all(|k| k.is_finite() && *k > 0.0);
    sink.check("k2 finite and positive", ok, format!("{} tuples", pairs.ks_values.len()));
    let sup = pairs.ks_values.iter().map(|k| (k - 1.0).abs()).fold(0.0, f64::max);
    sink.json("report.json", &serde_json::json!({ "sup_deviation": sup, "tuples": tuples.len() }))
}

fn ops(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let model = model_of(cfg.model.as_ref().unwrap())?;
    let pdf = pdf_of(cfg, model.edge())?;
    let quad = cfg.quadrature.unwrap_or_default();
    let field = field_for(cfg, sink, &model, &pdf)?;
    let hat = Renormalized::new(pdf.clone(), field)?;
    let center = Vec3::repeat(0.5 * model.edge());
    let seed = sink.seed("ops", cfg.seed, 0);
    let k2 = contact_k2(&hat, &center, &axis_directions(), &cfg.mc.unwrap_or_default(), seed)?;
    let k2_value = k2.value;
    let k2_fn = move |_: &Vec3, _: &Vec3| k2_value;
    let opts = MasterOptions {
        pair_pdf: cfg.pair_pdf,
        ..MasterOptions::default()
    };
    let probes = bulk_probes(model.edge(), cfg.probes.unwrap_or(12));
    let mut b_rows = Vec::new();
    let mut m_rows = Vec::new();
    for x in &probes {
        b_rows.push(ScanRow {
            x: *x,
            value: boltzmann_op(pdf.as_ref(), x, 0.0, &model, &quad)?,
        });
        m_rows.push(ScanRow {
            x: *x,
            value: master_op_with(&hat, &k2_fn, x, 0.0, &quad, &opts)?,
        });
    }
    write_scan_csv(&b_rows, sink.create("boltzmann_scan.csv")?)?;
    write_scan_csv(&m_rows, sink.create("master_scan.csv")?)?;
    let ok = b_rows.iter().chain(&m_rows).all(|r| r.value.value.is_finite());
    sink.check("operator values finite", ok, format!("{} probes", probes.len()));
    let diff = b_rows
        .iter()
        .zip(&m_rows)
        .map(|(b, m)| (m.value.value - b.value.value).abs() / b.value.loss.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    sink.json(
        "report.json",
        &serde_json::json!({ "k2_contact": k2, "max_relative_difference": diff }),
    )
}

fn md(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let model = model_of(cfg.model.as_ref().unwrap())?;
    let p = cfg.md.unwrap();
    let opts = RunOptions {
        snapshot_dt: Some(p.snapshot_dt),
        snapshot_start: p.t_start,
        record_states: false,
        max_events: Some(p.events),
    };
    let mut trajs = Vec::with_capacity(p.members);
    for m in 0..p.members {
        let seed = sink.seed("md", cfg.seed, m as u64);
        let initial = uniform_admissible_sample(&model, seed)?;
        trajs.push(run_with(&initial, &model, f64::INFINITY, seed, &opts)?);
    }
    for (m, tr) in trajs.iter().enumerate() {
        tr.write_event_csv(sink.create(&format!("events_{m}.csv"))?)?;
        tr.write_snapshot_csv(sink.create(&format!("snapshots_{m}.csv"))?)?;
        let (ke, pr) = tr.max_pair_audit();
        let wall = tr.max_wall_energy_audit();
        sink.check(
            &format!("member {m} conservation"),
            ke < 1e-10 && pr < 1e-10 && wall < 1e-10,
            format!("pair KE {ke:.2e}, pair P {pr:.2e}, wall KE {wall:.2e}"),
        );
    }
    let spec = ObservableSpec {
        t_start: p.t_start,
        windows: p.windows,
        eta: p.eta,
        ..ObservableSpec::default()
    };
    let obs = measure(&trajs, &spec)?;
    let mut w = csv::Writer::from_writer(sink.create("histogram.csv")?);
    w.write_record(["bin", "count"])?;
    for (i, c) in obs.histogram.counts.iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()])?;
    }
    w.flush()?;
    let temperature = obs.moments.temperature;
    sink.json(
        "report.json",
        &serde_json::json!({
            "model": model,
            "observables": obs,
            "pair_rate_ideal_gas": pair_rate_prediction(&model, temperature, 1.0),
        }),
    )
}

fn bg_sweep(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let seq = sequence_of(cfg)?;
    let pdf = pdf_of(cfg, seq.edge)?;
    sink.seeds.insert("k1/common".into(), cfg.seed);
    let report = sweep_k1(&seq, &pdf, &sweep_options(cfg))?;
    report.write_csv(sink.create("k1_sweep.csv")?)?;
    sink.check(
        "k1 finite",
        report.rows.iter().all(|r| r.value.is_finite() && r.error.is_finite()),
        format!("{} entries", report.rows.len()),
    );
    sink.json("report.json", &report)
}

fn noncomm(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let seq = sequence_of(cfg)?;
    let pdf = pdf_of(cfg, seq.edge)?;
    let quad = cfg.quadrature.unwrap_or_default();
    sink.seeds.insert("k1/common".into(), cfg.seed);
    let fields = solve_sequence(&seq, &pdf, &sweep_options(cfg))?;
    let probes = bulk_probes(seq.edge, cfg.probes.unwrap_or(6));
    let report = noncommutativity_report(&seq, &pdf, &fields, &probes, &quad)?;
    let mut w = csv::Writer::from_writer(sink.create("noncomm.csv")?);
    w.write_record(["N", "epsilon", "probe", "left", "left_error", "right", "sup_k1_dev"])?;
    for row in &report.rows {
        for (i, (l, e)) in row.left.iter().zip(&row.left_error).enumerate() {
            w.write_record(
                [row.n.to_string(), row.epsilon.to_string(), i.to_string(), l.to_string(), e.to_string(), row.right.to_string(), row.sup_k1_dev.to_string()],
            )?;
        }
    }
    w.flush()?;
    sink.check(
        "contact integrals finite",
        report.rows.iter().all(|r| r.left.iter().all(|x| x.is_finite())),
        format!("{} entries", report.rows.len()),
    );
    sink.json("report.json", &report)
}

fn chaos(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let seq = sequence_of(cfg)?;
    let pdf = pdf_of(cfg, seq.edge)?;
    let opts = sweep_options(cfg);
    sink.seeds.insert("k1/common".into(), cfg.seed);
    let fields = solve_sequence(&seq, &pdf, &opts)?;
    let tuples = bulk_pair_tuples(seq.edge, cfg.probes.unwrap_or(20));
    let (delta, k2) = chaos_sweep(&seq, &pdf, &fields, &tuples, &opts)?;
    delta.write_csv(sink.create("chaos_delta.csv")?)?;
    k2.write_csv(sink.create("chaos_k2.csv")?)?;
    sink.check(
        "chaos metrics finite",
        delta.rows.iter().chain(&k2.rows).all(|r| r.value.is_finite()),
        format!("{} entries", delta.rows.len()),
    );
    sink.json("report.json", &serde_json::json!({ "delta_rho2": delta, "k2": k2 }))
}

fn relax(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let model = model_of(cfg.model.as_ref().unwrap())?;
    let p = cfg.relax.unwrap();
    let f0 = two_beam(p.grid, p.half_width, p.beam_speed, p.beam_temperature);
    let (_, _, temp) = f0.mean_and_temperature();
    let quad = QuadratureSpec::new((p.half_width / temp.sqrt()).min(8.0), p.grid, 8)?;
    let dt = p.dt_fraction * stable_dt(&f0, &model);
    let opts = RelaxOptions {
        displacements: p.displacements,
        snapshot_every: 0,
        seed: sink.seed("relax", cfg.seed, 0),
        ..RelaxOptions::default()
    };
    let out = homogeneous_relax(&f0, &model, &quad, p.t_end, dt, &opts)?;
    let m0 = out.records[0].moments;
    let mut w = csv::Writer::from_writer(sink.create("relax.csv")?);
    w.write_record(["t", "mass", "px", "py", "pz", "energy", "S", "S_error"])?;
    let mut max_drift: f64 = 0.0;
    let mut min_ds = f64::INFINITY;
    for (i, r) in out.records.iter().enumerate() {
        let m = r.moments;
        if i % p.snapshot_every.max(1) == 0 || i + 1 == out.records.len() {
            w.write_record([r.t, m[0], m[1], m[2], m[3], m[4], r.entropy.s, r.entropy.quadrature_error].map(|x| x.to_string()))?;
        }
        for k in 0..5 {
            max_drift = max_drift.max((m[k] - m0[k]).abs() / m0[0].max(m0[4]));
        }
        if i > 0 {
            min_ds = min_ds.min(r.entropy.s - out.records[i - 1].entropy.s);
        }
    }
    w.flush()?;
    let l1 = out.last.l1_distance(out.last.matched_maxwellian());
    sink.check("moment drift", max_drift < 1e-8, format!("{max_drift:.2e}"));
    sink.check("entropy nondecreasing", min_ds >= -1e-10, format!("min dS {min_ds:.2e}"));
    sink.json(
        "report.json",
        &serde_json::json!({
            "dt": out.dt,
            "steps": out.records.len() - 1,
            "max_moment_drift": max_drift,
            "min_entropy_step": min_ds,
            "final_l1_to_maxwellian": l1,
        }),
    )
}

fn entropy(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let edge = cfg.model.as_ref().map_or(1.0, |m| m.edge);
    let pdf = pdf_of(cfg, edge)?;
    let quad = cfg.quadrature.unwrap_or_default();
    let mass = normalization_integral(pdf.as_ref(), &quad)?;
    let s = bs_entropy(pdf.as_ref(), &quad)?;
    sink.check("entropy finite", s.s.is_finite(), format!("S = {}", s.s));
    sink.json("report.json", &serde_json::json!({ "family": pdf.family_tag(), "mass": mass, "entropy": s }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: serde_json::Value, dir: &Path) -> RunConfig {
        let mut c = RunConfig::from_json(&v.to_string()).unwrap();
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn entropy_experiment_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(
            serde_json::json!({
                "schema_version": 1, "experiment": "entropy", "seed": 1, "output_dir": "x",
                "units": {"length": "L_o", "velocity": "v_th", "time": "L_o/v_th"},
                "pdf": {"family": "uniform_maxwellian"},
                "quadrature": {"v_max": 6.0, "velocity_nodes": 24, "angle_nodes": 8}
            }),
            dir.path(),
        );
        let m = run_experiment(&c).unwrap();
        assert!(m.passed());
        assert!(dir.path().join("manifest.json").exists());
        let r: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        let s = r["entropy"]["S"].as_f64().unwrap();
        assert!((s - 1.5 * (1.0 + (2.0 * std::f64::consts::PI).ln())).abs() < 1e-3, "{s}");
    }

    #[test]
    fn md_experiment_is_deterministic() {
        let v = serde_json::json!({
            "schema_version": 1, "experiment": "md", "seed": 4, "output_dir": "x",
            "units": {"length": "L_o", "velocity": "v_th", "time": "L_o/v_th"},
            "model": {"n": 12, "sigma": 0.08},
            "md": {"events": 400, "snapshot_dt": 0.2}
        });
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&cfg(v.clone(), a.path())).unwrap();
        run_experiment(&cfg(v, b.path())).unwrap();
        for f in ["events_0.csv", "snapshots_0.csv", "histogram.csv"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}
