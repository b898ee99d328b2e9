//! Declarative run configuration (JSON, schema version 1).
//!
//! Lengths are in units of the cube edge `L_o`, velocities in units of the
//! thermal speed `v_th` and times in `L_o / v_th`; every config states this in
//! its `units` block, which is checked on load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collision::PairPdf;
use crate::occupation::McParams;
use crate::pdf::PdfSpec;
use crate::quadrature::QuadratureSpec;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    K1,
    Ks,
    Ops,
    Md,
    BgSweep,
    Noncomm,
    Chaos,
    Relax,
    Entropy,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::K1 => "k1",
            Experiment::Ks => "ks",
            Experiment::Ops => "ops",
            Experiment::Md => "md",
            Experiment::BgSweep => "bg-sweep",
            Experiment::Noncomm => "noncomm",
            Experiment::Chaos => "chaos",
            Experiment::Relax => "relax",
            Experiment::Entropy => "entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub length: String,
    pub velocity: String,
    pub time: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "L_o".into(),
            velocity: "v_th".into(),
            time: "L_o/v_th".into(),
        }
    }
}

/// Single model: give `sigma`, or `packing` to derive it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n: usize,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub packing: Option<f64>,
    #[serde(default = "unit")]
    pub edge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceParams {
    /// `N sigma^2` in units of `L_o^2`.
    pub c: f64,
    #[serde(default = "unit")]
    pub edge: f64,
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdParams {
    pub events: usize,
    #[serde(default = "default_snapshot_dt")]
    pub snapshot_dt: f64,
    /// Equilibration time discarded by the measurements.
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "default_windows")]
    pub windows: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Independent ensemble members.
    #[serde(default = "one_usize")]
    pub members: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxParams {
    pub grid: usize,
    pub half_width: f64,
    pub beam_speed: f64,
    pub beam_temperature: f64,
    pub t_end: f64,
    /// Step as a fraction of the stability bound `0.1 / nu_hat` (at most 1).
    #[serde(default = "unit")]
    pub dt_fraction: f64,
    #[serde(default = "default_displacements")]
    pub displacements: usize,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub units: Units,
    #[serde(default)]
    pub model: Option<ModelParams>,
    #[serde(default)]
    pub sequence: Option<SequenceParams>,
    #[serde(default)]
    pub pdf: Option<PdfSpec>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub mc: Option<McParams>,
    #[serde(default = "default_grid")]
    pub grid_nodes: usize,
    #[serde(default = "default_k1_tol")]
    pub k1_tol: f64,
    /// Number of bulk probes (phase points or pair tuples).
    #[serde(default)]
    pub probes: Option<usize>,
    #[serde(default)]
    pub pair_pdf: PairPdf,
    #[serde(default)]
    pub md: Option<MdParams>,
    #[serde(default)]
    pub relax: Option<RelaxParams>,
}

fn unit() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_ns() -> Vec<usize> {
    crate::harness::DEFAULT_NS.to_vec()
}
fn default_snapshot_dt() -> f64 {
    1.0
}
fn default_windows() -> usize {
    4
}
fn default_eta() -> f64 {
    0.05
}
fn default_displacements() -> usize {
    256
}
fn default_snapshot_every() -> usize {
    10
}
fn default_grid() -> usize {
    8
}
fn default_k1_tol() -> f64 {
    5e-3
}

fn bad(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(bad(path, format!("must be positive, got {x}")))
    }
}

impl RunConfig {
    /// Parses JSON; type errors carry the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            bad(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    /// Semantic checks beyond the JSON types.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let u = Units::default();
        if self.units != u {
            return Err(bad(
                "units",
                format!("expected length {}, velocity {}, time {}", u.length, u.velocity, u.time),
            ));
        }
        if let Some(m) = &self.model {
            if m.n < 2 {
                return Err(bad("model.n", "must be >= 2"));
            }
            positive("model.edge", m.edge)?;
            match (m.sigma, m.packing) {
                (Some(s), None) => {
                    if !(s.is_finite() && s >= 0.0) {
                        return Err(bad("model.sigma", format!("must be >= 0, got {s}")));
                    }
                    if s >= m.edge / 2.0 {
                        return Err(bad("model.sigma", "must be below edge / 2"));
                    }
                }
                (None, Some(p)) => {
                    if !(p > 0.0 && p < 0.5) {
                        return Err(bad("model.packing", format!("must be in (0, 0.5), got {p}")));
                    }
                }
                _ => return Err(bad("model", "give exactly one of sigma and packing")),
            }
        }
        if let Some(s) = &self.sequence {
            if !(s.c.is_finite() && s.c >= 0.0) {
                return Err(bad("sequence.c", format!("must be >= 0, got {}", s.c)));
            }
            positive("sequence.edge", s.edge)?;
            if s.ns.len() < 4 {
                return Err(bad("sequence.ns", "rate fits need at least 4 entries"));
            }
            if s.ns[0] < 2 || s.ns.windows(2).any(|w| w[1] <= w[0]) {
                return Err(bad("sequence.ns", "must start at >= 2 and ascend strictly"));
            }
            if (s.c / s.ns[0] as f64).sqrt() >= s.edge / 2.0 {
                return Err(bad("sequence.c", "first entry has sigma >= edge / 2"));
            }
        }
        if let Some(q) = &self.quadrature {
            q.validate().map_err(|e| bad("quadrature", e.to_string()))?;
        }
        if let Some(mc) = &self.mc {
            if mc.samples == 0 {
                return Err(bad("mc.samples", "must be positive"));
            }
        }
        if self.grid_nodes < 2 {
            return Err(bad("grid_nodes", "must be >= 2"));
        }
        positive("k1_tol", self.k1_tol)?;
        if let Some(md) = &self.md {
            positive("md.snapshot_dt", md.snapshot_dt)?;
            if md.events == 0 || md.windows == 0 || md.members == 0 {
                return Err(bad("md", "events, windows and members must be positive"));
            }
        }
        if let Some(r) = &self.relax {
            if r.grid < 8 {
                return Err(bad("relax.grid", "must be >= 8"));
            }
            positive("relax.half_width", r.half_width)?;
            positive("relax.beam_temperature", r.beam_temperature)?;
            positive("relax.t_end", r.t_end)?;
            if !(r.dt_fraction > 0.0 && r.dt_fraction <= 1.0) {
                return Err(bad("relax.dt_fraction", "must be in (0, 1]"));
            }
        }
        let need = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(bad(what, format!("required by experiment `{}`", self.experiment.name())))
            }
        };
        match self.experiment {
            Experiment::K1 | Experiment::Ks => {
                need(self.model.is_some(), "model")?;
                need(self.pdf.is_some(), "pdf")
            }
            Experiment::Ops => {
                need(self.model.is_some(), "model")?;
                need(self.pdf.is_some(), "pdf")
            }
            Experiment::Md => {
                need(self.model.is_some(), "model")?;
                need(self.md.is_some(), "md")
            }
            Experiment::BgSweep | Experiment::Noncomm | Experiment::Chaos => {
                need(self.sequence.is_some(), "sequence")?;
                need(self.pdf.is_some(), "pdf")
            }
            Experiment::Relax => {
                need(self.model.is_some(), "model")?;
                need(self.relax.is_some(), "relax")
            }
            Experiment::Entropy => need(self.pdf.is_some(), "pdf"),
        }
    }
}
