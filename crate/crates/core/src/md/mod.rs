//! Event-driven hard-sphere dynamics in the cube with specular walls.
//!
//! Particles stream freely between events. Each particle keeps its own
//! reference time, so positions are only updated when the particle takes part
//! in an event. Predictions are all-pairs per updated particle and live in a
//! binary heap, invalidated by per-particle event counters.

mod cbc;
mod measure;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::collision::elastic_map;
use crate::geometry::{closure_admissible, ensemble_theta};
use crate::{Error, HardSphereModel, NBodyConfig, PhasePoint, Result, Vec3};

pub use cbc::{cbc_evaluate, factorized_form, CbcMode};
pub use measure::{
    contact_factor, measure, pair_rate_prediction, shell_count_prediction, wall_access_fraction, ContactStats,
    EntropyEstimate, Histogram, ObservableSpec, Observables, VelocityMoments,
};

/// Contact tolerance relative to sigma.
pub const CONTACT_TOL: f64 = 1e-10;
/// Simultaneity window relative to `L_o / v_th`.
pub const TIE_WINDOW: f64 = 1e-12;

/// Face `2 * axis + high` of the cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub high: bool,
}

impl Face {
    pub fn index(&self) -> usize {
        2 * self.axis + self.high as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Pair { i: usize, j: usize },
    Wall { i: usize, face: Face },
}

impl EventKind {
    fn order_key(&self) -> (usize, usize, usize) {
        match *self {
            EventKind::Pair { i, j } => (i.min(j), i.max(j), 0),
            EventKind::Wall { i, face } => (i, usize::MAX, face.index()),
        }
    }

    pub fn particles(&self) -> Vec<usize> {
        match *self {
            EventKind::Pair { i, j } => vec![i, j],
            EventKind::Wall { i, .. } => vec![i],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    /// Involved particles just before and just after the event.
    pub before: Vec<PhasePoint>,
    pub after: Vec<PhasePoint>,
    /// Full incoming and outgoing N-body states (only with `record_states`).
    pub x_minus: Option<NBodyConfig>,
    pub x_plus: Option<NBodyConfig>,
}

/// Conservation audit of one event; deltas are after minus before over the
/// involved particles.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Audit {
    pub ke_delta: f64,
    pub p_delta: Vec3,
    /// `|ke_delta| / KE_before`
    pub ke_rel: f64,
    /// `|p_delta| / sqrt(2 KE_before)`; wall events reverse one component by design
    pub p_rel: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub events: Vec<Event>,
    pub audits: Vec<Audit>,
    pub snapshots: Vec<(f64, NBodyConfig)>,
    pub initial: NBodyConfig,
    pub final_state: NBodyConfig,
    pub t_final: f64,
    pub seed: u64,
    pub model: HardSphereModel,
}

impl Trajectory {
    pub fn pair_events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Pair { .. }))
    }

    pub fn max_pair_audit(&self) -> (f64, f64) {
        self.events
            .iter()
            .zip(&self.audits)
            .filter(|(e, _)| matches!(e.kind, EventKind::Pair { .. }))
            .fold((0.0, 0.0), |(a, b), (_, au)| (a.max(au.ke_rel), b.max(au.p_rel)))
    }

    pub fn max_wall_energy_audit(&self) -> f64 {
        self.events
            .iter()
            .zip(&self.audits)
            .filter(|(e, _)| matches!(e.kind, EventKind::Wall { .. }))
            .fold(0.0, |a, (_, au)| a.max(au.ke_rel))
    }

    /// CSV `t,kind,i,j_or_face,KE_delta,Px_delta,Py_delta,Pz_delta`.
    pub fn write_event_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "kind", "i", "j_or_face", "KE_delta", "Px_delta", "Py_delta", "Pz_delta"])?;
        for (e, a) in self.events.iter().zip(&self.audits) {
            let (kind, i, j) = match e.kind {
                EventKind::Pair { i, j } => ("pair", i, j),
                EventKind::Wall { i, face } => ("wall", i, face.index()),
            };
            out.write_record(&[
                e.t.to_string(),
                kind.to_string(),
                i.to_string(),
                j.to_string(),
                a.ke_delta.to_string(),
                a.p_delta.x.to_string(),
                a.p_delta.y.to_string(),
                a.p_delta.z.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per particle and snapshot: `t,particle,x,y,z,vx,vy,vz`.
    pub fn write_snapshot_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "particle", "x", "y", "z", "vx", "vy", "vz"])?;
        for (t, s) in &self.snapshots {
            for (k, p) in s.points.iter().enumerate() {
                let mut rec = vec![t.to_string(), k.to_string()];
                rec.extend(p.r.iter().chain(p.v.iter()).map(|x| x.to_string()));
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Earliest scheduled event(s) from a state taken at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduled {
    /// `f64::INFINITY` when nothing ever happens.
    pub t: f64,
    pub members: Vec<EventKind>,
}

/// Time until `|dr + dv t| = sigma` for an approaching pair.
pub fn pair_time(dr: &Vec3, dv: &Vec3, sigma: f64) -> Option<f64> {
    let b = dr.dot(dv);
    if b >= 0.0 || sigma <= 0.0 {
        return None;
    }
    let vv = dv.norm_squared();
    let c = dr.norm_squared() - sigma * sigma;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - vv * c;
    if disc < 0.0 {
        return None;
    }
    // stable form of (-b - sqrt(disc)) / vv
    Some(c / (-b + disc.sqrt()))
}

/// Time until the center reaches the face it moves towards on `axis`.
pub fn wall_time(x: f64, v: f64, model: &HardSphereModel) -> Option<(f64, bool)> {
    let lo = 0.5 * model.sigma();
    let hi = model.edge() - lo;
    if v > 0.0 {
        Some((((hi - x) / v).max(0.0), true))
    } else if v < 0.0 {
        Some((((lo - x) / v).max(0.0), false))
    } else {
        None
    }
}

fn thermal_speed(state: &NBodyConfig) -> f64 {
    let n = state.len().max(1) as f64;
    let v = (2.0 * state.kinetic_energy() / (3.0 * n)).sqrt();
    if v > 0.0 {
        v
    } else {
        1.0
    }
}

fn tie_window(state: &NBodyConfig, model: &HardSphereModel) -> f64 {
    TIE_WINDOW * model.edge() / thermal_speed(state)
}

/// Earliest positive pair root or wall crossing over the whole state, with every
/// event inside the simultaneity window.
pub fn next_event(state: &NBodyConfig, model: &HardSphereModel) -> Scheduled {
    let pts = &state.points;
    let mut all = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if let Some(t) = pair_time(&(pts[i].r - pts[j].r), &(pts[i].v - pts[j].v), model.sigma()) {
                all.push((t, EventKind::Pair { i, j }));
            }
        }
        for axis in 0..3 {
            if let Some((t, high)) = wall_time(pts[i].r[axis], pts[i].v[axis], model) {
                all.push((t, EventKind::Wall { i, face: Face { axis, high } }));
            }
        }
    }
    let t = all.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    if !t.is_finite() {
        return Scheduled { t, members: vec![] };
    }
    let w = tie_window(state, model);
    let mut members: Vec<EventKind> = all.into_iter().filter(|e| e.0 <= t + w).map(|e| e.1).collect();
    members.sort_by_key(EventKind::order_key);
    Scheduled { t, members }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Snapshot spacing (none if `None`).
    pub snapshot_dt: Option<f64>,
    /// First snapshot time.
    pub snapshot_start: f64,
    /// Keep full `x_minus` / `x_plus` per event.
    pub record_states: bool,
    /// Stop after this many events.
    pub max_events: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            snapshot_dt: None,
            snapshot_start: 0.0,
            record_states: false,
            max_events: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    t: f64,
    kind: EventKind,
    ci: u64,
    cj: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.kind.order_key().cmp(&self.kind.order_key()))
    }
}

struct Engine {
    model: HardSphereModel,
    r: Vec<Vec3>,
    v: Vec<Vec3>,
    tp: Vec<f64>,
    count: Vec<u64>,
    heap: BinaryHeap<Entry>,
}

impl Engine {
    fn new(initial: &NBodyConfig, model: HardSphereModel) -> Self {
        let n = initial.len();
        let mut e = Self {
            model,
            r: initial.points.iter().map(|p| p.r).collect(),
            v: initial.points.iter().map(|p| p.v).collect(),
            tp: vec![0.0; n],
            count: vec![0; n],
            heap: BinaryHeap::new(),
        };
        for i in 0..n {
            e.predict(i, 0.0, |j| j > i);
        }
        e
    }

    fn position(&self, i: usize, t: f64) -> Vec3 {
        self.r[i] + self.v[i] * (t - self.tp[i])
    }

    fn state(&self, t: f64) -> NBodyConfig {
        NBodyConfig::new((0..self.r.len()).map(|i| PhasePoint::new(self.position(i, t), self.v[i])).collect())
    }

    fn advance(&mut self, i: usize, t: f64) {
        self.r[i] = self.position(i, t);
        self.tp[i] = t;
    }

    /// Pushes the events of `i` against the partners accepted by `with`.
    fn predict(&mut self, i: usize, now: f64, with: impl Fn(usize) -> bool) {
        let ri = self.position(i, now);
        for j in 0..self.r.len() {
            if j == i || !with(j) {
                continue;
            }
            let dr = ri - self.position(j, now);
            if let Some(dt) = pair_time(&dr, &(self.v[i] - self.v[j]), self.model.sigma()) {
                self.heap.push(Entry {
                    t: now + dt,
                    kind: EventKind::Pair { i, j },
                    ci: self.count[i],
                    cj: self.count[j],
                });
            }
        }
        for axis in 0..3 {
            if let Some((dt, high)) = wall_time(ri[axis], self.v[i][axis], &self.model) {
                self.heap.push(Entry {
                    t: now + dt,
                    kind: EventKind::Wall { i, face: Face { axis, high } },
                    ci: self.count[i],
                    cj: 0,
                });
            }
        }
    }

    fn valid(&self, e: &Entry) -> bool {
        match e.kind {
            EventKind::Pair { i, j } => self.count[i] == e.ci && self.count[j] == e.cj,
            EventKind::Wall { i, .. } => self.count[i] == e.ci,
        }
    }

    fn pop_valid(&mut self) -> Option<Entry> {
        while let Some(e) = self.heap.pop() {
            if self.valid(&e) {
                return Some(e);
            }
        }
        None
    }

    fn peek_valid(&mut self) -> Option<Entry> {
        while let Some(e) = self.heap.peek().copied() {
            if self.valid(&e) {
                return Some(e);
            }
            self.heap.pop();
        }
        None
    }

    /// Resolves one member at time `t`. Returns `None` when the approach
    /// condition no longer holds (an earlier member already changed it).
    fn resolve(&mut self, kind: EventKind, t: f64) -> Result<Option<(Vec<PhasePoint>, Vec<PhasePoint>)>> {
        let sigma = self.model.sigma();
        match kind {
            EventKind::Pair { i, j } => {
                self.advance(i, t);
                self.advance(j, t);
                let dr = self.r[i] - self.r[j];
                let dv = self.v[i] - self.v[j];
                if dr.dot(&dv) >= 0.0 {
                    return Ok(None);
                }
                let dist = dr.norm();
                if (dist - sigma).abs() > CONTACT_TOL * sigma {
                    return Err(Error::Validation(format!(
                        "pair ({i}, {j}) at t = {t}: separation {dist} is not sigma = {sigma}"
                    )));
                }
                let before = vec![PhasePoint::new(self.r[i], self.v[i]), PhasePoint::new(self.r[j], self.v[j])];
                let n12 = dr / dist;
                let mid = 0.5 * (self.r[i] + self.r[j]);
                self.r[i] = mid + 0.5 * sigma * n12;
                self.r[j] = mid - 0.5 * sigma * n12;
                let (a, b) = elastic_map(&self.v[i], &self.v[j], &n12);
                self.v[i] = a;
                self.v[j] = b;
                let after = vec![PhasePoint::new(self.r[i], a), PhasePoint::new(self.r[j], b)];
                Ok(Some((before, after)))
            }
            EventKind::Wall { i, face } => {
                self.advance(i, t);
                let moving_out = if face.high { self.v[i][face.axis] > 0.0 } else { self.v[i][face.axis] < 0.0 };
                if !moving_out {
                    return Ok(None);
                }
                let target = if face.high { self.model.edge() - 0.5 * sigma } else { 0.5 * sigma };
                if (self.r[i][face.axis] - target).abs() > CONTACT_TOL * sigma.max(f64::MIN_POSITIVE) + 1e-12 * self.model.edge() {
                    return Err(Error::Validation(format!(
                        "wall event of {i} at t = {t}: center {} is off the face",
                        self.r[i][face.axis]
                    )));
                }
                let before = vec![PhasePoint::new(self.r[i], self.v[i])];
                self.r[i][face.axis] = target;
                self.v[i][face.axis] = -self.v[i][face.axis];
                Ok(Some((before, vec![PhasePoint::new(self.r[i], self.v[i])])))
            }
        }
    }

    /// Closure admissibility of the given particles against everything else.
    fn locally_admissible(&self, touched: &[usize], t: f64) -> bool {
        let s = self.model.sigma();
        let slack = CONTACT_TOL * s;
        touched.iter().all(|&i| {
            let ri = self.position(i, t);
            ri.iter().all(|&c| c >= 0.5 * s - slack && c <= self.model.edge() - 0.5 * s + slack)
                && (0..self.r.len()).all(|j| j == i || (ri - self.position(j, t)).norm() >= s - slack)
        })
    }
}

fn audit(before: &[PhasePoint], after: &[PhasePoint]) -> Audit {
    let ke = |p: &[PhasePoint]| 0.5 * p.iter().map(|x| x.v.norm_squared()).sum::<f64>();
    let mom = |p: &[PhasePoint]| p.iter().map(|x| x.v).sum::<Vec3>();
    let k0 = ke(before);
    let ke_delta = ke(after) - k0;
    let p_delta = mom(after) - mom(before);
    let scale = if k0 > 0.0 { k0 } else { 1.0 };
    Audit {
        ke_delta,
        p_delta,
        ke_rel: ke_delta.abs() / scale,
        p_rel: p_delta.norm() / (2.0 * scale).sqrt(),
    }
}

fn dump(e: &Engine, t: f64) -> String {
    let s = e.state(t);
    s.points
        .iter()
        .enumerate()
        .map(|(k, p)| format!("{k}: r={:?} v={:?} t_ref={}", p.r.as_slice(), p.v.as_slice(), e.tp[k]))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn run(initial: &NBodyConfig, model: &HardSphereModel, t_end: f64, seed: u64) -> Result<Trajectory> {
    run_with(initial, model, t_end, seed, &RunOptions::default())
}

/// Advances `initial` to `t_end` (or `max_events`). Simultaneous sets are
/// resolved in ascending particle-index order, re-checking the approach
/// condition of each member after the previous ones. The dynamics is
/// deterministic; `seed` is recorded for provenance of the initial state.
pub fn run_with(
    initial: &NBodyConfig,
    model: &HardSphereModel,
    t_end: f64,
    seed: u64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    if initial.len() != model.n() {
        return Err(Error::InvalidArgument(format!(
            "state has {} particles, model N = {}",
            initial.len(),
            model.n()
        )));
    }
    if !closure_admissible(initial, model, CONTACT_TOL) {
        return Err(Error::InvalidArgument("initial state is not admissible".into()));
    }
    if t_end.is_infinite() && opts.max_events.is_none() {
        return Err(Error::InvalidArgument("infinite t_end needs max_events".into()));
    }
    let window = tie_window(initial, model);
    let mut eng = Engine::new(initial, *model);
    let mut events = Vec::new();
    let mut audits = Vec::new();
    let mut snapshots = Vec::new();
    let mut next_snap = opts.snapshot_start;
    let mut now = 0.0;
    let limit = opts.max_events.unwrap_or(usize::MAX);
    let mut take_snapshots = |eng: &Engine, upto: f64, inclusive: bool, snaps: &mut Vec<(f64, NBodyConfig)>| {
        if let Some(dt) = opts.snapshot_dt {
            while next_snap < upto || (inclusive && next_snap <= upto) {
                snaps.push((next_snap, eng.state(next_snap)));
                next_snap += dt;
            }
        }
    };
    while events.len() < limit {
        let Some(first) = eng.pop_valid() else { break };
        if first.t > t_end {
            break;
        }
        if first.t < now - window {
            return Err(Error::TimeRegression {
                current: now,
                next: first.t,
                dump: dump(&eng, now),
            });
        }
        let t = first.t.max(now);
        take_snapshots(&eng, t, false, &mut snapshots);
        let mut set = vec![first.kind];
        while let Some(e) = eng.peek_valid() {
            if e.t > first.t + window {
                break;
            }
            eng.heap.pop();
            set.push(e.kind);
        }
        set.sort_by_key(EventKind::order_key);
        set.dedup();
        let mut touched = Vec::new();
        for kind in set {
            if events.len() >= limit {
                break;
            }
            let x_minus = opts.record_states.then(|| eng.state(t));
            let Some((before, after)) = eng.resolve(kind, t)? else { continue };
            for &p in &kind.particles() {
                eng.count[p] += 1;
                if !touched.contains(&p) {
                    touched.push(p);
                }
            }
            let x_plus = opts.record_states.then(|| eng.state(t));
            audits.push(audit(&before, &after));
            events.push(Event {
                t,
                kind,
                before,
                after,
                x_minus,
                x_plus,
            });
        }
        if !eng.locally_admissible(&touched, t) {
            return Err(Error::Validation(format!(
                "inadmissible state after event at t = {t}\n{}",
                dump(&eng, t)
            )));
        }
        now = t;
        touched.sort_unstable();
        for (k, &i) in touched.iter().enumerate() {
            // pairs inside the touched set are predicted once
            let later: Vec<usize> = touched[..k].to_vec();
            eng.predict(i, now, |j| !later.contains(&j));
        }
    }
    let t_final = if events.len() >= limit { now } else { t_end };
    take_snapshots(&eng, t_final, true, &mut snapshots);
    for (t, s) in &snapshots {
        if !ensemble_theta(s, model) {
            return Err(Error::Validation(format!("inadmissible snapshot at t = {t}")));
        }
    }
    Ok(Trajectory {
        events,
        audits,
        snapshots,
        initial: initial.clone(),
        final_state: eng.state(t_final),
        t_final,
        seed,
        model: *model,
    })
}
