//! Tabulated pdf on a rectilinear position x velocity grid.
//!
//! CSV format: header `x,y,z,vx,vy,vz,density`, one row per node. Rows are
//! written in row-major order with `x` slowest and `vz` fastest; the reader
//! accepts any row order as long as every node of the tensor grid is present
//! exactly once.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::OneBodyPdf;
use crate::rng::SimRng;
use crate::{Error, PhasePoint, Result, Vec3};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Row {
    x: f64,
    y: f64,
    z: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    density: f64,
}

/// Multilinear interpolant of nodal values. Outside the grid box the density is
/// zero. Values are rescaled on construction so the interpolant integrates to 1.
#[derive(Debug, Clone)]
pub struct TabulatedPdf {
    axes: [Vec<f64>; 6],
    values: Vec<f64>,
    strides: [usize; 6],
    edge: f64,
    /// cumulative envelope mass (cell volume times corner max) for sampling
    cell_cdf: Vec<f64>,
    cell_max: Vec<f64>,
    raw_mass: f64,
}

fn strides_for(axes: &[Vec<f64>; 6]) -> [usize; 6] {
    let mut s = [1usize; 6];
    for d in (0..5).rev() {
        s[d] = s[d + 1] * axes[d + 1].len();
    }
    s
}

fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if n == 1 {
        return ((x - axis[0]).abs() <= 0.0).then_some((0, 0.0));
    }
    if x < axis[0] || x > axis[n - 1] {
        return None;
    }
    let i = match axis.partition_point(|&a| a <= x) {
        0 => 0,
        p => (p - 1).min(n - 2),
    };
    Some((i, (x - axis[i]) / (axis[i + 1] - axis[i])))
}

impl TabulatedPdf {
    /// Builds from axes (each strictly increasing, at least 2 nodes) and nodal
    /// values in row-major order (`x` slowest, `vz` fastest).
    pub fn new(axes: [Vec<f64>; 6], values: Vec<f64>, edge: f64) -> Result<Self> {
        for (d, a) in axes.iter().enumerate() {
            if a.len() < 2 || a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "axis {d} needs >= 2 strictly increasing nodes"
                )));
            }
        }
        let count: usize = axes.iter().map(Vec::len).product();
        if values.len() != count {
            return Err(Error::InvalidArgument(format!(
                "expected {count} nodal values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("densities must be finite and >= 0".into()));
        }
        let strides = strides_for(&axes);
        let mut t = Self {
            axes,
            values,
            strides,
            edge,
            cell_cdf: Vec::new(),
            cell_max: Vec::new(),
            raw_mass: 0.0,
        };
        t.build_cells()?;
        let m = t.raw_mass;
        t.values.iter_mut().for_each(|v| *v /= m);
        t.cell_max.iter_mut().for_each(|v| *v /= m);
        Ok(t)
    }

    fn cell_dims(&self) -> [usize; 6] {
        std::array::from_fn(|d| self.axes[d].len() - 1)
    }

    fn build_cells(&mut self) -> Result<()> {
        let dims = self.cell_dims();
        let ncell: usize = dims.iter().product();
        let mut cdf = Vec::with_capacity(ncell);
        let mut maxes = Vec::with_capacity(ncell);
        let (mut acc, mut env) = (0.0, 0.0);
        for c in 0..ncell {
            let idx = unflatten(c, &dims);
            let mut vol = 1.0;
            for d in 0..6 {
                vol *= self.axes[d][idx[d] + 1] - self.axes[d][idx[d]];
            }
            let (mut sum, mut mx) = (0.0, 0.0f64);
            for corner in 0..64usize {
                let mut off = 0;
                for d in 0..6 {
                    off += (idx[d] + ((corner >> d) & 1)) * self.strides[d];
                }
                sum += self.values[off];
                mx = mx.max(self.values[off]);
            }
            // a multilinear cell integrates to volume times the corner mean
            acc += vol * sum / 64.0;
            env += vol * mx;
            cdf.push(env);
            maxes.push(mx);
        }
        if !(acc > 0.0) {
            return Err(Error::ZeroDensity("tabulated pdf has zero mass".into()));
        }
        self.raw_mass = acc;
        self.cell_cdf = cdf;
        self.cell_max = maxes;
        Ok(())
    }

    pub fn axes(&self) -> &[Vec<f64>; 6] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mass of the raw nodal values before normalization.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    fn interp(&self, p: [f64; 6]) -> f64 {
        let mut base = 0usize;
        let mut frac = [0.0; 6];
        let mut idx = [0usize; 6];
        for d in 0..6 {
            match locate(&self.axes[d], p[d]) {
                Some((i, f)) => {
                    idx[d] = i;
                    frac[d] = f;
                }
                None => return 0.0,
            }
            base += idx[d] * self.strides[d];
        }
        let mut acc = 0.0;
        for corner in 0..64usize {
            let mut w = 1.0;
            let mut off = base;
            for d in 0..6 {
                if (corner >> d) & 1 == 1 {
                    w *= frac[d];
                    off += self.strides[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += w * self.values[off];
            }
        }
        acc
    }

    pub fn read_csv(reader: impl Read, edge: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty tabulated pdf".into()));
        }
        let cols = |f: fn(&Row) -> f64| -> Vec<f64> {
            let set: BTreeSet<u64> = rows.iter().map(|r| f(r).to_bits()).collect();
            let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let axes = [
            cols(|r| r.x),
            cols(|r| r.y),
            cols(|r| r.z),
            cols(|r| r.vx),
            cols(|r| r.vy),
            cols(|r| r.vz),
        ];
        let strides = strides_for(&axes);
        let count: usize = axes.iter().map(Vec::len).product();
        if rows.len() != count {
            return Err(Error::InvalidArgument(format!(
                "{} rows do not form a full {count}-node tensor grid",
                rows.len()
            )));
        }
        let mut values = vec![f64::NAN; count];
        for r in &rows {
            let coords = [r.x, r.y, r.z, r.vx, r.vy, r.vz];
            let mut off = 0;
            for d in 0..6 {
                let i = axes[d]
                    .binary_search_by(|a| a.total_cmp(&coords[d]))
                    .map_err(|_| Error::InvalidArgument("coordinate lookup".into()))?;
                off += i * strides[d];
            }
            if !values[off].is_nan() {
                return Err(Error::InvalidArgument(format!("duplicate node {coords:?}")));
            }
            values[off] = r.density;
        }
        Self::new(axes, values, edge)
    }

    pub fn from_csv_path(path: &Path, edge: f64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, edge)
    }

    /// Writes nodes in row-major order (`x` slowest, `vz` fastest).
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        write_table_csv(&self.axes, &self.values, writer)
    }
}

pub(crate) fn write_table_csv(axes: &[Vec<f64>; 6], values: &[f64], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dims: [usize; 6] = std::array::from_fn(|d| axes[d].len());
    for (k, &density) in values.iter().enumerate() {
        let i = unflatten(k, &dims);
        w.serialize(Row {
            x: axes[0][i[0]],
            y: axes[1][i[1]],
            z: axes[2][i[2]],
            vx: axes[3][i[3]],
            vy: axes[4][i[4]],
            vz: axes[5][i[5]],
            density,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn unflatten(mut k: usize, dims: &[usize; 6]) -> [usize; 6] {
    let mut out = [0usize; 6];
    for d in (0..6).rev() {
        out[d] = k % dims[d];
        k /= dims[d];
    }
    out
}

impl OneBodyPdf for TabulatedPdf {
    fn density(&self, x: &PhasePoint, _t: f64) -> f64 {
        self.interp([x.r.x, x.r.y, x.r.z, x.v.x, x.v.y, x.v.z])
    }

    fn position_density(&self, r: &Vec3) -> f64 {
        // a multilinear function integrates exactly with the trapezoid rule on the nodes
        let (vx, vy, vz) = (&self.axes[3], &self.axes[4], &self.axes[5]);
        let tw = |a: &[f64], i: usize| {
            let lo = if i > 0 { a[i] - a[i - 1] } else { 0.0 };
            let hi = if i + 1 < a.len() { a[i + 1] - a[i] } else { 0.0 };
            0.5 * (lo + hi)
        };
        let mut acc = 0.0;
        for (i, &a) in vx.iter().enumerate() {
            for (j, &b) in vy.iter().enumerate() {
                for (k, &c) in vz.iter().enumerate() {
                    let w = tw(vx, i) * tw(vy, j) * tw(vz, k);
                    acc += w * self.interp([r.x, r.y, r.z, a, b, c]);
                }
            }
        }
        acc
    }

    fn sample(&self, rng: &mut SimRng) -> PhasePoint {
        let dims = self.cell_dims();
        let total = *self.cell_cdf.last().unwrap();
        loop {
            let u = rng.random::<f64>() * total;
            let c = self.cell_cdf.partition_point(|&x| x <= u).min(self.cell_cdf.len() - 1);
            let idx = unflatten(c, &dims);
            let p: [f64; 6] = std::array::from_fn(|d| {
                let (a, b) = (self.axes[d][idx[d]], self.axes[d][idx[d] + 1]);
                a + (b - a) * rng.random::<f64>()
            });
            let bound = self.cell_max[c];
            if bound <= 0.0 {
                continue;
            }
            let val = self.interp(p);
            // cells are drawn by envelope mass, so thinning by val / bound is exact
            if rng.random::<f64>() * bound < val {
                return PhasePoint::new(Vec3::new(p[0], p[1], p[2]), Vec3::new(p[3], p[4], p[5]));
            }
        }
    }

    fn family_tag(&self) -> &str {
        "tabulated"
    }

    fn edge(&self) -> f64 {
        self.edge
    }

    fn velocity_scale(&self) -> f64 {
        (3..6)
            .map(|d| {
                let a = &self.axes[d];
                0.5 * (a[a.len() - 1] - a[0])
            })
            .fold(0.0, f64::max)
    }

    fn velocity_box(&self, _r: &Vec3, _v_max: f64) -> (Vec3, Vec3) {
        let lo = Vec3::new(self.axes[3][0], self.axes[4][0], self.axes[5][0]);
        let hi = Vec3::new(
            *self.axes[3].last().unwrap(),
            *self.axes[4].last().unwrap(),
            *self.axes[5].last().unwrap(),
        );
        (lo, hi)
    }

    fn position_box(&self) -> (Vec3, Vec3) {
        let lo = Vec3::new(self.axes[0][0], self.axes[1][0], self.axes[2][0]);
        let hi = Vec3::new(
            *self.axes[0].last().unwrap(),
            *self.axes[1].last().unwrap(),
            *self.axes[2].last().unwrap(),
        );
        (lo, hi)
    }
}
