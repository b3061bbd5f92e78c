//! Holomorphic potentials, the forward construction of extended frames and
//! the inverse direction back to potentials.
//!
//! Forward: integrate dH = H mu per loop sample over a rectangular grid,
//! split each node's loop by Iwasawa and keep the unitary part. Inverse:
//! split each node's frame by Birkhoff, differentiate the negative factor and
//! fit holomorphic polynomials to its coefficients.

use crate::algebra::{inverse3, project3, random_sl3, tilde3, C64, Mat3, I};
use crate::factorization::{birkhoff, loop_iwasawa, FactorizationError};
use crate::loops::{band_mass, fourier_of_samples, root_power, LoopError, LoopSpec, TwistedAlgebraLoop, TwistedGroupLoop};
use crate::stencil::Stencil;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpwError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("potential rejected: {0}")]
    Potential(String),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("edge ending at node ({i}, {j}) needs more than {max} RK4 substeps")]
    Integration { i: usize, j: usize, max: usize },
    #[error("factorization failed at {} node(s), first at {:?}: {source}", nodes.len(), nodes.first())]
    Factorization {
        nodes: Vec<(usize, usize)>,
        source: FactorizationError,
    },
    #[error("Birkhoff factorization left the big cell at {0:?}")]
    BigCellMiss(Vec<(usize, usize)>),
    #[error("grid has fewer than {0} nodes in some direction")]
    Stencil(usize),
    #[error("input frame is not twisted (defect {0:.3e})")]
    NotTwisted(f64),
    #[error("polynomial fit failed: {0}")]
    Fit(String),
}

/// Rectangular grid with a distinguished basepoint node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    pub base: (usize, usize),
}

impl Grid {
    /// Basepoint defaults to the node nearest the centre.
    pub fn new(domain: [f64; 4], nx: usize, ny: usize) -> Result<Self, DpwError> {
        let [x0, y0, x1, y1] = domain;
        if nx < 2 || ny < 2 {
            return Err(DpwError::Grid(format!("need at least 2x2 nodes, got {nx}x{ny}")));
        }
        if !domain.iter().all(|v| v.is_finite()) || !(x1 > x0) || !(y1 > y0) {
            return Err(DpwError::Grid(format!("bad domain {domain:?}")));
        }
        Ok(Grid {
            x0,
            y0,
            x1,
            y1,
            nx,
            ny,
            base: ((nx - 1) / 2, (ny - 1) / 2),
        })
    }

    pub fn with_base(mut self, i: usize, j: usize) -> Result<Self, DpwError> {
        if i >= self.nx || j >= self.ny {
            return Err(DpwError::Grid(format!("basepoint ({i}, {j}) outside grid")));
        }
        self.base = (i, j);
        Ok(self)
    }

    pub fn domain(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn hx(&self) -> f64 {
        (self.x1 - self.x0) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y1 - self.y0) / (self.ny - 1) as f64
    }

    pub fn z(&self, i: usize, j: usize) -> C64 {
        C64::new(self.x0 + i as f64 * self.hx(), self.y0 + j as f64 * self.hy())
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same domain with the spacing halved; the basepoint stays put.
    pub fn refined(&self) -> Grid {
        Grid {
            nx: 2 * self.nx - 1,
            ny: 2 * self.ny - 1,
            base: (2 * self.base.0, 2 * self.base.1),
            ..*self
        }
    }

    /// Interior nodes at least `margin` away from every edge.
    pub fn is_interior(&self, idx: usize, margin: usize) -> bool {
        let (i, j) = self.coords(idx);
        i >= margin && j >= margin && i + margin < self.nx && j + margin < self.ny
    }
}

/// mu = sum_k lambda^k sum_d A_{k,d} z^d dz with k >= -2.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HoloPotential {
    terms: BTreeMap<i32, Vec<Mat3>>,
}

impl HoloPotential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, k: i32, degree: usize, m: Mat3) {
        let row = self.terms.entry(k).or_default();
        if row.len() <= degree {
            row.resize(degree + 1, Mat3::zeros());
        }
        row[degree] = m;
    }

    pub fn coeff(&self, k: i32, degree: usize) -> Mat3 {
        self.terms
            .get(&k)
            .and_then(|r| r.get(degree).copied())
            .unwrap_or_else(Mat3::zeros)
    }

    pub fn modes(&self) -> impl Iterator<Item = (i32, &[Mat3])> {
        self.terms.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn k_min(&self) -> Option<i32> {
        self.terms.keys().next().copied()
    }

    pub fn k_max(&self) -> Option<i32> {
        self.terms.keys().next_back().copied()
    }

    pub fn max_degree(&self) -> usize {
        self.terms.values().map(|v| v.len().saturating_sub(1)).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().flatten().all(|m| m.norm() == 0.0)
    }

    fn poly_at(row: &[Mat3], z: C64) -> Mat3 {
        row.iter().rev().fold(Mat3::zeros(), |acc, c| acc * z + c)
    }

    /// Coefficient table in lambda at a fixed z.
    pub fn at(&self, z: C64) -> TwistedAlgebraLoop {
        match (self.k_min(), self.k_max()) {
            (Some(lo), Some(hi)) => {
                let mut t = TwistedAlgebraLoop::zero(lo, hi);
                for (k, row) in self.modes() {
                    t.set(k, Self::poly_at(row, z));
                }
                t
            }
            _ => TwistedAlgebraLoop::zero(0, 0),
        }
    }

    pub fn eval(&self, z: C64, lambda: C64) -> Mat3 {
        self.modes()
            .fold(Mat3::zeros(), |acc, (k, row)| acc + Self::poly_at(row, z) * lambda.powi(k))
    }

    pub fn samples_at(&self, z: C64, n: usize) -> Vec<Mat3> {
        let at: Vec<(i32, Mat3)> = self.modes().map(|(k, row)| (k, Self::poly_at(row, z))).collect();
        (0..n)
            .map(|j| {
                at.iter()
                    .fold(Mat3::zeros(), |acc, (k, c)| acc + c * root_power(j, *k, n))
            })
            .collect()
    }

    /// Random twisted potential on modes -2..=k_max with polynomial degree
    /// `degree`, entries uniform in [-scale, scale] before projection.
    pub fn random<R: Rng>(rng: &mut R, k_max: i32, degree: usize, scale: f64) -> Self {
        let mut p = HoloPotential::new();
        for k in -2..=k_max {
            for d in 0..=degree {
                p.set(k, d, project3(&random_sl3(rng, scale), k));
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialReport {
    pub lowest_mode: Option<i32>,
    /// Largest distance of a coefficient from g_{k mod 4}, with its (k, degree).
    pub twist_defect: f64,
    pub worst: Option<(i32, usize)>,
    pub trace_defect: f64,
    /// Distance of the lambda^-2 coefficients from the Y line's complex span.
    pub top_g2_defect: f64,
}

impl PotentialReport {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.lowest_mode.is_none_or(|k| k >= -2)
            && self.twist_defect <= tol
            && self.trace_defect <= tol
            && self.top_g2_defect <= tol
    }
}

pub fn validate_potential(mu: &HoloPotential) -> PotentialReport {
    let mut twist: f64 = 0.0;
    let mut worst = None;
    let mut trace: f64 = 0.0;
    let mut top: f64 = 0.0;
    let y = crate::algebra::y3();
    for (k, row) in mu.modes() {
        for (d, c) in row.iter().enumerate() {
            let t = (c - project3(c, k)).norm();
            if t > twist {
                twist = t;
                worst = Some((k, d));
            }
            trace = trace.max(c.trace().norm());
            if k == -2 {
                let coef = crate::algebra::inner3(&y, c) / crate::algebra::inner3(&y, &y);
                top = top.max((c - y * coef).norm());
            }
        }
    }
    PotentialReport {
        lowest_mode: mu.k_min(),
        twist_defect: twist,
        worst,
        trace_defect: trace,
        top_g2_defect: top,
    }
}

/// Step control for the per-edge RK4 integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationBudget {
    /// Accept an edge when halving the step changes the result by less than this.
    pub tol: f64,
    pub min_substeps: usize,
    pub max_substeps: usize,
}

impl Default for IntegrationBudget {
    fn default() -> Self {
        IntegrationBudget {
            tol: 1e-12,
            min_substeps: 4,
            max_substeps: 4096,
        }
    }
}

/// Per-node loops H(z) on a grid.
#[derive(Debug, Clone)]
pub struct LoopField {
    pub grid: Grid,
    pub loops: Vec<TwistedGroupLoop>,
    /// Largest disagreement at the grid corners between row-first and
    /// column-first integration paths.
    pub path_residual: f64,
    pub max_substeps: usize,
}

fn rk4_edge(mu: &HoloPotential, start: &[Mat3], za: C64, zb: C64, m: usize) -> Vec<Mat3> {
    let n = start.len();
    let dz = zb - za;
    let dt = 1.0 / m as f64;
    let mut h = start.to_vec();
    let mut xi0 = mu.samples_at(za, n);
    for s in 0..m {
        let t = s as f64 * dt;
        let zm = za + dz * (t + 0.5 * dt);
        let ze = za + dz * (t + dt);
        let xim = mu.samples_at(zm, n);
        let xie = mu.samples_at(ze, n);
        for j in 0..n {
            let a0 = xi0[j] * dz;
            let am = xim[j] * dz;
            let ae = xie[j] * dz;
            let hj = h[j];
            let k1 = hj * a0;
            let k2 = (hj + k1 * C64::new(0.5 * dt, 0.0)) * am;
            let k3 = (hj + k2 * C64::new(0.5 * dt, 0.0)) * am;
            let k4 = (hj + k3 * C64::new(dt, 0.0)) * ae;
            h[j] = hj + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        }
        xi0 = xie;
    }
    h
}

fn sup_diff(a: &[Mat3], b: &[Mat3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// RK4 with step doubling until two successive resolutions agree to the budget.
fn integrate_edge(
    mu: &HoloPotential,
    start: &[Mat3],
    za: C64,
    zb: C64,
    budget: &IntegrationBudget,
) -> Option<(Vec<Mat3>, usize)> {
    let mut m = budget.min_substeps.max(1);
    let mut coarse = rk4_edge(mu, start, za, zb, m);
    while 2 * m <= budget.max_substeps {
        let fine = rk4_edge(mu, start, za, zb, 2 * m);
        let scale = fine.iter().map(|x| x.norm()).fold(1.0, f64::max);
        if sup_diff(&coarse, &fine) <= budget.tol * scale {
            return Some((fine, 2 * m));
        }
        coarse = fine;
        m *= 2;
    }
    None
}

/// Integrates dH = H mu from `h0` at the basepoint: first along the base
/// row, then up and down every column.
pub fn integrate_potential(
    mu: &HoloPotential,
    h0: &TwistedGroupLoop,
    grid: &Grid,
    budget: &IntegrationBudget,
) -> Result<LoopField, DpwError> {
    let rep = validate_potential(mu);
    if !rep.is_valid(1e-10) {
        return Err(DpwError::Potential(format!("{rep:?}")));
    }
    let (bi, bj) = grid.base;
    let mut row: Vec<Option<Vec<Mat3>>> = vec![None; grid.nx];
    row[bi] = Some(h0.samples().to_vec());
    let mut used = 0;
    let order: Vec<(usize, usize)> = (0..bi).rev().map(|i| (i + 1, i)).chain((bi + 1..grid.nx).map(|i| (i - 1, i))).collect();
    for (from, to) in order {
        let start = row[from].clone().expect("filled in order");
        let (h, m) = integrate_edge(mu, &start, grid.z(from, bj), grid.z(to, bj), budget).ok_or(
            DpwError::Integration {
                i: to,
                j: bj,
                max: budget.max_substeps,
            },
        )?;
        used = used.max(m);
        row[to] = Some(h);
    }
    let row: Vec<Vec<Mat3>> = row.into_iter().map(|r| r.expect("row filled")).collect();

    let columns: Vec<Result<(Vec<Vec<Mat3>>, usize), DpwError>> = (0..grid.nx)
        .into_par_iter()
        .map(|i| {
            let mut col: Vec<Option<Vec<Mat3>>> = vec![None; grid.ny];
            col[bj] = Some(row[i].clone());
            let mut used = 0;
            let order = (0..bj).rev().map(|j| (j + 1, j)).chain((bj + 1..grid.ny).map(|j| (j - 1, j)));
            for (from, to) in order {
                let start = col[from].clone().expect("filled in order");
                let (h, m) = integrate_edge(mu, &start, grid.z(i, from), grid.z(i, to), budget)
                    .ok_or(DpwError::Integration {
                        i,
                        j: to,
                        max: budget.max_substeps,
                    })?;
                used = used.max(m);
                col[to] = Some(h);
            }
            Ok((col.into_iter().map(|c| c.expect("column filled")).collect(), used))
        })
        .collect();

    let mut cells: Vec<Vec<Mat3>> = vec![Vec::new(); grid.len()];
    for (i, c) in columns.into_iter().enumerate() {
        let (col, m) = c?;
        used = used.max(m);
        for (j, h) in col.into_iter().enumerate() {
            cells[grid.idx(i, j)] = h;
        }
    }

    // column-first path to each corner
    let mut path_residual: f64 = 0.0;
    for (ci, cj) in [(0, 0), (grid.nx - 1, 0), (0, grid.ny - 1), (grid.nx - 1, grid.ny - 1)] {
        let mut h = h0.samples().to_vec();
        let mut j = bj;
        while j != cj {
            let nj = if cj > j { j + 1 } else { j - 1 };
            h = integrate_edge(mu, &h, grid.z(bi, j), grid.z(bi, nj), budget)
                .ok_or(DpwError::Integration { i: bi, j: nj, max: budget.max_substeps })?
                .0;
            j = nj;
        }
        let mut i = bi;
        while i != ci {
            let ni = if ci > i { i + 1 } else { i - 1 };
            h = integrate_edge(mu, &h, grid.z(i, cj), grid.z(ni, cj), budget)
                .ok_or(DpwError::Integration { i: ni, j: cj, max: budget.max_substeps })?
                .0;
            i = ni;
        }
        path_residual = path_residual.max(sup_diff(&h, &cells[grid.idx(ci, cj)]));
    }

    let loops = cells
        .into_iter()
        .map(TwistedGroupLoop::from_samples)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LoopField {
        grid: *grid,
        loops,
        path_residual,
        max_substeps: used,
    })
}

#[derive(Debug, Clone, Default)]
pub struct FrameDiagnostics {
    pub max_unitarity_defect: f64,
    pub max_twist_defect: f64,
    pub max_residual: f64,
    pub max_negative_mode_mass: f64,
    pub under_resolved: Vec<(usize, usize)>,
}

/// Unitary extended frame F(z, lambda) on a grid.
#[derive(Debug, Clone)]
pub struct ExtendedFrame {
    pub grid: Grid,
    pub frames: Vec<TwistedGroupLoop>,
    pub diagnostics: FrameDiagnostics,
}

impl ExtendedFrame {
    pub fn from_frames(grid: Grid, frames: Vec<TwistedGroupLoop>) -> Result<Self, DpwError> {
        if frames.len() != grid.len() {
            return Err(DpwError::Grid(format!(
                "{} frames for {} nodes",
                frames.len(),
                grid.len()
            )));
        }
        let n = frames[0].n();
        if let Some(f) = frames.iter().find(|f| f.n() != n) {
            return Err(LoopError::Mismatch(n, f.n()).into());
        }
        let diagnostics = FrameDiagnostics {
            max_unitarity_defect: frames.iter().map(|f| f.unitarity_defect()).fold(0.0, f64::max),
            max_twist_defect: frames.iter().map(|f| f.twist_defect()).fold(0.0, f64::max),
            ..Default::default()
        };
        Ok(ExtendedFrame {
            grid,
            frames,
            diagnostics,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.frames[0].n()
    }

    /// The frame field at loop sample j.
    pub fn frozen(&self, j: usize) -> Vec<Mat3> {
        self.frames.iter().map(|f| *f.sample(j)).collect()
    }

    /// The frame field at an arbitrary point of the circle, by trigonometric
    /// interpolation in lambda.
    pub fn frozen_at(&self, lambda: C64) -> Vec<Mat3> {
        self.frames.par_iter().map(|f| f.interpolate(lambda)).collect()
    }
}

/// Iwasawa at every node, then F(p0) = I by a constant left multiplication.
pub fn build_extended_frame(h: &LoopField, spec: &LoopSpec) -> Result<ExtendedFrame, DpwError> {
    let grid = h.grid;
    let results: Vec<Result<_, FactorizationError>> = h.loops.par_iter().map(|phi| loop_iwasawa(phi, spec)).collect();
    let mut failed = Vec::new();
    let mut first = None;
    let mut frames = Vec::with_capacity(grid.len());
    let mut diag = FrameDiagnostics::default();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(res) => {
                diag.max_unitarity_defect = diag.max_unitarity_defect.max(res.unitarity_defect);
                diag.max_twist_defect = diag.max_twist_defect.max(res.twist_defect);
                diag.max_residual = diag.max_residual.max(res.residual);
                diag.max_negative_mode_mass = diag.max_negative_mode_mass.max(res.negative_mode_mass);
                if res.under_resolved {
                    diag.under_resolved.push(grid.coords(idx));
                }
                frames.push(res.unitary);
            }
            Err(e) => {
                failed.push(grid.coords(idx));
                first.get_or_insert(e);
            }
        }
    }
    if let Some(source) = first {
        return Err(DpwError::Factorization { nodes: failed, source });
    }
    let base = frames[grid.idx(grid.base.0, grid.base.1)].clone();
    let frames = frames
        .into_par_iter()
        .map(|f| {
            let s = f
                .samples()
                .iter()
                .zip(base.samples())
                .map(|(a, b)| b.adjoint() * a)
                .collect();
            TwistedGroupLoop::from_samples(s)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExtendedFrame {
        grid,
        frames,
        diagnostics: diag,
    })
}

/// Maurer-Cartan form F^-1 dF of one frame field, by finite differences.
#[derive(Debug, Clone)]
pub struct FrozenForm {
    pub grid: Grid,
    pub ax: Vec<Mat3>,
    pub ay: Vec<Mat3>,
    /// Nodes where some derivative used a one-sided stencil.
    pub one_sided: Vec<bool>,
}

impl FrozenForm {
    /// The dz part (a_x - i a_y)/2.
    pub fn az(&self, idx: usize) -> Mat3 {
        (self.ax[idx] - self.ay[idx] * I) * C64::new(0.5, 0.0)
    }

    /// The dzbar part (a_x + i a_y)/2.
    pub fn azb(&self, idx: usize) -> Mat3 {
        (self.ax[idx] + self.ay[idx] * I) * C64::new(0.5, 0.0)
    }
}

/// Derivatives of a matrix field along x and y with an order-`order` stencil.
pub(crate) fn grid_derivatives(field: &[Mat3], grid: &Grid, order: usize) -> Result<(Vec<Mat3>, Vec<Mat3>, Vec<bool>), DpwError> {
    let sx = Stencil::new(order, grid.nx).ok_or(DpwError::Stencil(order + 1))?;
    let sy = Stencil::new(order, grid.ny).ok_or(DpwError::Stencil(order + 1))?;
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut dx = Vec::with_capacity(grid.len());
    let mut dy = Vec::with_capacity(grid.len());
    let mut one_sided = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (si, wi, ci) = sx.at(i);
            let (sj, wj, cj) = sy.at(j);
            let mut a = Mat3::zeros();
            for (q, w) in wi.iter().enumerate() {
                a += field[grid.idx(si + q, j)] * C64::new(*w / hx, 0.0);
            }
            let mut b = Mat3::zeros();
            for (q, w) in wj.iter().enumerate() {
                b += field[grid.idx(i, sj + q)] * C64::new(*w / hy, 0.0);
            }
            dx.push(a);
            dy.push(b);
            one_sided.push(!(ci && cj));
        }
    }
    Ok((dx, dy, one_sided))
}

pub fn frame_form(frames: &[Mat3], grid: &Grid, order: usize) -> Result<FrozenForm, DpwError> {
    if frames.len() != grid.len() {
        return Err(DpwError::Grid(format!("{} frames for {} nodes", frames.len(), grid.len())));
    }
    let (dx, dy, one_sided) = grid_derivatives(frames, grid, order)?;
    let mut ax = Vec::with_capacity(grid.len());
    let mut ay = Vec::with_capacity(grid.len());
    for (idx, f) in frames.iter().enumerate() {
        let inv = inverse3(f);
        ax.push(inv * dx[idx]);
        ay.push(inv * dy[idx]);
    }
    Ok(FrozenForm {
        grid: *grid,
        ax,
        ay,
        one_sided,
    })
}

/// The extended Maurer-Cartan form, one frozen form per loop sample.
#[derive(Debug, Clone)]
pub struct MCForm {
    pub grid: Grid,
    pub samples: Vec<FrozenForm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportReport {
    /// Largest per-node coefficient mass of a_z outside modes {-2, -1, 0}.
    pub out_of_band_z: f64,
    /// Largest per-node coefficient mass of a_zbar outside modes {0, 1, 2}.
    pub out_of_band_zbar: f64,
    /// Largest lambda^-1 coefficient of a_zbar.
    pub alpha_pp_minus1: f64,
    /// Largest || a_zbar + a_z^* || over nodes and samples.
    pub reality_defect: f64,
}

impl MCForm {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn frozen(&self, j: usize) -> &FrozenForm {
        &self.samples[j]
    }

    pub fn az_loop(&self, idx: usize) -> Vec<Mat3> {
        self.samples.iter().map(|s| s.az(idx)).collect()
    }

    pub fn azb_loop(&self, idx: usize) -> Vec<Mat3> {
        self.samples.iter().map(|s| s.azb(idx)).collect()
    }

    pub fn az_coeffs(&self, idx: usize, k_min: i32, k_max: i32) -> Result<TwistedAlgebraLoop, LoopError> {
        let s = self.az_loop(idx);
        let c = (k_min..=k_max).map(|k| fourier_of_samples(&s, k)).collect::<Result<_, _>>()?;
        Ok(TwistedAlgebraLoop::new(k_min, c))
    }

    pub fn support(&self) -> SupportReport {
        let per: Vec<(f64, f64, f64, f64)> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let az = self.az_loop(idx);
                let azb = self.azb_loop(idx);
                let oz = band_mass(&az, |k| (-2..=0).contains(&k));
                let ozb = band_mass(&azb, |k| (0..=2).contains(&k));
                let pm = fourier_of_samples(&azb, -1).expect("in band").norm();
                let re = az
                    .iter()
                    .zip(&azb)
                    .map(|(a, b)| (b + a.adjoint()).norm())
                    .fold(0.0, f64::max);
                (oz, ozb, pm, re)
            })
            .collect();
        let mut r = SupportReport {
            out_of_band_z: 0.0,
            out_of_band_zbar: 0.0,
            alpha_pp_minus1: 0.0,
            reality_defect: 0.0,
        };
        for (a, b, c, d) in per {
            r.out_of_band_z = r.out_of_band_z.max(a);
            r.out_of_band_zbar = r.out_of_band_zbar.max(b);
            r.alpha_pp_minus1 = r.alpha_pp_minus1.max(c);
            r.reality_defect = r.reality_defect.max(d);
        }
        r
    }
}

pub fn extract_maurer_cartan(f: &ExtendedFrame, order: usize) -> Result<MCForm, DpwError> {
    let samples = (0..f.n_samples())
        .into_par_iter()
        .map(|j| frame_form(&f.frozen(j), &f.grid, order))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MCForm { grid: f.grid, samples })
}

/// Curvature d alpha + [alpha ^ alpha]/2 at interior nodes, with second-order
/// central differences of the form. Boundary nodes are `None`.
pub fn curvature_field(form: &FrozenForm) -> Vec<Option<Mat3>> {
    let g = form.grid;
    let (hx, hy) = (g.hx(), g.hy());
    (0..g.len())
        .map(|idx| {
            if !g.is_interior(idx, 1) {
                return None;
            }
            let (i, j) = g.coords(idx);
            let day_dx = (form.ay[g.idx(i + 1, j)] - form.ay[g.idx(i - 1, j)]) * C64::new(0.5 / hx, 0.0);
            let dax_dy = (form.ax[g.idx(i, j + 1)] - form.ax[g.idx(i, j - 1)]) * C64::new(0.5 / hy, 0.0);
            let (ax, ay) = (form.ax[idx], form.ay[idx]);
            Some(day_dx - dax_dy + ax * ay - ay * ax)
        })
        .collect()
}

pub fn flatness_residual(form: &FrozenForm) -> f64 {
    curvature_field(form)
        .into_iter()
        .flatten()
        .map(|m| m.norm())
        .fold(0.0, f64::max)
}

/// Output of the forward construction.
#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub field: LoopField,
    pub frame: ExtendedFrame,
}

/// Potential to extended frame with H = I at the basepoint.
pub fn run_forward(
    mu: &HoloPotential,
    grid: &Grid,
    spec: &LoopSpec,
    budget: &IntegrationBudget,
) -> Result<ForwardRun, DpwError> {
    let h0 = TwistedGroupLoop::identity(spec.n_samples)?;
    let field = integrate_potential(mu, &h0, grid, budget)?;
    let frame = build_extended_frame(&field, spec)?;
    Ok(ForwardRun { field, frame })
}

/// Per-node Birkhoff splitting of a frame and the potential of its negative
/// factor.
#[derive(Debug, Clone)]
pub struct MeromorphicResult {
    pub grid: Grid,
    /// H = F_minus per node, `None` off the big cell.
    pub minus: Vec<Option<TwistedGroupLoop>>,
    pub plus: Vec<Option<TwistedGroupLoop>>,
    /// (lambda^-2, lambda^-1) coefficients of H^-1 dH/dz per node, `None`
    /// when a stencil neighbour is off the big cell.
    pub mu: Vec<Option<(Mat3, Mat3)>>,
    pub miss_set: Vec<(usize, usize)>,
    /// Largest per-node coefficient mass of H^-1 dH/dz outside {-2, -1}.
    pub out_of_band: f64,
    /// Largest || H^-1 dH/dzbar ||.
    pub holomorphy_residual: f64,
    pub max_condition: f64,
}

pub fn meromorphic_extract(f: &ExtendedFrame, spec: &LoopSpec, order: usize) -> Result<MeromorphicResult, DpwError> {
    let grid = f.grid;
    let results: Vec<Result<_, FactorizationError>> = f.frames.par_iter().map(|phi| birkhoff(phi, spec)).collect();
    let mut minus = Vec::with_capacity(grid.len());
    let mut plus = Vec::with_capacity(grid.len());
    let mut miss = Vec::new();
    let mut max_condition: f64 = 0.0;
    for (idx, r) in results.into_iter().enumerate() {
        let r = r.map_err(|e| DpwError::Factorization {
            nodes: vec![grid.coords(idx)],
            source: e,
        })?;
        max_condition = max_condition.max(r.condition);
        match r.factors {
            Some((m, p)) => {
                minus.push(Some(m));
                plus.push(Some(p));
            }
            None => {
                miss.push(grid.coords(idx));
                minus.push(None);
                plus.push(None);
            }
        }
    }

    let n = f.n_samples();
    let sx = Stencil::new(order, grid.nx).ok_or(DpwError::Stencil(order + 1))?;
    let sy = Stencil::new(order, grid.ny).ok_or(DpwError::Stencil(order + 1))?;
    let (hx, hy) = (grid.hx(), grid.hy());
    let per: Vec<(Option<(Mat3, Mat3)>, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            let (si, wi, _) = sx.at(i);
            let (sj, wj, _) = sy.at(j);
            let xs: Option<Vec<&TwistedGroupLoop>> = (0..wi.len()).map(|q| minus[grid.idx(si + q, j)].as_ref()).collect();
            let ys: Option<Vec<&TwistedGroupLoop>> = (0..wj.len()).map(|q| minus[grid.idx(i, sj + q)].as_ref()).collect();
            let (Some(xs), Some(ys), Some(h)) = (xs, ys, minus[idx].as_ref()) else {
                return (None, 0.0, 0.0);
            };
            let mut dz = Vec::with_capacity(n);
            let mut hol: f64 = 0.0;
            for s in 0..n {
                let mut dx = Mat3::zeros();
                for (q, w) in wi.iter().enumerate() {
                    dx += xs[q].sample(s) * C64::new(*w / hx, 0.0);
                }
                let mut dy = Mat3::zeros();
                for (q, w) in wj.iter().enumerate() {
                    dy += ys[q].sample(s) * C64::new(*w / hy, 0.0);
                }
                let inv = inverse3(h.sample(s));
                dz.push(inv * (dx - dy * I) * C64::new(0.5, 0.0));
                hol = hol.max((inv * (dx + dy * I) * C64::new(0.5, 0.0)).norm());
            }
            let oob = band_mass(&dz, |k| k == -2 || k == -1);
            let c2 = fourier_of_samples(&dz, -2).expect("in band");
            let c1 = fourier_of_samples(&dz, -1).expect("in band");
            (Some((c2, c1)), oob, hol)
        })
        .collect();
    let mut mu = Vec::with_capacity(grid.len());
    let mut out_of_band: f64 = 0.0;
    let mut holo: f64 = 0.0;
    for (m, o, h) in per {
        mu.push(m);
        out_of_band = out_of_band.max(o);
        holo = holo.max(h);
    }
    Ok(MeromorphicResult {
        grid,
        minus,
        plus,
        mu,
        miss_set: miss,
        out_of_band,
        holomorphy_residual: holo,
        max_condition,
    })
}

/// Holomorphic data recovered from an extended frame.
#[derive(Debug, Clone)]
pub struct LiftResult {
    pub potential: HoloPotential,
    /// H = F B per node.
    pub h: Vec<TwistedGroupLoop>,
    pub b: Vec<TwistedGroupLoop>,
    /// Largest || fitted mu - finite-difference mu || over nodes.
    pub fit_residual: f64,
    pub holomorphy_residual: f64,
    pub out_of_band: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares fit of complex values at points zs by a polynomial of the
/// given degree, returned in powers of z.
fn fit_polynomial(zs: &[C64], vals: &[C64], degree: usize) -> Result<Vec<C64>, DpwError> {
    let zc = zs.iter().sum::<C64>() / zs.len() as f64;
    let r = zs.iter().map(|z| (z - zc).norm()).fold(0.0, f64::max).max(1e-300);
    let a = DMatrix::from_fn(zs.len(), degree + 1, |row, col| ((zs[row] - zc) / r).powu(col as u32));
    let b = DMatrix::from_fn(vals.len(), 1, |row, _| vals[row]);
    if zs.len() <= degree {
        return Err(DpwError::Fit(format!("{} points for degree {degree}", zs.len())));
    }
    let qr = a.qr();
    let qtb = qr.q().adjoint() * b;
    let sol = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| DpwError::Fit("rank-deficient Vandermonde matrix".into()))?;
    // sum_d a_d ((z - zc)/r)^d expanded in powers of z
    let mut out = vec![C64::new(0.0, 0.0); degree + 1];
    for d in 0..=degree {
        let ad = sol[(d, 0)] / r.powi(d as i32);
        for (m, o) in out.iter_mut().enumerate().take(d + 1) {
            *o += ad * binomial(d, m) * (-zc).powu((d - m) as u32);
        }
    }
    Ok(out)
}

/// Recovers a holomorphic potential with support {-2, -1} from an extended
/// frame: Birkhoff at every node, H^-1 dH/dz by finite differences, then a
/// polynomial fit of degree `degree` per coefficient entry.
pub fn lift_to_potential(f: &ExtendedFrame, spec: &LoopSpec, order: usize, degree: usize) -> Result<LiftResult, DpwError> {
    let twist = f.frames.iter().map(|l| l.twist_defect()).fold(0.0, f64::max);
    if twist > 1e-8 {
        return Err(DpwError::NotTwisted(twist));
    }
    let mer = meromorphic_extract(f, spec, order)?;
    if !mer.miss_set.is_empty() {
        return Err(DpwError::BigCellMiss(mer.miss_set));
    }
    let grid = f.grid;
    let zs: Vec<C64> = (0..grid.len()).map(|idx| {
        let (i, j) = grid.coords(idx);
        grid.z(i, j)
    }).collect();
    let mus: Vec<(Mat3, Mat3)> = mer.mu.iter().map(|m| m.expect("no misses")).collect();
    let mut potential = HoloPotential::new();
    for (slot, k) in [(0usize, -2i32), (1, -1)] {
        let mut coeffs = vec![Mat3::zeros(); degree + 1];
        for r in 0..3 {
            for c in 0..3 {
                let vals: Vec<C64> = mus.iter().map(|m| if slot == 0 { m.0[(r, c)] } else { m.1[(r, c)] }).collect();
                let p = fit_polynomial(&zs, &vals, degree)?;
                for (d, v) in p.into_iter().enumerate() {
                    coeffs[d][(r, c)] = v;
                }
            }
        }
        for (d, m) in coeffs.into_iter().enumerate() {
            let m = if k == -2 {
                let y = crate::algebra::y3();
                y * (crate::algebra::inner3(&y, &m) / crate::algebra::inner3(&y, &y))
            } else {
                project3(&m, k)
            };
            potential.set(k, d, m);
        }
    }
    let fit_residual = zs
        .iter()
        .zip(&mus)
        .map(|(z, (m2, m1))| {
            let t = potential.at(*z);
            (t.coeff(-2) - m2).norm().max((t.coeff(-1) - m1).norm())
        })
        .fold(0.0, f64::max);
    let h: Vec<TwistedGroupLoop> = mer.minus.into_iter().map(|m| m.expect("no misses")).collect();
    let b: Vec<TwistedGroupLoop> = mer
        .plus
        .into_iter()
        .map(|p| crate::loops::loop_inverse(&p.expect("no misses")))
        .collect();
    Ok(LiftResult {
        potential,
        h,
        b,
        fit_residual,
        holomorphy_residual: mer.holomorphy_residual,
        out_of_band: mer.out_of_band,
    })
}

/// Largest distance of a frame field from SU(3) (unitarity and determinant).
pub fn su3_defect(frames: &[Mat3]) -> f64 {
    frames
        .iter()
        .map(|f| {
            let u = (f.adjoint() * f - Mat3::identity()).norm();
            u.max((f.determinant() - C64::new(1.0, 0.0)).norm())
        })
        .fold(0.0, f64::max)
}

/// Applies tilde to every sample; for an algebra loop on the circle this is
/// the reality involution.
pub fn tilde_samples(s: &[Mat3]) -> Vec<Mat3> {
    s.iter().map(tilde3).collect()
}
