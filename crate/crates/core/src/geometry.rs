//! Surface geometry read off a frame field and its Maurer-Cartan form:
//! projective points, conformal factor, Lagrangian angle, Maslov form and
//! the residuals of the structure equations.

use crate::algebra::{inner3, project3, y3, y_component, C64, Mat3};
use crate::dpw::{curvature_field, frame_form, DpwError, ExtendedFrame, FrozenForm, Grid};
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("form is not primitive: dzbar part has g_-1 component {0:.3e}")]
    NonPrimitive(f64),
    #[error("alpha_2 is not closed: curl residual {0:.3e}")]
    NotClosed(f64),
    #[error(transparent)]
    Dpw(#[from] DpwError),
}

/// Third column of the frame, scaled so its first entry above 1e-12 in
/// modulus is real and positive.
pub fn project_cp2(f: &Mat3) -> Vector3<C64> {
    let v: Vector3<C64> = f.column(2).into_owned();
    let n = v.norm();
    let v = if n > 0.0 { v / C64::new(n, 0.0) } else { v };
    match v.iter().find(|c| c.norm() > 1e-12) {
        Some(c) => v * (c.conj() / c.norm()),
        None => v,
    }
}

/// sqrt(1 - |<p, q>|^2) for unit representatives; zero iff same point.
pub fn fs_chordal(p: &Vector3<C64>, q: &Vector3<C64>) -> f64 {
    let c = p.dotc(q).norm() / (p.norm() * q.norm());
    (1.0 - (c * c).min(1.0)).max(0.0).sqrt()
}

#[derive(Debug, Clone)]
pub struct ConformalField {
    /// log of || g_-1 part of the dz component ||, -inf at branch points.
    pub rho: Vec<f64>,
    pub branch_points: Vec<usize>,
    /// Largest g_-1 component of the dzbar part at nodes with centred
    /// stencils.
    pub primitivity: f64,
}

/// e^rho = || P_-1(a_z) ||; rejects forms whose dzbar part has a g_-1
/// component above `primitive_tol`.
pub fn conformal_factor(form: &FrozenForm, primitive_tol: f64) -> Result<ConformalField, GeometryError> {
    let n = form.grid.len();
    let mut rho = Vec::with_capacity(n);
    let mut branch = Vec::new();
    let mut prim: f64 = 0.0;
    for idx in 0..n {
        if !form.one_sided[idx] {
            prim = prim.max(project3(&form.azb(idx), -1).norm());
        }
        let e = project3(&form.az(idx), -1).norm();
        if e > 1e-300 {
            rho.push(e.ln());
        } else {
            rho.push(f64::NEG_INFINITY);
            branch.push(idx);
        }
    }
    if prim > primitive_tol {
        return Err(GeometryError::NonPrimitive(prim));
    }
    Ok(ConformalField {
        rho,
        branch_points: branch,
        primitivity: prim,
    })
}

#[derive(Debug, Clone)]
pub struct AngleField {
    pub grid: Grid,
    pub beta: Vec<f64>,
    /// (d beta/dx, d beta/dy) from alpha_2 = (d beta / 2) Y.
    pub dbeta: Vec<[f64; 2]>,
    /// Largest curl of d beta at interior nodes.
    pub closure_defect: f64,
    /// Largest part of the g_2 projection not on the real line through Y.
    pub alignment_defect: f64,
}

/// Integrates alpha_2 = (d beta / 2) Y by the trapezoid rule along the base
/// row and then along columns, starting from `beta0` at the basepoint.
pub fn lagrangian_angle(form: &FrozenForm, beta0: f64, closure_tol: f64) -> Result<AngleField, GeometryError> {
    let g = form.grid;
    let y = y3();
    let mut dbeta = Vec::with_capacity(g.len());
    let mut align: f64 = 0.0;
    for idx in 0..g.len() {
        let px = project3(&form.ax[idx], 2);
        let py = project3(&form.ay[idx], 2);
        let cx = y_component(&px);
        let cy = y_component(&py);
        align = align
            .max((px - y * C64::new(cx, 0.0)).norm())
            .max((py - y * C64::new(cy, 0.0)).norm());
        dbeta.push([2.0 * cx, 2.0 * cy]);
    }
    let (hx, hy) = (g.hx(), g.hy());
    let mut curl: f64 = 0.0;
    for idx in 0..g.len() {
        if !g.is_interior(idx, 1) {
            continue;
        }
        let (i, j) = g.coords(idx);
        let d = (dbeta[g.idx(i + 1, j)][1] - dbeta[g.idx(i - 1, j)][1]) / (2.0 * hx)
            - (dbeta[g.idx(i, j + 1)][0] - dbeta[g.idx(i, j - 1)][0]) / (2.0 * hy);
        curl = curl.max(d.abs());
    }
    if curl > closure_tol {
        return Err(GeometryError::NotClosed(curl));
    }
    let (bi, bj) = g.base;
    let mut beta = vec![0.0; g.len()];
    beta[g.idx(bi, bj)] = beta0;
    for i in (0..bi).rev() {
        beta[g.idx(i, bj)] = beta[g.idx(i + 1, bj)] - 0.5 * hx * (dbeta[g.idx(i, bj)][0] + dbeta[g.idx(i + 1, bj)][0]);
    }
    for i in bi + 1..g.nx {
        beta[g.idx(i, bj)] = beta[g.idx(i - 1, bj)] + 0.5 * hx * (dbeta[g.idx(i, bj)][0] + dbeta[g.idx(i - 1, bj)][0]);
    }
    for i in 0..g.nx {
        for j in (0..bj).rev() {
            beta[g.idx(i, j)] = beta[g.idx(i, j + 1)] - 0.5 * hy * (dbeta[g.idx(i, j)][1] + dbeta[g.idx(i, j + 1)][1]);
        }
        for j in bj + 1..g.ny {
            beta[g.idx(i, j)] = beta[g.idx(i, j - 1)] + 0.5 * hy * (dbeta[g.idx(i, j)][1] + dbeta[g.idx(i, j - 1)][1]);
        }
    }
    Ok(AngleField {
        grid: g,
        beta,
        dbeta,
        closure_defect: curl,
        alignment_defect: align,
    })
}

#[derive(Debug, Clone)]
pub struct MaslovField {
    /// Theta = d beta / pi as (dx, dy) components.
    pub theta: Vec<[f64; 2]>,
    /// Largest gap at interior nodes between Theta and the central
    /// difference of the integrated beta over pi.
    pub cross_check: f64,
    /// Largest curl of Theta.
    pub closedness: f64,
}

pub fn maslov_form(angle: &AngleField) -> MaslovField {
    let g = angle.grid;
    let pi = std::f64::consts::PI;
    let theta: Vec<[f64; 2]> = angle.dbeta.iter().map(|d| [d[0] / pi, d[1] / pi]).collect();
    let mut cross: f64 = 0.0;
    for idx in 0..g.len() {
        if !g.is_interior(idx, 1) {
            continue;
        }
        let (i, j) = g.coords(idx);
        let fx = (angle.beta[g.idx(i + 1, j)] - angle.beta[g.idx(i - 1, j)]) / (2.0 * g.hx() * pi);
        let fy = (angle.beta[g.idx(i, j + 1)] - angle.beta[g.idx(i, j - 1)]) / (2.0 * g.hy() * pi);
        cross = cross.max((fx - theta[idx][0]).abs()).max((fy - theta[idx][1]).abs());
    }
    MaslovField {
        theta,
        cross_check: cross,
        closedness: angle.closure_defect / pi,
    }
}

/// |d*alpha_2| per node: half the divergence of d beta by central
/// differences. Boundary nodes are `None`.
pub fn stationarity_field(angle: &AngleField) -> Vec<Option<f64>> {
    let g = angle.grid;
    (0..g.len())
        .map(|idx| {
            if !g.is_interior(idx, 1) {
                return None;
            }
            let (i, j) = g.coords(idx);
            let d = (angle.dbeta[g.idx(i + 1, j)][0] - angle.dbeta[g.idx(i - 1, j)][0]) / (2.0 * g.hx())
                + (angle.dbeta[g.idx(i, j + 1)][1] - angle.dbeta[g.idx(i, j - 1)][1]) / (2.0 * g.hy());
            Some(0.5 * d.abs())
        })
        .collect()
}

pub fn stationarity_residual(angle: &AngleField) -> f64 {
    stationarity_field(angle).into_iter().flatten().fold(0.0, f64::max)
}

/// Frobenius norm of the curvature per interior node.
pub fn curvature_norms(form: &FrozenForm) -> Vec<Option<f64>> {
    curvature_field(form).into_iter().map(|m| m.map(|m| m.norm())).collect()
}

/// A residual measured on a grid and on its refinement, at shared nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
}

impl Refinement {
    /// Second order: ratio within `band` of 4, or the fine residual is
    /// already below `floor`.
    pub fn is_second_order(&self, band: f64, floor: f64) -> bool {
        self.fine <= floor || (self.ratio - 4.0).abs() <= band
    }
}

/// Compares per-node values on `coarse` with those on `coarse.refined()`
/// at coinciding nodes where both are defined.
pub fn refinement(coarse: &Grid, cvals: &[Option<f64>], fvals: &[Option<f64>]) -> Refinement {
    let fine = coarse.refined();
    let (mut c, mut f) = (0.0f64, 0.0f64);
    for idx in 0..coarse.len() {
        let (i, j) = coarse.coords(idx);
        if let (Some(a), Some(b)) = (cvals[idx], fvals[fine.idx(2 * i, 2 * j)]) {
            c = c.max(a);
            f = f.max(b);
        }
    }
    Refinement {
        coarse: c,
        fine: f,
        ratio: if f > 0.0 { c / f } else { f64::INFINITY },
    }
}

/// Largest curvature component in g_2, g_0, g_-1 and g_1, in that order.
pub fn flatness_components(form: &FrozenForm) -> [f64; 4] {
    let mut out = [0.0f64; 4];
    for m in curvature_field(form).into_iter().flatten() {
        for (slot, k) in [2, 0, -1, 1].into_iter().enumerate() {
            out[slot] = out[slot].max(project3(&m, k).norm());
        }
    }
    out
}

/// Per-node output record.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    pub i: usize,
    pub j: usize,
    pub z: C64,
    pub point: Vector3<C64>,
    pub rho: f64,
    pub beta: f64,
    /// dz coefficient of the Maslov form.
    pub maslov_z: C64,
}

pub fn surface_samples(frames: &[Mat3], conformal: &ConformalField, angle: &AngleField, maslov: &MaslovField) -> Vec<SurfaceSample> {
    let g = angle.grid;
    (0..g.len())
        .map(|idx| {
            let (i, j) = g.coords(idx);
            let t = maslov.theta[idx];
            SurfaceSample {
                i,
                j,
                z: g.z(i, j),
                point: project_cp2(&frames[idx]),
                rho: conformal.rho[idx],
                beta: angle.beta[idx],
                maslov_z: C64::new(t[0], -t[1]) * 0.5,
            }
        })
        .collect()
}

/// One member of the associated family, with its geometry.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub frames: Vec<Mat3>,
    pub form: FrozenForm,
    pub conformal: ConformalField,
    pub angle: AngleField,
    pub flatness: f64,
    pub stationarity: f64,
}

/// Geometry of the frame field F(., lambda0) for lambda0 on the unit circle.
pub fn associated_family(
    f: &ExtendedFrame,
    lambda0: C64,
    order: usize,
    primitive_tol: f64,
    closure_tol: f64,
) -> Result<FamilyMember, GeometryError> {
    let n = f.n_samples();
    let t = lambda0.arg() / std::f64::consts::TAU * n as f64;
    let frames = if (t - t.round()).abs() < 1e-9 {
        f.frozen((t.round() as i64).rem_euclid(n as i64) as usize)
    } else {
        f.frozen_at(lambda0)
    };
    frozen_geometry(frames, &f.grid, order, primitive_tol, closure_tol)
}

/// Geometry of a single frame field.
pub fn frozen_geometry(
    frames: Vec<Mat3>,
    grid: &Grid,
    order: usize,
    primitive_tol: f64,
    closure_tol: f64,
) -> Result<FamilyMember, GeometryError> {
    let form = frame_form(&frames, grid, order)?;
    let conformal = conformal_factor(&form, primitive_tol)?;
    let angle = lagrangian_angle(&form, 0.0, closure_tol)?;
    Ok(FamilyMember {
        flatness: crate::dpw::flatness_residual(&form),
        stationarity: stationarity_residual(&angle),
        frames,
        form,
        conformal,
        angle,
    })
}

/// Orthonormal 3x4 map from the affine chart (z1/z3, z2/z3) in R^4 to R^3.
pub const MESH_PROJECTION: [[f64; 4]; 3] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
];

/// Mesh vertex of a projective point, and |z3| of its unit representative.
pub fn chart_vertex(p: &Vector3<C64>) -> ([f64; 3], f64) {
    let z3 = p[2];
    let w = z3.norm() / p.norm();
    let a = p[0] / z3;
    let b = p[1] / z3;
    let r4 = [a.re, a.im, b.re, b.im];
    let mut v = [0.0; 3];
    for (row, out) in MESH_PROJECTION.iter().zip(v.iter_mut()) {
        *out = row.iter().zip(&r4).map(|(m, x)| m * x).sum();
    }
    (v, w)
}

/// tr(Y^* X) / tr(Y^* Y) as a complex number.
pub fn y_coefficient(x: &Mat3) -> C64 {
    let y = y3();
    inner3(&y, x) / inner3(&y, &y)
}
