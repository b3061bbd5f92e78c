//! Lagrangian cones in C^3: Legendrian lifts of surfaces in CP2 by frame
//! phase twist and by flat-section transport, cone sampling and the g2
//! reindexing map.

use crate::algebra::{C64, Mat3};
use crate::dpw::{frame_form, grid_derivatives, DpwError, Grid};
use crate::geometry::AngleField;
use crate::stencil::{fornberg, Stencil};
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConeError {
    #[error("point field is not Lagrangian: holonomy per unit area {0:.3e}")]
    NotLagrangian(f64),
    #[error("angle field is not closed (curl {0:.3e}); the lift needs a covering")]
    NeedsCovering(f64),
    #[error("field has {got} entries, grid has {want} nodes")]
    Shape { got: usize, want: usize },
    #[error("initial lift must be a unit vector over the basepoint")]
    BadStart,
    #[error("g2_reindex expects diag(a, b, 0), off-shape part {0:.3e}")]
    NotDiagonal(f64),
    #[error(transparent)]
    Dpw(#[from] DpwError),
}

/// A point on the link with the radius interval swept by the cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSample {
    pub link_point: Vector3<C64>,
    pub radius_range: (f64, f64),
    pub beta_check: f64,
}

fn check_len(n: usize, grid: &Grid) -> Result<(), ConeError> {
    if n != grid.len() {
        return Err(ConeError::Shape { got: n, want: grid.len() });
    }
    Ok(())
}

/// Largest |arg of the Bargmann invariant| per unit plaquette area. Vanishes
/// to O(h^2) on Lagrangian surfaces and tends to twice the symplectic area
/// density otherwise.
pub fn holonomy_defect(points: &[Vector3<C64>], grid: &Grid) -> f64 {
    let area = grid.hx() * grid.hy();
    let mut out: f64 = 0.0;
    for j in 0..grid.ny.saturating_sub(1) {
        for i in 0..grid.nx.saturating_sub(1) {
            let p = [
                &points[grid.idx(i, j)],
                &points[grid.idx(i + 1, j)],
                &points[grid.idx(i + 1, j + 1)],
                &points[grid.idx(i, j + 1)],
            ];
            let mut b = C64::new(1.0, 0.0);
            for k in 0..4 {
                b *= p[(k + 1) % 4].dotc(p[k]);
            }
            out = out.max(b.arg().abs() / area);
        }
    }
    out
}

/// Weights integrating the Lagrange interpolant through `xs` over [a, b].
fn interval_weights(xs: &[f64], a: f64, b: f64) -> Vec<f64> {
    // 4-point Gauss-Legendre, exact for the degree <= 7 interpolants used here
    const G: [(f64, f64); 4] = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut w = vec![0.0; xs.len()];
    for (t, gw) in G {
        for (wi, li) in w.iter_mut().zip(fornberg(m + r * t, xs, 0)) {
            *wi += gw * r * li;
        }
    }
    w
}

/// Parallel transport of `s0` from node `start` along a line of points.
fn transport_line(p: &[Vector3<C64>], start: usize, s0: Vector3<C64>, h: f64) -> Vec<Vector3<C64>> {
    let n = p.len();
    let mut q = p.to_vec();
    q[start] = s0;
    let align = |prev: &Vector3<C64>, v: &Vector3<C64>| {
        let c = v.dotc(prev);
        if c.norm() > 0.0 {
            v * (c / c.norm())
        } else {
            *v
        }
    };
    for k in start + 1..n {
        q[k] = align(&q[k - 1], &q[k]);
    }
    for k in (0..start).rev() {
        q[k] = align(&q[k + 1], &q[k]);
    }
    if n < 3 {
        return q;
    }
    // residual connection of the aligned sequence, integrated to high order
    let order = if n > 6 { 6 } else { (n - 1) & !1 };
    let st = Stencil::new(order, n).expect("len > order");
    let dtheta: Vec<f64> = (0..n)
        .map(|k| {
            let (s, w, _) = st.at(k);
            let dq: Vector3<C64> = w.iter().enumerate().map(|(m, wm)| q[s + m] * C64::new(*wm / h, 0.0)).sum();
            -q[k].dotc(&dq).im
        })
        .collect();
    let width = order.min(n - 1);
    let step = |k: usize| -> f64 {
        // integral of theta' over [k, k + 1] in node units
        let lo = (k + 1).saturating_sub(width / 2 + 1).min(n - 1 - width);
        let xs: Vec<f64> = (lo..=lo + width).map(|m| m as f64).collect();
        let w = interval_weights(&xs, k as f64, k as f64 + 1.0);
        h * w.iter().zip(lo..=lo + width).map(|(wm, m)| wm * dtheta[m]).sum::<f64>()
    };
    let mut theta = vec![0.0; n];
    for k in start + 1..n {
        theta[k] = theta[k - 1] + step(k - 1);
    }
    for k in (0..start).rev() {
        theta[k] = theta[k + 1] - step(k);
    }
    q.iter().zip(&theta).map(|(v, t)| v * C64::from_polar(1.0, *t)).collect()
}

#[derive(Debug, Clone)]
pub struct Transport {
    pub lift: Vec<Vector3<C64>>,
    pub holonomy_defect: f64,
}

/// Horizontal unit lift of a point field, starting from `s0` over the
/// basepoint and moving along the base row, then along columns.
pub fn flat_section_transport(
    points: &[Vector3<C64>],
    grid: &Grid,
    s0: Vector3<C64>,
    lagrangian_tol: f64,
) -> Result<Transport, ConeError> {
    check_len(points.len(), grid)?;
    let (bi, bj) = grid.base;
    let p0 = points[grid.idx(bi, bj)];
    if (s0.norm() - 1.0).abs() > 1e-10 || (p0.dotc(&s0).norm() / p0.norm() - 1.0).abs() > 1e-10 {
        return Err(ConeError::BadStart);
    }
    let hol = holonomy_defect(points, grid);
    if hol > lagrangian_tol {
        return Err(ConeError::NotLagrangian(hol));
    }
    let unit: Vec<Vector3<C64>> = points.iter().map(|v| v / C64::new(v.norm(), 0.0)).collect();
    let row: Vec<Vector3<C64>> = (0..grid.nx).map(|i| unit[grid.idx(i, bj)]).collect();
    let row = transport_line(&row, bi, s0, grid.hx());
    let mut lift = vec![Vector3::zeros(); grid.len()];
    for i in 0..grid.nx {
        let col: Vec<Vector3<C64>> = (0..grid.ny).map(|j| unit[grid.idx(i, j)]).collect();
        let col = transport_line(&col, bj, row[i], grid.hy());
        for (j, v) in col.into_iter().enumerate() {
            lift[grid.idx(i, j)] = v;
        }
    }
    Ok(Transport { lift, holonomy_defect: hol })
}

#[derive(Debug, Clone)]
pub struct LegendrianFrame {
    /// e^{i beta / 3} F at every node.
    pub frames: Vec<Mat3>,
    /// Third columns, the horizontal lift.
    pub lift: Vec<Vector3<C64>>,
    /// Largest |det - e^{i beta}|.
    pub det_defect: f64,
}

/// Twists an SU(3) frame field by e^{i beta / 3}.
pub fn legendrian_frame(frames: &[Mat3], angle: &AngleField, closure_tol: f64) -> Result<LegendrianFrame, ConeError> {
    check_len(frames.len(), &angle.grid)?;
    if angle.closure_defect > closure_tol {
        return Err(ConeError::NeedsCovering(angle.closure_defect));
    }
    let mut det_defect: f64 = 0.0;
    let tw: Vec<Mat3> = frames
        .iter()
        .zip(&angle.beta)
        .map(|(f, b)| {
            let g = f * C64::from_polar(1.0, b / 3.0);
            det_defect = det_defect.max((g.determinant() - C64::from_polar(1.0, *b)).norm());
            g
        })
        .collect();
    let lift = tw.iter().map(|g| g.column(2).into_owned()).collect();
    Ok(LegendrianFrame {
        frames: tw,
        lift,
        det_defect,
    })
}

/// Largest (3,3) entry of the twisted Maurer-Cartan form at nodes with
/// centred stencils, the part along the centre that a Legendrian frame must
/// not have.
pub fn legendrian_centre_defect(lf: &LegendrianFrame, grid: &Grid, order: usize) -> Result<f64, ConeError> {
    let form = frame_form(&lf.frames, grid, order)?;
    Ok((0..grid.len())
        .filter(|k| !form.one_sided[*k])
        .map(|k| form.ax[k][(2, 2)].norm().max(form.ay[k][(2, 2)].norm()))
        .fold(0.0, f64::max))
}

fn lift_derivatives(lift: &[Vector3<C64>], grid: &Grid, order: usize) -> Result<(Vec<Vector3<C64>>, Vec<Vector3<C64>>, Vec<bool>), ConeError> {
    check_len(lift.len(), grid)?;
    let as_mats: Vec<Mat3> = lift
        .iter()
        .map(|v| {
            let mut m = Mat3::zeros();
            m.set_column(0, v);
            m
        })
        .collect();
    let (dx, dy, one_sided) = grid_derivatives(&as_mats, grid, order)?;
    let col = |m: &Mat3| m.column(0).into_owned();
    Ok((dx.iter().map(col).collect(), dy.iter().map(col).collect(), one_sided))
}

/// |<ds, s>| per node, largest of the x and y parts; `None` where a stencil
/// is one-sided.
pub fn horizontality_field(lift: &[Vector3<C64>], grid: &Grid, order: usize) -> Result<Vec<Option<f64>>, ConeError> {
    let (dx, dy, one_sided) = lift_derivatives(lift, grid, order)?;
    Ok((0..lift.len())
        .map(|k| (!one_sided[k]).then(|| lift[k].dotc(&dx[k]).norm().max(lift[k].dotc(&dy[k]).norm())))
        .collect())
}

/// Largest |<ds, s>| in x and y over nodes with centred stencils.
pub fn horizontality_residual(lift: &[Vector3<C64>], grid: &Grid, order: usize) -> Result<f64, ConeError> {
    Ok(horizontality_field(lift, grid, order)?.into_iter().flatten().fold(0.0, f64::max))
}

/// arg det(s, s_x, s_y): the Lagrangian angle of the cone over the lift,
/// with a flag per node for one-sided stencils.
pub fn cone_lagrangian_angle(lift: &[Vector3<C64>], grid: &Grid, order: usize) -> Result<(Vec<f64>, Vec<bool>), ConeError> {
    let (dx, dy, one_sided) = lift_derivatives(lift, grid, order)?;
    let ang = (0..lift.len())
        .map(|k| Mat3::from_columns(&[lift[k], dx[k], dy[k]]).determinant().arg())
        .collect();
    Ok((ang, one_sided))
}

/// Smallest distance between two lifts after removing one global phase.
pub fn phase_distance(a: &[Vector3<C64>], b: &[Vector3<C64>]) -> f64 {
    let c: C64 = a.iter().zip(b).map(|(u, v)| v.dotc(u)).sum();
    let ph = if c.norm() > 0.0 { c / c.norm() } else { C64::new(1.0, 0.0) };
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v * ph).norm())
        .fold(0.0, f64::max)
}

/// Wrapped difference of two angles, in [0, pi].
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

#[derive(Debug, Clone)]
pub struct ConeMesh {
    pub radii: Vec<f64>,
    /// One row of R^6 coordinates per (radius, node), radius major.
    pub points: Vec<[f64; 6]>,
    /// Largest |omega| between pairs of cone tangent vectors, at nodes with
    /// centred stencils.
    pub lagrangian_residual: f64,
    /// Largest |s_x wedge s_y|; zero for a constant lift.
    pub max_area_density: f64,
}

impl ConeMesh {
    pub fn is_degenerate(&self) -> bool {
        self.max_area_density < 1e-12
    }
}

pub fn cone_mesh(lift: &[Vector3<C64>], radii: &[f64], grid: &Grid, order: usize) -> Result<ConeMesh, ConeError> {
    let (dx, dy, one_sided) = lift_derivatives(lift, grid, order)?;
    let rmax = radii.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mut omega: f64 = 0.0;
    let mut area: f64 = 0.0;
    for k in 0..lift.len() {
        let s = &lift[k];
        let w = [s.dotc(&dx[k]).im, s.dotc(&dy[k]).im, dx[k].dotc(&dy[k]).im];
        if one_sided[k] {
            continue;
        }
        omega = omega.max(w.iter().fold(0.0f64, |m, v| m.max(v.abs())) * rmax * rmax);
        let g = [dx[k].norm_squared(), dy[k].norm_squared(), dx[k].dotc(&dy[k]).re];
        area = area.max((g[0] * g[1] - g[2] * g[2]).max(0.0).sqrt());
    }
    let mut points = Vec::with_capacity(radii.len() * lift.len());
    for r in radii {
        for s in lift {
            points.push([r * s[0].re, r * s[0].im, r * s[1].re, r * s[1].im, r * s[2].re, r * s[2].im]);
        }
    }
    Ok(ConeMesh {
        radii: radii.to_vec(),
        points,
        lagrangian_residual: omega,
        max_area_density: area,
    })
}

pub fn cone_samples(lift: &[Vector3<C64>], angle: &AngleField, radius_range: (f64, f64)) -> Vec<ConeSample> {
    lift.iter()
        .zip(&angle.beta)
        .map(|(s, b)| ConeSample {
            link_point: *s,
            radius_range,
            beta_check: *b,
        })
        .collect()
}

/// diag(a, b, 0) -> diag(2a - b, 2b - a, 0) / 3.
pub fn g2_reindex(x: &Mat3) -> Result<Mat3, ConeError> {
    let mut off = x[(2, 2)].norm();
    for r in 0..3 {
        for c in 0..3 {
            if r != c {
                off = off.max(x[(r, c)].norm());
            }
        }
    }
    if off > 1e-12 * (1.0 + x.norm()) {
        return Err(ConeError::NotDiagonal(off));
    }
    let (a, b) = (x[(0, 0)], x[(1, 1)]);
    let z = C64::new(0.0, 0.0);
    Ok(Mat3::from_diagonal(&Vector3::new((a * 2.0 - b) / 3.0, (b * 2.0 - a) / 3.0, z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::I;
    use crate::fixtures::{clifford_frame, clifford_point, frame_field};
    use crate::geometry::{frozen_geometry, project_cp2};

    fn clifford_grid() -> Grid {
        let h = std::f64::consts::TAU / 64.0;
        Grid::new([0.0, 0.0, 16.0 * h, 16.0 * h], 17, 17).unwrap()
    }

    #[test]
    fn clifford_lift_both_routes() {
        let g = clifford_grid();
        let fr = frame_field(&g, clifford_frame);
        let geo = frozen_geometry(fr.clone(), &g, 8, 1e-6, 1e-6).unwrap();
        let lf = legendrian_frame(&fr, &geo.angle, 1e-6).unwrap();
        assert!(lf.det_defect < 1e-12);
        let explicit: Vec<_> = (0..g.len())
            .map(|k| {
                let (i, j) = g.coords(k);
                clifford_point(g.z(i, j))
            })
            .collect();
        assert!(phase_distance(&lf.lift, &explicit) < 1e-12);
        let pts: Vec<_> = fr.iter().map(project_cp2).collect();
        let s0 = lf.lift[g.idx(g.base.0, g.base.1)];
        let t = flat_section_transport(&pts, &g, s0, 1e-2).unwrap();
        let gap = t.lift.iter().zip(&lf.lift).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-6, "{gap}");
        let (ang, one_sided) = cone_lagrangian_angle(&lf.lift, &g, 8).unwrap();
        for k in 0..g.len() {
            if !one_sided[k] {
                assert!(angle_gap(ang[k], geo.angle.beta[k]) < 1e-8);
            }
        }
    }

    #[test]
    fn transport_phase_equivariance() {
        let g = clifford_grid();
        let pts: Vec<_> = frame_field(&g, clifford_frame).iter().map(project_cp2).collect();
        let s0 = pts[g.idx(8, 8)];
        let a = flat_section_transport(&pts, &g, s0, 1e-2).unwrap();
        let ph = C64::from_polar(1.0, 0.7);
        let b = flat_section_transport(&pts, &g, s0 * ph, 1e-2).unwrap();
        let gap = a.lift.iter().zip(&b.lift).map(|(u, v)| (u * ph - v).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-13);
    }

    #[test]
    fn complex_line_is_not_lagrangian() {
        let g = Grid::new([-0.3, -0.3, 0.3, 0.3], 11, 11).unwrap();
        let pts: Vec<_> = (0..g.len())
            .map(|k| {
                let (i, j) = g.coords(k);
                let v = Vector3::new(C64::new(1.0, 0.0), g.z(i, j), C64::new(0.0, 0.0));
                v / C64::new(v.norm(), 0.0)
            })
            .collect();
        let s0 = pts[g.idx(5, 5)];
        // holonomy per area tends to 2 omega(f_x, f_y) = 2 at z = 0
        let d = holonomy_defect(&pts, &g);
        assert!(d > 1.0 && d < 2.01, "{d}");
        assert!(matches!(flat_section_transport(&pts, &g, s0, 1e-3), Err(ConeError::NotLagrangian(_))));
    }

    #[test]
    fn constant_field() {
        let g = Grid::new([0.0, 0.0, 1.0, 1.0], 5, 5).unwrap();
        let p = Vector3::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0));
        let pts = vec![p; g.len()];
        let t = flat_section_transport(&pts, &g, p * I, 1e-8).unwrap();
        assert!(t.lift.iter().all(|v| (v - p * I).norm() < 1e-15));
        let m = cone_mesh(&t.lift, &[1.0], &g, 2).unwrap();
        assert!(m.is_degenerate());
        assert_eq!(m.points.len(), g.len());
    }

    #[test]
    fn clifford_cone_is_lagrangian() {
        let g = clifford_grid();
        let lift: Vec<_> = (0..g.len())
            .map(|k| {
                let (i, j) = g.coords(k);
                clifford_point(g.z(i, j))
            })
            .collect();
        let m = cone_mesh(&lift, &[0.5, 1.0], &g, 8).unwrap();
        assert!(!m.is_degenerate());
        assert!(m.lagrangian_residual < 1e-8);
        assert_eq!(m.points.len(), 2 * g.len());
        assert!(horizontality_residual(&lift, &g, 8).unwrap() < 1e-8);
    }

    #[test]
    fn reindex() {
        let y = Mat3::from_diagonal(&Vector3::new(I, I, C64::new(0.0, 0.0)));
        let out = g2_reindex(&y).unwrap();
        assert!((out - y / C64::new(3.0, 0.0)).norm() < 1e-16);
        assert_eq!(g2_reindex(&Mat3::zeros()).unwrap(), Mat3::zeros());
        let d = Mat3::from_diagonal(&Vector3::new(C64::new(3.0, 0.0), C64::new(0.0, 3.0), C64::new(0.0, 0.0)));
        let e = g2_reindex(&d).unwrap();
        assert!((e[(0, 0)] - C64::new(2.0, -1.0)).norm() < 1e-15);
        assert!(g2_reindex(&Mat3::identity()).is_err());
    }
}
