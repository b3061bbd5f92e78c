//! Closed-form surfaces: the real projective plane, the Clifford torus and
//! the vacuum family with constant Maurer-Cartan data.

use crate::algebra::{epsilon3, C64, Mat3, I};
use crate::dpw::{ExtendedFrame, Grid, HoloPotential};
use crate::loops::{LoopError, TwistedAlgebraLoop, TwistedGroupLoop};
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FixtureError {
    #[error("vacuum parameters give e^(2 rho) = 8 Im(conj(b) c) = {0:.3e}, need > 0")]
    NotImmersed(f64),
    #[error(transparent)]
    Loop(#[from] LoopError),
}

fn r(v: f64) -> C64 {
    C64::new(v, 0.0)
}

const Z: C64 = C64::new(0.0, 0.0);

/// [[0,0,1],[0,0,-i],[-1,i,0]], twice the unit element of g_-1.
fn e_minus() -> Mat3 {
    epsilon3() * r(2.0)
}

/// [[0,0,1],[0,0,i],[-1,-i,0]].
fn e_plus() -> Mat3 {
    Mat3::new(Z, Z, r(1.0), Z, Z, I, r(-1.0), -I, Z)
}

/// Real orthogonal lift of the minimal RP2 in stereographic coordinates.
pub fn rp2_frame(z: C64) -> Mat3 {
    let (x, y) = (z.re, z.im);
    let s = 1.0 / (1.0 + x * x + y * y);
    Mat3::new(
        r(1.0 - x * x + y * y),
        r(-2.0 * x * y),
        r(2.0 * x),
        r(-2.0 * x * y),
        r(1.0 + x * x - y * y),
        r(2.0 * y),
        r(-2.0 * x),
        r(-2.0 * y),
        r(1.0 - x * x - y * y),
    ) * r(s)
}

/// (dz part, dzbar part) of the displayed Maurer-Cartan form of [`rp2_frame`].
pub fn rp2_form(z: C64) -> (Mat3, Mat3) {
    let a0 = Mat3::new(Z, -I, Z, I, Z, Z, Z, Z, Z);
    let s = r(1.0 / (1.0 + z.norm_sqr()));
    ((a0 * z.conj() + e_minus()) * s, (-a0 * z + e_plus()) * s)
}

/// Horizontal lift in S5 of the Clifford torus.
pub fn clifford_point(z: C64) -> Vector3<C64> {
    let (x, y) = (z.re, z.im);
    let s3 = 3f64.sqrt();
    Vector3::new(
        C64::from_polar(1.0, 2.0 * x),
        C64::from_polar(1.0, y * s3 - x),
        C64::from_polar(1.0, -(x + y * s3)),
    ) / r(s3)
}

/// The Clifford frame exactly as displayed. Its determinant is -1, so it lies
/// in U(3) but not SU(3); see [`clifford_frame`].
pub fn clifford_frame_displayed(z: C64) -> Mat3 {
    let (x, y) = (z.re, z.im);
    let s3 = 3f64.sqrt();
    let s2 = r(2f64.sqrt());
    let p = [
        C64::from_polar(1.0, 2.0 * x),
        C64::from_polar(1.0, y * s3 - x),
        C64::from_polar(1.0, -(x + y * s3)),
    ];
    Mat3::new(
        I * 2.0 * p[0],
        Z,
        s2 * p[0],
        -I * p[1],
        I * s3 * p[1],
        s2 * p[1],
        -I * p[2],
        -I * s3 * p[2],
        s2 * p[2],
    ) / r(6f64.sqrt())
}

/// SU(3) lift of the Clifford torus: minus the displayed frame. Same
/// Maurer-Cartan form, same projective points.
pub fn clifford_frame(z: C64) -> Mat3 {
    -clifford_frame_displayed(z)
}

/// (dz part, dzbar part) of the displayed Clifford Maurer-Cartan form.
pub fn clifford_form() -> (Mat3, Mat3) {
    let a0z = Mat3::new(I, r(-1.0), Z, r(-1.0), -I, Z, Z, Z, Z) * r(0.5);
    let a0zb = Mat3::new(I, r(1.0), Z, r(1.0), -I, Z, Z, Z, Z) * r(0.5);
    let s = r(1.0 / 2f64.sqrt());
    (a0z + e_minus() * s, a0zb + e_plus() * s)
}

/// Parameters (b, c) of a vacuum solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacuumParams {
    pub b: C64,
    pub c: C64,
}

impl VacuumParams {
    pub fn new(b: C64, c: C64) -> Result<Self, FixtureError> {
        let e2 = 8.0 * (b.conj() * c).im;
        if !(e2 > 0.0) {
            return Err(FixtureError::NotImmersed(e2));
        }
        Ok(VacuumParams { b, c })
    }

    /// c = i b, the minimal (a = 0) branch.
    pub fn minimal(b: C64) -> Result<Self, FixtureError> {
        Self::new(b, I * b)
    }

    /// a = -(conj(c) + i conj(b)) / 3.
    pub fn a(&self) -> C64 {
        -(self.c.conj() + I * self.b.conj()) / 3.0
    }

    pub fn e_rho(&self) -> f64 {
        (8.0 * (self.b.conj() * self.c).im).sqrt()
    }
}

/// M_lambda as a coefficient table on modes -2..=0.
pub fn vacuum_coefficients(p: &VacuumParams) -> TwistedAlgebraLoop {
    let a = p.a();
    let mut t = TwistedAlgebraLoop::zero(-2, 0);
    t.set(
        -2,
        Mat3::from_diagonal(&Vector3::new(-I * a, -I * a, I * a * 2.0)),
    );
    t.set(-1, epsilon3() * r(p.e_rho()));
    t.set(0, Mat3::new(p.b, p.c, Z, p.c, -p.b, Z, Z, Z, Z));
    t
}

/// tilde(M)_lambda on modes 0..=2: coefficient k is -(M_{-k})^*.
pub fn vacuum_tilde_coefficients(p: &VacuumParams) -> TwistedAlgebraLoop {
    let m = vacuum_coefficients(p);
    let mut t = TwistedAlgebraLoop::zero(0, 2);
    for k in 0..=2 {
        t.set(k, -m.coeff(-k).adjoint());
    }
    t
}

/// The potential M_lambda dz, constant in z.
pub fn vacuum_potential(p: &VacuumParams) -> HoloPotential {
    let mut mu = HoloPotential::new();
    for (k, c) in vacuum_coefficients(p).modes() {
        mu.set(k, 0, *c);
    }
    mu
}

/// F_lambda(z) = exp(z M_lambda + zbar tilde(M)_lambda) on n samples.
pub fn vacuum_frame(p: &VacuumParams, z: C64, n: usize) -> Result<TwistedGroupLoop, FixtureError> {
    let m = vacuum_coefficients(p).samples(n);
    let mt = vacuum_tilde_coefficients(p).samples(n);
    Ok(TwistedGroupLoop::from_samples(
        m.iter().zip(&mt).map(|(a, b)| (a * z + b * z.conj()).exp()).collect(),
    )?)
}

pub fn vacuum_extended_frame(p: &VacuumParams, grid: &Grid, n: usize) -> Result<ExtendedFrame, FixtureError> {
    let frames = (0..grid.len())
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            vacuum_frame(p, grid.z(i, j), n)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExtendedFrame::from_frames(*grid, frames).expect("one frame per node"))
}

/// A closed-form frame sampled at every grid node.
pub fn frame_field(grid: &Grid, f: impl Fn(C64) -> Mat3) -> Vec<Mat3> {
    (0..grid.len())
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            f(grid.z(i, j))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{project3, tilde3};

    #[test]
    fn rp2_frame_is_special_orthogonal() {
        for z in [C64::new(0.0, 0.0), C64::new(0.3, -0.4), C64::new(-0.7, 0.2)] {
            let f = rp2_frame(z);
            assert!((f.transpose() * f - Mat3::identity()).norm() < 1e-14);
            assert!((f.determinant() - r(1.0)).norm() < 1e-14);
            assert!(f.iter().all(|v| v.im == 0.0));
        }
    }

    #[test]
    fn clifford_frames_and_points() {
        let z = C64::new(0.4, 1.1);
        let d = clifford_frame_displayed(z);
        assert!((d.adjoint() * d - Mat3::identity()).norm() < 1e-14);
        assert!((d.determinant() + r(1.0)).norm() < 1e-14);
        assert!((clifford_frame(z).determinant() - r(1.0)).norm() < 1e-14);
        let col = d.column(2).into_owned();
        assert!((col - clifford_point(z)).norm() < 1e-15);
    }

    #[test]
    fn clifford_form_is_real_and_primitive() {
        let (az, azb) = clifford_form();
        assert!((azb + az.adjoint()).norm() < 1e-15);
        assert!(project3(&azb, -1).norm() < 1e-15);
        assert!(project3(&az, 2).norm() < 1e-15);
        assert!((project3(&az, -1).norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rp2_form_at_origin() {
        let (az, azb) = rp2_form(C64::new(0.0, 0.0));
        assert!((project3(&az, -1).norm() - 2.0).abs() < 1e-15);
        assert!((azb - tilde3(&az)).norm() < 1e-15);
    }

    #[test]
    fn vacuum_data() {
        let p = VacuumParams::minimal(I * 0.5).unwrap();
        assert!(p.a().norm() < 1e-16);
        assert!((p.e_rho() - 2f64.sqrt()).abs() < 1e-15);
        assert!(vacuum_coefficients(&p).twist_defect() < 1e-15);
        assert!(VacuumParams::new(r(1.0), r(1.0)).is_err());
        let f = vacuum_frame(&p, C64::new(0.3, 0.2), 16).unwrap();
        assert!(f.unitarity_defect() < 1e-13);
        assert!(f.twist_defect() < 1e-13);
    }

    #[test]
    fn vacuum_at_half_i_is_clifford() {
        let p = VacuumParams::minimal(I * 0.5).unwrap();
        let f0 = clifford_frame(C64::new(0.0, 0.0));
        for z in [C64::new(0.2, 0.1), C64::new(-1.3, 0.7)] {
            let f = vacuum_frame(&p, z, 8).unwrap();
            assert!((f0 * f.sample(0) - clifford_frame(z)).norm() < 1e-13);
        }
    }
}
