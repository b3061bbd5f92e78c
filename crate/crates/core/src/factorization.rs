//! Loop group factorizations.
//!
//! Iwasawa: phi = F B with F unitary on the circle and B extending
//! holomorphically into the unit disk, B(0) upper triangular with positive
//! diagonal. Writing C = B^-1, the product phi^* phi C has no positive modes,
//! which is a block Toeplitz system in the Fourier coefficients of phi^* phi.
//! The system is Hermitian positive definite and is solved by Cholesky.
//!
//! Birkhoff: phi = phi_minus phi_plus with phi_minus(infinity) = I. With
//! Psi = phi_minus^-1 the negative modes of Psi phi vanish, again a finite
//! linear system in the coefficients of Psi. Its conditioning decides whether
//! phi is treated as lying in the big cell.

use crate::algebra::{inverse3, C64, Mat3};
use crate::loops::{fourier_of_samples, sample_point, LoopError, LoopSpec, TwistedGroupLoop};
use nalgebra::{DMatrix, Matrix3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FactorizationError {
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("matrix is singular or not SL(3,C): |det| = {0:.3e}")]
    Singular(f64),
    #[error("Gram system lost positive definiteness at cap {0}")]
    LostPositivity(usize),
    #[error("Iwasawa did not converge; unitarity defect by cap: {history:?}")]
    NotConverged { history: Vec<(usize, f64)> },
}

/// Gram-Schmidt on SL(3,C): g = u b with u in SU(3) and b upper triangular
/// with positive diagonal.
pub fn pointwise_iwasawa_sl3(g: &Mat3) -> Result<(Mat3, Mat3), FactorizationError> {
    let det = g.determinant();
    if (det - C64::new(1.0, 0.0)).norm() > 1e-8 * g.norm().powi(3).max(1.0) {
        return Err(FactorizationError::Singular(det.norm()));
    }
    let qr = g.qr();
    let (mut q, mut r) = (qr.q(), qr.r());
    for d in 0..3 {
        let rd = r[(d, d)];
        if rd.norm() < 1e-300 {
            return Err(FactorizationError::Singular(0.0));
        }
        let ph = rd / rd.norm();
        for c in 0..3 {
            r[(d, c)] /= ph;
            q[(c, d)] *= ph;
        }
    }
    Ok((q, r))
}

#[derive(Debug, Clone)]
pub struct IwasawaResult {
    pub unitary: TwistedGroupLoop,
    pub positive: TwistedGroupLoop,
    /// Constant term of the positive factor.
    pub b0: Mat3,
    /// sup_j || F B - phi ||.
    pub residual: f64,
    /// sup_j || F^* F - I ||, the convergence certificate.
    pub unitarity_defect: f64,
    /// Coefficient mass of B on modes < 0.
    pub negative_mode_mass: f64,
    pub twist_defect: f64,
    /// sup distance between unitary factors at cap K and 2K.
    pub refinement_gap: Option<f64>,
    pub under_resolved: bool,
}

struct RawIwasawa {
    f: Vec<Mat3>,
    b: Vec<Mat3>,
    b0: Mat3,
}

fn flip3(m: &Mat3) -> Mat3 {
    Mat3::from_fn(|r, c| m[(2 - r, 2 - c)])
}

fn iwasawa_at(phi: &[Mat3], cap: usize) -> Result<RawIwasawa, FactorizationError> {
    let n = phi.len();
    let gram: Vec<Mat3> = phi.iter().map(|g| g.adjoint() * g).collect();
    let mut p_hat = Vec::with_capacity(cap + 1);
    for k in 0..=cap as i32 {
        p_hat.push(fourier_of_samples(&gram, k)?);
    }
    let m = 3 * (cap + 1);
    let mut t = DMatrix::<C64>::zeros(m, m);
    for bi in 0..=cap {
        for bj in 0..=cap {
            let blk = if bi >= bj {
                p_hat[bi - bj]
            } else {
                p_hat[bj - bi].adjoint()
            };
            t.view_mut((3 * bi, 3 * bj), (3, 3)).copy_from(&blk);
        }
    }
    // the Hermitian part only; the DFT leaves rounding-level asymmetry
    let t = (&t + t.adjoint()) * C64::new(0.5, 0.0);
    let chol = t
        .cholesky()
        .ok_or(FactorizationError::LostPositivity(cap))?;
    let mut rhs = DMatrix::<C64>::zeros(m, 3);
    rhs.view_mut((0, 0), (3, 3)).fill_with_identity();
    let w = chol.solve(&rhs);
    let block = |j: usize| -> Mat3 { Matrix3::from_fn(|r, c| w[(3 * j + r, c)]) };

    let w0 = block(0);
    let w0 = (w0 + w0.adjoint()) * C64::new(0.5, 0.0);
    let l = flip3(&w0)
        .cholesky()
        .ok_or(FactorizationError::LostPositivity(cap))?
        .l();
    let c0 = flip3(&l);
    let d0 = inverse3(&c0).adjoint();
    let c_hat: Vec<Mat3> = (0..=cap).map(|j| block(j) * d0).collect();

    let mut f = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for (j, g) in phi.iter().enumerate() {
        let lam = sample_point(j, n);
        // Horner in lambda
        let mut c = c_hat[cap];
        for cj in c_hat[..cap].iter().rev() {
            c = c * lam + cj;
        }
        f.push(g * c);
        b.push(inverse3(&c));
    }
    Ok(RawIwasawa {
        f,
        b,
        b0: inverse3(&c0),
    })
}

fn unitarity(f: &[Mat3]) -> f64 {
    f.iter()
        .map(|s| (s.adjoint() * s - Mat3::identity()).norm())
        .fold(0.0, f64::max)
}

/// Iwasawa splitting of a sampled loop at cap `spec.fourier_cap`.
///
/// The input need not be twisted; when it is, both factors are. Fails with
/// `NotConverged` if the unitary factor misses unitarity by more than
/// `spec.tol_unitary`.
pub fn loop_iwasawa(phi: &TwistedGroupLoop, spec: &LoopSpec) -> Result<IwasawaResult, FactorizationError> {
    spec.validate()?;
    if phi.n() != spec.n_samples {
        return Err(LoopError::Mismatch(phi.n(), spec.n_samples).into());
    }
    let cap = spec.fourier_cap;
    let raw = iwasawa_at(phi.samples(), cap)?;
    let defect = unitarity(&raw.f);
    let mut history = vec![(cap, defect)];

    let mut gap = None;
    let mut under = false;
    if spec.check_resolution {
        let fine = iwasawa_at(phi.samples(), 2 * cap)?;
        history.push((2 * cap, unitarity(&fine.f)));
        let g = raw
            .f
            .iter()
            .zip(&fine.f)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        under = g > 10.0 * spec.tol_unitary;
        gap = Some(g);
    }
    if !(defect <= spec.tol_unitary) {
        return Err(FactorizationError::NotConverged { history });
    }

    let residual = raw
        .f
        .iter()
        .zip(&raw.b)
        .zip(phi.samples())
        .map(|((f, b), p)| (f * b - p).norm())
        .fold(0.0, f64::max);
    let unitary = TwistedGroupLoop::from_samples(raw.f)?;
    let positive = TwistedGroupLoop::from_samples(raw.b)?;
    let negative_mode_mass = positive.mass_outside(|k| k >= 0);
    Ok(IwasawaResult {
        twist_defect: unitary.twist_defect(),
        unitary,
        positive,
        b0: raw.b0,
        residual,
        unitarity_defect: defect,
        negative_mode_mass,
        refinement_gap: gap,
        under_resolved: under,
    })
}

/// Condition number above which a Birkhoff system is treated as outside the
/// big cell.
pub const BIG_CELL_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct BirkhoffResult {
    /// (phi_minus, phi_plus) when the loop is in the big cell.
    pub factors: Option<(TwistedGroupLoop, TwistedGroupLoop)>,
    pub big_cell: bool,
    /// 2-norm condition number of the truncated system.
    pub condition: f64,
    /// sup_j || phi_minus phi_plus - phi ||, zero when not in the big cell.
    pub residual: f64,
    /// Coefficient mass of phi_plus on modes < 0.
    pub negative_mode_mass: f64,
}

/// Birkhoff splitting with phi_minus normalized to I at infinity, truncated
/// to `spec.fourier_cap` modes of phi_minus^-1.
pub fn birkhoff(phi: &TwistedGroupLoop, spec: &LoopSpec) -> Result<BirkhoffResult, FactorizationError> {
    spec.validate()?;
    if phi.n() != spec.n_samples {
        return Err(LoopError::Mismatch(phi.n(), spec.n_samples).into());
    }
    let cap = spec.fourier_cap;
    let n = phi.n();
    if cap == 0 {
        let plus = phi.clone();
        return Ok(BirkhoffResult {
            negative_mode_mass: plus.mass_outside(|k| k >= 0),
            factors: Some((TwistedGroupLoop::identity(n)?, plus)),
            big_cell: true,
            condition: 1.0,
            residual: 0.0,
        });
    }
    let ci = cap as i32;
    let coeff: Vec<Mat3> = (-ci..=ci)
        .map(|k| phi.fourier(k))
        .collect::<Result<_, _>>()?;
    let hat = |k: i32| coeff[(k + ci) as usize];

    // unknowns X = [Psi_{-1} .. Psi_{-cap}], X A = R
    let m = 3 * cap;
    let mut a = DMatrix::<C64>::zeros(m, m);
    let mut r = DMatrix::<C64>::zeros(3, m);
    for col in 0..cap {
        let k = -1 - col as i32;
        for row in 0..cap {
            let mm = row as i32 + 1;
            a.view_mut((3 * row, 3 * col), (3, 3)).copy_from(&hat(k + mm));
        }
        r.view_mut((0, 3 * col), (3, 3)).copy_from(&(-hat(k)));
    }
    // singular values only; the solve goes through LU, which stays accurate
    // where the complex SVD solve does not
    let at = a.transpose();
    let sv = at.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= BIG_CELL_CONDITION) {
        return Ok(BirkhoffResult {
            factors: None,
            big_cell: false,
            condition,
            residual: 0.0,
            negative_mode_mass: 0.0,
        });
    }
    let xt = at
        .full_piv_lu()
        .solve(&r.transpose())
        .ok_or(FactorizationError::Singular(smin))?;
    let psi: Vec<Mat3> = (0..cap)
        .map(|blk| Matrix3::from_fn(|row, col| xt[(3 * blk + col, row)]))
        .collect();

    let mut minus = Vec::with_capacity(n);
    let mut plus = Vec::with_capacity(n);
    for (j, g) in phi.samples().iter().enumerate() {
        let mu = sample_point(j, n).conj();
        let mut p = psi[cap - 1];
        for pj in psi[..cap - 1].iter().rev() {
            p = p * mu + pj;
        }
        let p = p * mu + Mat3::identity();
        plus.push(p * g);
        minus.push(inverse3(&p));
    }
    let residual = minus
        .iter()
        .zip(&plus)
        .zip(phi.samples())
        .map(|((a, b), g)| (a * b - g).norm())
        .fold(0.0, f64::max);
    let minus = TwistedGroupLoop::from_samples(minus)?;
    let plus = TwistedGroupLoop::from_samples(plus)?;
    Ok(BirkhoffResult {
        negative_mode_mass: plus.mass_outside(|k| k >= 0),
        factors: Some((minus, plus)),
        big_cell: true,
        condition,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{epsilon3, random_sl3, I};
    use crate::loops::TwistedAlgebraLoop;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn pointwise_upper_triangular_is_fixed() {
        let g = Mat3::new(c(1.0), c(1.0), c(0.0), c(0.0), c(1.0), c(0.0), c(0.0), c(0.0), c(1.0));
        let (u, b) = pointwise_iwasawa_sl3(&g).unwrap();
        assert!((u - Mat3::identity()).norm() < 1e-15);
        assert!((b - g).norm() < 1e-15);
    }

    #[test]
    fn pointwise_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = random_sl3(&mut rng, 0.7).exp();
            let (u, b) = pointwise_iwasawa_sl3(&g).unwrap();
            assert!((u * b - g).norm() < 1e-13);
            assert!((u.adjoint() * u - Mat3::identity()).norm() < 1e-13);
            assert!((u.determinant() - c(1.0)).norm() < 1e-13);
            for d in 0..3 {
                assert!(b[(d, d)].im.abs() < 1e-14 && b[(d, d)].re > 0.0);
                for r in d + 1..3 {
                    assert!(b[(r, d)].norm() < 1e-13);
                }
            }
        }
        assert!(pointwise_iwasawa_sl3(&Mat3::zeros()).is_err());
    }

    #[test]
    fn constant_positive_loop_has_trivial_unitary_part() {
        let d = Mat3::from_diagonal(&nalgebra::Vector3::new(c(2.0), c(1.0), c(0.5)));
        let phi = TwistedGroupLoop::from_samples(vec![d; 64]).unwrap();
        let res = loop_iwasawa(&phi, &LoopSpec::default()).unwrap();
        for s in res.unitary.samples() {
            assert!((s - Mat3::identity()).norm() < 1e-12);
        }
        assert!((res.b0 - d).norm() < 1e-12);
        assert!(!res.under_resolved);
    }

    #[test]
    fn iwasawa_of_twisted_product_recovers_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = LoopSpec::new(72, 16).unwrap();
        let u = TwistedGroupLoop::exp_of(&TwistedAlgebraLoop::random_real(&mut rng, 2, 0.2), 72).unwrap();
        let bp = TwistedGroupLoop::exp_of(&TwistedAlgebraLoop::random(&mut rng, 0, 2, 0.2), 72).unwrap();
        let phi = crate::loops::loop_multiply(&u, &bp).unwrap();
        let res = loop_iwasawa(&phi, &spec).unwrap();
        assert!(res.twist_defect < 1e-10);
        assert!(res.residual < 1e-12);
        assert!(res.negative_mode_mass < 1e-9);
        // F differs from u by a constant element of U(3) on the right
        let k = u.sample(0).adjoint() * res.unitary.sample(0);
        for (a, b) in u.samples().iter().zip(res.unitary.samples()) {
            assert!((a * k - b).norm() < 1e-9);
        }
    }

    #[test]
    fn iwasawa_rejects_too_small_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xi = TwistedAlgebraLoop::random(&mut rng, -3, 3, 1.5);
        xi.set(0, Mat3::zeros());
        let phi = TwistedGroupLoop::exp_of(&xi, 16).unwrap();
        let spec = LoopSpec::new(16, 2).unwrap();
        assert!(matches!(
            loop_iwasawa(&phi, &spec),
            Err(FactorizationError::NotConverged { .. })
        ));
    }

    #[test]
    fn birkhoff_identity() {
        let id = TwistedGroupLoop::identity(64).unwrap();
        let res = birkhoff(&id, &LoopSpec::default()).unwrap();
        let (m, p) = res.factors.unwrap();
        assert!(m.sup_distance(&id) < 1e-14 && p.sup_distance(&id) < 1e-14);
    }

    #[test]
    fn birkhoff_of_known_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = LoopSpec::new(64, 12).unwrap();
        let mut xm = TwistedAlgebraLoop::zero(-2, -1);
        xm.set(-1, epsilon3() * (I * 0.3));
        xm.set(-2, crate::algebra::y3() * c(0.2));
        let minus = TwistedGroupLoop::exp_of(&xm, 64).unwrap();
        let plus = TwistedGroupLoop::exp_of(&TwistedAlgebraLoop::random(&mut rng, 0, 2, 0.2), 64).unwrap();
        let phi = crate::loops::loop_multiply(&minus, &plus).unwrap();
        let res = birkhoff(&phi, &spec).unwrap();
        assert!(res.big_cell);
        let (m, p) = res.factors.unwrap();
        assert!(m.sup_distance(&minus) < 1e-8, "{}", m.sup_distance(&minus));
        assert!(p.sup_distance(&plus) < 1e-8);
        assert!(m.twist_defect() < 1e-8);
    }

    #[test]
    fn weyl_loop_is_outside_big_cell() {
        let w = TwistedGroupLoop::from_fn(64, |l| {
            Mat3::from_diagonal(&nalgebra::Vector3::new(l.powi(4), l.powi(-4), c(1.0)))
        })
        .unwrap();
        assert!(w.twist_defect() < 1e-13);
        let res = birkhoff(&w, &LoopSpec::new(64, 12).unwrap()).unwrap();
        assert!(!res.big_cell);
        assert!(res.factors.is_none());
    }
}
