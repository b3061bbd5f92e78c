//! Twisted loops sampled on the unit circle.
//!
//! A loop is stored by its values at the N-th roots of unity. With N a
//! multiple of four, rotating by a quarter turn is an index shift by N/4, so
//! the twisting condition g(i lambda) = tau(g(lambda)) is checked exactly on
//! samples. Algebra loops are kept as Fourier coefficient tables.

use crate::algebra::{inverse3, project3, random_sl3, tau3_group, tilde3, C64, Mat3};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LoopError {
    #[error("sample count {0} is not a positive multiple of 4")]
    SampleCount(usize),
    #[error("sample count {n} too small for cap {k}: need N >= 4(K+1)")]
    CapTooLarge { n: usize, k: usize },
    #[error("loops have {0} and {1} samples")]
    Mismatch(usize, usize),
    #[error("Fourier mode {k} requested from {n} samples (|k| must be <= N/2)")]
    ModeOutOfRange { k: i32, n: usize },
    #[error("tolerance {0} must be positive")]
    Tolerance(f64),
}

/// Discretization and tolerance parameters shared by loop operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSpec {
    pub n_samples: usize,
    pub fourier_cap: usize,
    pub tol_twist: f64,
    pub tol_unitary: f64,
    pub tol_flat: f64,
    /// Re-run factorizations at twice the cap and flag disagreement.
    pub check_resolution: bool,
}

impl LoopSpec {
    pub fn new(n_samples: usize, fourier_cap: usize) -> Result<Self, LoopError> {
        let spec = LoopSpec {
            n_samples,
            fourier_cap,
            tol_twist: 1e-10,
            tol_unitary: 1e-10,
            tol_flat: 1e-6,
            check_resolution: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), LoopError> {
        if self.n_samples == 0 || self.n_samples % 4 != 0 {
            return Err(LoopError::SampleCount(self.n_samples));
        }
        if self.n_samples < 4 * (self.fourier_cap + 1) {
            return Err(LoopError::CapTooLarge {
                n: self.n_samples,
                k: self.fourier_cap,
            });
        }
        for t in [self.tol_twist, self.tol_unitary, self.tol_flat] {
            if !(t > 0.0) {
                return Err(LoopError::Tolerance(t));
            }
        }
        Ok(())
    }

    pub fn with_tolerances(mut self, twist: f64, unitary: f64, flat: f64) -> Result<Self, LoopError> {
        self.tol_twist = twist;
        self.tol_unitary = unitary;
        self.tol_flat = flat;
        self.validate()?;
        Ok(self)
    }
}

impl Default for LoopSpec {
    fn default() -> Self {
        LoopSpec::new(64, 8).expect("default spec is valid")
    }
}

/// lambda_j = exp(2 pi i j / N).
pub fn sample_point(j: usize, n: usize) -> C64 {
    C64::from_polar(1.0, std::f64::consts::TAU * (j % n) as f64 / n as f64)
}

/// lambda_j^k with the exponent reduced mod N before the trig call.
pub(crate) fn root_power(j: usize, k: i32, n: usize) -> C64 {
    let e = ((j as i64 * k as i64).rem_euclid(n as i64)) as usize;
    sample_point(e, n)
}

/// Finite Fourier table sum_{k=k_min}^{k_max} c_k lambda^k of 3x3 matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistedAlgebraLoop {
    k_min: i32,
    coeffs: Vec<Mat3>,
}

impl TwistedAlgebraLoop {
    pub fn new(k_min: i32, coeffs: Vec<Mat3>) -> Self {
        TwistedAlgebraLoop { k_min, coeffs }
    }

    pub fn zero(k_min: i32, k_max: i32) -> Self {
        let len = (k_max - k_min + 1).max(0) as usize;
        TwistedAlgebraLoop {
            k_min,
            coeffs: vec![Mat3::zeros(); len],
        }
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_min + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, k: i32) -> Mat3 {
        if k < self.k_min || k > self.k_max() {
            return Mat3::zeros();
        }
        self.coeffs[(k - self.k_min) as usize]
    }

    pub fn set(&mut self, k: i32, m: Mat3) {
        assert!(k >= self.k_min && k <= self.k_max(), "mode {k} outside table");
        self.coeffs[(k - self.k_min) as usize] = m;
    }

    pub fn modes(&self) -> impl Iterator<Item = (i32, &Mat3)> {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (self.k_min + i as i32, c))
    }

    /// Largest distance of a coefficient from its eigenspace g_{k mod 4}.
    pub fn twist_defect(&self) -> f64 {
        self.modes()
            .map(|(k, c)| (c - project3(c, k)).norm())
            .fold(0.0, f64::max)
    }

    /// Largest violation of c_{-k} = tilde(c_k) over the table.
    pub fn reality_defect(&self) -> f64 {
        self.modes()
            .map(|(k, c)| (self.coeff(-k) - tilde3(c)).norm())
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, lambda: C64) -> Mat3 {
        self.modes()
            .fold(Mat3::zeros(), |acc, (k, c)| acc + c * lambda.powi(k))
    }

    pub fn samples(&self, n: usize) -> Vec<Mat3> {
        (0..n)
            .map(|j| {
                self.modes()
                    .fold(Mat3::zeros(), |acc, (k, c)| acc + c * root_power(j, k, n))
            })
            .collect()
    }

    /// Random twisted coefficients on modes k_min..=k_max, each entry
    /// uniform in [-scale, scale] before projection.
    pub fn random<R: Rng>(rng: &mut R, k_min: i32, k_max: i32, scale: f64) -> Self {
        let mut out = Self::zero(k_min, k_max);
        for k in k_min..=k_max {
            out.set(k, project3(&random_sl3(rng, scale), k));
        }
        out
    }

    /// Random twisted loop with values in su(3) on the circle, modes -k_max..=k_max.
    pub fn random_real<R: Rng>(rng: &mut R, k_max: i32, scale: f64) -> Self {
        let mut out = Self::zero(-k_max, k_max);
        for k in 0..=k_max {
            let c = project3(&random_sl3(rng, scale), k);
            if k == 0 {
                out.set(0, (c + tilde3(&c)) * C64::new(0.5, 0.0));
            } else {
                out.set(k, c);
                out.set(-k, tilde3(&c));
            }
        }
        out
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Group-valued loop stored on N samples, N a multiple of four.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistedGroupLoop {
    samples: Vec<Mat3>,
}

impl TwistedGroupLoop {
    pub fn from_samples(samples: Vec<Mat3>) -> Result<Self, LoopError> {
        if samples.is_empty() || samples.len() % 4 != 0 {
            return Err(LoopError::SampleCount(samples.len()));
        }
        Ok(TwistedGroupLoop { samples })
    }

    pub fn identity(n: usize) -> Result<Self, LoopError> {
        Self::from_samples(vec![Mat3::identity(); n])
    }

    pub fn from_fn(n: usize, f: impl Fn(C64) -> Mat3) -> Result<Self, LoopError> {
        Self::from_samples((0..n).map(|j| f(sample_point(j, n))).collect())
    }

    /// Samplewise matrix exponential of an algebra loop.
    pub fn exp_of(xi: &TwistedAlgebraLoop, n: usize) -> Result<Self, LoopError> {
        Self::from_samples(xi.samples(n).into_iter().map(|m| m.exp()).collect())
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[Mat3] {
        &self.samples
    }

    pub fn sample(&self, j: usize) -> &Mat3 {
        &self.samples[j]
    }

    pub fn lambda(&self, j: usize) -> C64 {
        sample_point(j, self.n())
    }

    pub fn map(&self, f: impl Fn(&Mat3) -> Mat3) -> Self {
        TwistedGroupLoop {
            samples: self.samples.iter().map(f).collect(),
        }
    }

    pub fn left_mul(&self, g: &Mat3) -> Self {
        self.map(|s| g * s)
    }

    /// max_j || g(lambda_{j+N/4}) - tau(g(lambda_j)) ||.
    pub fn twist_defect(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|j| (self.samples[(j + n / 4) % n] - tau3_group(&self.samples[j])).norm())
            .fold(0.0, f64::max)
    }

    pub fn min_abs_det(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.determinant().norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn unitarity_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.adjoint() * s - Mat3::identity()).norm())
            .fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &TwistedGroupLoop) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn fourier(&self, k: i32) -> Result<Mat3, LoopError> {
        fourier_of_samples(&self.samples, k)
    }

    /// Band-limited trigonometric interpolation at an arbitrary point of the
    /// circle; exact at the sample points.
    pub fn interpolate(&self, lambda: C64) -> Mat3 {
        let n = self.n() as i32;
        let mut acc = Mat3::zeros();
        for k in (-n / 2 + 1)..(n / 2) {
            let c = fourier_of_samples(&self.samples, k).expect("mode within band");
            acc += c * lambda.powi(k);
        }
        let c = fourier_of_samples(&self.samples, n / 2).expect("mode within band");
        acc + c * ((lambda.powi(n / 2) + lambda.powi(-n / 2)) * 0.5)
    }

    /// Sum of squared Frobenius norms of the coefficients for modes outside
    /// `keep`, over the full resolvable band.
    pub fn mass_outside(&self, keep: impl Fn(i32) -> bool) -> f64 {
        band_mass(&self.samples, keep)
    }
}

pub(crate) fn fourier_of_samples(samples: &[Mat3], k: i32) -> Result<Mat3, LoopError> {
    let n = samples.len();
    if k.unsigned_abs() as usize > n / 2 {
        return Err(LoopError::ModeOutOfRange { k, n });
    }
    let mut acc = Mat3::zeros();
    for (j, s) in samples.iter().enumerate() {
        acc += s * root_power(j, -k, n);
    }
    Ok(acc / C64::new(n as f64, 0.0))
}

/// sqrt of the coefficient mass over modes -N/2+1..=N/2 that `keep` rejects.
pub(crate) fn band_mass(samples: &[Mat3], keep: impl Fn(i32) -> bool) -> f64 {
    let n = samples.len() as i32;
    let mut s = 0.0;
    for k in (-n / 2 + 1)..=(n / 2) {
        if !keep(k) {
            s += fourier_of_samples(samples, k)
                .expect("mode within band")
                .norm_squared();
        }
    }
    s.sqrt()
}

pub fn loop_multiply(a: &TwistedGroupLoop, b: &TwistedGroupLoop) -> Result<TwistedGroupLoop, LoopError> {
    if a.n() != b.n() {
        return Err(LoopError::Mismatch(a.n(), b.n()));
    }
    Ok(TwistedGroupLoop {
        samples: a.samples.iter().zip(&b.samples).map(|(x, y)| x * y).collect(),
    })
}

pub fn loop_inverse(a: &TwistedGroupLoop) -> TwistedGroupLoop {
    a.map(inverse3)
}

/// Coefficients k_min..=k_max of a sampled loop by the discrete transform.
pub fn fourier_coeffs(
    phi: &TwistedGroupLoop,
    k_min: i32,
    k_max: i32,
) -> Result<TwistedAlgebraLoop, LoopError> {
    let coeffs = (k_min..=k_max)
        .map(|k| phi.fourier(k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TwistedAlgebraLoop::new(k_min, coeffs))
}

/// H^s norm with Frobenius norms on coefficients.
pub fn hs_norm(xi: &TwistedAlgebraLoop, s: f64) -> f64 {
    xi.modes()
        .map(|(k, c)| (k.unsigned_abs() as f64).powf(2.0 * s) * c.norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub fn eval_loop(xi: &TwistedAlgebraLoop, lambda: C64) -> Mat3 {
    xi.eval(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::epsilon3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spec_validation() {
        assert!(LoopSpec::new(64, 8).is_ok());
        assert_eq!(LoopSpec::new(62, 8), Err(LoopError::SampleCount(62)));
        assert_eq!(
            LoopSpec::new(32, 8),
            Err(LoopError::CapTooLarge { n: 32, k: 8 })
        );
        assert!(LoopSpec::new(36, 8).is_ok());
    }

    #[test]
    fn identity_loop_is_trivial() {
        let id = TwistedGroupLoop::identity(64).unwrap();
        assert_eq!(id.twist_defect(), 0.0);
        let c = fourier_coeffs(&id, -3, 3).unwrap();
        for (k, m) in c.modes() {
            let expect = if k == 0 { 1.0 } else { 0.0 };
            assert!((m - Mat3::identity() * C64::new(expect, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn exp_of_epsilon_over_lambda() {
        // exp(t eps / lambda) = I + t eps / lambda + O(lambda^-2) exactly, so
        // the -1 coefficient is t eps up to aliasing from mode N-1
        let t = 0.3;
        let mut xi = TwistedAlgebraLoop::zero(-1, -1);
        xi.set(-1, epsilon3() * C64::new(t, 0.0));
        let g = TwistedGroupLoop::exp_of(&xi, 64).unwrap();
        assert!(g.twist_defect() < 1e-14);
        let c = g.fourier(-1).unwrap();
        assert!((c - epsilon3() * C64::new(t, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn hs_norm_small_cases() {
        let mut xi = TwistedAlgebraLoop::zero(-2, 2);
        xi.set(2, epsilon3());
        xi.set(-1, epsilon3() * C64::new(2.0, 0.0));
        // |2|^2 * 1 + |1|^2 * 4
        assert!((hs_norm(&xi, 1.0) - 8f64.sqrt()).abs() < 1e-14);
        assert!((hs_norm(&xi, 0.0) - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn refuses_modes_beyond_half_band() {
        let id = TwistedGroupLoop::identity(16).unwrap();
        assert!(id.fourier(8).is_ok());
        assert_eq!(id.fourier(9), Err(LoopError::ModeOutOfRange { k: 9, n: 16 }));
    }

    #[test]
    fn random_real_loops_are_su3_valued() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xi = TwistedAlgebraLoop::random_real(&mut rng, 3, 0.5);
        assert!(xi.twist_defect() < 1e-15);
        assert!(xi.reality_defect() < 1e-15);
        let u = TwistedGroupLoop::exp_of(&xi, 32).unwrap();
        assert!(u.unitarity_defect() < 1e-13);
        assert!(u.twist_defect() < 1e-13);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let a = TwistedGroupLoop::identity(8).unwrap();
        let b = TwistedGroupLoop::identity(12).unwrap();
        assert_eq!(loop_multiply(&a, &b), Err(LoopError::Mismatch(8, 12)));
        assert!(TwistedGroupLoop::from_samples(vec![Mat3::identity(); 6]).is_err());
    }
}
