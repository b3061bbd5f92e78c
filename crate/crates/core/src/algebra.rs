//! Matrix Lie algebras with the order-four automorphism tau, its eigenspace
//! grading and the symmetric-space data used by the rest of the crate.
//!
//! Two layers live here. [`CaseData`] works with dynamically sized matrices
//! and covers every target (CP2, S5, complex hyperbolic plane, CP1xCP1 and its
//! dual); it is what the structure audit runs on. The `*3` free functions are
//! fixed-size fast paths for the 3x3 twist shared by CP2, S5 and CH2, which the
//! loop and factorization code calls in inner loops.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

pub type C64 = Complex64;
pub type Mat3 = Matrix3<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("matrix is {rows}x{cols}, expected {expected}x{expected}")]
    Shape {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("matrix is not in {tag:?}: {what} residual {residual:.3e}")]
    NotInAlgebra {
        tag: AlgebraTag,
        what: &'static str,
        residual: f64,
    },
    #[error("element is not in the sigma = -1 eigenspace (residual {0:.3e})")]
    NotInM(f64),
    #[error("element has tag {got:?}, case {case:?} needs {want:?}")]
    TagMismatch {
        got: AlgebraTag,
        want: AlgebraTag,
        case: CaseName,
    },
}

/// Which matrix algebra an element is asserted to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgebraTag {
    Su3,
    Sl3C,
    U3,
    Gl3C,
    Su21,
    /// su(2)+su(2) as block-diagonal 4x4 matrices.
    Su2Su2,
    /// su(1,1)+su(1,1) as block-diagonal 4x4 matrices.
    Su11Su11,
    /// sl(2,C)+sl(2,C) as block-diagonal 4x4 matrices.
    Sl2Sl2,
}

impl AlgebraTag {
    pub fn dim(self) -> usize {
        match self {
            AlgebraTag::Su2Su2 | AlgebraTag::Su11Su11 | AlgebraTag::Sl2Sl2 => 4,
            _ => 3,
        }
    }

    /// Complexification, as a tag.
    pub fn complexified(self) -> AlgebraTag {
        match self {
            AlgebraTag::Su3 | AlgebraTag::Sl3C | AlgebraTag::Su21 => AlgebraTag::Sl3C,
            AlgebraTag::U3 | AlgebraTag::Gl3C => AlgebraTag::Gl3C,
            AlgebraTag::Su2Su2 | AlgebraTag::Su11Su11 | AlgebraTag::Sl2Sl2 => AlgebraTag::Sl2Sl2,
        }
    }
}

const MEMBERSHIP_TOL: f64 = 1e-10;

/// A square complex matrix together with the algebra it is known to lie in.
#[derive(Debug, Clone, PartialEq)]
pub struct LieMatrix {
    entries: DMatrix<C64>,
    tag: AlgebraTag,
}

impl LieMatrix {
    /// Checks shape and membership (trace, skew-Hermitian or B-skew, block
    /// structure) to a relative tolerance of 1e-10.
    pub fn new(entries: DMatrix<C64>, tag: AlgebraTag) -> Result<Self, AlgebraError> {
        let n = tag.dim();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(AlgebraError::Shape {
                rows: entries.nrows(),
                cols: entries.ncols(),
                expected: n,
            });
        }
        let scale = entries.norm().max(1.0);
        let fail = |what, residual: f64| -> Result<(), AlgebraError> {
            if residual > MEMBERSHIP_TOL * scale {
                Err(AlgebraError::NotInAlgebra { tag, what, residual })
            } else {
                Ok(())
            }
        };
        let skew = (&entries + entries.adjoint()).norm();
        match tag {
            AlgebraTag::Su3 => {
                fail("trace", entries.trace().norm())?;
                fail("skew-Hermitian", skew)?;
            }
            AlgebraTag::Sl3C => fail("trace", entries.trace().norm())?,
            AlgebraTag::U3 => fail("skew-Hermitian", skew)?,
            AlgebraTag::Gl3C => {}
            AlgebraTag::Su21 => {
                fail("trace", entries.trace().norm())?;
                let b = diag(&[1.0, 1.0, -1.0]);
                fail("B-skew", (&entries * &b + &b * entries.adjoint()).norm())?;
            }
            AlgebraTag::Su2Su2 | AlgebraTag::Su11Su11 | AlgebraTag::Sl2Sl2 => {
                fail("block-diagonal", off_block_norm(&entries))?;
                fail("block trace", block_traces(&entries))?;
                match tag {
                    AlgebraTag::Su2Su2 => fail("skew-Hermitian", skew)?,
                    AlgebraTag::Su11Su11 => {
                        let b = diag(&[1.0, -1.0, 1.0, -1.0]);
                        fail("B-skew", (&entries * &b + &b * entries.adjoint()).norm())?;
                    }
                    _ => {}
                }
            }
        }
        Ok(LieMatrix { entries, tag })
    }

    /// Wraps without checking. Used internally for results of operations that
    /// preserve the algebra by construction.
    fn raw(entries: DMatrix<C64>, tag: AlgebraTag) -> Self {
        LieMatrix { entries, tag }
    }

    pub fn from_mat3(m: &Mat3, tag: AlgebraTag) -> Result<Self, AlgebraError> {
        Self::new(DMatrix::from_iterator(3, 3, m.iter().copied()), tag)
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn tag(&self) -> AlgebraTag {
        self.tag
    }

    pub fn to_mat3(&self) -> Option<Mat3> {
        (self.entries.nrows() == 3).then(|| Mat3::from_iterator(self.entries.iter().copied()))
    }

    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }
}

fn off_block_norm(m: &DMatrix<C64>) -> f64 {
    let mut s = 0.0;
    for r in 0..4 {
        for c in 0..4 {
            if (r < 2) != (c < 2) {
                s += m[(r, c)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn block_traces(m: &DMatrix<C64>) -> f64 {
    (m[(0, 0)] + m[(1, 1)]).norm() + (m[(2, 2)] + m[(3, 3)]).norm()
}

fn diag(d: &[f64]) -> DMatrix<C64> {
    DMatrix::from_fn(d.len(), d.len(), |r, c| {
        if r == c {
            C64::new(d[r], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn cdiag(d: &[C64]) -> DMatrix<C64> {
    DMatrix::from_fn(d.len(), d.len(), |r, c| if r == c { d[r] } else { C64::new(0.0, 0.0) })
}

/// i^k for any integer k.
pub fn i_pow(k: i32) -> C64 {
    match k.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => I,
        2 => C64::new(-1.0, 0.0),
        _ => -I,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseName {
    Cp2,
    S5,
    Ch2,
    Cp1Cp1,
    Cp1Cp1Dual,
}

impl CaseName {
    pub const ALL: [CaseName; 5] = [
        CaseName::Cp2,
        CaseName::S5,
        CaseName::Ch2,
        CaseName::Cp1Cp1,
        CaseName::Cp1Cp1Dual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseName::Cp2 => "CP2",
            CaseName::S5 => "S5",
            CaseName::Ch2 => "CH2",
            CaseName::Cp1Cp1 => "CP1xCP1",
            CaseName::Cp1Cp1Dual => "CP1xCP1-dual",
        }
    }

    pub fn parse(s: &str) -> Option<CaseName> {
        CaseName::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

#[derive(Debug, Clone)]
enum Twist {
    /// X -> -J X^T J^-1 on the algebra, g -> J g^-T J^-1 on the group.
    Transpose(DMatrix<C64>),
    /// X -> T X T^-1 on both.
    Inner(DMatrix<C64>),
}

/// Structure data for one target: the twist, the involution sigma, the
/// distinguished element Y spanning the real g_2 direction and the real form.
#[derive(Debug, Clone)]
pub struct CaseData {
    pub name: CaseName,
    twist: Twist,
    /// sigma(X) = S X S^-1; given independently of tau so tau^2 = sigma is a
    /// real check.
    sigma: DMatrix<C64>,
    y: DMatrix<C64>,
    /// Hermitian form of an indefinite real form; `None` means compact.
    form: Option<DMatrix<C64>>,
    real_tag: AlgebraTag,
}

fn j_matrix() -> DMatrix<C64> {
    DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        .map(|v| C64::new(v, 0.0))
}

fn t_matrix() -> DMatrix<C64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 0.0, 0.0, -1.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0,
        ],
    )
    .map(|v| C64::new(v, 0.0))
}

impl CaseData {
    pub fn new(name: CaseName) -> Self {
        let h = C64::new(0.5, 0.0);
        match name {
            CaseName::Cp2 | CaseName::Ch2 => CaseData {
                name,
                twist: Twist::Transpose(j_matrix()),
                sigma: diag(&[1.0, 1.0, -1.0]),
                y: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    I / 3.0,
                    I / 3.0,
                    -I * 2.0 / 3.0,
                ])),
                form: (name == CaseName::Ch2).then(|| diag(&[1.0, 1.0, -1.0])),
                real_tag: if name == CaseName::Ch2 {
                    AlgebraTag::Su21
                } else {
                    AlgebraTag::Su3
                },
            },
            CaseName::S5 => CaseData {
                name,
                twist: Twist::Transpose(j_matrix()),
                sigma: diag(&[1.0, 1.0, -1.0]),
                y: cdiag(&[I, I, C64::new(0.0, 0.0)]),
                form: None,
                real_tag: AlgebraTag::U3,
            },
            CaseName::Cp1Cp1 | CaseName::Cp1Cp1Dual => CaseData {
                name,
                twist: Twist::Inner(t_matrix()),
                sigma: diag(&[1.0, -1.0, -1.0, 1.0]),
                y: cdiag(&[-I * h, I * h, -I * h, I * h]),
                form: (name == CaseName::Cp1Cp1Dual).then(|| diag(&[1.0, -1.0, 1.0, -1.0])),
                real_tag: if name == CaseName::Cp1Cp1Dual {
                    AlgebraTag::Su11Su11
                } else {
                    AlgebraTag::Su2Su2
                },
            },
        }
    }

    /// Same case with Y replaced, for negative controls of the audit.
    pub fn with_y(mut self, y: DMatrix<C64>) -> Self {
        self.y = y;
        self
    }

    pub fn dim(&self) -> usize {
        self.real_tag.dim()
    }

    pub fn real_tag(&self) -> AlgebraTag {
        self.real_tag
    }

    pub fn y(&self) -> &DMatrix<C64> {
        &self.y
    }

    /// Extra elements of g_2 beyond Y (the Z direction for S5, X-type
    /// directions elsewhere are in g_0 and not listed).
    pub fn g2_extra(&self) -> Vec<DMatrix<C64>> {
        match self.name {
            CaseName::S5 => vec![cdiag(&[C64::new(0.0, 0.0), C64::new(0.0, 0.0), I])],
            _ => Vec::new(),
        }
    }

    pub fn tau(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.twist {
            Twist::Transpose(j) => -(j * x.transpose() * j.transpose()),
            Twist::Inner(t) => t * x * t.transpose(),
        }
    }

    pub fn tau_group(&self, g: &DMatrix<C64>) -> Option<DMatrix<C64>> {
        match &self.twist {
            Twist::Transpose(j) => {
                let inv = g.clone().try_inverse()?;
                Some(j * inv.transpose() * j.transpose())
            }
            Twist::Inner(t) => Some(t * g * t.transpose()),
        }
    }

    pub fn sigma(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        &self.sigma * x * &self.sigma
    }

    /// Conjugation fixing the real form: -X^* or -B X^* B.
    pub fn tilde(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.form {
            None => -x.adjoint(),
            Some(b) => -(b * x.adjoint() * b),
        }
    }

    /// Projection onto the i^k eigenspace of tau.
    pub fn project(&self, x: &DMatrix<C64>, k: i32) -> DMatrix<C64> {
        let mut acc = x.clone();
        let mut t = x.clone();
        for a in 1..4 {
            t = self.tau(&t);
            acc += t.map(|v| v * i_pow(-a * k));
        }
        acc.map(|v| v * 0.25)
    }

    /// A spanning set of the complexified ambient algebra.
    pub fn spanning_set(&self) -> Vec<DMatrix<C64>> {
        let n = self.dim();
        let one = C64::new(1.0, 0.0);
        let blocks: Vec<std::ops::Range<usize>> = if n == 4 {
            vec![0..2, 2..4]
        } else {
            vec![0..3]
        };
        let traceless = self.real_tag.complexified() != AlgebraTag::Gl3C;
        let mut out = Vec::new();
        for b in &blocks {
            let m = b.len() as f64;
            for r in b.clone() {
                for c in b.clone() {
                    let mut e = DMatrix::zeros(n, n);
                    e[(r, c)] = one;
                    if traceless && r == c {
                        for d in b.clone() {
                            e[(d, d)] -= C64::new(1.0 / m, 0.0);
                        }
                    }
                    out.push(e);
                }
            }
        }
        out
    }

    /// Linearly independent basis of the complex eigenspace g_k.
    pub fn eigenbasis(&self, k: i32) -> Vec<DMatrix<C64>> {
        let mut basis: Vec<DMatrix<C64>> = Vec::new();
        for e in self.spanning_set() {
            let mut v = self.project(&e, k);
            for b in &basis {
                let c = b.dotc(&v);
                v -= b.map(|x| x * c);
            }
            let nv = v.norm();
            if nv > 1e-9 {
                basis.push(v.map(|x| x / nv));
            }
        }
        basis
    }

    /// Elements of the real form, sampled uniformly in each coordinate of the
    /// spanning set and then made real with respect to tilde.
    pub fn random_real<R: Rng>(&self, rng: &mut R, scale: f64) -> DMatrix<C64> {
        let x = self.random_ambient(rng, scale);
        (&x + self.tilde(&x)).map(|v| v * 0.5)
    }

    pub fn random_ambient<R: Rng>(&self, rng: &mut R, scale: f64) -> DMatrix<C64> {
        let n = self.dim();
        let mut acc = DMatrix::zeros(n, n);
        for e in self.spanning_set() {
            let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
            acc += e.map(|v| v * c);
        }
        acc
    }
}

/// Projection of `x` onto g_k, tagged with the complexified algebra.
pub fn project_eigenspace(case: &CaseData, x: &LieMatrix, k: i32) -> LieMatrix {
    LieMatrix::raw(case.project(&x.entries, k), x.tag.complexified())
}

/// The su(3)-type conjugation X -> -X^*, which fixes compact real forms.
pub fn tilde(x: &LieMatrix) -> LieMatrix {
    LieMatrix::raw(-x.entries.adjoint(), x.tag)
}

/// exp(pi/2 ad Y) applied to an element of m (the sigma = -1 eigenspace).
pub fn complex_structure(case: &CaseData, v: &LieMatrix) -> Result<LieMatrix, AlgebraError> {
    let n = case.dim();
    if v.entries.nrows() != n {
        return Err(AlgebraError::Shape {
            rows: v.entries.nrows(),
            cols: v.entries.ncols(),
            expected: n,
        });
    }
    let off = (case.sigma(&v.entries) + &v.entries).norm();
    if off > MEMBERSHIP_TOL * v.norm().max(1.0) {
        return Err(AlgebraError::NotInM(off));
    }
    Ok(LieMatrix::raw(ad_exp(case.y(), &v.entries, std::f64::consts::FRAC_PI_2), v.tag))
}

/// Ad(exp(t Y)) v for diagonalizable Y, via the matrix exponential.
fn ad_exp(y: &DMatrix<C64>, v: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let e = y.map(|a| a * t).exp();
    let ei = y.map(|a| -a * t).exp();
    e * v * ei
}

fn bracket(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

#[derive(Debug, Clone)]
pub struct AuditLine {
    pub name: &'static str,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub case: CaseName,
    pub tol: f64,
    pub lines: Vec<AuditLine>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.residual <= self.tol)
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.lines.iter().find(|l| l.name == name).map(|l| l.residual)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.lines
            .iter()
            .filter(|l| l.residual > self.tol)
            .map(|l| l.name)
            .collect()
    }
}

/// Checks every structural relation of the case on a spanning set.
pub fn structure_audit(case: &CaseData, tol: f64) -> AuditReport {
    let span = case.spanning_set();
    let mut lines = Vec::new();
    let mut push = |name, residual| lines.push(AuditLine { name, residual });

    let tau4 = span
        .iter()
        .map(|x| {
            let mut t = x.clone();
            for _ in 0..4 {
                t = case.tau(&t);
            }
            (t - x).norm()
        })
        .fold(0.0, f64::max);
    push("tau_order_four", tau4);

    let tau2 = span
        .iter()
        .map(|x| (case.tau(&case.tau(x)) - case.sigma(x)).norm())
        .fold(0.0, f64::max);
    push("tau_squared_is_sigma", tau2);

    // tau is an automorphism: tau[A,B] = [tau A, tau B]
    let mut hom: f64 = 0.0;
    for a in &span {
        for b in &span {
            let lhs = case.tau(&bracket(a, b));
            let rhs = bracket(&case.tau(a), &case.tau(b));
            hom = hom.max((lhs - rhs).norm());
        }
    }
    push("tau_bracket_homomorphism", hom);

    // group and algebra twists agree through exp
    let mut ex: f64 = 0.0;
    for x in &span {
        let g = x.map(|v| v * 0.3).exp();
        let lhs = case.tau_group(&g).unwrap_or_else(|| g.map(|_| C64::new(f64::NAN, 0.0)));
        let rhs = case.tau(&x.map(|v| v * 0.3)).exp();
        ex = ex.max((lhs - rhs).norm());
    }
    push("tau_group_exp_compatible", ex);

    let resolution = span
        .iter()
        .map(|x| {
            let sum = (0..4).fold(DMatrix::zeros(x.nrows(), x.ncols()), |acc, k| {
                acc + case.project(x, k)
            });
            (sum - x).norm()
        })
        .fold(0.0, f64::max);
    push("projection_resolution", resolution);

    let real = span
        .iter()
        .map(|x| (case.tau(&case.tilde(x)) - case.tilde(&case.tau(x))).norm())
        .fold(0.0, f64::max);
    push("tau_preserves_real_form", real);

    let bases: Vec<Vec<DMatrix<C64>>> = (0..4).map(|k| case.eigenbasis(k)).collect();
    let mut grading: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for x in &bases[a as usize] {
                for y in &bases[b as usize] {
                    let br = bracket(x, y);
                    let off = (&br - case.project(&br, a + b)).norm();
                    grading = grading.max(off);
                }
            }
        }
    }
    push("grading_bracket", grading);

    let mut g2: f64 = 0.0;
    for x in &bases[2] {
        for y in &bases[2] {
            g2 = g2.max(bracket(x, y).norm());
        }
    }
    push("g2_abelian", g2);

    // Y centralizes g_0; for the product cases g_0 also holds an
    // X direction commuting with Y, and the check is the same
    let y = case.y();
    let cent = bases[0]
        .iter()
        .map(|x| bracket(y, x).norm())
        .fold(0.0, f64::max);
    push("y_centralizes_g0", cent);

    push("y_in_g2", (case.tau(y) + y).norm());
    push("y_real", (case.tilde(y) - y).norm());

    // J^2 = -1 on m
    let mut js: f64 = 0.0;
    for e in &span {
        let m = (e - case.sigma(e)).map(|v| v * 0.5);
        if m.norm() < 1e-12 {
            continue;
        }
        let jj = ad_exp(y, &ad_exp(y, &m, std::f64::consts::FRAC_PI_2), std::f64::consts::FRAC_PI_2);
        js = js.max((jj + &m).norm());
    }
    push("y_complex_structure", js);

    AuditReport {
        case: case.name,
        tol,
        lines,
    }
}

fn j3() -> Mat3 {
    Mat3::new(
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(-1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
    )
}

/// tau on 3x3 algebra elements: -J X^T J^-1. Writing it out entrywise
/// avoids two matrix products per call.
pub fn tau3(x: &Mat3) -> Mat3 {
    // J X^T J^T with J swapping e1,e2 up to sign
    let t = x.transpose();
    let j = j3();
    -(j * t * j.transpose())
}

/// tau on 3x3 group elements: J g^-T J^-1.
pub fn tau3_group(g: &Mat3) -> Mat3 {
    let inv = inverse3(g);
    let j = j3();
    j * inv.transpose() * j.transpose()
}

/// Inverse of a 3x3 matrix, NaN-filled when singular.
pub fn inverse3(g: &Mat3) -> Mat3 {
    g.try_inverse()
        .unwrap_or_else(|| Mat3::from_element(C64::new(f64::NAN, f64::NAN)))
}

pub fn project3(x: &Mat3, k: i32) -> Mat3 {
    let t1 = tau3(x);
    let t2 = tau3(&t1);
    let t3 = tau3(&t2);
    (x + t1 * i_pow(-k) + t2 * i_pow(-2 * k) + t3 * i_pow(-3 * k)) * C64::new(0.25, 0.0)
}

pub fn tilde3(x: &Mat3) -> Mat3 {
    -x.adjoint()
}

/// Y = (i/3) diag(1, 1, -2).
pub fn y3() -> Mat3 {
    Mat3::from_diagonal(&nalgebra::Vector3::new(I / 3.0, I / 3.0, -I * 2.0 / 3.0))
}

/// The unit element of g_-1 for CP2 used throughout:
/// (1/2) [[0,0,1],[0,0,-i],[-1,i,0]].
pub fn epsilon3() -> Mat3 {
    let z = C64::new(0.0, 0.0);
    let h = C64::new(0.5, 0.0);
    Mat3::new(z, z, h, z, z, -I * 0.5, -h, I * 0.5, z)
}

/// Hermitian inner product tr(A^* B).
pub fn inner3(a: &Mat3, b: &Mat3) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Real coefficient of the orthogonal projection of `x` onto the real line RY.
pub fn y_component(x: &Mat3) -> f64 {
    let y = y3();
    inner3(&y, x).re / inner3(&y, &y).re
}

pub fn random_sl3<R: Rng>(rng: &mut R, scale: f64) -> Mat3 {
    let mut m = Mat3::from_fn(|_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
    });
    let t = m.trace() / 3.0;
    for d in 0..3 {
        m[(d, d)] -= t;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn audit_passes_for_every_case() {
        for name in CaseName::ALL {
            let rep = structure_audit(&CaseData::new(name), 1e-12);
            assert!(rep.passed(), "{name:?}: {:?}", rep.failures());
        }
    }

    #[test]
    fn corrupted_y_is_flagged() {
        let bad = cdiag(&[I, C64::new(0.0, 0.0), -I]);
        let rep = structure_audit(&CaseData::new(CaseName::Cp2).with_y(bad), 1e-12);
        let fails = rep.failures();
        assert!(fails.contains(&"y_in_g2"));
        assert!(fails.contains(&"y_centralizes_g0"));
        assert!(!fails.contains(&"tau_order_four"));
    }

    #[test]
    fn tau3_matches_generic() {
        let case = CaseData::new(CaseName::Cp2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_sl3(&mut rng, 1.0);
        let d = DMatrix::from_iterator(3, 3, x.iter().copied());
        let a = case.tau(&d);
        let b = tau3(&x);
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).norm() < 1e-15);
        }
    }

    #[test]
    fn epsilon_lies_in_g_minus_one() {
        let e = epsilon3();
        assert!((tau3(&e) + e * I).norm() < 1e-15);
        assert!((e.norm() - 1.0).abs() < 1e-15);
        assert!((project3(&e, -1) - e).norm() < 1e-15);
    }

    #[test]
    fn y_eigen_and_component() {
        assert!((tau3(&y3()) + y3()).norm() < 1e-15);
        assert!((y_component(&(y3() * C64::new(2.5, 0.0))) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn sl3_elements_with_wrong_trace_are_rejected() {
        let m = DMatrix::<C64>::identity(3, 3);
        assert!(LieMatrix::new(m.clone(), AlgebraTag::Sl3C).is_err());
        assert!(LieMatrix::new(m.clone(), AlgebraTag::Gl3C).is_ok());
        assert!(LieMatrix::new(m.map(|v| v * I), AlgebraTag::U3).is_ok());
        assert!(LieMatrix::new(DMatrix::zeros(4, 4), AlgebraTag::Su3).is_err());
    }

    #[test]
    fn complex_structure_rejects_h_elements() {
        let case = CaseData::new(CaseName::Cp2);
        let y = LieMatrix::new(case.y().clone(), AlgebraTag::Su3).unwrap();
        assert!(matches!(complex_structure(&case, &y), Err(AlgebraError::NotInM(_))));
    }

    #[test]
    fn case_names_round_trip() {
        for c in CaseName::ALL {
            assert_eq!(CaseName::parse(c.as_str()), Some(c));
        }
        assert_eq!(CaseName::parse("cp2"), Some(CaseName::Cp2));
        assert_eq!(CaseName::parse("RP2"), None);
    }
}
