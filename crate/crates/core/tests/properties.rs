use hslag_core::algebra::{
    inverse3, project3, random_sl3, tau3, tilde3, CaseData, CaseName, Mat3, C64,
};
use hslag_core::cones::flat_section_transport;
use hslag_core::dpw::{extract_maurer_cartan, run_forward, Grid, HoloPotential, IntegrationBudget};
use hslag_core::factorization::{birkhoff, loop_iwasawa};
use hslag_core::fixtures::{
    clifford_frame, clifford_point, frame_field, rp2_frame, vacuum_coefficients, vacuum_extended_frame,
    vacuum_tilde_coefficients, VacuumParams,
};
use hslag_core::geometry::{fs_chordal, frozen_geometry, project_cp2};
use hslag_core::loops::{fourier_coeffs, hs_norm, loop_multiply, LoopSpec, TwistedAlgebraLoop, TwistedGroupLoop};
use hslag_core::persistence::{
    format_archive, format_potential, parse_archive, parse_potential, FrameArchive, PotentialFile,
};
use hslag_core::report::Report;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn case_strategy() -> impl Strategy<Value = CaseName> {
    prop::sample::select(CaseName::ALL.to_vec())
}

fn bracket(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projections_resolve_identity(case in case_strategy(), seed in any::<u64>()) {
        let data = CaseData::new(case);
        let x = data.random_ambient(&mut rng(seed), 1.0);
        let sum = (0..4).fold(x.map(|_| C64::new(0.0, 0.0)), |acc, k| acc + data.project(&x, k));
        prop_assert!((sum - &x).norm() < 1e-12);
    }

    #[test]
    fn brackets_respect_grading(case in case_strategy(), seed in any::<u64>(), a in 0i32..4, b in 0i32..4) {
        let data = CaseData::new(case);
        let mut r = rng(seed);
        let x = data.project(&data.random_ambient(&mut r, 1.0), a);
        let y = data.project(&data.random_ambient(&mut r, 1.0), b);
        let br = bracket(&x, &y);
        prop_assert!((&br - data.project(&br, a + b)).norm() < 1e-12);
    }

    #[test]
    fn tilde_is_an_involution_swapping_minus_one_and_one(case in case_strategy(), seed in any::<u64>()) {
        let data = CaseData::new(case);
        let x = data.random_ambient(&mut rng(seed), 1.0);
        prop_assert!((data.tilde(&data.tilde(&x)) - &x).norm() < 1e-12);
        let t = data.tilde(&data.project(&x, -1));
        prop_assert!((data.project(&t, 1) - &t).norm() < 1e-12);
    }

    #[test]
    fn tau_preserves_brackets(case in case_strategy(), seed in any::<u64>()) {
        let data = CaseData::new(case);
        let mut r = rng(seed);
        let x = data.random_ambient(&mut r, 1.0);
        let z = data.random_ambient(&mut r, 1.0);
        let lhs = data.tau(&bracket(&x, &z));
        let rhs = bracket(&data.tau(&x), &data.tau(&z));
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn fourier_round_trip(seed in any::<u64>(), k in 1usize..8, extra in 0usize..3) {
        let n = 4 * (k + 1) + 4 * extra;
        let xi = TwistedAlgebraLoop::random(&mut rng(seed), -(k as i32), k as i32, 1.0);
        let phi = TwistedGroupLoop::from_samples(xi.samples(n)).unwrap();
        let back = fourier_coeffs(&phi, -(k as i32), k as i32).unwrap();
        let err = (-(k as i32)..=k as i32).map(|m| (back.coeff(m) - xi.coeff(m)).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn twisting_iff_grading(seed in any::<u64>(), bend in any::<bool>()) {
        let mut r = rng(seed);
        let mut xi = TwistedAlgebraLoop::random(&mut r, -3, 3, 1.0);
        if bend {
            let m = random_sl3(&mut r, 1.0);
            let off = m - project3(&m, 1);
            xi.set(1, xi.coeff(1) + off / C64::new(off.norm(), 0.0));
        }
        let n = 32;
        let s = xi.samples(n);
        // tau(xi(lambda)) = xi(i lambda)
        let quarter = (0..n).map(|j| (tau3(&s[j]) - s[(j + n / 4) % n]).norm()).fold(0.0, f64::max);
        let graded = xi.twist_defect();
        prop_assert_eq!(quarter < 1e-10, graded < 1e-10);
        prop_assert_eq!(graded < 1e-10, !bend);
    }

    #[test]
    fn hs_norm_is_a_norm(seed in any::<u64>(), s in 0.0f64..2.0, c in -3.0f64..3.0) {
        let mut r = rng(seed);
        let a = TwistedAlgebraLoop::random(&mut r, -2, 2, 1.0);
        let b = TwistedAlgebraLoop::random(&mut r, -2, 2, 1.0);
        let sum = TwistedAlgebraLoop::new(-2, (-2..=2).map(|k| a.coeff(k) + b.coeff(k)).collect());
        prop_assert!(hs_norm(&sum, s) <= hs_norm(&a, s) + hs_norm(&b, s) + 1e-12);
        let scaled = TwistedAlgebraLoop::new(-2, (-2..=2).map(|k| a.coeff(k) * C64::new(c, 0.0)).collect());
        prop_assert!((hs_norm(&scaled, s) - c.abs() * hs_norm(&a, s)).abs() < 1e-12 * (1.0 + hs_norm(&a, s)));
    }

    #[test]
    fn report_names_stay_unique(names in prop::collection::btree_set("[a-z]{1,6}", 1..12)) {
        let mut inner = Report::new("inner");
        for n in &names {
            inner.check(n, 0.0, 1.0);
        }
        let mut outer = Report::new("outer");
        for n in &names {
            outer.check(n, 0.0, 1.0);
        }
        outer.absorb("inner", inner);
        let text = outer.to_string();
        for n in &names {
            prop_assert_eq!(text.matches(&format!("check = {n},")).count(), 1);
            prop_assert_eq!(text.matches(&format!("check = inner.{n},")).count(), 1);
        }
    }
}

fn synth(seed: u64) -> (TwistedGroupLoop, TwistedGroupLoop) {
    let mut r = rng(seed);
    let u = TwistedGroupLoop::exp_of(&TwistedAlgebraLoop::random_real(&mut r, 1, 0.4), 64).unwrap();
    let b = TwistedGroupLoop::exp_of(&TwistedAlgebraLoop::random(&mut r, 0, 1, 0.4), 64).unwrap();
    (u, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn iwasawa_spectral_identity_and_twist(seed in any::<u64>()) {
        let (u, b) = synth(seed);
        let phi = loop_multiply(&u, &b).unwrap();
        let out = loop_iwasawa(&phi, &LoopSpec::new(64, 8).unwrap()).unwrap();
        // B^* B = phi^* phi samplewise
        let gap = out.positive.samples().iter().zip(phi.samples())
            .map(|(bb, p)| (bb.adjoint() * bb - p.adjoint() * p).norm())
            .fold(0.0, f64::max);
        prop_assert!(gap < 1e-10);
        prop_assert!(out.unitary.twist_defect() < 1e-10);
        prop_assert!(out.positive.twist_defect() < 1e-10);
    }

    #[test]
    fn iwasawa_unitary_part_ignores_plus_gauge(seed in any::<u64>()) {
        let (u, b) = synth(seed);
        let phi = loop_multiply(&u, &b).unwrap();
        // p(0) = I
        let p = TwistedGroupLoop::exp_of(&TwistedAlgebraLoop::random(&mut rng(seed ^ 1), 1, 2, 0.1), 64).unwrap();
        let spec = LoopSpec::new(64, 14).unwrap();
        let f1 = loop_iwasawa(&phi, &spec).unwrap().unitary;
        let f2 = loop_iwasawa(&loop_multiply(&phi, &p).unwrap(), &spec).unwrap().unitary;
        prop_assert!(f1.sup_distance(&f2) < 1e-8);
    }

    #[test]
    fn birkhoff_minus_factor_is_normalized(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = TwistedGroupLoop::exp_of(&TwistedAlgebraLoop::random(&mut r, -2, -1, 0.2), 64).unwrap();
        let p = TwistedGroupLoop::exp_of(&TwistedAlgebraLoop::random(&mut r, 0, 2, 0.2), 64).unwrap();
        let out = birkhoff(&loop_multiply(&m, &p).unwrap(), &LoopSpec::new(64, 14).unwrap()).unwrap();
        let (minus, _) = out.factors.expect("big cell");
        prop_assert!((minus.fourier(0).unwrap() - Mat3::identity()).norm() < 1e-10);
        for k in 1..16 {
            prop_assert!(minus.fourier(k).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn transport_is_phase_equivariant(theta in 0.0f64..std::f64::consts::TAU) {
        let g = Grid::new([0.1, 0.2, 0.6, 0.7], 9, 9).unwrap();
        let pts: Vec<_> = (0..g.len()).map(|k| { let (i, j) = g.coords(k); clifford_point(g.z(i, j)) }).collect();
        let s0 = pts[g.idx(g.base.0, g.base.1)];
        let e = C64::from_polar(1.0, theta);
        let a = flat_section_transport(&pts, &g, s0, 0.05).unwrap();
        let b = flat_section_transport(&pts, &g, s0 * e, 0.05).unwrap();
        let gap = a.lift.iter().zip(&b.lift).map(|(x, y)| (x * e - y).norm()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-14);
    }

    #[test]
    fn points_ignore_constant_g0_gauge(seed in any::<u64>(), which in any::<bool>()) {
        let mut r = rng(seed);
        let x = project3(&random_sl3(&mut r, 1.0), 0);
        let x = (x + tilde3(&x)) * C64::new(0.5, 0.0);
        let k = x.exp();
        let g = Grid::new([0.1, -0.3, 0.5, 0.2], 5, 5).unwrap();
        let f = if which { frame_field(&g, clifford_frame) } else { frame_field(&g, rp2_frame) };
        let gap = f.iter().map(|m| fs_chordal(&project_cp2(m), &project_cp2(&(m * k)))).fold(0.0, f64::max);
        prop_assert!(gap < 1e-7);
        prop_assert!((project_cp2(&f[0]) - project_cp2(&(f[0] * k))).norm() < 1e-12);
    }

    #[test]
    fn vacuum_loops_commute(br in -1.0f64..1.0, bi in -1.0f64..1.0, t in 0.1f64..3.0, s in 0.2f64..1.0) {
        // c = s e^{it} b has Im(conj(b) c) = s |b|^2 sin t > 0
        let b = C64::new(br, bi);
        prop_assume!(b.norm() > 0.1);
        let p = VacuumParams::new(b, b * C64::from_polar(s, t)).unwrap();
        let m = vacuum_coefficients(&p).samples(16);
        let mt = vacuum_tilde_coefficients(&p).samples(16);
        for (x, y) in m.iter().zip(&mt) {
            prop_assert!((x * y - y * x).norm() < 1e-12);
        }
        prop_assert!((p.e_rho().powi(2) - 8.0 * s * b.norm_sqr() * t.sin()).abs() < 1e-12);
    }

    #[test]
    fn potential_file_round_trip(seed in any::<u64>(), k_max in 0i32..4, degree in 0usize..4) {
        let pf = PotentialFile {
            case: CaseName::Cp2,
            grid: Some(([-0.3, -0.2, 0.4, 0.5], 9, 11)),
            loop_spec: Some((64, 14)),
            potential: HoloPotential::random(&mut rng(seed), k_max, degree, 0.7),
        };
        let back = parse_potential(&format_potential(&pf)).unwrap();
        prop_assert_eq!(back, pf);
    }
}

#[test]
fn arg_b_changes_gauge_invariants() {
    // non-minimal branch: rotating b with c fixed changes rho and beta
    let c = C64::new(0.2, 0.6);
    let b = C64::new(0.4, 0.1);
    let g = Grid::new([-0.2, -0.2, 0.2, 0.2], 11, 11).unwrap();
    let geo = |b: C64| {
        let p = VacuumParams::new(b, c).unwrap();
        let f = vacuum_extended_frame(&p, &g, 8).unwrap();
        frozen_geometry(f.frozen(0), &g, 8, f64::INFINITY, f64::INFINITY).unwrap()
    };
    let a = geo(b);
    let r = geo(b * C64::from_polar(1.0, 0.3));
    let drho = a.conformal.rho.iter().zip(&r.conformal.rho).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let dbeta = a.angle.beta.iter().zip(&r.angle.beta).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(drho > 1e-3 || dbeta > 1e-3, "{drho} {dbeta}");
}

#[test]
fn archive_round_trip_is_exact() {
    let g = Grid::new([-0.1, -0.1, 0.1, 0.1], 5, 4).unwrap();
    let spec = LoopSpec::new(64, 14).unwrap().with_tolerances(1e-10, 1e-8, 1e-6).unwrap();
    let mu = HoloPotential::random(&mut rng(3), 2, 1, 0.3);
    let run = run_forward(&mu, &g, &spec, &IntegrationBudget::default()).unwrap();
    let a = FrameArchive::new(CaseName::Cp2, &run.frame, &spec);
    let text = format_archive(&a);
    let back = parse_archive(&text).unwrap();
    assert_eq!(format_archive(&back), text);
    for (x, y) in a.frames.iter().zip(&back.frames) {
        assert_eq!(x.samples(), y.samples());
    }
    let bumped = text.replacen("hslag-frame-archive 1.0", "hslag-frame-archive 2.0", 1);
    assert!(parse_archive(&bumped).is_err());
}

#[test]
fn dpw_frames_are_partially_primitive() {
    let g = Grid::new([-0.15, -0.15, 0.15, 0.15], 13, 13).unwrap();
    let spec = LoopSpec::new(64, 14).unwrap().with_tolerances(1e-10, 1e-8, 1e-6).unwrap();
    for seed in 0..3 {
        let mu = HoloPotential::random(&mut rng(seed), 2, 1, 0.2);
        let run = run_forward(&mu, &g, &spec, &IntegrationBudget::default()).unwrap();
        let sup = extract_maurer_cartan(&run.frame, 8).unwrap().support();
        assert!(sup.alpha_pp_minus1 < 1e-8, "{sup:?}");
        assert!(sup.reality_defect < 1e-8, "{sup:?}");
        let f0 = inverse3(&run.frame.frames[g.idx(g.base.0, g.base.1)].samples()[0]);
        assert!((f0 - Mat3::identity()).norm() < 1e-12);
    }
}
