//! End-to-end runs behind the command line: potential to surface, the
//! closed-form examples and cones. Each run returns its artifacts and a
//! report of named residuals.

use crate::algebra::{Mat3, C64};
use crate::cones::{
    angle_gap, cone_lagrangian_angle, cone_mesh, flat_section_transport, horizontality_residual,
    legendrian_centre_defect, legendrian_frame, ConeError, ConeMesh,
};
use crate::dpw::{
    extract_maurer_cartan, frame_form, run_forward, su3_defect, validate_potential, DpwError, ExtendedFrame, Grid,
    HoloPotential, IntegrationBudget,
};
use crate::fixtures::{clifford_frame, frame_field, rp2_frame, vacuum_extended_frame, FixtureError, VacuumParams};
use crate::geometry::{
    chart_vertex, curvature_norms, flatness_components, frozen_geometry, lagrangian_angle, maslov_form, project_cp2,
    refinement, stationarity_field, surface_samples, FamilyMember, GeometryError, SurfaceSample, MESH_PROJECTION,
};
use crate::loops::{LoopError, LoopSpec};
use crate::persistence::PersistError;
use crate::report::Report;
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("loop factorization did not converge at nodes {nodes:?}: {msg}")]
    NotConverged { nodes: Vec<(usize, usize)>, msg: String },
    #[error(transparent)]
    Dpw(DpwError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Loop(#[from] LoopError),
}

impl From<DpwError> for PipelineError {
    fn from(e: DpwError) -> Self {
        match e {
            DpwError::Factorization { nodes, source } => PipelineError::NotConverged {
                nodes,
                msg: source.to_string(),
            },
            DpwError::Potential(m) | DpwError::Grid(m) => PipelineError::Invalid(m),
            other => PipelineError::Dpw(other),
        }
    }
}

/// Settings for reading geometry off a frame field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceConfig {
    pub lambda0: C64,
    /// Stencil order for conformal factor, angle and support checks.
    pub order: usize,
    /// Stencil order for the refinement studies.
    pub flat_order: usize,
    pub primitive_tol: f64,
    pub closure_tol: f64,
    /// Largest holonomy per unit area accepted as Lagrangian.
    pub lagrangian_tol: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            lambda0: C64::new(1.0, 0.0),
            order: 8,
            flat_order: 2,
            primitive_tol: 1e-8,
            closure_tol: 1e-6,
            lagrangian_tol: 0.05,
        }
    }
}

/// A ratio of 4 within this band counts as second order.
pub const RATIO_BAND: f64 = 0.5;
/// Fine-grid residuals below this count as exact.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Surface {
    pub grid: Grid,
    pub frames: Vec<Mat3>,
    pub geometry: FamilyMember,
    pub samples: Vec<SurfaceSample>,
    pub vertices: Vec<[f64; 3]>,
}

fn order_gap(r: &crate::geometry::Refinement) -> f64 {
    if r.fine <= RESIDUAL_FLOOR {
        0.0
    } else {
        (r.ratio - 4.0).abs()
    }
}

/// Geometry of a frame field plus refinement studies against the same
/// field on `grid.refined()`.
pub fn surface_from_frames(
    frames: Vec<Mat3>,
    fine_frames: &[Mat3],
    grid: &Grid,
    cfg: &SurfaceConfig,
    report: &mut Report,
) -> Result<Surface, PipelineError> {
    let fine = grid.refined();
    let geo = frozen_geometry(frames.clone(), grid, cfg.order, f64::INFINITY, f64::INFINITY)?;
    report
        .check("frame_su3_defect", su3_defect(&frames), 1e-8)
        .check("primitivity", geo.conformal.primitivity, cfg.primitive_tol)
        .check("alpha2_alignment", geo.angle.alignment_defect, 1e-8)
        .check("beta_closure", geo.angle.closure_defect, cfg.closure_tol);
    let maslov = maslov_form(&geo.angle);
    report.check("maslov_closedness", maslov.closedness, cfg.closure_tol);
    report.info("maslov_cross_check", format!("{:.6e}", maslov.cross_check));

    let coarse_form = frame_form(&frames, grid, cfg.flat_order)?;
    let fine_form = frame_form(fine_frames, &fine, cfg.flat_order)?;
    let margin = cfg.flat_order / 2 + 1;
    let mask = |v: Vec<Option<f64>>| -> Vec<Option<f64>> {
        v.into_iter()
            .enumerate()
            .map(|(k, x)| x.filter(|_| grid.is_interior(k, margin)))
            .collect()
    };
    let flat = refinement(grid, &mask(curvature_norms(&coarse_form)), &curvature_norms(&fine_form));
    report.check("flatness_order", order_gap(&flat), RATIO_BAND);
    report.info("flatness_residual", format!("{:.6e}, refined {:.6e}, ratio {:.4}", flat.coarse, flat.fine, flat.ratio));
    let ca = lagrangian_angle(&coarse_form, 0.0, f64::INFINITY)?;
    let fa = lagrangian_angle(&fine_form, 0.0, f64::INFINITY)?;
    let stat = refinement(grid, &mask(stationarity_field(&ca)), &stationarity_field(&fa));
    report.check("stationarity_order", order_gap(&stat), RATIO_BAND);
    report.info("stationarity_residual", format!("{:.6e}, refined {:.6e}, ratio {:.4}", stat.coarse, stat.fine, stat.ratio));
    let comp = flatness_components(&geo.form);
    report.info(
        "flatness_components",
        format!("g2 {:.6e}, g0 {:.6e}, g-1 {:.6e}, g1 {:.6e}", comp[0], comp[1], comp[2], comp[3]),
    );

    let finite: Vec<f64> = geo.conformal.rho.iter().copied().filter(|r| r.is_finite()).collect();
    let min_e = finite.iter().fold(f64::INFINITY, |m, r| m.min(r.exp()));
    let max_e = finite.iter().fold(0.0f64, |m, r| m.max(r.exp()));
    report.info("conformal_factor_range", format!("{min_e:.6e}, {max_e:.6e}"));
    report.info("branch_points", geo.conformal.branch_points.len());

    let samples = surface_samples(&frames, &geo.conformal, &geo.angle, &maslov);
    let mut min_z3 = f64::INFINITY;
    let vertices = samples
        .iter()
        .map(|s| {
            let (v, w) = chart_vertex(&s.point);
            min_z3 = min_z3.min(w);
            v
        })
        .collect();
    report.info("mesh_chart", "(z1/z3, z2/z3) in R^4");
    report.info("mesh_projection", format!("{MESH_PROJECTION:?}"));
    report.info("mesh_min_abs_z3", format!("{min_z3:.6e}"));
    Ok(Surface {
        grid: *grid,
        frames,
        geometry: geo,
        samples,
        vertices,
    })
}

fn frozen(f: &ExtendedFrame, lambda0: C64) -> Vec<Mat3> {
    let n = f.n_samples();
    let t = lambda0.arg() / std::f64::consts::TAU * n as f64;
    if (t - t.round()).abs() < 1e-9 {
        f.frozen((t.round() as i64).rem_euclid(n as i64) as usize)
    } else {
        f.frozen_at(lambda0)
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub report: Report,
    /// `None` for the zero potential.
    pub surface: Option<Surface>,
    pub frame: Option<ExtendedFrame>,
}

pub fn check_lambda0(l: C64) -> Result<(), PipelineError> {
    if (l.norm() - 1.0).abs() > 1e-12 {
        return Err(PipelineError::Invalid(format!("lambda0 = {l} is not on the unit circle")));
    }
    Ok(())
}

/// Potential to extended frame to surface at lambda0.
pub fn build_surface(
    mu: &HoloPotential,
    grid: &Grid,
    spec: &LoopSpec,
    budget: &IntegrationBudget,
    cfg: &SurfaceConfig,
) -> Result<BuildOutput, PipelineError> {
    spec.validate()?;
    check_lambda0(cfg.lambda0)?;
    let v = validate_potential(mu);
    if !v.is_valid(1e-12) {
        return Err(PipelineError::Invalid(format!("potential fails validation: {v:?}")));
    }
    let mut report = Report::new("build");
    report.info("grid", format!("{:?} {} x {}", grid.domain(), grid.nx, grid.ny));
    report.info("loop", format!("N {} K {}", spec.n_samples, spec.fourier_cap));
    report.info("lambda0", format!("{} {}", cfg.lambda0.re, cfg.lambda0.im));
    if mu.is_zero() {
        report.warn("degenerate surface: zero potential gives a constant frame");
        return Ok(BuildOutput {
            report,
            surface: None,
            frame: None,
        });
    }
    let run = run_forward(mu, grid, spec, budget)?;
    let fine = run_forward(mu, &grid.refined(), spec, budget)?;
    let d = &run.frame.diagnostics;
    report
        .check("path_independence", run.field.path_residual, 1e-9)
        .check("frame_unitarity", d.max_unitarity_defect, spec.tol_unitary)
        .check("frame_twist", d.max_twist_defect, 1e-8)
        .check("under_resolved_nodes", d.under_resolved.len() as f64, 0.0);
    let sup = extract_maurer_cartan(&run.frame, cfg.order)?.support();
    report
        .check("alpha_out_of_band", sup.out_of_band_z.max(sup.out_of_band_zbar), 1e-8)
        .check("alpha_pp_minus1", sup.alpha_pp_minus1, 1e-8)
        .check("alpha_reality", sup.reality_defect, 1e-8);
    let surface = surface_from_frames(
        frozen(&run.frame, cfg.lambda0),
        &frozen(&fine.frame, cfg.lambda0),
        grid,
        cfg,
        &mut report,
    )?;
    Ok(BuildOutput {
        report,
        surface: Some(surface),
        frame: Some(run.frame),
    })
}

/// Closed-form fixtures available to `example`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExampleName {
    Rp2,
    Clifford,
    Vacuum,
}

impl ExampleName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rp2" => Some(ExampleName::Rp2),
            "clifford" => Some(ExampleName::Clifford),
            "vacuum" => Some(ExampleName::Vacuum),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleName::Rp2 => "rp2",
            ExampleName::Clifford => "clifford",
            ExampleName::Vacuum => "vacuum",
        }
    }

    pub fn default_grid(self) -> Grid {
        let g = match self {
            ExampleName::Rp2 => Grid::new([-0.5, -0.5, 0.5, 0.5], 65, 65),
            ExampleName::Clifford => Grid::new([0.0, 0.0, std::f64::consts::PI, std::f64::consts::TAU / 3f64.sqrt()], 65, 65),
            ExampleName::Vacuum => Grid::new([-0.4, -0.4, 0.4, 0.4], 33, 33),
        };
        g.expect("fixed grids are valid")
    }
}

/// b = e^{i pi/4}/2, c = i b.
pub fn default_vacuum() -> VacuumParams {
    VacuumParams::minimal(C64::from_polar(0.5, std::f64::consts::FRAC_PI_4)).expect("immersed")
}

/// Closed-form frames for an example, on `grid` and its refinement.
pub fn example_frames(name: ExampleName, grid: &Grid, n_samples: usize, lambda0: C64) -> Result<(Vec<Mat3>, Vec<Mat3>), PipelineError> {
    let fine = grid.refined();
    Ok(match name {
        ExampleName::Rp2 => (frame_field(grid, rp2_frame), frame_field(&fine, rp2_frame)),
        ExampleName::Clifford => (frame_field(grid, clifford_frame), frame_field(&fine, clifford_frame)),
        ExampleName::Vacuum => {
            let p = default_vacuum();
            (
                frozen(&vacuum_extended_frame(&p, grid, n_samples)?, lambda0),
                frozen(&vacuum_extended_frame(&p, &fine, n_samples)?, lambda0),
            )
        }
    })
}

pub fn example_surface(name: ExampleName, grid: &Grid, n_samples: usize, cfg: &SurfaceConfig) -> Result<(Surface, Report), PipelineError> {
    check_lambda0(cfg.lambda0)?;
    let mut report = Report::new(&format!("example {}", name.as_str()));
    report.info("grid", format!("{:?} {} x {}", grid.domain(), grid.nx, grid.ny));
    if name == ExampleName::Vacuum {
        let p = default_vacuum();
        report.info("vacuum_b", format!("{} {}", p.b.re, p.b.im));
        report.info("vacuum_c", format!("{} {}", p.c.re, p.c.im));
    }
    let (c, f) = example_frames(name, grid, n_samples, cfg.lambda0)?;
    let s = surface_from_frames(c, &f, grid, cfg, &mut report)?;
    Ok((s, report))
}

#[derive(Debug, Clone)]
pub struct ConeOutput {
    pub report: Report,
    /// Horizontal lift by the frame twist.
    pub lift: Vec<Vector3<C64>>,
    pub mesh: ConeMesh,
}

/// Legendrian lift of a surface, checked against flat-section transport,
/// and the cone over it.
pub fn cone_from_surface(s: &Surface, radii: &[f64], cfg: &SurfaceConfig) -> Result<ConeOutput, PipelineError> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(PipelineError::Invalid("radii must be positive".into()));
    }
    let g = s.grid;
    let mut report = Report::new("cone");
    let lf = legendrian_frame(&s.frames, &s.geometry.angle, cfg.closure_tol)?;
    report
        .check("legendrian_det", lf.det_defect, 1e-10)
        .check("legendrian_centre", legendrian_centre_defect(&lf, &g, cfg.order)?, 1e-8)
        .check("horizontality", horizontality_residual(&lf.lift, &g, cfg.order)?, 1e-8);
    let (ang, one_sided) = cone_lagrangian_angle(&lf.lift, &g, cfg.order)?;
    let transfer = (0..g.len())
        .filter(|k| !one_sided[*k])
        .map(|k| angle_gap(ang[k], s.geometry.angle.beta[k]))
        .fold(0.0, f64::max);
    report.check("angle_transfer", transfer, 1e-8);
    let points: Vec<Vector3<C64>> = s.frames.iter().map(project_cp2).collect();
    let s0 = lf.lift[g.idx(g.base.0, g.base.1)];
    let t = flat_section_transport(&points, &g, s0, cfg.lagrangian_tol)?;
    report.check("holonomy_per_area", t.holonomy_defect, cfg.lagrangian_tol);
    let gap = t
        .lift
        .iter()
        .zip(&lf.lift)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    report.check("route_agreement", gap, 1e-6);
    let mesh = cone_mesh(&lf.lift, radii, &g, cfg.order)?;
    report.check("cone_lagrangian", mesh.lagrangian_residual, 1e-8);
    report.info("radii", format!("{radii:?}"));
    report.info("cone_projection", format!("{CONE_PROJECTION:?}"));
    if mesh.is_degenerate() {
        report.warn("degenerate cone: lift has zero area");
    }
    Ok(ConeOutput {
        report,
        lift: lf.lift,
        mesh,
    })
}

/// R^6 to R^3 for cone meshes: the real parts of z1, z2, z3.
pub const CONE_PROJECTION: [[f64; 6]; 3] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
];

pub fn project_cone(points: &[[f64; 6]]) -> Vec<[f64; 3]> {
    points
        .iter()
        .map(|p| {
            let mut v = [0.0; 3];
            for (row, out) in CONE_PROJECTION.iter().zip(v.iter_mut()) {
                *out = row.iter().zip(p).map(|(m, x)| m * x).sum();
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clifford_example_and_cone() {
        let g = Grid::new([0.0, 0.0, 1.0, 1.0], 17, 17).unwrap();
        let cfg = SurfaceConfig::default();
        let (s, r) = example_surface(ExampleName::Clifford, &g, 16, &cfg).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(s.vertices.len(), g.len());
        let c = cone_from_surface(&s, &[0.5, 1.0], &cfg).unwrap();
        assert!(c.report.passed(), "{}", c.report);
        assert_eq!(c.mesh.points.len(), 2 * g.len());
    }

    #[test]
    fn zero_potential_warns() {
        let g = Grid::new([-0.1, -0.1, 0.1, 0.1], 9, 9).unwrap();
        let out = build_surface(
            &HoloPotential::new(),
            &g,
            &LoopSpec::new(16, 2).unwrap(),
            &IntegrationBudget::default(),
            &SurfaceConfig::default(),
        )
        .unwrap();
        assert!(out.surface.is_none());
        assert_eq!(out.report.warnings.len(), 1);
    }

    #[test]
    fn vacuum_build_matches_closed_form() {
        let p = default_vacuum();
        let g = Grid::new([-0.2, -0.2, 0.2, 0.2], 13, 13).unwrap();
        let spec = LoopSpec::new(32, 6).unwrap().with_tolerances(1e-10, 1e-8, 1e-6).unwrap();
        let out = build_surface(
            &crate::fixtures::vacuum_potential(&p),
            &g,
            &spec,
            &IntegrationBudget::default(),
            &SurfaceConfig::default(),
        )
        .unwrap();
        assert!(out.report.passed(), "{}", out.report);
        let s = out.surface.unwrap();
        for r in &s.geometry.conformal.rho {
            assert!((r.exp() - p.e_rho()).abs() < 1e-8);
        }
    }
}
