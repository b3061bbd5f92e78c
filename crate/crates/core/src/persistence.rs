//! Text formats: potential files, frame archives, sample and point tables,
//! OBJ meshes and reports. Floats are written with 17 significant digits so
//! they re-parse to the same bits.

use crate::algebra::{project3, CaseName, C64, Mat3};
use crate::dpw::{ExtendedFrame, Grid, HoloPotential};
use crate::geometry::SurfaceSample;
use crate::loops::{LoopSpec, TwistedGroupLoop};
use crate::report::Report;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ARCHIVE_VERSION: (u32, u32) = (1, 0);
const ARCHIVE_MAGIC: &str = "hslag-frame-archive";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    Checksum { stored: String, computed: String },
    #[error("unsupported archive version {0}")]
    Version(String),
    #[error("{0}")]
    Shape(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> PersistError {
    PersistError::Parse { line, msg: msg.into() }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), PersistError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| PersistError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String, PersistError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, PersistError> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("bad number '{}'", tok.trim())))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, PersistError> {
    tok.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(line, format!("bad integer '{}'", tok.trim())))
}

/// Contents of a potential file.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFile {
    pub case: CaseName,
    /// domain, nx, ny
    pub grid: Option<([f64; 4], usize, usize)>,
    /// samples, fourier cap
    pub loop_spec: Option<(usize, usize)>,
    pub potential: HoloPotential,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Case,
    Grid,
    Loop,
    Coefficient,
}

struct Block {
    line: usize,
    k: Option<i32>,
    /// (degree, row, col, value)
    entries: Vec<(usize, usize, usize, C64)>,
}

fn finish_block(b: Block, mu: &mut HoloPotential) -> Result<(), PersistError> {
    let k = b.k.ok_or_else(|| parse_err(b.line, "coefficient block without k"))?;
    let max_deg = b.entries.iter().map(|e| e.0).max();
    let Some(max_deg) = max_deg else { return Ok(()) };
    let mut mats = vec![Mat3::zeros(); max_deg + 1];
    for (d, r, c, v) in b.entries {
        mats[d][(r, c)] += v;
    }
    for (d, m) in mats.into_iter().enumerate() {
        let off = (m - project3(&m, k)).norm();
        if off > 1e-12 * (1.0 + m.norm()) {
            return Err(parse_err(
                b.line,
                format!("coefficient k = {k}, degree {d} is not twisted: off-eigenspace part {off:.3e}"),
            ));
        }
        let prev = mu.coeff(k, d);
        mu.set(k, d, prev + m);
    }
    Ok(())
}

pub fn parse_potential(text: &str) -> Result<PotentialFile, PersistError> {
    let mut sec = Section::None;
    let mut case = None;
    let mut domain = None;
    let (mut nx, mut ny) = (None, None);
    let (mut samples, mut cap) = (None, None);
    let mut mu = HoloPotential::new();
    let mut block: Option<Block> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if s.starts_with('[') {
            if let Some(b) = block.take() {
                finish_block(b, &mut mu)?;
            }
            sec = match s {
                "[case]" => Section::Case,
                "[grid]" => Section::Grid,
                "[loop]" => Section::Loop,
                "[coefficient]" => {
                    block = Some(Block {
                        line,
                        k: None,
                        entries: Vec::new(),
                    });
                    Section::Coefficient
                }
                other => return Err(parse_err(line, format!("unknown section {other}"))),
            };
            continue;
        }
        let (key, val) = s
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected key = value"))?;
        let (key, val) = (key.trim(), val.trim());
        match (sec, key) {
            (Section::Case, "name") => {
                case = Some(CaseName::parse(val).ok_or_else(|| parse_err(line, format!("unknown case {val}")))?)
            }
            (Section::Grid, "nx") => nx = Some(parse_usize(val, line)?),
            (Section::Grid, "ny") => ny = Some(parse_usize(val, line)?),
            (Section::Grid, "domain") => {
                let v: Vec<f64> = val.split(',').map(|t| parse_f64(t, line)).collect::<Result<_, _>>()?;
                domain = Some(<[f64; 4]>::try_from(v).map_err(|_| parse_err(line, "domain needs x0,y0,x1,y1"))?);
            }
            (Section::Loop, "samples") => samples = Some(parse_usize(val, line)?),
            (Section::Loop, "fourier_cap") => cap = Some(parse_usize(val, line)?),
            (Section::Coefficient, "k") => {
                let k: i32 = val.parse().map_err(|_| parse_err(line, format!("bad mode '{val}'")))?;
                if k < -2 {
                    return Err(parse_err(line, format!("mode k = {k} below -2")));
                }
                let b = block.as_mut().expect("coefficient section has a block");
                b.k = Some(k);
                b.line = line;
            }
            (Section::Coefficient, "entry") => {
                let mut parts = val.split(';');
                let head: Vec<&str> = parts.next().unwrap_or("").split_whitespace().collect();
                if head.len() != 2 {
                    return Err(parse_err(line, "entry needs 'row col ; deg re im ; ...'"));
                }
                let (r, c) = (parse_usize(head[0], line)?, parse_usize(head[1], line)?);
                if r > 2 || c > 2 {
                    return Err(parse_err(line, "row and col must be 0, 1 or 2"));
                }
                let b = block.as_mut().expect("coefficient section has a block");
                for term in parts {
                    let t: Vec<&str> = term.split_whitespace().collect();
                    if t.len() != 3 {
                        return Err(parse_err(line, "each term needs 'deg re im'"));
                    }
                    let d = parse_usize(t[0], line)?;
                    b.entries.push((d, r, c, C64::new(parse_f64(t[1], line)?, parse_f64(t[2], line)?)));
                }
            }
            (Section::None, _) => return Err(parse_err(line, format!("key '{key}' outside a section"))),
            _ => return Err(parse_err(line, format!("unknown key '{key}'"))),
        }
    }
    if let Some(b) = block.take() {
        finish_block(b, &mut mu)?;
    }
    let grid = match (domain, nx, ny) {
        (Some(d), Some(x), Some(y)) => Some((d, x, y)),
        (None, None, None) => None,
        _ => return Err(parse_err(0, "[grid] needs domain, nx and ny together")),
    };
    let loop_spec = match (samples, cap) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(parse_err(0, "[loop] needs samples and fourier_cap together")),
    };
    Ok(PotentialFile {
        case: case.unwrap_or(CaseName::Cp2),
        grid,
        loop_spec,
        potential: mu,
    })
}

pub fn read_potential(path: &Path) -> Result<PotentialFile, PersistError> {
    parse_potential(&read_text(path)?)
}

pub fn format_potential(pf: &PotentialFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[case]\nname = {}", pf.case.as_str());
    if let Some((d, nx, ny)) = pf.grid {
        let _ = writeln!(s, "\n[grid]\nnx = {nx}\nny = {ny}\ndomain = {},{},{},{}", f(d[0]), f(d[1]), f(d[2]), f(d[3]));
    }
    if let Some((n, k)) = pf.loop_spec {
        let _ = writeln!(s, "\n[loop]\nsamples = {n}\nfourier_cap = {k}");
    }
    for (k, mats) in pf.potential.modes() {
        let _ = writeln!(s, "\n[coefficient]\nk = {k}");
        for r in 0..3 {
            for c in 0..3 {
                let terms: Vec<String> = mats
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m[(r, c)] != C64::new(0.0, 0.0))
                    .map(|(d, m)| format!("{d} {} {}", f(m[(r, c)].re), f(m[(r, c)].im)))
                    .collect();
                if !terms.is_empty() {
                    let _ = writeln!(s, "entry = {r} {c} ; {}", terms.join(" ; "));
                }
            }
        }
    }
    s
}

pub fn write_potential(path: &Path, pf: &PotentialFile) -> Result<(), PersistError> {
    write_atomic(path, format_potential(pf).as_bytes())
}

/// Extended frame with the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameArchive {
    pub case: CaseName,
    pub grid: Grid,
    pub n_samples: usize,
    pub fourier_cap: usize,
    pub frames: Vec<TwistedGroupLoop>,
}

impl FrameArchive {
    pub fn new(case: CaseName, frame: &ExtendedFrame, spec: &LoopSpec) -> Self {
        FrameArchive {
            case,
            grid: frame.grid,
            n_samples: frame.n_samples(),
            fourier_cap: spec.fourier_cap,
            frames: frame.frames.clone(),
        }
    }

    pub fn to_extended_frame(&self) -> Result<ExtendedFrame, PersistError> {
        ExtendedFrame::from_frames(self.grid, self.frames.clone()).map_err(|e| PersistError::Shape(e.to_string()))
    }
}

pub fn format_archive(a: &FrameArchive) -> String {
    let g = &a.grid;
    let mut s = String::new();
    let _ = writeln!(s, "{ARCHIVE_MAGIC} {}.{}", ARCHIVE_VERSION.0, ARCHIVE_VERSION.1);
    let _ = writeln!(s, "case = {}", a.case.as_str());
    let _ = writeln!(
        s,
        "grid = {} {} {} {} {} {} {} {}",
        f(g.x0),
        f(g.y0),
        f(g.x1),
        f(g.y1),
        g.nx,
        g.ny,
        g.base.0,
        g.base.1
    );
    let _ = writeln!(s, "samples = {}", a.n_samples);
    let _ = writeln!(s, "fourier_cap = {}", a.fourier_cap);
    for (idx, fr) in a.frames.iter().enumerate() {
        let (i, j) = g.coords(idx);
        let z = g.z(i, j);
        let _ = writeln!(s, "node = {i} {j} {} {}", f(z.re), f(z.im));
        for m in fr.samples() {
            let mut row = Vec::with_capacity(18);
            for r in 0..3 {
                for c in 0..3 {
                    row.push(f(m[(r, c)].re));
                    row.push(f(m[(r, c)].im));
                }
            }
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    let sum = hex(&Sha256::digest(s.as_bytes()));
    let _ = writeln!(s, "sha256 = {sum}");
    s
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_archive(text: &str) -> Result<FrameArchive, PersistError> {
    let body_end = text
        .rfind("sha256 = ")
        .ok_or_else(|| parse_err(0, "missing checksum line"))?;
    let (body, tail) = text.split_at(body_end);
    let stored = tail.trim_start_matches("sha256 = ").trim().to_string();
    let computed = hex(&Sha256::digest(body.as_bytes()));
    if stored != computed {
        return Err(PersistError::Checksum { stored, computed });
    }
    let mut lines = body.lines().enumerate().map(|(n, l)| (n + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| parse_err(0, format!("truncated archive: expected {what}")));
    let (ln, head) = next("header")?;
    let ver = head
        .strip_prefix(ARCHIVE_MAGIC)
        .map(str::trim)
        .ok_or_else(|| parse_err(ln, "not a frame archive"))?;
    let major = ver.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major != Some(ARCHIVE_VERSION.0) {
        return Err(PersistError::Version(ver.to_string()));
    }
    let field = |(ln, l): (usize, &str), key: &str| -> Result<String, PersistError> {
        l.strip_prefix(key)
            .and_then(|r| r.trim_start().strip_prefix('='))
            .map(|r| r.trim().to_string())
            .ok_or_else(|| parse_err(ln, format!("expected '{key} = ...'")))
    };
    let l = next("case")?;
    let case_s = field(l, "case")?;
    let case = CaseName::parse(&case_s).ok_or_else(|| parse_err(l.0, format!("unknown case {case_s}")))?;
    let l = next("grid")?;
    let gt: Vec<String> = field(l, "grid")?.split_whitespace().map(String::from).collect();
    if gt.len() != 8 {
        return Err(parse_err(l.0, "grid needs 8 fields"));
    }
    let mut dom = [0.0; 4];
    for (d, t) in dom.iter_mut().zip(&gt[..4]) {
        *d = parse_f64(t, l.0)?;
    }
    let u: Vec<usize> = gt[4..].iter().map(|t| parse_usize(t, l.0)).collect::<Result<_, _>>()?;
    let grid = Grid::new(dom, u[0], u[1])
        .and_then(|g| g.with_base(u[2], u[3]))
        .map_err(|e| parse_err(l.0, e.to_string()))?;
    let l = next("samples")?;
    let n = parse_usize(&field(l, "samples")?, l.0)?;
    let l = next("fourier_cap")?;
    let k = parse_usize(&field(l, "fourier_cap")?, l.0)?;
    let mut frames = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let l = next("node")?;
        let nt: Vec<String> = field(l, "node")?.split_whitespace().map(String::from).collect();
        let (i, j) = grid.coords(idx);
        if nt.len() != 4 || parse_usize(&nt[0], l.0)? != i || parse_usize(&nt[1], l.0)? != j {
            return Err(parse_err(l.0, format!("expected node {i} {j}")));
        }
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, row) = next("matrix sample")?;
            let v: Vec<f64> = row.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<_, _>>()?;
            if v.len() != 18 {
                return Err(parse_err(ln, "matrix sample needs 18 numbers"));
            }
            samples.push(Mat3::from_fn(|r, c| C64::new(v[2 * (3 * r + c)], v[2 * (3 * r + c) + 1])));
        }
        frames.push(TwistedGroupLoop::from_samples(samples).map_err(|e| parse_err(l.0, e.to_string()))?);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing data before checksum"));
    }
    Ok(FrameArchive {
        case,
        grid,
        n_samples: n,
        fourier_cap: k,
        frames,
    })
}

pub fn write_archive(path: &Path, a: &FrameArchive) -> Result<(), PersistError> {
    write_atomic(path, format_archive(a).as_bytes())
}

pub fn read_archive(path: &Path) -> Result<FrameArchive, PersistError> {
    parse_archive(&read_text(path)?)
}

/// OBJ text for vertices on an nx-by-ny grid (index i + nx j), with each
/// quad split into two counterclockwise triangles. Several sheets may be
/// stacked; each holds nx * ny vertices.
pub fn format_obj(vertices: &[[f64; 3]], nx: usize, ny: usize, comments: &[String]) -> Result<String, PersistError> {
    let sheet = nx * ny;
    if sheet == 0 || vertices.len() % sheet != 0 {
        return Err(PersistError::Shape(format!(
            "{} vertices do not fill {nx} x {ny} sheets",
            vertices.len()
        )));
    }
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", f(v[0]), f(v[1]), f(v[2]));
    }
    for k in 0..vertices.len() / sheet {
        let o = k * sheet + 1;
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx.saturating_sub(1) {
                let a = o + i + nx * j;
                let (b, c, d) = (a + 1, a + 1 + nx, a + nx);
                let _ = writeln!(s, "f {a} {b} {c}\nf {a} {c} {d}");
            }
        }
    }
    Ok(s)
}

pub fn write_obj(path: &Path, vertices: &[[f64; 3]], nx: usize, ny: usize, comments: &[String]) -> Result<(), PersistError> {
    write_atomic(path, format_obj(vertices, nx, ny, comments)?.as_bytes())
}

pub const SAMPLES_HEADER: &str = "# i j re_z im_z re_p1 im_p1 re_p2 im_p2 re_p3 im_p3 rho beta re_maslov_z im_maslov_z";

pub fn format_samples(samples: &[SurfaceSample]) -> String {
    let mut s = String::from(SAMPLES_HEADER);
    s.push('\n');
    for x in samples {
        let _ = write!(s, "{} {} {} {}", x.i, x.j, f(x.z.re), f(x.z.im));
        for c in x.point.iter() {
            let _ = write!(s, " {} {}", f(c.re), f(c.im));
        }
        let _ = writeln!(s, " {} {} {} {}", f(x.rho), f(x.beta), f(x.maslov_z.re), f(x.maslov_z.im));
    }
    s
}

pub fn write_samples(path: &Path, samples: &[SurfaceSample]) -> Result<(), PersistError> {
    write_atomic(path, format_samples(samples).as_bytes())
}

/// Plain point table, one row of R^6 coordinates per line.
pub fn format_points(points: &[[f64; 6]]) -> String {
    let mut s = String::from("# re_z1 im_z1 re_z2 im_z2 re_z3 im_z3\n");
    for p in points {
        let row: Vec<String> = p.iter().map(|x| f(*x)).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn write_points(path: &Path, points: &[[f64; 6]]) -> Result<(), PersistError> {
    write_atomic(path, format_points(points).as_bytes())
}

pub fn write_report(path: &Path, r: &Report) -> Result<(), PersistError> {
    write_atomic(path, r.to_string().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::epsilon3;
    use crate::fixtures::{vacuum_extended_frame, vacuum_potential, VacuumParams};

    #[test]
    fn potential_round_trip_and_errors() {
        let p = VacuumParams::new(C64::new(0.3, 0.1), C64::new(-0.2, 0.6)).unwrap();
        let pf = PotentialFile {
            case: CaseName::Cp2,
            grid: Some(([-0.5, -0.5, 0.5, 0.5], 9, 9)),
            loop_spec: Some((64, 14)),
            potential: vacuum_potential(&p),
        };
        let text = format_potential(&pf);
        assert_eq!(parse_potential(&text).unwrap(), pf);

        let empty = parse_potential("[case]\nname = CP2\n").unwrap();
        assert!(empty.potential.is_zero());

        let e = parse_potential("[coefficient]\nk = -3\n").unwrap_err();
        assert!(matches!(e, PersistError::Parse { line: 2, .. }));
        let e = parse_potential("[grid]\nnx = 3\ncolour = red\n").unwrap_err();
        assert!(matches!(e, PersistError::Parse { line: 3, .. }));
        // epsilon lives in g_-1, not g_1
        let mut bad = HoloPotential::new();
        bad.set(1, 0, epsilon3());
        let t = format_potential(&PotentialFile {
            potential: bad,
            ..pf.clone()
        });
        let e = parse_potential(&t).unwrap_err().to_string();
        assert!(e.contains("not twisted"), "{e}");
    }

    #[test]
    fn archive_round_trip_exact() {
        let p = VacuumParams::minimal(C64::new(0.1, 0.4)).unwrap();
        let g = Grid::new([-0.1, -0.1, 0.1, 0.1], 3, 4).unwrap();
        let ef = vacuum_extended_frame(&p, &g, 8).unwrap();
        let a = FrameArchive::new(CaseName::Cp2, &ef, &LoopSpec::new(8, 1).unwrap());
        let text = format_archive(&a);
        assert_eq!(parse_archive(&text).unwrap(), a);

        let tampered = text.replacen("samples = 8", "samples = 9", 1);
        assert!(matches!(parse_archive(&tampered), Err(PersistError::Checksum { .. })));

        let body = text.split("sha256 = ").next().unwrap().replacen(" 1.0", " 2.0", 1);
        let resum = format!("{body}sha256 = {}\n", hex(&Sha256::digest(body.as_bytes())));
        assert!(matches!(parse_archive(&resum), Err(PersistError::Version(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.archive");
        write_archive(&path, &a).unwrap();
        assert_eq!(read_archive(&path).unwrap(), a);
    }

    #[test]
    fn obj_counts() {
        let (nx, ny) = (5, 4);
        let v = vec![[0.0; 3]; nx * ny];
        let s = format_obj(&v, nx, ny, &["x".into()]).unwrap();
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), nx * ny);
        assert_eq!(s.lines().filter(|l| l.starts_with("f ")).count(), 2 * (nx - 1) * (ny - 1));
        assert!(s.contains("f 1 2 7\nf 1 7 6"));
        assert!(format_obj(&v[1..], nx, ny, &[]).is_err());
    }

    #[test]
    fn empty_tables_are_header_only() {
        assert_eq!(format_samples(&[]), format!("{SAMPLES_HEADER}\n"));
        assert_eq!(format_points(&[]).lines().count(), 1);
    }
}
