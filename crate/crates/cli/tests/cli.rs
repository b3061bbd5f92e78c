use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hslag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hslag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 8] = [
    "--nx",
    "17",
    "--ny",
    "17",
    "--domain=-0.2,-0.2,0.2,0.2",
    "--lambda-samples",
    "32",
    "--fourier-cap",
];

fn small(extra: &[&str]) -> Vec<String> {
    SMALL.iter().chain(["6"].iter()).chain(extra.iter()).map(|s| s.to_string()).collect()
}

fn run(args: Vec<String>) -> Output {
    let v: Vec<&str> = args.iter().map(String::as_str).collect();
    hslag(&v)
}

#[test]
fn vacuum_example_then_build() {
    let dir = tempfile::tempdir().unwrap();
    let ex = dir.path().join("ex");
    let o = hslag(&["example", "vacuum", "--out", p(&ex)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["surface.obj", "samples.txt", "report.txt", "potential.txt"] {
        assert!(ex.join(f).is_file(), "{f}");
    }

    let b = dir.path().join("b");
    let mut args = vec!["build".to_string(), "--potential".into(), p(&ex.join("potential.txt")).into()];
    args.extend(small(&["--out", p(&b)]));
    let o = run(args.clone());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let report = fs::read_to_string(b.join("report.txt")).unwrap();
    assert!(report.contains("check = flatness_order,"));
    assert!(report.contains("info = flatness_residual,"));
    assert!(report.ends_with("result = pass\n"));
    // every check name once
    let names: Vec<&str> = report
        .lines()
        .filter_map(|l| l.strip_prefix("check = "))
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let mut uniq = names.clone();
    uniq.sort();
    uniq.dedup();
    assert_eq!(uniq.len(), names.len());

    let obj = fs::read_to_string(b.join("surface.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 17 * 17);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 2 * 16 * 16);
    let samples = fs::read_to_string(b.join("samples.txt")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 17 * 17);

    // same config, same bytes
    let b2 = dir.path().join("b2");
    let mut again = vec!["build".to_string(), "--potential".into(), p(&ex.join("potential.txt")).into()];
    again.extend(small(&["--out", p(&b2)]));
    assert_eq!(run(again).status.code(), Some(0));
    assert_eq!(fs::read(b.join("report.txt")).unwrap(), fs::read(b2.join("report.txt")).unwrap());

    // the archive re-verifies; a tampered one is rejected
    let arc = b.join("frame.archive");
    let o = hslag(&["verify", p(&arc)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = fs::read_to_string(&arc).unwrap();
    let bad = dir.path().join("bad.archive");
    fs::write(&bad, text.replacen("node = 0 0", "node = 0 1", 1)).unwrap();
    let o = hslag(&["verify", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checksum"));
}

#[test]
fn zero_potential_warns() {
    let dir = tempfile::tempdir().unwrap();
    let pot = dir.path().join("zero.txt");
    fs::write(&pot, "[case]\nname = CP2\n").unwrap();
    let out = dir.path().join("o");
    let o = hslag(&["build", "--potential", p(&pot), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning: degenerate surface"));
    assert!(stdout(&o).contains("warning = degenerate surface"));
    assert!(!out.join("surface.obj").exists());
}

#[test]
fn malformed_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("[case]\nname = CP2\n[coefficient]\nk = -3\n", "line 4"),
        ("[case]\nname = CP2\ncolour = red\n", "line 3"),
        ("[case]\nname = CP2\n[coefficient]\nk = 0\nentry = 0 2 ; 0 1 0\n", "not twisted"),
    ] {
        let pot = dir.path().join("bad.txt");
        fs::write(&pot, text).unwrap();
        let o = hslag(&["build", "--potential", p(&pot), "--out", p(dir.path())]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(needle), "{}", stderr(&o));
    }
    let o = hslag(&["build", "--potential", p(&dir.path().join("missing.txt"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = hslag(&["example", "torus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hslag(&["example", "clifford", "--lambda0", "2,0", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_convergence_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let pot = dir.path().join("big.txt");
    fs::write(
        &pot,
        "[case]\nname = CP2\n[coefficient]\nk = -1\n\
         entry = 0 2 ; 0 20 0\nentry = 1 2 ; 0 0 -20\nentry = 2 0 ; 0 -20 0\nentry = 2 1 ; 0 0 20\n",
    )
    .unwrap();
    let o = hslag(&[
        "build",
        "--potential",
        p(&pot),
        "--nx",
        "9",
        "--ny",
        "9",
        "--domain=-1,-1,1,1",
        "--lambda-samples",
        "32",
        "--fourier-cap",
        "6",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("did not converge at nodes [(0, 0)"));
}

#[test]
fn verify_suites() {
    let o = hslag(&["verify", "algebra", "--case", "CP1xCP1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("check = CP1xCP1.tau_order_four,"));
    assert!(!stdout(&o).contains("CP2."));
    let o = hslag(&["verify", "clifford"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = hslag(&["verify", "roundtrip", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("check = points,"));
    let o = hslag(&["verify", "nothing"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hslag(&["verify", "algebra", "--case", "CP3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn clifford_example_and_cones() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cl");
    let rep = dir.path().join("r.txt");
    let o = hslag(&["example", "clifford", "--out", p(&out), "--report", p(&rep)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = fs::read_to_string(&rep).unwrap();
    assert!(r.contains("check = cone.route_agreement,"));
    assert!(r.contains("info = mesh_projection,"));
    let cone = fs::read_to_string(out.join("cone.obj")).unwrap();
    assert_eq!(cone.lines().filter(|l| l.starts_with("v ")).count(), 2 * 65 * 65);
    let pts = fs::read_to_string(out.join("cone_points.txt")).unwrap();
    assert_eq!(pts.lines().count(), 1 + 2 * 65 * 65);

    let c = dir.path().join("c");
    let o = hslag(&["cone", "--example", "rp2", "--radii", "1,2,3", "--out", p(&c)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let pts = fs::read_to_string(c.join("cone_points.txt")).unwrap();
    assert_eq!(pts.lines().count(), 1 + 3 * 65 * 65);
    let o = hslag(&["cone", "--example", "rp2", "--radii", "-1", "--out", p(&c)]);
    assert_eq!(o.status.code(), Some(2));
    let o = hslag(&["cone", "--out", p(&c)]);
    assert_eq!(o.status.code(), Some(2));
}
