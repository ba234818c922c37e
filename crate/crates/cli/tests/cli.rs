use std::path::PathBuf;
use std::process::{Command, Output};

fn translab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_translab")).args(args).output().expect("run translab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    dir.join(name)
}

#[test]
fn classify_gamma_minus_reports_blowup() {
    let o = translab(&["classify", "--n", "3", "--s0", "1", "--w0", "-2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("class: GammaMinusBlowup"), "{text}");
    let s_star: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("blowup_s_star: "))
        .expect("blow-up line")
        .parse()
        .unwrap();
    assert!(s_star > 1.0 && s_star < 1.5494);
}

#[test]
fn classify_on_the_barrier_is_constant() {
    let o = translab(&["classify", "--n", "3", "--s0", "1", "--w0", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("class: ConstantPlus"));
    let o = translab(&["--json", "classify", "--n", "3", "--s0", "1", "--w0", "1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["class"]["tag"], "ConstantPlus");
}

#[test]
fn classify_rejects_nonpositive_s0() {
    let o = translab(&["classify", "--n", "3", "--s0", "0", "--w0", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("s0 must be positive"), "{}", stderr(&o));
}

#[test]
fn empty_portrait_is_header_only() {
    let o = translab(&["portrait", "--s0-count", "0", "--w0-count", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "trajectory_id,s0,w0,class,s,w\n");
}

#[test]
fn strip_portrait_stays_in_the_strip() {
    let o = translab(&["portrait", "--n", "3", "--s0-count", "4", "--w0-count", "4", "--samples", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let w: f64 = rec[5].parse().unwrap();
        assert!(w.abs() < 1.0 || (w.abs() - 1.0).abs() < 1e-15, "{rec:?}");
        assert!(matches!(&rec[3], "BelowBowl" | "AboveBowl" | "Bowl"), "{rec:?}");
        rows += 1;
    }
    assert!(rows >= 16);
}

#[test]
fn gamma_plus_portrait_marks_the_separatrix() {
    let o = translab(&["portrait", "--region", "gamma_plus", "--s0-count", "2", "--w0-count", "3", "--samples", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Separatrix"));
    assert!(text.contains("GammaPlusGlobal") || text.contains("GammaPlusBlowup"));
}

#[test]
fn outputs_are_deterministic() {
    let a = translab(&["portrait", "--s0-count", "3", "--w0-count", "3", "--samples", "7"]);
    let b = translab(&["portrait", "--s0-count", "3", "--w0-count", "3", "--samples", "7"]);
    assert_eq!(a.stdout, b.stdout);
    let a = translab(&["mesh", "bowl", "--n", "2", "--angular", "16", "--profile-samples", "20"]);
    let b = translab(&["mesh", "bowl", "--n", "2", "--angular", "16", "--profile-samples", "20"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bowl_mesh_counts() {
    let path = scratch("bowl.obj");
    let o = translab(&[
        "mesh", "bowl", "--n", "2", "--angular", "64", "--profile-samples", "200", "-o", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&path).unwrap();
    let v = text.lines().filter(|l| l.starts_with("v ")).count();
    let f: Vec<[usize; 3]> = text
        .lines()
        .filter_map(|l| l.strip_prefix("f "))
        .map(|l| {
            let idx: Vec<usize> = l.split(' ').map(|t| t.parse().unwrap()).collect();
            [idx[0], idx[1], idx[2]]
        })
        .collect();
    assert_eq!(v, 12800);
    assert_eq!(f.len(), 2 * 64 * 199);
    assert!(f.iter().flatten().all(|&i| i >= 1 && i <= v));
    assert!(text.contains("# vertices: 12800"));
}

#[test]
fn hybrid_mesh_marks_the_cone() {
    let path = scratch("hybrid.obj");
    let o = translab(&["mesh", "hybrid", "--extent", "2", "--h", "0.02", "-o", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 201 * 201);
    assert!(text.lines().any(|l| l.starts_with("l ")));
}

#[test]
fn higher_dimensional_mesh_emits_profile_csv() {
    let o = translab(&["mesh", "bowl", "--n", "3", "--profile-samples", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("s,f,df,ddf\n"));
}

#[test]
fn verify_const_fails_with_minus_one() {
    let o = translab(&["verify", "const"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("R = -1 at every node"), "{text}");
    assert!(text.contains("result: FAIL"));
}

#[test]
fn verify_hybrid_reports_jumps() {
    let o = translab(&["--json", "verify", "hybrid", "--order", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["jump_decay"].as_array().unwrap().len(), 3);
    let o = translab(&["verify", "hybrid", "--order", "2", "--mismatched"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_bowl_is_second_order() {
    let o = translab(&["--json", "verify", "bowl", "--n", "2", "--h", "0.04,0.02,0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let p = v["convergence"]["order"].as_f64().unwrap();
    assert!((1.7..=2.3).contains(&p), "{p}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let path = scratch("run.json");
    std::fs::write(&path, r#"{"n": 5, "grid": {"s0_count": 2, "w0_count": 2, "trajectory_samples": 3}}"#).unwrap();
    let cfg = path.to_str().unwrap();
    let o = translab(&["--config", cfg, "classify", "--s0", "1", "--w0", "0.5"]);
    assert!(stdout(&o).contains("n: 5"));
    let o = translab(&["--config", cfg, "--n", "2", "classify", "--s0", "1", "--w0", "0.5"]);
    assert!(stdout(&o).contains("n: 2"));
    let o = translab(&["--config", cfg, "portrait"]);
    assert_eq!(stdout(&o).lines().count(), 1 + 4 * 3);
    let o = translab(&["--config", cfg, "portrait", "--samples", "2"]);
    assert_eq!(stdout(&o).lines().count(), 1 + 4 * 2);
}

#[test]
fn bad_inputs_exit_two() {
    let o = translab(&["hybrid", "--quadrants", "1,3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = translab(&["--action", "boost", "--region", "strip", "classify", "--s0", "1", "--w0", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let path = scratch("bad.json");
    std::fs::write(&path, r#"{"unknown_key": 1}"#).unwrap();
    let o = translab(&["--config", path.to_str().unwrap(), "bowl"]);
    assert_eq!(o.status.code(), Some(2));
    let o = translab(&["-o", "/nonexistent/dir/out.csv", "bowl"]);
    assert_eq!(o.status.code(), Some(2));
}
