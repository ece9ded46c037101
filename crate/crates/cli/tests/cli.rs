use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ncl(args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ncl"));
    c.args(args);
    if let Some(t) = threads {
        c.env("NCL_THREADS", t);
    }
    c.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL_FIG: &str = r#"{"seeds":[0,1],"ks":[5],"optimizer":{"algorithm":"next","iters":15,"metric_every":5},
  "operators":[{"consensus":"max"},{"consensus":"pw_mean","p":2},{"consensus":"grad_cube"}]}"#;

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncl(&["validate", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS degeneracy_chain"));
    assert!(!text.contains("FAIL"));
    assert!(dir.path().join("validate.json").exists());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out_dir = d.join("out");
    let o = out_dir.to_str().unwrap();
    for (name, text) in [
        ("unknown.json", r#"{"bogus":1}"#),
        ("syntax.json", "{"),
        ("seeds.json", r#"{"seeds":[]}"#),
        ("delta.json", r#"{"operators":[{"consensus":"grad_hull","delta":1.5}]}"#),
        ("mismatch.json", r#"{"scenario":"validate"}"#),
        ("topology.json", r#"{"network":{"topology":"ring"}}"#),
    ] {
        let path = write(d, name, text);
        let out = ncl(&["sweep", "--config", &path, "--out", o], None);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = ncl(&["sweep", "--config", d.join("missing.json").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let out = ncl(&["sweep", "--seed", "notanumber"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn consensus_example_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"network":{"topology":"ring","n":5,"weights":{"self":0.6,"edge":0.2}},
            "initial":[[7],[2],[12],[2],[7]],
            "operators":[{"consensus":"linear"},{"consensus":"max"}],
            "consensus":{"max_iters":4}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = ncl(&["consensus", "--config", &cfg, "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let max = fs::read_to_string(out_dir.join("consensus/max.csv")).unwrap();
    let row: Vec<&str> = max.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert!((row[2].parse::<f64>().unwrap() - 0.2).abs() < 1e-15);
    assert!(out_dir.join("consensus.svg").exists());
}

#[test]
fn reproduce_is_deterministic_across_threads_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fig.json", SMALL_FIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let run = |out: &Path, threads: &str, extra: &[&str]| {
        let mut args = vec!["reproduce", "--figure", "3", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = ncl(&args, Some(threads));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    run(&a, "1", &[]);
    run(&b, "4", &[]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 6 * 2 + 2);
    assert_eq!(ta, tb);
    assert!(ta.iter().any(|(p, _)| p.ends_with("grad_cube_seed8.json")));

    let text = run(&a, "2", &["--resume"]);
    assert!(text.contains("6 runs (6 resumed)"), "{text}");
    assert_eq!(tree(&a), tb);
}

#[test]
fn optimize_writes_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "o.json",
        r#"{"seeds":[3],"problem":{"kind":"strongly_convex","n":5,"dim":4,"eig_range":[5,20],"center_range":[5,10]},
            "network":{"topology":"ring","n":5},"init":{"kind":"uniform","a":0,"b":1},
            "optimizer":{"algorithm":"dgd","schedule":{"kind":"constant","alpha":0.01},"iters":50}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = ncl(&["optimize", "--config", &cfg, "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("optimize/runs/dgd_seed3.json")).unwrap()).unwrap();
    for key in ["config", "seed", "iters", "metrics", "final", "stamp"] {
        assert!(rec.get(key).is_some(), "{key}");
    }
    assert!(rec["final"]["F"].is_number());
    assert_eq!(rec["stamp"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn divergence_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.json",
        r#"{"seeds":[1],"optimizer":{"algorithm":"dgd","schedule":{"kind":"constant","alpha":100},"iters":500}}"#,
    );
    let out = ncl(&["optimize", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}
