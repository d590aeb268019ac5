use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embcache")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_trace(dir: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    ok(&["gen", "--out", p(&out), "--tables", "300,300", "--accesses", "4000", "--seed", seed]);
    out
}

#[test]
fn gen_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let a = small_trace(d.path(), "a.txt", "7");
    let b = small_trace(d.path(), "b.txt", "7");
    let c = small_trace(d.path(), "c.txt", "8");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    // rerunning overwrites with identical bytes
    let before = fs::read(&a).unwrap();
    small_trace(d.path(), "a.txt", "7");
    assert_eq!(before, fs::read(&a).unwrap());
}

#[test]
fn sweep_optgen_dominates_every_policy() {
    let d = tempfile::tempdir().unwrap();
    let t = small_trace(d.path(), "t.txt", "3");
    let out = d.path().join("sweep.csv");
    ok(&["sweep", "--trace", p(&t), "--policies", "lru,lfu,srrip,optgen", "--capacities", "1%,5%,10%,20%,30%,64", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<(String, usize, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 24);
    for r in &rows {
        let opt = rows.iter().find(|o| o.0 == "optgen" && o.1 == r.1).unwrap();
        assert!(opt.2 >= r.2, "{r:?} beats optgen");
    }
}

#[test]
fn replay_without_checkpoint_is_a_missing_artifact() {
    let d = tempfile::tempdir().unwrap();
    let t = small_trace(d.path(), "t.txt", "1");
    let out = d.path().join("b.csv");
    let o = run(&["replay", "--trace", p(&t), "--out", p(&out)]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error[missing-artifact]:"), "{err}");
    assert_eq!(err.lines().count(), 1);

    let ghost = d.path().join("nope.ckpt");
    let o = run(&["replay", "--trace", p(&t), "--caching", p(&ghost), "--out", p(&out)]);
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error[missing-artifact]:"));
}

#[test]
fn bad_input_reports_a_category() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--trace", p(&d.path().join("x.txt")), "--out-dir", p(d.path())]);
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error[missing-artifact]:"));
    let bad = d.path().join("bad.txt");
    fs::write(&bad, "tables: 4\n0,9\n").unwrap();
    let o = run(&["analyze", "--trace", p(&bad), "--out-dir", p(d.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error["));
    let o = run(&["sweep", "--nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error[usage]:"));
}

#[test]
fn config_file_presets_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.conf");
    fs::write(&cfg, "tables = 200,200\naccesses = 3000\ngen.seed = 5\n").unwrap();
    let a = d.path().join("a.txt");
    let b = d.path().join("b.txt");
    ok(&["--config", p(&cfg), "gen", "--out", p(&a)]);
    ok(&["gen", "--out", p(&b), "--tables", "200,200", "--accesses", "3000", "--seed", "5"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    // explicit flags win
    ok(&["--config", p(&cfg), "gen", "--out", p(&a), "--seed", "6"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn full_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let t = small_trace(d.path(), "t.txt", "2");
    let stats = ok(&["analyze", "--trace", p(&t), "--out-dir", p(&d.path().join("an"))]);
    assert!(stats.contains("unique"));
    assert!(d.path().join("an/reuse_histogram.csv").exists());

    let ds = d.path().join("ds.txt");
    ok(&["label", "--trace", p(&t), "--capacity", "20%", "--out", p(&ds)]);
    let cm = d.path().join("cm.ckpt");
    let pf = d.path().join("pf.ckpt");
    let small = ["--steps", "5", "--hidden", "4", "--id-dim", "4", "--table-dim", "2", "--batch", "8"];
    let mut args = vec!["train", "--dataset", p(&ds), "--kind", "caching", "--out", p(&cm)];
    args.extend(small);
    ok(&args);
    let curve = d.path().join("curve.csv");
    let mut args = vec!["train", "--dataset", p(&ds), "--kind", "prefetch", "--out", p(&pf), "--curve", p(&curve)];
    args.extend(small);
    ok(&args);
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 6);

    let b = d.path().join("b.csv");
    ok(&["replay", "--trace", p(&t), "--caching", p(&cm), "--prefetch", p(&pf), "--out", p(&b)]);
    ok(&["replay", "--trace", p(&t), "--policy", "lru", "--out", p(&b), "--append"]);
    ok(&["replay", "--trace", p(&t), "--oracle", "--out", p(&b), "--append"]);
    let text = fs::read_to_string(&b).unwrap();
    assert_eq!(text.lines().count(), 4);
    let total: usize = text.lines().nth(1).unwrap().split(',').skip(2).take(3).map(|x| x.parse::<usize>().unwrap()).sum();
    assert_eq!(total, 4000);

    let r = d.path().join("report.csv");
    let fit = d.path().join("fit.csv");
    ok(&["report", "--breakdown", p(&b), "--out", p(&r), "--fit-out", p(&fit), "--seed", "3"]);
    let rep = fs::read_to_string(&r).unwrap();
    assert!(rep.lines().next().unwrap().ends_with("hit_rate,estimated_ms"));
    assert_eq!(rep.lines().count(), 4);
    assert!(fs::read_to_string(&fit).unwrap().starts_with("intercept_ms,slope_ms"));

    // a checkpoint from another vocabulary is refused
    let other = d.path().join("o.txt");
    ok(&["gen", "--out", p(&other), "--tables", "100", "--accesses", "2000"]);
    let o = run(&["replay", "--trace", p(&other), "--caching", p(&cm), "--out", p(&b)]);
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error[vocabulary-mismatch]:"));
}
