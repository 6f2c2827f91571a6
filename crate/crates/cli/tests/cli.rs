use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/synthetic.tbl")
}

fn bansim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bansim")).args(args).env_remove("BANSIM_JOBS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn dry_run_prints_grid_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let table = fixture();
    let o = bansim(&["--table", table.to_str().unwrap(), "--out", out.to_str().unwrap(), "--dry-run"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "80850 runs: 7 postures x 7 strategies x 11 rates x 3 buffers x 50 seeds");
    assert!(!out.exists());
}

#[test]
fn dump_schedule_shows_walk_slots() {
    let table = fixture();
    let o = bansim(&["--table", table.to_str().unwrap(), "--dump-schedule", "walk"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("senders: {0,3,5,6}"), "{text}");
    for line in ["slot 0: node 5", "slot 1: node 3", "slot 2: node 0", "slot 3: node 6"] {
        assert!(text.contains(line), "missing `{line}` in\n{text}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    let table = fixture();
    fs::write(
        &cfg,
        format!("# small grid\ntable = {}\npostures = walk, run\nstrategies = plain\nrates = 1, 5\nbuffers = 100\nseeds = 2\n", table.display()),
    )
    .unwrap();
    let o = bansim(&["--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert_eq!(stdout(&o).trim(), "8 runs: 2 postures x 1 strategies x 2 rates x 1 buffers x 2 seeds");
    let o = bansim(&["--config", cfg.to_str().unwrap(), "--seeds", "5", "--rates", "1", "--dry-run"]);
    assert_eq!(stdout(&o).trim(), "10 runs: 2 postures x 1 strategies x 1 rates x 1 buffers x 5 seeds");
}

#[test]
fn small_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let table = fixture();
    let o = bansim(&[
        "--table", table.to_str().unwrap(),
        "--postures", "walk",
        "--strategies", "clpb,optflood",
        "--rates", "10",
        "--buffers", "100",
        "--seeds", "2",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["runs.csv", "aggregate.csv", "nodes.csv"] {
        assert!(stdout(&o).contains(&format!("wrote {}", out.join(f).display())));
    }
    assert_eq!(fs::read_to_string(out.join("runs.csv")).unwrap().lines().count(), 5);
}

#[test]
fn bad_input_fails_with_message() {
    let table = fixture();
    let t = table.to_str().unwrap();
    let cases: [&[&str]; 6] = [
        &["--dry-run"],
        &["--table", t, "--strategies", "gossip", "--dry-run"],
        &["--table", t, "--rates", "0", "--dry-run"],
        &["--table", t, "--buffers", "x", "--dry-run"],
        &["--table", t, "--sink", "9", "--dry-run"],
        &["--table", "/nonexistent/table.tbl", "--dump-schedule", "walk"],
    ];
    for args in cases {
        let o = bansim(args);
        assert!(!o.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn jobs_env_is_validated() {
    let table = fixture();
    let run = |jobs: &str| {
        Command::new(env!("CARGO_BIN_EXE_bansim"))
            .args(["--table", table.to_str().unwrap(), "--dry-run"])
            .env("BANSIM_JOBS", jobs)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    assert!(!run("0").status.success());
    assert!(!run("many").status.success());
}
