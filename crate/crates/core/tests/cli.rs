use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minimax-lab"))
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn gap_subcommand_reports_closed_form_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gap", "--T", "4", "--outdir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("ratio: 1.866025"), "{summary}");
    assert!(summary.contains("PASS"));
    assert!(!summary.contains("FAIL"));
    let csv = fs::read_to_string(dir.path().join("gap-0.csv")).unwrap();
    assert!(csv.starts_with("T,theta_max,"));
    assert!(!csv.contains('\r'));
}

#[test]
fn convergence_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "gap4.cfg",
        "family.kind = gap\nfamily.T = 4\nK_list = 100, 400, 1600, 6400\ntheta0 = 0\n",
    );
    let out = bin()
        .args(["convergence", "--quiet", "--config", &cfg, "--outdir"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let summary = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert_eq!(summary.matches("bound satisfied: true").count(), 4, "{summary}");
    let csv = fs::read_to_string(dir.path().join("out/convergence-0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn missing_config_exits_two_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["convergence", "--config", "/definitely/not/here.cfg", "--outdir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "family.kind = gap\nfamily.T = 4\nalpah.mode = constant\n");
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["compare-init", "--config", &cfg, "--outdir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah.mode"));
    assert!(!out_dir.exists());
}

#[test]
fn outdir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gap", "--T", "3", "--seed", "12", "--quiet"])
        .env("MINIMAX_LAB_OUTDIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("gap-12.csv").exists());
}

#[test]
fn seed_flag_overrides_config_and_changes_stochastic_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "train.cfg",
        "family.kind = gap\nfamily.T = 3\nfamily.noise_sigma = 0.4\nK = 50\nbatch_size = 2\nseed = 1\nstep.mode = constant\nstep.value = 0.05\nalpha.mode = constant\nalpha.value = 5\n",
    );
    let run = |extra: &[&str]| {
        let out = bin()
            .args(["train", "--quiet", "--config", &cfg, "--outdir"])
            .arg(dir.path())
            .args(extra)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&[]);
    run(&["--seed", "2"]);
    let a = fs::read(dir.path().join("train-1.csv")).unwrap();
    let b = fs::read(dir.path().join("train-2.csv")).unwrap();
    assert_ne!(a, b);
    let header = String::from_utf8(a).unwrap();
    assert!(header.starts_with("k,worst_risk,avg_risk,risk_1,risk_2,risk_3,w_1,w_2,w_3,grad_norm\n"));
}

#[test]
fn diverging_train_run_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "div.cfg",
        "family.kind = quadratic\nfamily.centers = 0, 1\nfamily.curvatures = 1, 1\nK = 500\nstep.mode = constant\nstep.value = 5\nalpha.mode = constant\nalpha.value = 1\ntheta0 = 0.3\n",
    );
    let out = bin()
        .args(["train", "--quiet", "--config", &cfg, "--outdir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("FAIL run stays bounded"));
}

#[test]
fn unwritable_outdir_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = bin()
        .args(["gap", "--quiet", "--outdir"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn balancer_comparison_runs_with_jobs_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bal.cfg",
        "family.kind = gap\nfamily.T = 4\nK = 4000\nbalancers = minimax, none, uncertainty, gradnorm, dwa\n",
    );
    let out = bin()
        .args(["compare-balancers", "--quiet", "--jobs", "2", "--config", &cfg, "--outdir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("compare-balancers-0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().nth(1).unwrap().starts_with("minimax,"));
}
