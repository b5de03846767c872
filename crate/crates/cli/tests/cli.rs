use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tintegrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tintegrate"))
        .args(args)
        .env("TINTEGRATE_JOBS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_is_byte_reproducible_and_snapshots_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = tintegrate(&["generate", "--pde", "burgers1d", "--samples", "5", "--seed", "7", "-o", p(out)]);
        assert_eq!(code(&o), 0, "{}", text(&o));
        assert!(text(&o).contains("5 samples (4 train / 1 test)"));
    }
    for f in ["manifest.json", "u.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    // the snapshot alone regenerates the same data
    let c = dir.path().join("c");
    let snap = a.join("experiment.json");
    let o = tintegrate(&["generate", "--config", p(&snap), "-o", p(&c)]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert_eq!(fs::read(a.join("u.bin")).unwrap(), fs::read(c.join("u.bin")).unwrap());
}

#[test]
fn kdv_default_grid_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = tintegrate(&["generate", "--pde", "kdv1d", "--samples", "1", "-o", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("201 frames × 100 points"), "{}", text(&o));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["generate", "--set", "bogus=1", "-o", p(dir.path())],
        vec!["generate", "--samples", "0", "-o", p(dir.path())],
        vec!["generate", "--pde", "navier", "-o", p(dir.path())],
        vec!["generate", "--train-samples", "99", "--samples", "3", "-o", p(dir.path())],
    ] {
        let o = tintegrate(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", text(&o));
    }
}

#[test]
fn missing_inputs_exit_with_5() {
    let dir = tempfile::tempdir().unwrap();
    let nowhere = dir.path().join("nothing");
    let o = tintegrate(&["train", "--regime", "ti_rk4", "--dataset", p(&nowhere), "-o", p(dir.path())]);
    assert_eq!(code(&o), 5, "{}", text(&o));
    let o = tintegrate(&["report", "--run", p(dir.path())]);
    assert_eq!(code(&o), 5, "{}", text(&o));
    assert!(text(&o).contains("summary.csv"));

    let data = dir.path().join("data");
    assert_eq!(code(&tintegrate(&["generate", "--samples", "3", "-o", p(&data)])), 0);
    let o = tintegrate(&["eval", "--dataset", p(&data), "--run", p(&nowhere)]);
    assert_eq!(code(&o), 5, "{}", text(&o));
}

#[test]
fn divergent_training_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&tintegrate(&["generate", "--samples", "10", "-o", p(&data)])), 0);
    let o = tintegrate(&[
        "train",
        "--regime",
        "ar",
        "--dataset",
        p(&data),
        "--epochs",
        "200",
        "--set",
        "train.ar.schedule.lr0=1e200",
        "--set",
        "train.ar.divergence_patience=2",
        "-o",
        p(&dir.path().join("run")),
    ]);
    assert_eq!(code(&o), 4, "{}", text(&o));
}

#[test]
fn full_pipeline_writes_every_artifact_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let o = tintegrate(&["generate", "--samples", "10", "--seed", "3", "-o", p(&data)]);
    assert_eq!(code(&o), 0, "{}", text(&o));

    let train_args = |out: &Path| {
        vec![
            "train".to_string(),
            "--regime".into(),
            "all".into(),
            "--dataset".into(),
            p(&data).into(),
            "--epochs".into(),
            "6".into(),
            "--set".into(),
            "train.fr.batch_size=8".into(),
            "-o".into(),
            p(out).into(),
        ]
    };
    let args = train_args(&run);
    let o = tintegrate(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", text(&o));
    for r in ["fr", "ar", "ti_rk4", "ti_learnable"] {
        assert!(run.join(r).join("checkpoint.bin").is_file(), "{r}");
        assert!(run.join(r).join("loss.csv").is_file(), "{r}");
    }
    assert!(run.join("ti_learnable").join("alpha_stats.csv").is_file());
    assert!(!run.join("ti_rk4").join("alpha_stats.csv").exists());
    assert!(run.join("experiment.json").is_file());

    let run2 = dir.path().join("run2");
    let args = train_args(&run2);
    assert_eq!(code(&tintegrate(&args.iter().map(String::as_str).collect::<Vec<_>>())), 0);
    for r in ["fr", "ar", "ti_rk4", "ti_learnable"] {
        let a = fs::read(run.join(r).join("checkpoint.bin")).unwrap();
        let b = fs::read(run2.join(r).join("checkpoint.bin")).unwrap();
        assert!(a == b, "{r} checkpoints differ");
    }

    let o = tintegrate(&["eval", "--dataset", p(&data), "--run", p(&run), "--dt-list", "0.1,0.01", "--trials", "2"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let eval = run.join("eval");
    let summary = fs::read_to_string(eval.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 5, "{summary}");
    assert!(lines.iter().all(|l| l.split(',').count() == 5));
    let refinement = fs::read_to_string(eval.join("refinement.csv")).unwrap();
    assert!(refinement.lines().any(|l| l.starts_with("0.1,")));
    assert!(refinement.lines().any(|l| l.starts_with("0.01,")));
    let trials = fs::read_to_string(eval.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 4 * 4);
    for f in ["metrics.csv", "alpha_hist.csv", "per_sample.csv", "summary_meta.json", "alpha_summary.json"] {
        assert!(eval.join(f).is_file(), "{f}");
    }

    let first: Vec<Vec<u8>> = ["metrics.csv", "summary.csv", "trials.csv", "alpha_hist.csv"]
        .iter()
        .map(|f| fs::read(eval.join(f)).unwrap())
        .collect();
    let o = tintegrate(&["eval", "--dataset", p(&data), "--run", p(&run), "--dt-list", "0.1,0.01", "--trials", "2"]);
    assert_eq!(code(&o), 0);
    for (f, bytes) in ["metrics.csv", "summary.csv", "trials.csv", "alpha_hist.csv"].iter().zip(first) {
        assert_eq!(fs::read(eval.join(f)).unwrap(), bytes, "{f}");
    }

    let o = tintegrate(&["report", "--run", p(&run)]);
    assert!(matches!(code(&o), 0 | 6), "{}", text(&o));
    let report = fs::read_to_string(run.join("report.md")).unwrap();
    for label in ["DON FR", "DON AR", "TI-DON", "TI(L)-DON"] {
        assert!(report.contains(&format!("| {label} |")), "{report}");
    }
    let failed = report.contains("- FAIL");
    assert_eq!(code(&o) == 6, failed);
}

#[test]
fn a_violated_ordering_fails_the_report_with_6() {
    let dir = tempfile::tempdir().unwrap();
    let eval = dir.path().join("eval");
    fs::create_dir_all(&eval).unwrap();
    fs::write(
        eval.join("summary.csv"),
        "method,t+10dt_e,t+20dt_e,t+40dt_e,T\nDON FR,0.1,0.1,0.1,0.1\nDON AR,0.2,0.2,0.2,0.2\nTI-DON,0.5,0.5,0.5,0.5\nTI(L)-DON,0.4,0.4,0.4,0.4\n",
    )
    .unwrap();
    fs::write(
        eval.join("summary_meta.json"),
        r#"{"pde":"burgers1d","t_train":0.5,"dt_e":0.01,"dt_save":0.01,"columns":[],"methods":[]}"#,
    )
    .unwrap();
    let o = tintegrate(&["report", "--run", p(dir.path())]);
    assert_eq!(code(&o), 6, "{}", text(&o));
    assert!(text(&o).contains("FAIL"));
}
