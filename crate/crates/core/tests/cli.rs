use std::path::Path;
use std::process::{Command, Output};

use tsa_core::harness;
use tsa_core::simulator::SwingCurves;

fn tsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsa")).args(args).output().expect("run tsa")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&tsa(&["--help"])), 0);
    assert_eq!(code(&tsa(&["--version"])), 0);
    assert_eq!(code(&tsa(&["sweep", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&tsa(&[])), 1);
    assert_eq!(code(&tsa(&["no-such-command"])), 1);
    assert_eq!(code(&tsa(&["gen-kb", "--out", "x.kb"])), 1);
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("broken.kb");
    std::fs::write(&kb, "not a knowledge base\n").unwrap();
    let out = tsa(&["train", "--kb", arg(&kb), "--scheme", "F1:g", "--split", "10", "--seed", "0", "--out", "m.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&tsa(&["eval", "--model", arg(&missing), "--kb", arg(&kb)])), 1);
    let sim = dir.path().join("t.csv");
    assert_eq!(code(&tsa(&["simulate", "--fault-bus", "42", "--out", arg(&sim)])), 1);
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let run = tsa(&["simulate", "--load-scale", "3", "--fault-bus", "7", "--out", arg(&out)]);
    assert_eq!(code(&run), 2, "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn noise_schemes_require_noisy_kb() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("a.kb");
    assert_eq!(code(&tsa(&["gen-kb", "--seed", "1", "--out", arg(&kb)])), 0);
    let out = dir.path().join("s.csv");
    let run = tsa(&["sweep", "--kb", arg(&kb), "--schemes", "table6", "--out", arg(&out)]);
    assert_eq!(code(&run), 1);
}

fn swing_spread(dir: &Path, fault_bus: &str, scale: &str) -> (i32, f64, SwingCurves) {
    let traj = dir.join(format!("traj-{fault_bus}-{scale}.csv"));
    let run = tsa(&["simulate", "--fault-bus", fault_bus, "--load-scale", scale, "--out", arg(&traj)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout).into_owned();
    let label: i32 = stdout.split_whitespace().nth(1).unwrap().parse().unwrap();

    let plot = dir.join(format!("swing-{fault_bus}-{scale}.csv"));
    let svg = dir.join(format!("swing-{fault_bus}-{scale}.svg"));
    assert_eq!(code(&tsa(&["plot", "--traj", arg(&traj), "--out", arg(&plot), "--svg", arg(&svg)])), 0);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));

    // Spread recomputed from the plot rows (t_s,gen,delta_deg).
    let curves = SwingCurves::load(&traj).unwrap();
    let text = std::fs::read_to_string(&plot).unwrap();
    let mut by_time: std::collections::BTreeMap<String, (f64, f64)> = Default::default();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let d: f64 = f[2].parse().unwrap();
        let e = by_time.entry(f[0].to_string()).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(d);
        e.1 = e.1.max(d);
    }
    let spread = by_time.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    (label, spread, curves)
}

#[test]
fn swing_plot_agrees_with_label() {
    let dir = tempfile::tempdir().unwrap();
    let (stable_label, stable_spread, curves) = swing_spread(dir.path(), "9", "0.85");
    assert_eq!(stable_label, 1);
    assert!(stable_spread < 360.0, "stable spread {stable_spread}");
    assert!(curves.max_spread_deg() < 360.0);

    let (unstable_label, unstable_spread, _) = swing_spread(dir.path(), "3", "1.3");
    assert_eq!(unstable_label, -1);
    assert!(unstable_spread > 360.0, "unstable spread {unstable_spread}");
}

#[test]
fn lower_bound_plot_matches_model_trace() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("a.kb");
    let model = dir.path().join("m.json");
    let plot = dir.path().join("lb.svg");
    assert_eq!(code(&tsa(&["gen-kb", "--seed", "2", "--out", arg(&kb)])), 0);
    let train = tsa(&[
        "train",
        "--kb",
        arg(&kb),
        "--scheme",
        "F1:g,F3:p",
        "--split",
        "120",
        "--seed",
        "1",
        "--out",
        arg(&model),
    ]);
    assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));
    assert_eq!(code(&tsa(&["plot", "--model", arg(&model), "--out", arg(&plot)])), 0);

    let m = tsa_core::vbpmkl::TrainedModel::load(&model).unwrap();
    let csv = std::fs::read_to_string(plot.with_extension("csv")).unwrap();
    let rows: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(rows.len(), m.lb_trace.len());
    for (a, b) in rows.iter().zip(&m.lb_trace) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
    assert!(plot.exists());
}

#[test]
fn eval_and_predict_agree() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("a.kb");
    let model = dir.path().join("m.json");
    assert_eq!(code(&tsa(&["gen-kb", "--seed", "3", "--out", arg(&kb)])), 0);
    let train =
        tsa(&["train", "--kb", arg(&kb), "--scheme", "union:g", "--split", "150", "--seed", "4", "--out", arg(&model)]);
    assert_eq!(code(&train), 0);

    let eval = tsa(&["eval", "--model", arg(&model), "--kb", arg(&kb)]);
    assert_eq!(code(&eval), 0);
    let text = String::from_utf8_lossy(&eval.stdout).into_owned();
    let reported: f64 = text.split_whitespace().nth(1).unwrap().parse().unwrap();

    let predict = tsa(&["predict", "--model", arg(&model), "--features", arg(&kb)]);
    assert_eq!(code(&predict), 0);
    let preds: Vec<i32> = String::from_utf8_lossy(&predict.stdout)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let kb = tsa_core::kbstore::load_kb(&kb).unwrap();
    let labels: Vec<i32> = kb.samples.iter().map(|s| s.label as i32).collect();
    let m = harness::metrics(&preds, &labels).unwrap();
    assert!((m.accuracy - reported).abs() < 1e-6);
}
