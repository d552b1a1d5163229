use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbm-deepwalk"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_header_labels_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let args = |out: &Path| {
        vec![
            "generate".to_string(),
            "--n=600".into(),
            "--k=3".into(),
            "--p=0.4".into(),
            "--q=0.1".into(),
            "--seed=7".into(),
            format!("--out={}", out.display()),
        ]
    };
    for out in [&a, &b] {
        let v = args(out);
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let text = read(&a);
    assert_eq!(text.lines().next(), Some("600 3"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let labels = read(&dir.path().join("a.txt.labels"));
    assert_eq!(labels.lines().count(), 600);
    assert_eq!(labels.lines().nth(599), Some("2"));
    assert!(read(&dir.path().join("a.txt.config")).contains("seed = 7"));
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.txt");
    let missing_k = bin(&[
        "generate",
        "--n",
        "60",
        "--p",
        "0.4",
        "--q",
        "0.1",
        "--out",
        s(&out),
    ]);
    assert_eq!(missing_k.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing_k.stderr).contains("`k`"));
    assert_eq!(bin(&["generate", "--bogus"]).status.code(), Some(1));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(1));
    let bad_p = bin(&[
        "generate",
        "--n",
        "60",
        "--k",
        "3",
        "--p",
        "1.5",
        "--q",
        "0.1",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad_p.status.code(), Some(1));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn io_and_numerical_failures_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let blocked = dir.path().join("file");
    std::fs::write(&blocked, "").unwrap();
    let io = bin(&[
        "train",
        "--n",
        "30",
        "--k",
        "2",
        "--p",
        "0.5",
        "--q",
        "0.2",
        "--out",
        s(&blocked.join("sub")),
    ]);
    assert_eq!(io.status.code(), Some(3));
    let missing = bin(&[
        "train",
        "--graph-file",
        s(&dir.path().join("nope.txt")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    let blow_up = bin(&[
        "train",
        "--n",
        "30",
        "--k",
        "2",
        "--p",
        "0.5",
        "--q",
        "0.2",
        "--eta",
        "1e6",
        "--stopping",
        "fixed:50",
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(blow_up.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&blow_up.stderr).contains("non-finite"));
}

#[test]
fn train_outputs_match_their_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&[
        "train",
        "--use-expected",
        "--n",
        "60",
        "--k",
        "3",
        "--p",
        "0.5",
        "--q",
        "0.1",
        "--d",
        "3",
        "--out",
        s(&out),
    ]);
    let report = read(&out.join("report.csv"));
    let t_f: usize = csv_column(&report, "t_f")[0].parse().unwrap();
    let traj = read(&out.join("trajectory.csv"));
    assert_eq!(traj.lines().count() - 1, t_f + 1);
    let emb = read(&out.join("embedding.csv"));
    assert_eq!(
        emb.lines().next(),
        Some("node,label,x_1,x_2,x_3,y_1,y_2,y_3")
    );
    assert_eq!(emb.lines().count(), 61);
    assert!(read(&out.join("cooc.meta")).starts_with("kind=expected"));
    assert!(read(&out.join("config.resolved")).contains("use_expected = true"));
}

#[test]
fn train_on_a_generated_graph_and_from_persisted_config() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    ok(&[
        "generate",
        "--n",
        "60",
        "--k",
        "3",
        "--p",
        "0.5",
        "--q",
        "0.1",
        "--seed",
        "4",
        "--out",
        s(&g),
    ]);
    let first = dir.path().join("first");
    ok(&[
        "train",
        "--graph-file",
        s(&g),
        "--p",
        "0.5",
        "--q",
        "0.1",
        "--d",
        "2",
        "--seed",
        "4",
        "--out",
        s(&first),
    ]);
    // The sampled graph for the same seed is the generated one.
    let sampled = dir.path().join("sampled");
    ok(&[
        "train",
        "--n",
        "60",
        "--p",
        "0.5",
        "--q",
        "0.1",
        "--d",
        "2",
        "--seed",
        "4",
        "--out",
        s(&sampled),
    ]);
    assert_eq!(
        read(&first.join("embedding.csv")),
        read(&sampled.join("embedding.csv"))
    );
    let again = dir.path().join("again");
    ok(&[
        "train",
        "--config",
        s(&first.join("config.resolved")),
        "--out",
        s(&again),
    ]);
    for f in [
        "trajectory.csv",
        "embedding.csv",
        "report.csv",
        "config.resolved",
    ] {
        assert_eq!(read(&first.join(f)), read(&again.join(f)), "{f}");
    }
}

#[test]
fn train_with_experiment_settings_recovers_communities() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&[
        "train",
        "--d",
        "2",
        "--init",
        "inf-ball:0.01",
        "--stopping",
        "fixed:100",
        "--scaling",
        "per-node-walk",
        "--out",
        s(&out),
    ]);
    let recovery: f64 = csv_column(&read(&out.join("report.csv")), "recovery")[0]
        .parse()
        .unwrap();
    assert!(recovery >= 0.95, "recovery {recovery}");
}

#[test]
fn exp_embeddings_emits_one_csv_and_plot_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "exp-embeddings",
            "--n",
            "90",
            "--walks",
            "9000",
            "--seeds",
            "3",
            "--out",
            s(&out),
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names
            .iter()
            .filter(|n| n.ends_with(".csv") && n.starts_with("embedding_"))
            .count(),
        3
    );
    assert_eq!(names.iter().filter(|n| n.ends_with(".svg")).count(), 3);
    for d in 1..=3 {
        assert!(names.contains(&format!("embedding_d{d}_seed3.csv")));
        assert!(names.contains(&format!("plot_d{d}_seed3.svg")));
    }
    assert_eq!(read(&a.join("recovery.csv")).lines().count(), 4);
    for n in &names {
        assert_eq!(
            std::fs::read(a.join(n)).unwrap(),
            std::fs::read(b.join(n)).unwrap(),
            "{n}"
        );
    }
    let svg = read(&a.join("plot_d1_seed3.svg"));
    assert_eq!(svg.matches("<circle").count(), 90);
}

#[test]
fn exp_linear_series_start_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lin");
    ok(&[
        "exp-linear",
        "--sizes",
        "40,60",
        "--iters",
        "12",
        "--out",
        s(&out),
    ]);
    let csv = read(&out.join("linear.csv"));
    assert_eq!(
        csv.lines().next(),
        Some("iter,dist_n40,norm_n40,dist_n60,norm_n60")
    );
    assert_eq!(csv.lines().count(), 14);
    for col in ["dist_n40", "dist_n60"] {
        assert_eq!(csv_column(&csv, col)[0], "0");
    }
    assert_eq!(
        read(&out.join("linear.svg")).matches("<polyline").count(),
        2
    );
}

#[test]
fn diagnostics_rows_and_injected_expected_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("diag");
    ok(&[
        "diagnostics",
        "--sizes",
        "30,40,50",
        "--seeds",
        "1",
        "--inject-expected",
        "--out",
        s(&out),
    ]);
    let csv = read(&out.join("diagnostics.csv"));
    assert_eq!(csv.lines().next(), Some("name,n,K,p,q,value"));
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    for name in [
        "relative_deviation",
        "concentration_ratio",
        "projector_distance",
    ] {
        let mine: Vec<_> = rows.iter().filter(|r| r[0] == name).collect();
        assert_eq!(mine.len(), 3, "{name}");
        for r in mine {
            assert_eq!(r[5].parse::<f64>().unwrap(), 0.0, "{name}");
        }
    }
}
