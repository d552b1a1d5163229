//! Command implementations. Each resolves its settings, runs, and writes its
//! outputs plus the resolved settings into the output location.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sbm_deepwalk::experiments::{
    default_walks, run_on_graph, sample_graph, CoocSource, DiagnosticsSweep, EmbeddingExperiment,
    LinearExperiment, Pipeline,
};
use sbm_deepwalk::metrics::write_report_csv;
use sbm_deepwalk::rng::{child_seed, stream};
use sbm_deepwalk::theory::write_diagnostics;
use sbm_deepwalk::trainer::{write_embedding_csv, write_trajectory_csv};
use sbm_deepwalk::{
    CoocScaling, EmbeddingState, Error, Graph, InitMode, Result, SbmParams, Stopping, TrainConfig,
    WalkConfig,
};

use crate::config::{Settings, AUTO};
use crate::plot;

pub const RESOLVED: &str = "config.resolved";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn params_from(s: &Settings) -> Result<SbmParams> {
    let (n, k, p, q) = (s.get("n")?, s.get("k")?, s.get("p")?, s.get("q")?);
    match s.get_auto::<f64>("rho")? {
        Some(rho) => SbmParams::with_rho(n, k, p, q, rho),
        None => SbmParams::new(n, k, p, q),
    }
}

fn walks_for(s: &Settings, n: usize) -> Result<usize> {
    Ok(s.get_auto("walks")?.unwrap_or_else(|| default_walks(n)))
}

pub fn parse_init(raw: &str) -> Result<InitMode> {
    match raw.split_once(':') {
        None if raw == "norm-ball" => Ok(InitMode::NormBall),
        Some(("inf-ball", b)) => b
            .parse()
            .map(InitMode::InfBall)
            .map_err(|e| Error::Parse(format!("init `{raw}`: {e}"))),
        _ => Err(Error::Parse(format!(
            "init `{raw}`: expected `norm-ball` or `inf-ball:<bound>`"
        ))),
    }
}

pub fn parse_stopping(raw: &str) -> Result<Stopping> {
    match raw.split_once(':') {
        None if raw == "threshold" => Ok(Stopping::NormThreshold),
        Some(("fixed", t)) => t
            .parse()
            .map(Stopping::FixedIters)
            .map_err(|e| Error::Parse(format!("stopping `{raw}`: {e}"))),
        _ => Err(Error::Parse(format!(
            "stopping `{raw}`: expected `threshold` or `fixed:<iterations>`"
        ))),
    }
}

pub const GENERATE_KEYS: &[(&str, Option<&str>)] = &[
    ("n", None),
    ("k", None),
    ("p", None),
    ("q", None),
    ("rho", Some(AUTO)),
    ("seed", Some("0")),
];

/// Writes `<out>` (edge list), `<out>.labels` and `<out>.config`. The graph
/// is the one `train` samples for the same parameters and seed.
pub fn generate(s: &Settings, out: &Path) -> Result<()> {
    let params = params_from(s)?;
    let seed: u64 = s.get("seed")?;
    let graph = sample_graph(&params, child_seed(seed, stream::GRAPH))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut w = create(out)?;
    graph.write_edge_list(&mut w)?;
    w.flush()?;
    let mut labels = String::new();
    for l in graph.labels() {
        labels.push_str(&format!("{l}\n"));
    }
    write_text(&with_suffix(out, ".labels"), &labels)?;
    s.save(&with_suffix(out, ".config"))?;
    log::info!(
        "wrote {} nodes and {} edges to {}",
        graph.n(),
        graph.num_edges(),
        out.display()
    );
    Ok(())
}

pub const TRAIN_KEYS: &[(&str, Option<&str>)] = &[
    ("graph_file", Some("none")),
    ("n", Some("600")),
    ("k", Some("3")),
    ("p", Some("0.4")),
    ("q", Some("0.1")),
    ("rho", Some(AUTO)),
    ("use_expected", Some("false")),
    ("walks", Some(AUTO)),
    ("length", Some("10")),
    ("window", Some("5")),
    ("scaling", Some("row-mean:2")),
    ("d", Some("1")),
    ("eta", Some("0.01")),
    ("epsilon", Some(AUTO)),
    ("delta", Some(AUTO)),
    ("max_iters", Some(AUTO)),
    ("init", Some("norm-ball")),
    ("stopping", Some("threshold")),
    ("seed", Some("0")),
];

/// Writes `trajectory.csv`, `embedding.csv`, `report.csv` and `cooc.meta`.
pub fn train(s: &mut Settings, out: &Path) -> Result<()> {
    let graph = match s.raw("graph_file")? {
        "none" => None,
        path => {
            let file = File::open(path)?;
            let g = Graph::read_edge_list(std::io::BufReader::new(file))?;
            // The file is authoritative for the graph's shape.
            s.set("n", g.n())?;
            s.set("k", g.k())?;
            Some(g)
        }
    };
    let params = params_from(s)?;
    let seed: u64 = s.get("seed")?;
    let pipe = Pipeline {
        params,
        walks: WalkConfig::new(walks_for(s, params.n)?, s.get("length")?, s.get("window")?)?,
        scaling: s.get::<CoocScaling>("scaling")?,
        source: if s.get::<bool>("use_expected")? {
            CoocSource::Expected
        } else {
            CoocSource::Empirical
        },
    };
    let cfg = TrainConfig {
        epsilon: s.get_auto("epsilon")?,
        delta: s.get_auto("delta")?,
        max_iters: s.get_auto("max_iters")?,
        init: parse_init(s.raw("init")?)?,
        stopping: parse_stopping(s.raw("stopping")?)?,
        dim: s.get("d")?,
        ..TrainConfig::new(s.get("eta")?)
    };
    cfg.validate(params.n)?;
    let graph = match graph {
        Some(g) => g,
        None => sample_graph(&params, child_seed(seed, stream::GRAPH))?,
    };
    let run = run_on_graph(&pipe, graph, &cfg, seed)?;

    ensure_dir(out)?;
    let mut w = create(&out.join("trajectory.csv"))?;
    write_trajectory_csv(&run.trajectory, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("embedding.csv"))?;
    write_embedding_csv(&run.state, run.graph.labels(), &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("report.csv"))?;
    write_report_csv(&[run.report_row(&params)], &mut w)?;
    w.flush()?;
    write_text(
        &out.join("cooc.meta"),
        &format!("{}\n", run.cooc.meta_line()),
    )?;
    s.save(&out.join(RESOLVED))?;
    println!(
        "t_f={} ({}) recovery={:.4} spread={:.3e} (bound {:.3e}) min_gap={:.3e} (bound {:.3e})",
        run.trajectory.t_f,
        run.trajectory.termination,
        run.report.recovery,
        run.report.spread,
        run.report.bound_spread,
        run.report.min_gap,
        run.report.bound_gap
    );
    Ok(())
}

pub const EMBEDDINGS_KEYS: &[(&str, Option<&str>)] = &[
    ("n", Some("600")),
    ("k", Some("3")),
    ("p", Some("0.4")),
    ("q", Some("0.1")),
    ("rho", Some(AUTO)),
    ("walks", Some(AUTO)),
    ("length", Some("10")),
    ("window", Some("5")),
    ("scaling", Some("per-node-walk")),
    ("dims", Some("1,2,3")),
    ("eta", Some("0.01")),
    ("iters", Some("100")),
    ("init_bound", Some("0.01")),
    ("seeds", Some("0")),
];

fn embedding_plot(state: &EmbeddingState, labels: &[usize], title: &str) -> String {
    let col = |j: usize| -> Vec<f64> { state.x.column(j).iter().copied().collect() };
    match state.dim() {
        1 => plot::strip(&col(0), labels, title),
        2 => plot::scatter(&col(0), &col(1), labels, title),
        _ => {
            let coords: Vec<[f64; 3]> = state.x.row_iter().map(|r| [r[0], r[1], r[2]]).collect();
            plot::projected(&coords, labels, title)
        }
    }
}

/// Per seed and dimension: `embedding_d{d}_seed{s}.csv` and
/// `plot_d{d}_seed{s}.svg`; all report rows in `recovery.csv`.
pub fn exp_embeddings(s: &Settings, out: &Path) -> Result<()> {
    let params = params_from(s)?;
    let mut pipeline = Pipeline::new(params);
    pipeline.walks = WalkConfig::new(walks_for(s, params.n)?, s.get("length")?, s.get("window")?)?;
    pipeline.scaling = s.get("scaling")?;
    let exp = EmbeddingExperiment {
        pipeline,
        dims: s.get_list("dims")?,
        eta: s.get("eta")?,
        iters: s.get("iters")?,
        init_bound: s.get("init_bound")?,
    };
    let seeds: Vec<u64> = s.get_list("seeds")?;
    let runs = exp.run(&seeds)?;

    ensure_dir(out)?;
    let mut rows = Vec::new();
    for per_seed in &runs {
        for run in per_seed {
            let (d, seed) = (run.state.dim(), run.seed);
            let mut w = create(&out.join(format!("embedding_d{d}_seed{seed}.csv")))?;
            write_embedding_csv(&run.state, run.graph.labels(), &mut w)?;
            w.flush()?;
            let title = format!(
                "d={d}, seed {seed}, n={}, K={}: recovery {:.3}",
                params.n, params.k, run.report.recovery
            );
            write_text(
                &out.join(format!("plot_d{d}_seed{seed}.svg")),
                &embedding_plot(&run.state, run.graph.labels(), &title),
            )?;
            rows.push(run.report_row(&params));
            println!("seed={seed} d={d} recovery={:.4}", run.report.recovery);
        }
        if let Some(first) = per_seed.first() {
            write_text(
                &out.join(format!("cooc_seed{}.meta", first.seed)),
                &format!("{}\n", first.cooc.meta_line()),
            )?;
        }
    }
    let mut w = create(&out.join("recovery.csv"))?;
    write_report_csv(&rows, &mut w)?;
    w.flush()?;
    s.save(&out.join(RESOLVED))?;
    Ok(())
}

pub const LINEAR_KEYS: &[(&str, Option<&str>)] = &[
    ("sizes", Some("200,500,1000")),
    ("k", Some("2")),
    ("p", Some("0.4")),
    ("q", Some("0.1")),
    ("iters", Some("75")),
    ("walks", Some(AUTO)),
    ("length", Some("10")),
    ("window", Some("5")),
    ("scaling", Some("per-node-walk")),
    ("seed", Some("0")),
];

/// `linear.csv` with columns `iter,dist_n{n},norm_n{n},...` and
/// `linear.svg`.
pub fn exp_linear(s: &Settings, out: &Path) -> Result<()> {
    let exp = LinearExperiment {
        sizes: s.get_list("sizes")?,
        k: s.get("k")?,
        p: s.get("p")?,
        q: s.get("q")?,
        iters: s.get("iters")?,
        length: s.get("length")?,
        window: s.get("window")?,
        walks: s.get_auto("walks")?,
        scaling: s.get("scaling")?,
    };
    let series = exp.run(s.get("seed")?)?;

    ensure_dir(out)?;
    let mut w = create(&out.join("linear.csv"))?;
    let mut header = String::from("iter");
    for sr in &series {
        header.push_str(&format!(",dist_n{},norm_n{}", sr.n, sr.n));
    }
    writeln!(w, "{header}")?;
    for t in 0..=exp.iters {
        let mut line = t.to_string();
        for sr in &series {
            line.push_str(&format!(",{},{}", sr.distance[t], sr.norm[t]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    let lines: Vec<(String, Vec<f64>)> = series
        .iter()
        .map(|sr| (format!("n = {}", sr.n), sr.distance.clone()))
        .collect();
    write_text(
        &out.join("linear.svg"),
        &plot::lines(
            &lines,
            "iteration t",
            "distance between nonlinear and linearised x",
            "nonlinear vs linearised gradient descent",
        ),
    )?;
    for sr in &series {
        let peak = sr.distance.iter().copied().fold(0.0, f64::max);
        println!(
            "n={} d(0)={} d(10)={:.3e} max d={:.3e}",
            sr.n,
            sr.distance[0],
            sr.distance.get(10).copied().unwrap_or(f64::NAN),
            peak
        );
    }
    s.save(&out.join(RESOLVED))?;
    Ok(())
}

pub const DIAGNOSTICS_KEYS: &[(&str, Option<&str>)] = &[
    ("sizes", Some("200,400,800")),
    ("k", Some("2")),
    ("rho", Some("0.8")),
    ("q_scale", Some("0.2")),
    ("p_over_q", Some("4")),
    ("walks", Some(AUTO)),
    ("length", Some("10")),
    ("window", Some("5")),
    ("transition_power", Some("1")),
    ("inject_expected", Some("false")),
    ("seeds", Some("0..5")),
];

/// `diagnostics.csv`: per diagnostic and size, the median over seeds.
pub fn diagnostics(s: &Settings, out: &Path) -> Result<()> {
    let sweep = DiagnosticsSweep {
        sizes: s.get_list("sizes")?,
        k: s.get("k")?,
        rho: s.get("rho")?,
        q_scale: s.get("q_scale")?,
        p_over_q: s.get("p_over_q")?,
        length: s.get("length")?,
        window: s.get("window")?,
        walks: s.get_auto("walks")?,
        transition_power: s.get("transition_power")?,
        inject_expected: s.get("inject_expected")?,
    };
    let seeds: Vec<u64> = s.get_list("seeds")?;
    let rows = sweep.rows(&seeds)?;
    ensure_dir(out)?;
    let mut w = create(&out.join("diagnostics.csv"))?;
    write_diagnostics(&mut w, &rows, true)?;
    w.flush()?;
    s.save(&out.join(RESOLVED))?;
    for r in &rows {
        println!("{}", r.csv_line());
    }
    Ok(())
}
