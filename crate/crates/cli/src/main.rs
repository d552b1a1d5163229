//! `sbm-deepwalk`: graph generation, training and the embedding experiments.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure,
//! 3 I/O failure.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbm_deepwalk::{Error, Result};

use config::Settings;

#[derive(Parser)]
#[command(
    name = "sbm-deepwalk",
    version,
    about = "DeepWalk gradient dynamics on stochastic block models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output location (a file for `generate`, a directory otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Sparsity exponent; `auto` derives it from q.
    #[arg(long)]
    rho: Option<String>,
}

#[derive(Args)]
struct WalkArgs {
    /// Number of walks; `auto` means 100·n.
    #[arg(long)]
    walks: Option<String>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    /// `per-walk`, `per-node-walk` or `row-mean:<v>`.
    #[arg(long)]
    scaling: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an SBM graph and write it as an edge list.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train embeddings on one graph and report cluster quality.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        walks: WalkArgs,
        /// Read the graph from an edge-list file instead of sampling one.
        #[arg(long)]
        graph_file: Option<PathBuf>,
        /// Train on the expected co-occurrence matrix.
        #[arg(long)]
        use_expected: bool,
        /// Embedding dimension.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long)]
        max_iters: Option<String>,
        /// `norm-ball` or `inf-ball:<bound>`.
        #[arg(long)]
        init: Option<String>,
        /// `threshold` or `fixed:<iterations>`.
        #[arg(long)]
        stopping: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train at several dimensions per seed and plot the embeddings.
    ExpEmbeddings {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        walks: WalkArgs,
        /// Comma-separated embedding dimensions.
        #[arg(long)]
        dims: Option<String>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        init_bound: Option<f64>,
        /// Comma-separated seeds; `a..b` ranges expand.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Compare nonlinear and linearised gradient descent across graph sizes.
    ExpLinear {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        walks: WalkArgs,
        /// Comma-separated graph sizes.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Concentration and perturbation measurements over graph sizes.
    Diagnostics {
        #[command(flatten)]
        common: Common,
        /// Comma-separated graph sizes.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        /// Cross-block probability is q_scale·n^(rho-1).
        #[arg(long)]
        q_scale: Option<f64>,
        #[arg(long)]
        p_over_q: Option<f64>,
        #[arg(long)]
        walks: Option<String>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        transition_power: Option<u32>,
        /// Use the expected matrix in place of the sampled one.
        #[arg(long)]
        inject_expected: bool,
        #[arg(long)]
        seeds: Option<String>,
    },
}

fn base(keys: &[(&'static str, Option<&str>)], common: &Common) -> Result<Settings> {
    let mut s = Settings::new(keys);
    if let Some(path) = &common.config {
        s.load_file(path)?;
    }
    Ok(s)
}

fn apply_graph(s: &mut Settings, g: GraphArgs) -> Result<()> {
    s.set_opt("n", g.n)?;
    s.set_opt("k", g.k)?;
    s.set_opt("p", g.p)?;
    s.set_opt("q", g.q)?;
    s.set_opt("rho", g.rho)
}

fn apply_walks(s: &mut Settings, w: WalkArgs) -> Result<()> {
    s.set_opt("walks", w.walks)?;
    s.set_opt("length", w.length)?;
    s.set_opt("window", w.window)?;
    s.set_opt("scaling", w.scaling)
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            common,
            graph,
            seed,
        } => {
            let mut s = base(commands::GENERATE_KEYS, &common)?;
            apply_graph(&mut s, graph)?;
            s.set_opt("seed", seed)?;
            commands::generate(&s, &out_dir(&common, "graph.txt"))
        }
        Command::Train {
            common,
            graph,
            walks,
            graph_file,
            use_expected,
            d,
            eta,
            epsilon,
            delta,
            max_iters,
            init,
            stopping,
            seed,
        } => {
            let mut s = base(commands::TRAIN_KEYS, &common)?;
            apply_graph(&mut s, graph)?;
            apply_walks(&mut s, walks)?;
            s.set_opt("graph_file", graph_file.map(|p| p.display().to_string()))?;
            if use_expected {
                s.set("use_expected", true)?;
            }
            s.set_opt("d", d)?;
            s.set_opt("eta", eta)?;
            s.set_opt("epsilon", epsilon)?;
            s.set_opt("delta", delta)?;
            s.set_opt("max_iters", max_iters)?;
            s.set_opt("init", init)?;
            s.set_opt("stopping", stopping)?;
            s.set_opt("seed", seed)?;
            commands::train(&mut s, &out_dir(&common, "train-out"))
        }
        Command::ExpEmbeddings {
            common,
            graph,
            walks,
            dims,
            eta,
            iters,
            init_bound,
            seeds,
        } => {
            let mut s = base(commands::EMBEDDINGS_KEYS, &common)?;
            apply_graph(&mut s, graph)?;
            apply_walks(&mut s, walks)?;
            s.set_opt("dims", dims)?;
            s.set_opt("eta", eta)?;
            s.set_opt("iters", iters)?;
            s.set_opt("init_bound", init_bound)?;
            s.set_opt("seeds", seeds)?;
            commands::exp_embeddings(&s, &out_dir(&common, "embeddings-out"))
        }
        Command::ExpLinear {
            common,
            walks,
            sizes,
            k,
            p,
            q,
            iters,
            seed,
        } => {
            let mut s = base(commands::LINEAR_KEYS, &common)?;
            apply_walks(&mut s, walks)?;
            s.set_opt("sizes", sizes)?;
            s.set_opt("k", k)?;
            s.set_opt("p", p)?;
            s.set_opt("q", q)?;
            s.set_opt("iters", iters)?;
            s.set_opt("seed", seed)?;
            commands::exp_linear(&s, &out_dir(&common, "linear-out"))
        }
        Command::Diagnostics {
            common,
            sizes,
            k,
            rho,
            q_scale,
            p_over_q,
            walks,
            length,
            window,
            transition_power,
            inject_expected,
            seeds,
        } => {
            let mut s = base(commands::DIAGNOSTICS_KEYS, &common)?;
            s.set_opt("sizes", sizes)?;
            s.set_opt("k", k)?;
            s.set_opt("rho", rho)?;
            s.set_opt("q_scale", q_scale)?;
            s.set_opt("p_over_q", p_over_q)?;
            s.set_opt("walks", walks)?;
            s.set_opt("length", length)?;
            s.set_opt("window", window)?;
            s.set_opt("transition_power", transition_power)?;
            if inject_expected {
                s.set("inject_expected", true)?;
            }
            s.set_opt("seeds", seeds)?;
            commands::diagnostics(&s, &out_dir(&common, "diagnostics-out"))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 3,
        Error::NonFinite(_) | Error::Eigen(_) | Error::IsolatedNode(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
