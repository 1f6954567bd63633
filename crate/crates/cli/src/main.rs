use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blockggm::io::config::{ModelKind, PartitionSpec, RunConfig};
use blockggm::io::data::{write_data_csv, write_matrix_csv};
use blockggm::io::run::{bayes_factor, fit, load_input, read_samples, summarize_samples, write_bf, write_fit};
use blockggm::io::simulate::{simulate, BlockSpec, GraphSpec, SimulationSpec};
use blockggm::{Error, Partition, Result};
use clap::{Args, Parser, Subcommand};

/// Bayesian Gaussian graphical models with block structure.
#[derive(Parser)]
#[command(name = "blockggm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a block structure, graph, precision matrix and data.
    Simulate(SimulateArgs),
    /// Run the sampler and write posterior summaries.
    Fit(RunArgs),
    /// Bayes factor of a fixed partition against the full model.
    Bf(BfArgs),
    /// Recompute summaries from a samples.jsonl file.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// dcsbm, sics, multi or sun.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Data CSV, or a manifest of per-group CSVs for the multi model.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// File of `key = value` settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Independent chains, pooled in the summaries.
    #[arg(long)]
    chains: Option<usize>,
    /// Quantile-normalize each column before fitting.
    #[arg(long)]
    normalize: bool,
    /// Hold the block partition fixed (`single`, `singletons` or labels).
    #[arg(long)]
    fixed_z: Option<String>,
}

#[derive(Args)]
struct BfArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Partition under test; the single block by default.
    #[arg(long)]
    z_star: Option<String>,
    /// Reuse the free chain recorded in this samples.jsonl.
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// samples.jsonl from a previous fit.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Graph prior: sics or dcsbm.
    #[arg(long, default_value = "sics")]
    model: String,
    /// Use the karate club graph and factions.
    #[arg(long)]
    karate: bool,
    #[arg(long, default_value_t = 20)]
    p: usize,
    /// Number of blocks, labels drawn uniformly.
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    /// Explicit block labels, overriding --blocks.
    #[arg(long)]
    z: Option<String>,
    /// Between-block edge probability of the sics prior.
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let model = args.model.as_deref().map(str::parse::<ModelKind>).transpose()?;
    let mut cfg = RunConfig::new(model.unwrap_or(ModelKind::Dcsbm));
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if let Some(m) = model {
        if m != cfg.model {
            cfg = RunConfig { model: m, ..cfg };
        }
    }
    set(&mut cfg.iterations, args.iters);
    set(&mut cfg.burn_in, args.burnin);
    set(&mut cfg.thin, args.thin);
    set(&mut cfg.seed, args.seed);
    set(&mut cfg.chains, args.chains);
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.normalize |= args.normalize;
    if let Some(z) = &args.fixed_z {
        cfg.fixed_z = Some(PartitionSpec(z.clone()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn cmd_fit(args: &RunArgs) -> Result<()> {
    let cfg = run_config(args)?;
    let input = load_input(&cfg)?;
    let res = fit(&cfg, &input)?;
    write_fit(&cfg, &res)?;
    println!("binder partition: {}", res.summary.binder_z);
    println!("wrote results to {}", cfg.out.display());
    Ok(())
}

fn cmd_bf(args: &BfArgs) -> Result<()> {
    let mut cfg = run_config(&args.run)?;
    if let Some(z) = &args.z_star {
        cfg.z_star = Some(PartitionSpec(z.clone()));
    }
    let input = load_input(&cfg)?;
    let free = args.samples.as_deref().map(read_samples).transpose()?;
    let report = bayes_factor(&cfg, &input, free)?;
    write_bf(&cfg.out, &report)?;
    let sd = &report.savage_dickey;
    println!("B (Savage-Dickey) = {} (prior mass {}, frequency {})", sd.estimate, sd.prior_mass, sd.frequency);
    if let Some(b) = report.log_bf_harmonic() {
        println!("log B (harmonic mean) = {b}");
    }
    Ok(())
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let mut cfg = RunConfig::new(ModelKind::Dcsbm);
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    let out = args.out.clone().unwrap_or_else(|| args.data.parent().unwrap_or(Path::new(".")).to_path_buf());
    let summary = summarize_samples(&args.data, &out, cfg.hyper.a_nu, cfg.hyper.b_nu)?;
    println!("binder partition: {}", summary.binder_z);
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::new(ModelKind::Dcsbm);
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    let graph = match (args.karate, args.model.as_str()) {
        (true, _) => GraphSpec::Karate,
        (false, "sics") => GraphSpec::Sics { rho: args.rho },
        (false, "dcsbm") => GraphSpec::Dcsbm,
        (false, other) => return Err(Error::input(format!("unknown graph prior {other:?} (expected sics or dcsbm)"))),
    };
    let blocks = match &args.z {
        Some(z) => BlockSpec::Labels(Partition::parse(z, args.p)?),
        None => BlockSpec::Count(args.blocks),
    };
    let spec = SimulationSpec { p: args.p, blocks, graph, n: args.n, hyper: cfg.hyper };
    let sim = simulate(&spec, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    write_data_csv(&args.out.join("data.csv"), &sim.data)?;
    write_matrix_csv(&args.out.join("omega.csv"), &sim.omega)?;
    let labels: Vec<String> = sim.z.one_based().iter().map(usize::to_string).collect();
    std::fs::write(args.out.join("true_z.csv"), labels.join(",") + "\n")?;
    let mut edges = String::from("i,j\n");
    for (i, j) in sim.graph.edges() {
        edges.push_str(&format!("{},{}\n", i + 1, j + 1));
    }
    std::fs::write(args.out.join("true_graph.csv"), edges)?;
    println!("simulated n = {}, p = {}, {} edges, {} blocks", sim.data.n(), sim.data.p(), sim.graph.n_edges(), sim.z.n_blocks());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Bf(a) => cmd_bf(a),
        Command::Summarize(a) => cmd_summarize(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
