//! Chain orchestration and the artifacts written by `fit`, `bf` and
//! `summarize`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::dcsbm::{DcsbmOptions, DcsbmSampler, DcsbmState};
use crate::error::{Error, Result};
use crate::io::config::{ModelKind, RunConfig};
use crate::io::data::{quantile_normalize_data, read_data_csv, read_manifest, write_matrix_csv};
use crate::model::DataMatrix;
use crate::multi::{MultiData, MultiOptions, MultiSampler, MultiState};
use crate::partition::Partition;
use crate::posterior::{
    harmonic_mean_log_ml, median_probability_graph, running_harmonic_mean, running_savage_dickey, savage_dickey_bf,
    summarize, PosteriorSummary, SampleLog, SampleRecord, SavageDickey,
};
use crate::rng::{chain_rng, ChainRng};
use crate::sics::{SicsOptions, SicsSampler, SicsState};
use crate::sun::{SunModel, SunOptions, SunSampler, SunState};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "BLOCKGGM_THREADS";

/// Offset of the stream used by the fixed-partition chain of `bf`, so it
/// never shares randomness with the free chains.
const PINNED_STREAM: u64 = 1 << 31;

#[derive(Clone, Debug)]
pub enum Input {
    Single(DataMatrix),
    Multi(MultiData),
}

impl Input {
    pub fn p(&self) -> usize {
        match self {
            Input::Single(y) => y.p(),
            Input::Multi(m) => m.p(),
        }
    }
}

/// Reads the configured data: a CSV, or a group manifest for the
/// multigraph model.
pub fn load_input(cfg: &RunConfig) -> Result<Input> {
    let path = cfg.data.as_deref().ok_or_else(|| Error::input("no data file given"))?;
    let norm = |y: DataMatrix| if cfg.normalize { quantile_normalize_data(&y) } else { Ok(y) };
    match cfg.model {
        ModelKind::Multi => {
            let (_, groups) = read_manifest(path)?;
            let groups = groups.groups().iter().cloned().map(norm).collect::<Result<Vec<_>>>()?;
            Ok(Input::Multi(MultiData::new(groups)?))
        }
        _ => Ok(Input::Single(norm(read_data_csv(path)?)?)),
    }
}

/// Worker count: `BLOCKGGM_THREADS` if set, else the available cores.
pub fn worker_limit() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                log::warn!("ignoring {THREADS_ENV}={v:?}; expected a positive integer");
                cores
            }
        },
        Err(_) => cores,
    }
}

/// Scalars of one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub chain: usize,
    pub iteration: usize,
    pub loglik: f64,
    pub n_blocks: usize,
    pub nu: f64,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
}

impl From<&SampleRecord> for TraceRow {
    fn from(r: &SampleRecord) -> Self {
        TraceRow {
            chain: r.chain,
            iteration: r.iteration,
            loglik: r.loglik,
            n_blocks: r.n_blocks,
            nu: r.nu,
            alpha: r.alpha,
            rho: r.rho,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ChainOutput {
    pub log: SampleLog,
    pub trace: Vec<TraceRow>,
}

trait Chain {
    fn step(&mut self, rng: &mut ChainRng) -> Result<()>;
    fn record(&self, chain: usize, iteration: usize) -> SampleRecord;
}

struct Dcsbm(DcsbmSampler, DcsbmState);

impl Chain for Dcsbm {
    fn step(&mut self, rng: &mut ChainRng) -> Result<()> {
        self.0.sweep(&mut self.1, rng)
    }

    fn record(&self, chain: usize, iteration: usize) -> SampleRecord {
        let s = &self.1;
        SampleRecord {
            chain,
            iteration,
            z: s.z(),
            graphs: vec![s.graph.clone()],
            group_labels: None,
            tied: None,
            loglik: s.loglik,
            n_blocks: s.n_blocks(),
            nu: s.nu,
            alpha: Some(s.alpha),
            rho: None,
        }
    }
}

struct Sics(SicsSampler, SicsState);

impl Chain for Sics {
    fn step(&mut self, rng: &mut ChainRng) -> Result<()> {
        self.0.sweep(&mut self.1, rng)
    }

    fn record(&self, chain: usize, iteration: usize) -> SampleRecord {
        let s = &self.1;
        SampleRecord {
            chain,
            iteration,
            z: s.z(),
            graphs: vec![s.graph.clone()],
            group_labels: None,
            tied: None,
            loglik: s.loglik,
            n_blocks: s.n_blocks(),
            nu: s.nu,
            alpha: None,
            rho: Some(s.rho),
        }
    }
}

struct Sun(SunSampler, SunState);

impl Chain for Sun {
    fn step(&mut self, rng: &mut ChainRng) -> Result<()> {
        self.0.sweep(&mut self.1, rng)
    }

    fn record(&self, chain: usize, iteration: usize) -> SampleRecord {
        let s = &self.1;
        let z = s.z();
        // log p(Y | z) up to a constant
        let loglik = self.0.model().log_partition_weight(&z).unwrap_or(f64::NEG_INFINITY);
        SampleRecord {
            chain,
            iteration,
            n_blocks: z.n_blocks(),
            z,
            graphs: Vec::new(),
            group_labels: None,
            tied: None,
            loglik,
            nu: s.nu,
            alpha: None,
            rho: None,
        }
    }
}

struct Multi(MultiSampler, MultiState);

impl Chain for Multi {
    fn step(&mut self, rng: &mut ChainRng) -> Result<()> {
        self.0.sweep(&mut self.1, rng)
    }

    fn record(&self, chain: usize, iteration: usize) -> SampleRecord {
        let s = &self.1;
        let q = s.q();
        SampleRecord {
            chain,
            iteration,
            z: s.z(0),
            graphs: s.graphs.clone(),
            group_labels: Some((0..q).map(|x| s.labels(x).iter().map(|l| l + 1).collect()).collect()),
            tied: Some((0..q).map(|x| s.tied(x).to_vec()).collect()),
            loglik: s.loglik,
            n_blocks: s.n_blocks(),
            nu: s.nu,
            alpha: Some(s.alpha),
            rho: None,
        }
    }
}

fn build_chain(cfg: &RunConfig, input: &Input, rng: &mut ChainRng) -> Result<Box<dyn Chain>> {
    let p = input.p();
    let fixed = cfg.fixed_z.as_ref().map(|z| z.resolve(p)).transpose()?;
    let single = |what: &str| match input {
        Input::Single(y) => Ok(y.clone()),
        Input::Multi(_) => Err(Error::input(format!("the {what} model takes a single data file"))),
    };
    Ok(match cfg.model {
        ModelKind::Dcsbm => {
            let opts = DcsbmOptions {
                update_block_labels: fixed.is_none(),
                update_nu: fixed.is_none(),
                sample_precision: cfg.sample_precision,
                ..DcsbmOptions::default()
            };
            let smp = DcsbmSampler::new(single("dcsbm")?, cfg.hyper.clone(), opts)?;
            let state = smp.initial_state(fixed.as_ref(), rng)?;
            Box::new(Dcsbm(smp, state))
        }
        ModelKind::Sics => {
            let opts = SicsOptions {
                update_labels: fixed.is_none(),
                update_nu: fixed.is_none(),
                edge_moves: cfg.edge_moves,
                sample_precision: cfg.sample_precision,
                ..SicsOptions::default()
            };
            let smp = SicsSampler::new(single("sics")?, cfg.hyper.clone(), opts)?;
            let state = smp.initial_state(fixed.as_ref())?;
            Box::new(Sics(smp, state))
        }
        ModelKind::Sun => {
            if fixed.is_some() {
                return Err(Error::input("a fixed partition is not supported for the sun model"));
            }
            cfg.hyper.validate(p)?;
            let smp = SunSampler::new(SunModel::new(&single("sun")?)?, cfg.hyper.clone(), SunOptions::default());
            let state = smp.initial_state();
            Box::new(Sun(smp, state))
        }
        ModelKind::Multi => {
            if fixed.is_some() {
                return Err(Error::input("a fixed partition is not supported for the multi model"));
            }
            let Input::Multi(data) = input else {
                return Err(Error::input("the multi model takes a manifest of group data files"));
            };
            let opts = MultiOptions { sample_precision: cfg.sample_precision, ..MultiOptions::default() };
            let smp = MultiSampler::new(data.clone(), cfg.hyper.clone(), opts)?;
            let state = smp.initial_state(rng)?;
            Box::new(Multi(smp, state))
        }
    })
}

/// Runs one chain on its own random stream.
pub fn run_chain(cfg: &RunConfig, input: &Input, chain: usize) -> Result<ChainOutput> {
    run_stream(cfg, input, chain, chain as u64)
}

fn run_stream(cfg: &RunConfig, input: &Input, chain: usize, stream: u64) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut rng = chain_rng(cfg.seed, stream);
    let mut state = build_chain(cfg, input, &mut rng)?;
    let mut out = ChainOutput::default();
    out.trace.reserve(cfg.iterations);
    for t in 1..=cfg.iterations {
        state.step(&mut rng)?;
        let rec = state.record(chain, t);
        out.trace.push(TraceRow::from(&rec));
        if t > cfg.burn_in && (t - cfg.burn_in - 1) % cfg.thin == 0 {
            out.log.records.push(rec);
        }
        if t % 1000 == 0 {
            log::info!("chain {chain}: iteration {t}/{}", cfg.iterations);
        }
    }
    Ok(out)
}

/// Runs `cfg.chains` chains on up to [`worker_limit`] threads and merges
/// them in chain order, so the result does not depend on the thread count.
pub fn run_chains(cfg: &RunConfig, input: &Input) -> Result<ChainOutput> {
    let n = cfg.chains;
    let workers = worker_limit().min(n).max(1);
    let results: Vec<Mutex<Option<Result<ChainOutput>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let c = next.fetch_add(1, Ordering::Relaxed);
                if c >= n {
                    break;
                }
                let res = run_chain(cfg, input, c);
                *results[c].lock().expect("result slot") = Some(res);
            });
        }
    });
    let mut merged = ChainOutput::default();
    for slot in results {
        let out = slot.into_inner().expect("result slot").expect("every chain ran")?;
        merged.log.records.extend(out.log.records);
        merged.trace.extend(out.trace);
    }
    Ok(merged)
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub output: ChainOutput,
    pub summary: PosteriorSummary,
    pub runtime: Duration,
}

pub fn fit(cfg: &RunConfig, input: &Input) -> Result<FitResult> {
    let start = Instant::now();
    let output = run_chains(cfg, input)?;
    let summary = summarize(&output.log, cfg.hyper.a_nu, cfg.hyper.b_nu)?;
    Ok(FitResult { output, summary, runtime: start.elapsed() })
}

/// Writes every `fit` artifact into `cfg.out`.
pub fn write_fit(cfg: &RunConfig, res: &FitResult) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    write_samples(&cfg.out.join("samples.jsonl"), &res.output.log)?;
    write_trace(&cfg.out.join("trace.csv"), &res.output.trace)?;
    write_summary_matrices(&cfg.out, &res.summary)?;
    let mut report = String::new();
    kv(&mut report, "model", cfg.model.name());
    kv(&mut report, "seed", cfg.seed);
    kv(&mut report, "iterations", cfg.iterations);
    kv(&mut report, "burn_in", cfg.burn_in);
    kv(&mut report, "thin", cfg.thin);
    kv(&mut report, "chains", cfg.chains);
    kv(&mut report, "recorded", res.output.log.records.len());
    kv(&mut report, "runtime_seconds", format!("{:.3}", res.runtime.as_secs_f64()));
    summary_report(&mut report, &res.summary);
    std::fs::write(cfg.out.join("summary.txt"), report)?;
    Ok(())
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    writeln!(out, "{key} = {value}").expect("writing to a string");
}

fn summary_report(out: &mut String, s: &PosteriorSummary) {
    kv(out, "binder_z", s.binder_z.to_string());
    kv(out, "binder_blocks", s.binder_z.n_blocks());
    match &s.bayes_factor {
        Some(bf) => {
            kv(out, "bf_single_block", bf.estimate);
            kv(out, "bf_prior_mass", bf.prior_mass);
            kv(out, "bf_frequency", bf.frequency);
        }
        None => kv(out, "bf_single_block", "unavailable"),
    }
    let groups = s.edge_probs.len();
    for (x, probs) in s.edge_probs.iter().enumerate() {
        let edges: Vec<String> =
            median_probability_graph(probs).edges().iter().map(|(i, j)| format!("{}-{}", i + 1, j + 1)).collect();
        let key = if groups == 1 { "median_graph_edges".to_string() } else { format!("median_graph_edges_group{}", x + 1) };
        kv(out, &key, edges.join(" "));
    }
}

fn write_summary_matrices(dir: &Path, s: &PosteriorSummary) -> Result<()> {
    write_matrix_csv(&dir.join("similarity.csv"), &s.similarity)?;
    match s.edge_probs.len() {
        0 => {}
        1 => write_matrix_csv(&dir.join("edge_probs.csv"), &s.edge_probs[0])?,
        _ => {
            for (x, m) in s.edge_probs.iter().enumerate() {
                write_matrix_csv(&dir.join(format!("edge_probs_group{}.csv", x + 1)), m)?;
            }
        }
    }
    for (x, m) in s.group_similarity.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("similarity_group{}.csv", x + 1)), m)?;
    }
    if let Some(m) = &s.cross_similarity {
        write_matrix_csv(&dir.join("similarity_cross.csv"), m)?;
    }
    Ok(())
}

pub fn write_samples(path: &Path, log: &SampleLog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in &log.records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<SampleLog> {
    let file = File::open(path).map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    let mut log = SampleLog::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::input(format!("{}: line {}: {e}", path.display(), idx + 1)))?;
        log.records.push(rec);
    }
    if log.records.is_empty() {
        return Err(Error::input(format!("{}: no samples", path.display())));
    }
    Ok(log)
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "chain,iteration,loglik,n_blocks,nu,alpha,rho")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in trace {
        writeln!(w, "{},{},{},{},{},{},{}", r.chain, r.iteration, r.loglik, r.n_blocks, r.nu, opt(r.alpha), opt(r.rho))?;
    }
    w.flush()?;
    Ok(())
}

/// Re-summarizes a sample file into `out`.
pub fn summarize_samples(samples: &Path, out: &Path, a_nu: f64, b_nu: f64) -> Result<PosteriorSummary> {
    let log = read_samples(samples)?;
    let summary = summarize(&log, a_nu, b_nu)?;
    std::fs::create_dir_all(out)?;
    write_summary_matrices(out, &summary)?;
    let mut report = String::new();
    kv(&mut report, "recorded", log.records.len());
    summary_report(&mut report, &summary);
    std::fs::write(out.join("summary.txt"), report)?;
    Ok(summary)
}

/// Bayes factor of a fixed partition z* against the full model.
#[derive(Clone, Debug)]
pub struct BfReport {
    pub z_star: Partition,
    pub savage_dickey: SavageDickey,
    /// Harmonic-mean estimates of log p(Y) from the free chain and of
    /// log p(Y | z*) from a chain with z pinned at z*.
    pub log_ml_free: Option<f64>,
    pub log_ml_pinned: Option<f64>,
    /// Running log estimates per recorded sample: (Savage–Dickey,
    /// harmonic mean).
    pub running: Vec<(f64, Option<f64>)>,
}

impl BfReport {
    pub fn log_bf_harmonic(&self) -> Option<f64> {
        Some(self.log_ml_pinned? - self.log_ml_free?)
    }
}

/// Savage–Dickey estimate from the free chain (run now unless `free` is
/// given) and, for graph models, the harmonic-mean estimate using an extra
/// chain pinned at z*.
pub fn bayes_factor(cfg: &RunConfig, input: &Input, free: Option<SampleLog>) -> Result<BfReport> {
    let p = input.p();
    let z_star = cfg.z_star.as_ref().map(|z| z.resolve(p)).transpose()?.unwrap_or_else(|| Partition::single_block(p));
    let free = match free {
        Some(log) => log,
        None => run_chains(cfg, input)?.log,
    };
    let parts = free.partitions();
    let savage_dickey = savage_dickey_bf(&parts, &z_star, cfg.hyper.a_nu, cfg.hyper.b_nu)?;
    let running_sd: Vec<f64> = running_savage_dickey(&parts, &z_star, savage_dickey.prior_mass).iter().map(|b| b.ln()).collect();
    let (mut log_ml_free, mut log_ml_pinned, mut running_hm) = (None, None, None);
    if matches!(cfg.model, ModelKind::Dcsbm | ModelKind::Sics) {
        let mut pinned_cfg = cfg.clone();
        pinned_cfg.fixed_z = Some(crate::io::config::PartitionSpec(z_star.to_string()));
        let pinned = run_stream(&pinned_cfg, input, 0, PINNED_STREAM)?.log;
        let (lf, lp) = (free.logliks(), pinned.logliks());
        log_ml_free = Some(harmonic_mean_log_ml(&lf)?);
        log_ml_pinned = Some(harmonic_mean_log_ml(&lp)?);
        let (rf, rp) = (running_harmonic_mean(&lf), running_harmonic_mean(&lp));
        running_hm = Some(rp.iter().zip(&rf).map(|(a, b)| a - b).collect::<Vec<f64>>());
    }
    let running = running_sd
        .iter()
        .enumerate()
        .map(|(t, &sd)| (sd, running_hm.as_ref().and_then(|r| r.get(t).copied())))
        .collect();
    Ok(BfReport { z_star, savage_dickey, log_ml_free, log_ml_pinned, running })
}

pub fn write_bf(dir: &Path, report: &BfReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = String::new();
    let sd = &report.savage_dickey;
    kv(&mut out, "z_star", report.z_star.to_string());
    kv(&mut out, "bf_savage_dickey", sd.estimate);
    kv(&mut out, "log_bf_savage_dickey", sd.estimate.ln());
    kv(&mut out, "prior_mass", sd.prior_mass);
    kv(&mut out, "frequency", sd.frequency);
    if let (Some(f), Some(p), Some(b)) = (report.log_ml_free, report.log_ml_pinned, report.log_bf_harmonic()) {
        kv(&mut out, "log_ml_harmonic_free", f);
        kv(&mut out, "log_ml_harmonic_pinned", p);
        kv(&mut out, "log_bf_harmonic", b);
    }
    std::fs::write(dir.join("bf_report.txt"), out)?;
    let mut w = BufWriter::new(File::create(dir.join("bf_running.csv"))?);
    writeln!(w, "sample,log_bf_savage_dickey,log_bf_harmonic")?;
    for (t, (sd, hm)) in report.running.iter().enumerate() {
        writeln!(w, "{},{},{}", t + 1, sd, hm.map_or(String::new(), |v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
