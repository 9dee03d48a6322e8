//! Command-line front end. Exit codes: 0 success, 1 usage or format error,
//! 2 degenerate attack.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{model_aliasing, pe_hd_correlation_with, pe_number, PeCorrelationMode};
use crate::attack::{
    chained_column_attack, make_template_traces, mtd_sweep, multiphase_attack, subtract_template,
    AttackConfig, GuessChain, ScoreMode, SimulatedProfiler, Window,
};
use crate::error::{Error, Result};
use crate::power::{LeakageModel, NoiseSpec, PowerCoefficients};
use crate::systolic::{conv_output_dims, ArrayConfig, WeightMatrix, DEFAULT_PSUM_WIDTH};
use crate::trace_io::{
    export_aliasing_csv, export_chains_csv, export_pe_table_csv, fmt_sig6, gen_inputs,
    manifest_path, noise_seed, read_traces, read_weights, write_traces, write_weights, RunManifest,
    SampleType,
};
use crate::traces::{generate_traces, TraceMatrix};

#[derive(Debug, Parser)]
#[command(
    name = "systolic-sca",
    version,
    about = "Power side-channel weight extraction on simulated systolic arrays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the array and write a trace file plus its manifest.
    GenTraces(GenTracesArgs),
    /// Chained attack on one column.
    #[command(name = "attack-1d")]
    Attack1d(AttackArgs),
    /// Independent chained attacks on every column.
    #[command(name = "attack-2d")]
    Attack2d(AttackArgs),
    /// Column-by-column template attack, right edge first.
    AttackMultiphase(MultiphaseArgs),
    /// Simulate template traces on the inputs of a target trace file.
    TemplateGen(TemplateGenArgs),
    /// Measurements-to-disclosure sweep for one column.
    MtdSweep(MtdArgs),
    /// Aliasing map of one weight or inter-PE Reg C correlation.
    CorrAnalysis(CorrArgs),
    /// Output width and height of a convolution layer.
    ConvDims(ConvArgs),
}

#[derive(Debug, Args)]
struct GenTracesArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 3)]
    batch: usize,
    /// Weight file, one matrix row per line.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_PSUM_WIDTH)]
    psum_width: u32,
    /// Uniform Reg A coefficient (default: 3, or 1 on the last column).
    #[arg(long, requires = "beta")]
    alpha: Option<f64>,
    /// Uniform Reg C coefficient (default: 2).
    #[arg(long, requires = "alpha")]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value_t = DType::F64)]
    dtype: DType,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DType {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScoreArg {
    Signed,
    Abs,
}

#[derive(Debug, Args)]
struct TraceSource {
    #[arg(long)]
    traces: PathBuf,
    /// Array width when the trace file has no manifest.
    #[arg(long)]
    cols: Option<usize>,
    /// Reg C width in bits (default: manifest, else 18).
    #[arg(long)]
    psum_width: Option<u32>,
    /// Template trace file subtracted before the attack.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttackOptions {
    /// Beam width: first-weight guesses carried through the chain.
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, value_enum, default_value_t = ScoreArg::Signed)]
    score: ScoreArg,
    /// Leakage model: hd, hw or bit:N.
    #[arg(long, default_value = "hd")]
    model: String,
    /// Sample ranges per row, e.g. "4..8,12..16"; required for measured traces.
    #[arg(long)]
    window: Option<String>,
    /// Weight file holding the true weights.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// CSV report of the ranked chains.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[command(flatten)]
    source: TraceSource,
    /// 1-based column to attack (attack-2d: all columns when omitted).
    #[arg(long)]
    col: Option<usize>,
    #[command(flatten)]
    opts: AttackOptions,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfilerKind {
    Sim,
}

#[derive(Debug, Args)]
struct MultiphaseArgs {
    #[command(flatten)]
    source: TraceSource,
    #[command(flatten)]
    opts: AttackOptions,
    #[arg(long, value_enum, default_value_t = ProfilerKind::Sim)]
    profiler: ProfilerKind,
    /// Noise of the simulated profiler (default: the target's sigma).
    #[arg(long)]
    profile_sigma: Option<f64>,
    #[arg(long, default_value_t = 2)]
    profile_seed: u64,
    /// Directory receiving one chain CSV per phase and the recovered weights.
    #[arg(long)]
    phase_report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TemplateGenArgs {
    /// Target trace file whose inputs are replayed.
    #[arg(long)]
    traces: PathBuf,
    /// Weights loaded into the profiled device (default: all zero).
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    psum_width: Option<u32>,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MtdArgs {
    #[command(flatten)]
    source: TraceSource,
    #[arg(long, default_value_t = 1)]
    col: usize,
    #[arg(long, default_value_t = 10_000)]
    step: usize,
    #[command(flatten)]
    opts: AttackOptions,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorrMode {
    Aliasing,
    PeHd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CycleChoice {
    Busiest,
    Shared,
}

#[derive(Debug, Args)]
struct CorrArgs {
    #[arg(long, value_enum)]
    mode: CorrMode,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 3)]
    batch: usize,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_PSUM_WIDTH)]
    psum_width: u32,
    /// aliasing: 1-based row of the target weight.
    #[arg(long, default_value_t = 1)]
    row: usize,
    /// aliasing: 1-based column of the target weight.
    #[arg(long, default_value_t = 1)]
    col: usize,
    /// aliasing: leakage model (hd, hw or bit:N).
    #[arg(long, default_value = "hd")]
    model: String,
    /// pe-hd: cycles feeding each pair.
    #[arg(long, value_enum, default_value_t = CycleChoice::Busiest)]
    cycles: CycleChoice,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConvArgs {
    w_in: usize,
    h_in: usize,
    w_filter: usize,
    h_filter: usize,
    stride: usize,
    pad: usize,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_degenerate() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(command: Command) -> Result<String> {
    match command {
        Command::GenTraces(a) => gen_traces(a),
        Command::Attack1d(a) => attack(a, false),
        Command::Attack2d(a) => attack(a, true),
        Command::AttackMultiphase(a) => attack_multiphase(a),
        Command::TemplateGen(a) => template_gen(a),
        Command::MtdSweep(a) => mtd(a),
        Command::CorrAnalysis(a) => corr_analysis(a),
        Command::ConvDims(a) => {
            let (w, h) = conv_output_dims(a.w_in, a.h_in, a.w_filter, a.h_filter, a.stride, a.pad)?;
            Ok(format!("{w} {h}\n"))
        }
    }
}

fn gen_traces(a: GenTracesArgs) -> Result<String> {
    let cfg = ArrayConfig::with_psum_width(a.rows, a.cols, a.batch, a.psum_width)?;
    let weights = read_weights(&a.weights)?;
    weights.check_shape(&cfg)?;
    if a.n == 0 {
        return Err(Error::Precondition("--n must be at least 1".into()));
    }
    let coeffs = match (a.alpha, a.beta) {
        (Some(alpha), Some(beta)) => PowerCoefficients::uniform(&cfg, alpha, beta)?,
        _ => PowerCoefficients::default_for(&cfg),
    };
    let sample_type = match a.dtype {
        DType::F32 => SampleType::F32,
        DType::F64 => SampleType::F64,
    };
    let noise = NoiseSpec::new(a.sigma, noise_seed(a.seed))?;
    let inputs = gen_inputs(a.seed, a.n, &cfg);
    let traces = generate_traces(&cfg, &weights, &inputs, &coeffs, &noise)?;
    write_traces(&a.out, &traces, sample_type)?;
    let weights_file = std::fs::canonicalize(&a.weights).map_err(|e| Error::io(&a.weights, e))?;
    let manifest = RunManifest {
        rows: cfg.rows(),
        cols: cfg.cols(),
        batch: cfg.batch(),
        psum_width: cfg.psum_width(),
        weights_file,
        n_traces: a.n,
        seed: a.seed,
        sigma: a.sigma,
        alpha: coeffs.alphas().to_vec(),
        beta: coeffs.betas().to_vec(),
        sample_type,
        measured: false,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mpath = manifest_path(&a.out);
    manifest.save(&mpath)?;
    Ok(format!(
        "wrote {} traces x {} samples to {} (manifest {})\n",
        traces.traces(),
        traces.samples_per_trace(),
        a.out.display(),
        mpath.display()
    ))
}

/// A trace file with the array geometry it was recorded on.
struct Loaded {
    traces: TraceMatrix,
    cfg: ArrayConfig,
    manifest: Option<RunManifest>,
}

fn load_traces(path: &Path, cols: Option<usize>, psum_width: Option<u32>) -> Result<Loaded> {
    let (traces, header) = read_traces(path)?;
    let mpath = manifest_path(path);
    let manifest = if mpath.exists() {
        Some(RunManifest::load(&mpath)?)
    } else {
        None
    };
    let rows = usize::from(header.rows);
    let batch = usize::from(header.batch);
    let cols = match (cols, &manifest) {
        (Some(c), _) => c,
        (None, Some(m)) => m.cols,
        (None, None) => (traces.samples_per_trace() + 2)
            .checked_sub(rows + batch)
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::Shape("cannot infer the array width; pass --cols".into()))?,
    };
    let width = psum_width
        .or(manifest.as_ref().map(|m| m.psum_width))
        .unwrap_or(DEFAULT_PSUM_WIDTH);
    let cfg = ArrayConfig::with_psum_width(rows, cols, batch, width)?;
    if let Some(m) = &manifest {
        if (m.rows, m.batch, m.n_traces) != (rows, batch, traces.traces()) {
            return Err(Error::Shape(format!(
                "manifest {} does not describe {}",
                mpath.display(),
                path.display()
            )));
        }
    }
    let measured = manifest.as_ref().is_some_and(|m| m.measured);
    if !measured && traces.samples_per_trace() != cfg.total_cycles() {
        return Err(Error::Shape(format!(
            "{} samples per trace, a {}x{} array with batch {} runs {} cycles",
            traces.samples_per_trace(),
            rows,
            cols,
            batch,
            cfg.total_cycles()
        )));
    }
    Ok(Loaded {
        traces,
        cfg,
        manifest,
    })
}

fn load_source(src: &TraceSource) -> Result<Loaded> {
    let mut loaded = load_traces(&src.traces, src.cols, src.psum_width)?;
    if let Some(tpath) = &src.templates {
        let (templates, _) = read_traces(tpath)?;
        loaded.traces = subtract_template(&loaded.traces, &templates)?;
    }
    Ok(loaded)
}

fn parse_model(s: &str) -> Result<LeakageModel> {
    let bad = || Error::Parse {
        context: "--model".into(),
        message: format!("expected hd, hw or bit:N, got {s}"),
    };
    match s {
        "hd" => Ok(LeakageModel::HammingDistance),
        "hw" => Ok(LeakageModel::HammingWeight),
        _ => s
            .strip_prefix("bit:")
            .and_then(|b| b.parse().ok())
            .map(LeakageModel::Bit)
            .ok_or_else(bad),
    }
}

fn parse_window(s: &str) -> Result<Vec<Range<usize>>> {
    s.split(',')
        .map(|part| {
            let (a, b) = part.trim().split_once("..").ok_or_else(|| Error::Parse {
                context: "--window".into(),
                message: format!("expected start..end, got {part}"),
            })?;
            let num = |v: &str| {
                v.trim().parse::<usize>().map_err(|_| Error::Parse {
                    context: "--window".into(),
                    message: format!("bad sample index {v}"),
                })
            };
            Ok(num(a)?..num(b)?)
        })
        .collect()
}

fn attack_config(opts: &AttackOptions, loaded: &Loaded) -> Result<AttackConfig> {
    let window = match &opts.window {
        Some(w) => Window::Samples(parse_window(w)?),
        None if loaded.manifest.as_ref().is_some_and(|m| m.measured) => {
            return Err(Error::Precondition("measured traces need --window".into()))
        }
        None => Window::Cycle,
    };
    let cfg = AttackConfig {
        beam: opts.k,
        window,
        score: match opts.score {
            ScoreArg::Signed => ScoreMode::Signed,
            ScoreArg::Abs => ScoreMode::Absolute,
        },
        model: parse_model(&opts.model)?,
        psum_width: loaded.cfg.psum_width(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_truth(opts: &AttackOptions, cfg: &ArrayConfig) -> Result<Option<WeightMatrix>> {
    opts.truth
        .as_ref()
        .map(|p| {
            let w = read_weights(p)?;
            w.check_shape(cfg)?;
            Ok(w)
        })
        .transpose()
}

fn column_index(col: usize, cfg: &ArrayConfig) -> Result<usize> {
    if col == 0 || col > cfg.cols() {
        return Err(Error::Index {
            what: "column (1-based)",
            index: col,
            limit: cfg.cols() + 1,
        });
    }
    Ok(col - 1)
}

fn fmt_weights(w: &[i8]) -> String {
    let items: Vec<String> = w.iter().map(i8::to_string).collect();
    format!("({})", items.join(", "))
}

fn fmt_score(s: Option<f64>) -> String {
    s.filter(|v| v.is_finite())
        .map_or_else(|| "NA".into(), fmt_sig6)
}

/// One line per column: weights | rank | score | MTD.
fn summary_line(out: &mut String, chain: &GuessChain, truth: Option<&[i8]>, mtd: Option<String>) {
    let mtd = mtd.unwrap_or_else(|| "-".into());
    let (weights, rank, score) = match truth {
        Some(t) => (
            fmt_weights(t),
            chain
                .rank_of(t)
                .map_or_else(|| "NA".into(), |r| r.to_string()),
            fmt_score(chain.score_of(t)),
        ),
        None => match chain.best() {
            Some(best) => (
                fmt_weights(&best.weights),
                "1".into(),
                fmt_score(Some(best.score)),
            ),
            None => ("-".into(), "NA".into(), "NA".into()),
        },
    };
    let best = chain
        .best()
        .map_or_else(|| "-".into(), |b| fmt_weights(&b.weights));
    let _ = writeln!(
        out,
        "column {} | weights {weights} | rank {rank} | score {score} | MTD {mtd} | best {best}",
        chain.column + 1
    );
}

fn write_report(
    path: Option<&PathBuf>,
    chains: &[GuessChain],
    truth: Option<&WeightMatrix>,
) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    let truths: Vec<Option<Vec<i8>>> = chains
        .iter()
        .map(|c| truth.map(|t| t.column(c.column)))
        .collect();
    let rows: Vec<(&GuessChain, Option<&[i8]>)> = chains
        .iter()
        .zip(&truths)
        .map(|(c, t)| (c, t.as_deref()))
        .collect();
    export_chains_csv(path, &rows)
}

fn attack(a: AttackArgs, all_columns: bool) -> Result<String> {
    let loaded = load_source(&a.source)?;
    let cfg = attack_config(&a.opts, &loaded)?;
    let truth = load_truth(&a.opts, &loaded.cfg)?;
    let columns: Vec<usize> = match a.col {
        Some(c) => vec![column_index(c, &loaded.cfg)?],
        None if all_columns => (0..loaded.cfg.cols()).collect(),
        None => vec![0],
    };
    let chains = columns
        .iter()
        .map(|&c| chained_column_attack(&loaded.traces, c, &cfg))
        .collect::<Result<Vec<_>>>()?;
    write_report(a.opts.report.as_ref(), &chains, truth.as_ref())?;
    let mut out = String::new();
    for chain in &chains {
        let t = truth.as_ref().map(|w| w.column(chain.column));
        summary_line(&mut out, chain, t.as_deref(), None);
    }
    Ok(out)
}

fn attack_multiphase(a: MultiphaseArgs) -> Result<String> {
    let loaded = load_source(&a.source)?;
    let cfg = attack_config(&a.opts, &loaded)?;
    let truth = load_truth(&a.opts, &loaded.cfg)?;
    let coeffs = match &loaded.manifest {
        Some(m) => m.coefficients()?,
        None => PowerCoefficients::default_for(&loaded.cfg),
    };
    let sigma = a
        .profile_sigma
        .or(loaded.manifest.as_ref().map(|m| m.sigma))
        .unwrap_or(0.0);
    let profiler = match a.profiler {
        ProfilerKind::Sim => SimulatedProfiler::new(
            loaded.cfg,
            coeffs,
            NoiseSpec::new(sigma, noise_seed(a.profile_seed))?,
        )?,
    };
    let outcome = multiphase_attack(&loaded.traces, &loaded.cfg, &cfg, &profiler)?;
    let chains: Vec<GuessChain> = outcome.phases.iter().map(|p| p.chain.clone()).collect();
    write_report(a.opts.report.as_ref(), &chains, truth.as_ref())?;
    if let Some(dir) = &a.phase_report {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, phase) in outcome.phases.iter().enumerate() {
            let path = dir.join(format!("phase{}_col{}.csv", k + 1, phase.column + 1));
            write_report(
                Some(&path),
                std::slice::from_ref(&phase.chain),
                truth.as_ref(),
            )?;
        }
        write_weights(dir.join("recovered_weights.txt"), &outcome.weights)?;
    }
    let mut out = String::new();
    for (k, phase) in outcome.phases.iter().enumerate() {
        let _ = write!(out, "phase {}: ", k + 1);
        let t = truth.as_ref().map(|w| w.column(phase.column));
        summary_line(&mut out, &phase.chain, t.as_deref(), None);
    }
    let _ = writeln!(out, "recovered weights:");
    for row in outcome.weights.to_rows() {
        let _ = writeln!(out, "  {}", fmt_weights(&row));
    }
    Ok(out)
}

fn template_gen(a: TemplateGenArgs) -> Result<String> {
    let loaded = load_traces(&a.traces, a.cols, a.psum_width)?;
    let cfg = loaded.cfg;
    let weights = match &a.weights {
        Some(p) => read_weights(p)?,
        None => WeightMatrix::zeros(cfg.rows(), cfg.cols()),
    };
    weights.check_shape(&cfg)?;
    let coeffs = match &loaded.manifest {
        Some(m) => m.coefficients()?,
        None => PowerCoefficients::default_for(&cfg),
    };
    let noise = NoiseSpec::new(a.sigma, noise_seed(a.seed))?;
    let templates = make_template_traces(&cfg, &weights, loaded.traces.inputs(), &coeffs, &noise)?;
    write_traces(&a.out, &templates, SampleType::F64)?;
    Ok(format!(
        "wrote {} template traces to {}\n",
        templates.traces(),
        a.out.display()
    ))
}

fn mtd(a: MtdArgs) -> Result<String> {
    let loaded = load_source(&a.source)?;
    let cfg = attack_config(&a.opts, &loaded)?;
    let col = column_index(a.col, &loaded.cfg)?;
    let truth = load_truth(&a.opts, &loaded.cfg)?
        .ok_or_else(|| Error::Precondition("mtd-sweep needs --truth".into()))?;
    let column = truth.column(col);
    let mut last = None;
    let report = mtd_sweep(&loaded.traces, a.step, &column, |t| {
        let chain = chained_column_attack(t, col, &cfg);
        if let Ok(c) = &chain {
            last = Some(c.clone());
        }
        chain
    })?;
    if let Some(path) = &a.opts.report {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["traces", "rank"])?;
        for (n, rank) in &report.points {
            w.write_record([
                n.to_string(),
                rank.map_or_else(|| "NA".into(), |r| r.to_string()),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut out = String::new();
    for (n, rank) in &report.points {
        let _ = writeln!(
            out,
            "{n} traces: rank {}",
            rank.map_or_else(|| "NA".into(), |r| r.to_string())
        );
    }
    match &last {
        Some(chain) => summary_line(&mut out, chain, Some(&column), Some(report.display_mtd())),
        None => {
            let _ = writeln!(
                out,
                "column {} | weights {} | rank NA | score NA | MTD NA",
                col + 1,
                fmt_weights(&column)
            );
        }
    }
    Ok(out)
}

fn corr_analysis(a: CorrArgs) -> Result<String> {
    let weights = read_weights(&a.weights)?;
    let cfg = ArrayConfig::with_psum_width(weights.rows(), weights.cols(), a.batch, a.psum_width)?;
    let inputs = gen_inputs(a.seed, a.n, &cfg);
    let mut out = String::new();
    match a.mode {
        CorrMode::Aliasing => {
            let col = column_index(a.col, &cfg)?;
            if a.row == 0 || a.row > cfg.rows() {
                return Err(Error::Index {
                    what: "row (1-based)",
                    index: a.row,
                    limit: cfg.rows() + 1,
                });
            }
            let prior = &weights.column(col)[..a.row - 1];
            let map = model_aliasing(prior, &inputs, parse_model(&a.model)?, a.psum_width)?;
            if let Some(path) = &a.out {
                export_aliasing_csv(path, &map)?;
            }
            let _ = writeln!(
                out,
                "row {} column {}: median off-diagonal |correlation| {}",
                a.row,
                a.col,
                fmt_score(map.median_off_diagonal_abs())
            );
        }
        CorrMode::PeHd => {
            let mode = match a.cycles {
                CycleChoice::Busiest => PeCorrelationMode::BusiestCycle,
                CycleChoice::Shared => PeCorrelationMode::StrongestSharedCycle,
            };
            let table = pe_hd_correlation_with(&cfg, &weights, &inputs, mode)?;
            if let Some(path) = &a.out {
                export_pe_table_csv(path, &table)?;
            }
            let pes = table.num_pes();
            let _ = writeln!(
                out,
                "     {}",
                (1..=pes)
                    .map(|p| format!("{:>6}", format!("PE{p}")))
                    .collect::<String>()
            );
            for p in 0..pes {
                let (r, c) = (p / cfg.cols(), p % cfg.cols());
                let _ = write!(out, "{:<5}", format!("PE{}", pe_number(r, c, cfg.cols())));
                for q in 0..pes {
                    let cell = table
                        .get(p, q)
                        .map_or_else(|| "NA".into(), |v| format!("{v:.2}"));
                    let _ = write!(out, "{cell:>6}");
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}
