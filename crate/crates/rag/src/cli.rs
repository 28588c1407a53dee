//! The `bee` command-line tool.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use bee_core::adaptive::{accuracy, synthetic_tasks, train_observed, SyntheticSpec, ToyTask, TrainConfig};
use bee_core::balancing::{lexical_score, normalize_scores, ChunkLayout, ScoreRecord, ScoreSource};
use bee_core::bench::{run_cell, BenchConfig, BenchRow, Variant};
use bee_core::parallel::{build_parallel_mask, corrupt_mask, verify_isolation_with_mask};
use bee_core::theory::{closed_form_entropy, mc_entropy, sigma_curve, solve_sigma, BalancingTarget};
use bee_core::Rng;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, GridPoint, List, Resolved, Tau, ENDPOINT_ENV};
use crate::formats::{projection_table, read_tasks, write_tasks};
use crate::output::{line_chart_svg, write_atomic, Series, Table};
use crate::scorer::{RemoteScorer, DEFAULT_MAX_IN_FLIGHT, DEFAULT_TIMEOUT_SECS};
use crate::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "bee", version, about = "Balanced attention entropy tools")]
pub struct Cli {
    /// Flat key=value file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the factor std that keeps entropy at its one-token level.
    SolveSigma(SolveSigmaArgs),
    /// Monte Carlo entropy of softmax over Gaussian logits plus factors.
    EntropySim(EntropySimArgs),
    /// Synthetic needle-in-documents benchmark.
    Bench(BenchArgs),
    /// Check that parallel-context masks isolate documents.
    MaskVerify(MaskVerifyArgs),
    /// Score documents against a query and normalize to factors.
    Score(ScoreArgs),
    /// Train the sentence-vector projection on toy tasks.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
struct SolveSigmaArgs {
    /// Context lengths, ascending; `e` is accepted.
    #[arg(long)]
    n_grid: Option<List<GridPoint>>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct EntropySimArgs {
    #[arg(long)]
    n_grid: Option<List<usize>>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, conflicts_with = "solve")]
    sigma: Option<f64>,
    /// Use the solved sigma for each n.
    #[arg(long)]
    solve: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also simulate one shared factor per chunk of this many tokens.
    #[arg(long)]
    chunk_len: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    docs_grid: Option<List<usize>>,
    #[arg(long)]
    doc_len: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long)]
    variants: Option<List<Variant>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
    /// Path prefix for `-entropy.svg` and `-gold-mass.svg` charts.
    #[arg(long)]
    svg: Option<String>,
}

#[derive(Debug, Args)]
struct MaskVerifyArgs {
    #[arg(long)]
    chunks: Option<usize>,
    /// Chunk lengths; a single value applies to every chunk.
    #[arg(long)]
    lens: Option<List<usize>>,
    #[arg(long)]
    prefix: Option<usize>,
    #[arg(long)]
    query: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flip one mask entry so a document sees another.
    #[arg(long)]
    corrupt: bool,
    /// Also write the per-chunk report as CSV.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    query: Option<String>,
    /// Text file with one document per line.
    #[arg(long)]
    docs: Option<String>,
    /// `lexical` or `remote`.
    #[arg(long)]
    scorer: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Remote scorer URL (else $BEE_SCORER_ENDPOINT, else the config file).
    #[arg(long)]
    endpoint: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON task file.
    #[arg(long, conflicts_with = "synthetic")]
    tasks_file: Option<String>,
    /// Number of synthetic separable tasks (seeded by --seed).
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long)]
    dr: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Clip threshold, or `none`.
    #[arg(long)]
    tau: Option<Tau>,
    #[arg(long)]
    seed: Option<u64>,
    /// Multiply every input vector by this factor.
    #[arg(long)]
    scale: Option<f64>,
    /// Projection CSV.
    #[arg(long)]
    out: Option<String>,
    /// Training log CSV (default: next to --out).
    #[arg(long)]
    log: Option<String>,
    /// Write the task set used as JSON.
    #[arg(long)]
    save_tasks: Option<String>,
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code. `endpoint_env` stands in for `$BEE_SCORER_ENDPOINT`.
pub fn run(args: impl IntoIterator<Item = OsString>, endpoint_env: Option<String>, out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::IO_OR_CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, endpoint_env, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("bee: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let env = std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty());
    run(std::env::args_os(), env, &mut std::io::stdout().lock())
}

fn dispatch(cli: Cli, endpoint_env: Option<String>, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::SolveSigma(a) => solve_sigma_cmd(a, &file),
        Command::EntropySim(a) => entropy_sim_cmd(a, &file),
        Command::Bench(a) => bench_cmd(a, &file),
        Command::MaskVerify(a) => mask_verify_cmd(a, &file, out),
        Command::Score(a) => score_cmd(a, &file, endpoint_env),
        Command::Train(a) => train_cmd(a, &file, out),
    }
}

/// Shortest round-trip formatting; scientific notation for tiny and huge
/// magnitudes.
pub fn fmt(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn solve_sigma_cmd(a: SolveSigmaArgs, file: &ConfigFile) -> Result<i32, CliError> {
    let mut r = Resolved::new("solve-sigma", file);
    let default_grid = List([16.0, 64.0, 256.0, 1024.0, 4096.0].map(GridPoint).to_vec());
    let grid = r.take("n-grid", a.n_grid, default_grid)?;
    let mu = r.take("mu", a.mu, 0.0)?;
    let out = r.take("out", a.out, "sigma_curve.csv".to_string())?;

    let ns: Vec<f64> = grid.0.iter().map(|g| g.0).collect();
    let points = sigma_curve(&ns, mu)?;
    let mut table = Table::new(r.header(), &["n", "mu", "sigma", "residual", "status"]);
    for p in &points {
        table.push(vec![
            fmt(p.n),
            fmt(p.mu),
            p.sigma.map(fmt).unwrap_or_default(),
            fmt(p.residual),
            if p.solved() { "ok" } else { "no_root" }.into(),
        ]);
    }
    table.write(Path::new(&out))?;
    let unsolved = points.iter().filter(|p| !p.solved()).count();
    if unsolved > 0 {
        eprintln!("bee: {unsolved} grid point(s) have no root; rows flagged no_root");
        return Ok(exit::NUMERICAL);
    }
    Ok(exit::OK)
}

fn entropy_sim_cmd(a: EntropySimArgs, file: &ConfigFile) -> Result<i32, CliError> {
    let mut r = Resolved::new("entropy-sim", file);
    let grid = r.take("n-grid", a.n_grid, List(vec![256, 1024, 4096]))?;
    let mu = r.take("mu", a.mu, 0.0)?;
    let solve = r.take("solve", a.solve.then_some(true), false)?;
    let fixed_sigma = if solve {
        None
    } else {
        Some(r.take("sigma", a.sigma, 0.0)?)
    };
    let trials = r.take("trials", a.trials, bee_core::theory::DEFAULT_TRIALS)?;
    let seed = r.take("seed", a.seed, 0u64)?;
    let chunk_len = r.take_opt("chunk-len", a.chunk_len)?;
    let out = r.take("out", a.out, "entropy_sim.csv".to_string())?;
    if trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    if chunk_len == Some(0) {
        return Err(CliError::Config("chunk-len must be positive".into()));
    }

    let mut table = Table::new(
        r.header(),
        &["n", "variant", "mu", "sigma", "trials", "seed", "estimate", "stderr", "closed_form", "warning"],
    );
    let mut failed = 0;
    for &n in &grid.0 {
        let sigma = match fixed_sigma {
            Some(s) => Ok(s),
            None => solve_sigma(n as f64, mu),
        };
        let sigma = match sigma {
            Ok(s) => s,
            Err(bee_core::Error::NoRoot { .. }) => {
                failed += 1;
                table.push(vec![
                    n.to_string(),
                    "per-token".into(),
                    fmt(mu),
                    String::new(),
                    trials.to_string(),
                    seed.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "no_root".into(),
                ]);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let target = BalancingTarget::new(mu, sigma)?;
        let closed = closed_form_entropy(n as f64, mu, sigma)?;
        let mut variants = vec![("per-token", None)];
        if let Some(len) = chunk_len {
            let lens: Vec<usize> = (0..n).step_by(len).map(|s| len.min(n - s)).collect();
            variants.push(("chunked", Some(ChunkLayout::contiguous(0, &lens, 0)?)));
        }
        for (name, layout) in variants {
            let rep = mc_entropy(n, target, trials, seed, layout.as_ref())?;
            table.push(vec![
                n.to_string(),
                name.into(),
                fmt(mu),
                fmt(sigma),
                trials.to_string(),
                seed.to_string(),
                fmt(rep.estimate),
                fmt(rep.stderr),
                fmt(closed),
                if trials == 1 { "single_trial" } else { "" }.into(),
            ]);
        }
    }
    table.write(Path::new(&out))?;
    Ok(if failed > 0 { exit::NUMERICAL } else { exit::OK })
}

fn bench_cmd(a: BenchArgs, file: &ConfigFile) -> Result<i32, CliError> {
    let mut r = Resolved::new("bench", file);
    let d = BenchConfig::default();
    let config = BenchConfig {
        docs_grid: r.take("docs-grid", a.docs_grid, List(d.docs_grid))?.0,
        doc_len: r.take("doc-len", a.doc_len, d.doc_len)?,
        dim: r.take("dim", a.dim, d.dim)?,
        snr: r.take("snr", a.snr, d.snr)?,
        mu: r.take("mu", a.mu, d.mu)?,
        variants: r.take("variants", a.variants, List(d.variants))?.0,
        trials: r.take("trials", a.trials, d.trials)?,
        seed: r.take("seed", a.seed, d.seed)?,
    };
    let out = r.take("out", a.out, "bench.csv".to_string())?;
    let svg = r.take_opt("svg", a.svg)?;
    if config.docs_grid.is_empty() {
        return Err(CliError::Config("docs-grid is empty".into()));
    }

    // cells are independent; run them side by side and keep grid order
    let cells: Vec<Result<Vec<BenchRow>, bee_core::Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = config
            .docs_grid
            .iter()
            .map(|&n| {
                let config = &config;
                s.spawn(move || run_cell(config, n))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("benchmark cell panicked"))
            .collect()
    });
    let mut rows = Vec::new();
    for cell in cells {
        rows.extend(cell?);
    }

    let mut table = Table::new(
        r.header(),
        &[
            "n_docs",
            "context_len",
            "variant",
            "sigma",
            "mean_entropy",
            "entropy_stderr",
            "gold_mass",
            "gold_mass_stderr",
            "argmax_accuracy",
            "trials",
            "seed",
        ],
    );
    for row in &rows {
        table.push(vec![
            row.n_docs.to_string(),
            row.context_len.to_string(),
            row.variant.to_string(),
            fmt(row.sigma),
            fmt(row.mean_entropy),
            fmt(row.entropy_stderr),
            fmt(row.gold_mass),
            fmt(row.gold_mass_stderr),
            fmt(row.argmax_accuracy),
            row.trials.to_string(),
            row.seed.to_string(),
        ]);
    }
    table.write(Path::new(&out))?;

    if let Some(prefix) = svg {
        let series = |pick: fn(&BenchRow) -> f64| -> Vec<Series> {
            config
                .variants
                .iter()
                .map(|&v| Series {
                    label: v.to_string(),
                    points: rows
                        .iter()
                        .filter(|r| r.variant == v)
                        .map(|r| (r.n_docs as f64, pick(r)))
                        .collect(),
                })
                .collect()
        };
        let entropy = line_chart_svg(
            "Query-row attention entropy",
            "documents",
            "entropy (nats)",
            &series(|r| r.mean_entropy),
        );
        let mass = line_chart_svg(
            "Attention mass on the gold document",
            "documents",
            "gold mass",
            &series(|r| r.gold_mass),
        );
        write_atomic(Path::new(&format!("{prefix}-entropy.svg")), entropy.as_bytes())?;
        write_atomic(Path::new(&format!("{prefix}-gold-mass.svg")), mass.as_bytes())?;
    }
    Ok(exit::OK)
}

fn mask_verify_cmd(a: MaskVerifyArgs, file: &ConfigFile, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut r = Resolved::new("mask-verify", file);
    let chunks = r.take("chunks", a.chunks, 3usize)?;
    let lens = r.take("lens", a.lens, List(vec![8usize]))?;
    let prefix = r.take("prefix", a.prefix, 2usize)?;
    let query = r.take("query", a.query, 2usize)?;
    let d = r.take("d", a.d, 16usize)?;
    let seed = r.take("seed", a.seed, 0u64)?;
    let corrupt = r.take("corrupt", a.corrupt.then_some(true), false)?;
    let csv_out = r.take_opt("out", a.out)?;

    let lens: Vec<usize> = match lens.0.as_slice() {
        [one] => vec![*one; chunks],
        many if many.len() == chunks => many.to_vec(),
        many => {
            return Err(CliError::Config(format!(
                "{} chunk lengths given for {chunks} chunks",
                many.len()
            )))
        }
    };
    if chunks == 0 || d == 0 {
        return Err(CliError::Config("chunks and d must be positive".into()));
    }
    let layout = ChunkLayout::contiguous(prefix, &lens, query)?;
    let n = layout.end();
    let mut rng = Rng::new(seed);
    let (q, k, v) = (rng.gaussian_matrix(n, d), rng.gaussian_matrix(n, d), rng.gaussian_matrix(n, d));
    let mut mask = build_parallel_mask(&layout, n)?;
    let flipped = if corrupt { corrupt_mask(&mut mask, &layout) } else { None };
    let report = verify_isolation_with_mask(&q, &k, &v, &layout, &mask)?;

    let io = |e: std::io::Error| CliError::Io(e.to_string());
    if let Some((i, j)) = flipped {
        writeln!(out, "corrupted mask entry ({i}, {j})").map_err(io)?;
    }
    for (c, dev) in report.per_chunk.iter().enumerate() {
        writeln!(out, "chunk {c}: max deviation {}", fmt(*dev)).map_err(io)?;
    }
    writeln!(out, "max deviation {}", fmt(report.max_deviation)).map_err(io)?;
    writeln!(out, "{}", if report.passed { "PASS" } else { "FAIL" }).map_err(io)?;

    if let Some(path) = csv_out {
        let mut table = Table::new(r.header(), &["chunk", "len", "max_deviation"]);
        for (c, dev) in report.per_chunk.iter().enumerate() {
            table.push(vec![c.to_string(), lens[c].to_string(), fmt(*dev)]);
        }
        table.footer.push(("max_deviation".into(), fmt(report.max_deviation)));
        table.footer.push(("passed".into(), report.passed.to_string()));
        table.write(Path::new(&path))?;
    }
    Ok(if report.passed { exit::OK } else { exit::NUMERICAL })
}

/// Lowercased alphanumeric words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn score_cmd(a: ScoreArgs, file: &ConfigFile, endpoint_env: Option<String>) -> Result<i32, CliError> {
    let mut r = Resolved::new("score", file);
    let query = r
        .take_opt("query", a.query)?
        .ok_or_else(|| CliError::Config("--query is required".into()))?;
    let docs_path = r
        .take_opt("docs", a.docs)?
        .ok_or_else(|| CliError::Config("--docs is required".into()))?;
    let scorer = r.take("scorer", a.scorer, "lexical".to_string())?;
    let mu = r.take("mu", a.mu, 0.0)?;
    let sigma = r.take("sigma", a.sigma, 1.0)?;
    let out = r.take("out", a.out, "scores.csv".to_string())?;
    let target = BalancingTarget::new(mu, sigma)?;

    let text = std::fs::read_to_string(&docs_path).map_err(|e| CliError::Io(format!("reading {docs_path}: {e}")))?;
    let docs: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if docs.is_empty() {
        return Err(CliError::Config(format!("{docs_path} has no documents")));
    }

    let records: Vec<ScoreRecord> = match scorer.as_str() {
        "lexical" => {
            let q = tokenize(&query);
            docs.iter()
                .enumerate()
                .map(|(i, d)| Ok(ScoreRecord::new(i, lexical_score(&q, &tokenize(d))?, ScoreSource::Lexical)))
                .collect::<Result<_, bee_core::Error>>()?
        }
        "remote" => {
            let timeout = r.take("timeout", a.timeout, DEFAULT_TIMEOUT_SECS)?;
            let in_flight = r.take("max-in-flight", a.max_in_flight, DEFAULT_MAX_IN_FLIGHT)?;
            let endpoint = r.secret("endpoint", a.endpoint, endpoint_env).ok_or_else(|| {
                CliError::Config(format!(
                    "the remote scorer needs an endpoint (--endpoint, ${ENDPOINT_ENV}, or endpoint= in the config file)"
                ))
            })?;
            RemoteScorer::new(&endpoint, timeout, in_flight)?.records(&query, &docs)?
        }
        other => return Err(CliError::Config(format!("unknown scorer {other:?} (lexical, remote)"))),
    };
    let factors = normalize_scores(&records, target)?;
    let mut table = Table::new(r.header(), &["chunk_index", "raw_score", "source", "beta"]);
    for rec in &records {
        table.push(vec![
            rec.chunk_index.to_string(),
            fmt(rec.raw_score),
            rec.source.as_str().into(),
            fmt(factors.per_chunk[rec.chunk_index]),
        ]);
    }
    table.write(Path::new(&out))?;
    Ok(exit::OK)
}

fn default_log_path(out: &str) -> String {
    match out.strip_suffix(".csv") {
        Some(stem) => format!("{stem}-log.csv"),
        None => format!("{out}-log.csv"),
    }
}

fn train_cmd(a: TrainArgs, file: &ConfigFile, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut r = Resolved::new("train", file);
    let tasks_file = r.take_opt("tasks-file", a.tasks_file)?;
    let synthetic = if tasks_file.is_none() {
        Some(r.take("synthetic", a.synthetic, 64usize)?)
    } else {
        None
    };
    let d = TrainConfig::default();
    let rank = r.take("dr", a.dr, d.rank)?;
    let lr = r.take("lr", a.lr, d.lr)?;
    let steps = r.take("steps", a.steps, d.steps)?;
    let tau = r.take("tau", a.tau, Tau(d.tau))?;
    let seed = r.take("seed", a.seed, 0u64)?;
    let scale = r.take("scale", a.scale, 1.0)?;
    let proj_path = r.take("out", a.out, "projection.csv".to_string())?;
    let log_path = r.take("log", a.log, default_log_path(&proj_path))?;
    let save_tasks = r.take_opt("save-tasks", a.save_tasks)?;

    let mut tasks: Vec<ToyTask> = match (&tasks_file, synthetic) {
        (Some(path), _) => read_tasks(Path::new(path))?,
        (None, Some(count)) => synthetic_tasks(count, &SyntheticSpec::default(), &mut Rng::new(seed))?,
        (None, None) => unreachable!("synthetic defaults when no task file is given"),
    };
    if scale != 1.0 {
        tasks = tasks.iter().map(|t| t.scaled(scale)).collect();
    }
    if let Some(path) = &save_tasks {
        write_tasks(Path::new(path), &tasks)?;
    }
    let config = TrainConfig {
        lr,
        steps,
        rank,
        tau: tau.0,
        seed,
        ..d
    };

    let mut log = Table::new(r.header(), &["step", "loss", "grad_norm", "max_beta", "lr"]);
    let result = train_observed(&tasks, &config, |e| {
        log.push(vec![e.step.to_string(), fmt(e.loss), fmt(e.grad_norm), fmt(e.max_beta), fmt(e.lr)]);
    });
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match result {
        Ok(outcome) => {
            log.footer.push(("final_loss".into(), fmt(outcome.final_loss)));
            log.footer.push(("final_accuracy".into(), fmt(outcome.final_accuracy)));
            log.write(Path::new(&log_path))?;
            let mut header = r.header();
            header.push_str(&format!("# d_r={}\n# d={}\n", outcome.projection.rank(), outcome.projection.dim()));
            projection_table(header, &outcome.projection).write(Path::new(&proj_path))?;
            writeln!(
                out,
                "trained {} steps: final loss {}, final accuracy {}",
                outcome.log.len(),
                outcome.final_loss,
                outcome.final_accuracy
            )
            .map_err(io)?;
            Ok(exit::OK)
        }
        Err(e @ bee_core::Error::Diverged { .. }) => {
            if let bee_core::Error::Diverged { step, loss, .. } = e {
                log.footer.push(("diverged_at_step".into(), step.to_string()));
                log.footer.push(("diverged_loss".into(), fmt(loss)));
            }
            log.write(Path::new(&log_path))?;
            Err(CliError::Diverged(e))
        }
        Err(e) => Err(e.into()),
    }
}

/// Gold-chunk accuracy of a saved projection on a task set.
pub fn evaluate(tasks: &[ToyTask], projection_path: &Path, tau: Option<f64>) -> Result<f64, CliError> {
    let proj = crate::formats::read_projection(projection_path)?;
    Ok(accuracy(tasks, &proj, tau)?)
}
