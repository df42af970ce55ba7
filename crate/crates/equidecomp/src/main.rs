use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use equidecomp::config::{Overrides, RunConfig};
use equidecomp::pipeline;

/// Laboratory for measurable equidecompositions of spherical sets: spectral
/// gaps, expander orbit graphs, bounded-augmenting-path matchings, and piece
/// decompositions, with reproducible hashed artifacts.
#[derive(Parser)]
#[command(name = "equidecomp", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON configuration file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed fixing every downstream artifact
    #[arg(long)]
    seed: Option<u64>,
    /// target number of partition cells
    #[arg(long)]
    cells: Option<usize>,
    /// expansion parameter in (0, 1); derived from the covering set if absent
    #[arg(long)]
    eta: Option<f64>,
    /// largest spherical-harmonic degree for the gap certificate
    #[arg(long)]
    max_degree: Option<u32>,
    /// maximum number of matching phases
    #[arg(long)]
    max_phases: Option<u32>,
    /// unmatched-measure target; defaults to 1e-3 · μ(A)
    #[arg(long)]
    epsilon: Option<f64>,
    /// Monte Carlo sample count for the gap cross-estimate
    #[arg(long)]
    samples: Option<usize>,
    /// output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the spectral gap of the configured generator set
    Gap(CommonOpts),
    /// Search for the smallest word-length ball passing the expansion check
    Expand(CommonOpts),
    /// Build the bipartite orbit graph and write it to the output directory
    Graph(CommonOpts),
    /// Run matching phases on a previously built graph
    Match(CommonOpts),
    /// Extract the piece decomposition from a previously computed matching
    Decompose(CommonOpts),
    /// Run the full pipeline end to end and write a hashed manifest
    Pipeline(CommonOpts),
    /// Re-verify all checks and hashes of a pipeline output directory
    Verify { dir: PathBuf },
}

fn load_config(opts: &CommonOpts) -> Result<RunConfig, String> {
    let base = match &opts.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.apply(&Overrides {
        seed: opts.seed,
        cells: opts.cells,
        eta: opts.eta,
        max_degree: opts.max_degree,
        max_phases: opts.max_phases,
        epsilon: opts.epsilon,
        samples: opts.samples,
        out: opts.out.clone(),
    });
    cfg.validate()?;
    // malformed or missing rotation files are usage errors, not stage failures
    cfg.resolve_generators()?;
    Ok(cfg)
}

const EXIT_NEGATIVE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_STAGE: u8 = 3;

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Gap(opts) => match load_config(&opts) {
            Err(e) => usage(e),
            Ok(cfg) => match pipeline::cmd_gap(&cfg) {
                Err(e) => stage_failure(e),
                Ok((report, mc)) => {
                    for d in &report.per_degree {
                        println!("l = {:2}  norm = {:.12}", d.l, d.norm);
                    }
                    println!(
                        "gap lower bound (degrees 1..{}): {:.12}",
                        report.max_degree, report.gap_lower_bound
                    );
                    if let Some(estimate) = mc {
                        println!("monte carlo operator norm estimate: {:.6}", estimate);
                    }
                    if report.gap_lower_bound > 1e-9 {
                        ExitCode::SUCCESS
                    } else {
                        println!("no spectral gap detected");
                        ExitCode::from(EXIT_NEGATIVE)
                    }
                }
            },
        },
        Command::Expand(opts) => match load_config(&opts) {
            Err(e) => usage(e),
            Ok(cfg) => match pipeline::cmd_expand(&cfg) {
                Ok(record) => {
                    println!(
                        "expander set: {} rotations (word length {}) at eta = {:.6}",
                        record.s_size, record.word_length, record.eta
                    );
                    ExitCode::SUCCESS
                }
                Err(e) if e.stage == "expand" => {
                    eprintln!("{}", e);
                    ExitCode::from(EXIT_NEGATIVE)
                }
                Err(e) => stage_failure(e),
            },
        },
        Command::Graph(opts) => match load_config(&opts) {
            Err(e) => usage(e),
            Ok(cfg) => match pipeline::cmd_graph(&cfg) {
                Ok(edges) => {
                    println!("graph written: {} edges", edges);
                    ExitCode::SUCCESS
                }
                Err(e) => stage_failure(e),
            },
        },
        Command::Match(opts) => match load_config(&opts) {
            Err(e) => usage(e),
            Ok(cfg) => {
                if !cfg.out.join(pipeline::artifact::GRAPH_BIN).exists() {
                    return usage(format!(
                        "no graph file in {:?}; run `equidecomp graph` first",
                        cfg.out
                    ));
                }
                match pipeline::cmd_match(&cfg) {
                    Ok(phases) => {
                        println!("matching written after {} phases", phases);
                        ExitCode::SUCCESS
                    }
                    Err(e) => stage_failure(e),
                }
            }
        },
        Command::Decompose(opts) => match load_config(&opts) {
            Err(e) => usage(e),
            Ok(cfg) => {
                for required in [pipeline::artifact::GRAPH_BIN, pipeline::artifact::MATCHING] {
                    if !cfg.out.join(required).exists() {
                        return usage(format!("missing {} in {:?}", required, cfg.out));
                    }
                }
                match pipeline::cmd_decompose(&cfg) {
                    Ok(residual) => {
                        println!("decomposition written; residual measure {:.6e}", residual);
                        ExitCode::SUCCESS
                    }
                    Err(e) => stage_failure(e),
                }
            }
        },
        Command::Pipeline(opts) => match load_config(&opts) {
            Err(e) => usage(e),
            Ok(cfg) => match pipeline::cmd_pipeline(&cfg) {
                Ok(summary) => {
                    println!(
                        "pipeline complete: {} cells, eta {:.6}, |T| = {}, |S| = {}, |R| = {}",
                        summary.cells, summary.eta, summary.t_size, summary.s_size, summary.r_size
                    );
                    println!(
                        "matching: {} phases, residual measure {:.6e} (target {:.6e})",
                        summary.phases_run, summary.residual_measure, summary.epsilon
                    );
                    println!("artifacts in {:?}", cfg.out);
                    ExitCode::SUCCESS
                }
                Err(e) => stage_failure(e),
            },
        },
        Command::Verify { dir } => {
            let outcome = pipeline::cmd_verify(&dir);
            for row in &outcome.rows {
                let status = match row.status {
                    pipeline::CheckStatus::Ok => "ok",
                    pipeline::CheckStatus::Fail => "FAIL",
                    pipeline::CheckStatus::Anomaly => "ANOMALY",
                };
                println!("{:<18} {:<8} {}", row.name, status, row.detail);
            }
            ExitCode::from(outcome.exit_code as u8)
        }
    }
}

fn usage(message: String) -> ExitCode {
    eprintln!("error: {}", message);
    ExitCode::from(EXIT_USAGE)
}

fn stage_failure(e: pipeline::StageError) -> ExitCode {
    eprintln!("error: {}", e);
    ExitCode::from(EXIT_STAGE)
}

fn main() -> ExitCode {
    run(Cli::parse())
}
