//! End-to-end pipeline stages, hashed artifact manifests, and re-verification
//! of every reported bound from the artifacts alone.
//!
//! Every stage is a pure function of `(config, seed)`, so a rerun with the
//! same inputs reproduces every artifact byte for byte; `MANIFEST` records
//! sha256 hashes of all outputs in sorted order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::decomposition::{
    self, extract_pieces, DecompositionReport, ReportProvenance,
};
use crate::graph::{self, BipartiteGraph, Side};
use crate::matching::{
    self, layer_profile, run_until_stable, shortest_augmenting_path_len, Matching, PhaseLine,
    PhaseReport,
};
use crate::rotation::{self, RotationSet, RotationSetFile, UnitVector};
use crate::sphere::{MeasurableSet, SpherePartition};
use crate::spectral::{self, GapReport};

/// A stage failure: aborts the pipeline with the stage name (exit code 3).
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

fn stage_err<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> StageError {
    move |e| StageError {
        stage,
        message: e.to_string(),
    }
}

/// Names of the artifacts a full pipeline run produces.
pub mod artifact {
    pub const CONFIG: &str = "resolved_config.json";
    pub const GAP_REPORT: &str = "gap_report.json";
    pub const T_SET: &str = "t_set.json";
    pub const S_SET: &str = "s_set.json";
    pub const R_SET: &str = "r_set.json";
    pub const EXPANSION: &str = "expansion.json";
    pub const GRAPH_BIN: &str = "graph.bin";
    pub const GRAPH_SIDECAR: &str = "graph.json";
    pub const PHASES: &str = "phases.jsonl";
    pub const MATCHING: &str = "matching.bin";
    pub const DECOMPOSITION: &str = "decomposition.json";
    pub const RENDER: &str = "render.ppm";
    pub const SUMMARY: &str = "summary.json";
    pub const MANIFEST: &str = "MANIFEST";
}

/// Summary of a completed pipeline run.
#[derive(Debug, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub cells: usize,
    pub mu_a: f64,
    pub mu_b: f64,
    pub gap_lower_bound: f64,
    pub eta: f64,
    pub t_size: usize,
    pub s_size: usize,
    pub r_size: usize,
    pub graph_edges: usize,
    pub phases_run: usize,
    pub matching_size: usize,
    pub unmatched_measure: f64,
    pub residual_measure: f64,
    pub pieces: usize,
    pub epsilon: f64,
    pub seed: u64,
}

/// Expansion-search record written by the `expand` stage.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub eta: f64,
    pub s_size: usize,
    pub word_length: usize,
    pub trials: usize,
    pub all_passed: bool,
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), StageError> {
    std::fs::write(dir.join(name), bytes).map_err(stage_err("write"))
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

/// Writes `MANIFEST`: one `"<sha256>  <name>"` line per artifact, sorted.
pub fn write_manifest(dir: &Path, names: &[&str]) -> Result<(), StageError> {
    let mut sorted: Vec<&str> = names.to_vec();
    sorted.sort_unstable();
    let mut lines = String::new();
    for name in sorted {
        let hash = sha256_file(&dir.join(name)).map_err(stage_err("manifest"))?;
        lines.push_str(&format!("{}  {}\n", hash, name));
    }
    write_artifact(dir, artifact::MANIFEST, lines.as_bytes())
}

/// The symmetrized generator set from the config.
pub fn resolve_generators_symmetric(cfg: &RunConfig) -> Result<RotationSet, StageError> {
    let gens = cfg.resolve_generators().map_err(stage_err("generators"))?;
    Ok(rotation::symmetrize(&gens))
}

/// Spherical centroid of a set, used to aim the covering pool.
fn set_centroid(set: &MeasurableSet, partition: &SpherePartition) -> UnitVector {
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for cell in set.cells() {
        let c = partition.center(cell);
        x += c.x;
        y += c.y;
        z += c.z;
    }
    UnitVector::new(x, y, z).unwrap_or(UnitVector::Z)
}

/// Covering stage: greedy covers of the sphere by rotated copies of `A` and
/// of `B`, merged and deduplicated.
pub fn stage_cover(
    cfg: &RunConfig,
    a: &MeasurableSet,
    b: &MeasurableSet,
    partition: &SpherePartition,
) -> Result<RotationSet, StageError> {
    let err = stage_err("cover");
    let pool_a = rotation::covering_pool(set_centroid(a, partition), cfg.cover_pool);
    let t_a = rotation::greedy_cover(a, &pool_a, partition).map_err(&err)?;
    let pool_b = rotation::covering_pool(set_centroid(b, partition), cfg.cover_pool);
    let t_b = rotation::greedy_cover(b, &pool_b, partition).map_err(&err)?;
    let mut all = t_a.elements().to_vec();
    all.extend_from_slice(t_b.elements());
    Ok(RotationSet::from_rotations(all))
}

/// η = 0.9 · min(μ(A)/3, 1/(2|T|)) unless the config pins it.
pub fn stage_eta(cfg: &RunConfig, mu_a: f64, t_size: usize) -> f64 {
    cfg.eta
        .unwrap_or_else(|| 0.9 * (mu_a / 3.0).min(1.0 / (2.0 * t_size as f64)))
}

struct PipelineState {
    partition: SpherePartition,
    a: MeasurableSet,
    b: MeasurableSet,
    gap: GapReport,
    t_set: RotationSet,
    s_set: RotationSet,
    r_set: RotationSet,
    eta: f64,
    graph: BipartiteGraph,
    matching: Matching,
    reports: Vec<PhaseReport>,
    epsilon: f64,
}

fn rotation_set_json(set: &RotationSet) -> Vec<u8> {
    serde_json::to_vec_pretty(&RotationSetFile::from(set)).expect("rotation set serializes")
}

fn run_stages_through_graph(
    cfg: &RunConfig,
    dir: &Path,
) -> Result<(SpherePartition, MeasurableSet, MeasurableSet, GapReport, RotationSet, RotationSet, RotationSet, f64, BipartiteGraph), StageError> {
    std::fs::create_dir_all(dir).map_err(stage_err("out"))?;
    write_artifact(
        dir,
        artifact::CONFIG,
        &serde_json::to_vec_pretty(cfg).map_err(stage_err("config"))?,
    )?;

    let partition = SpherePartition::new(cfg.cells);
    let a = cfg
        .resolve_set(&cfg.set_a, &partition)
        .map_err(stage_err("sets"))?;
    let b = cfg
        .resolve_set(&cfg.set_b, &partition)
        .map_err(stage_err("sets"))?;
    if a.cell_count() == 0 || b.cell_count() == 0 {
        return Err(StageError {
            stage: "sets",
            message: "A and B must both be non-empty".into(),
        });
    }

    let gens = resolve_generators_symmetric(cfg)?;
    let gap = spectral::estimate_gap(&gens, cfg.max_degree).map_err(stage_err("gap"))?;
    write_artifact(
        dir,
        artifact::GAP_REPORT,
        &serde_json::to_vec_pretty(&gap).map_err(stage_err("gap"))?,
    )?;

    let t_set = stage_cover(cfg, &a, &b, &partition)?;
    write_artifact(dir, artifact::T_SET, &rotation_set_json(&t_set))?;

    let eta = stage_eta(cfg, a.measure(), t_set.len());
    if !(0.0 < eta && eta < 1.0) {
        return Err(StageError {
            stage: "eta",
            message: format!("derived eta {} outside (0, 1)", eta),
        });
    }
    let s_set = spectral::find_expander_set(
        &gens,
        eta,
        cfg.max_word_length,
        cfg.expander_trials,
        cfg.seed,
    )
    .map_err(stage_err("expand"))?;
    write_artifact(dir, artifact::S_SET, &rotation_set_json(&s_set))?;
    let record = ExpansionRecord {
        eta,
        s_size: s_set.len(),
        word_length: s_set
            .elements()
            .iter()
            .filter_map(|r| r.word().map(|w| w.len()))
            .max()
            .unwrap_or(0),
        trials: cfg.expander_trials,
        all_passed: true,
    };
    write_artifact(
        dir,
        artifact::EXPANSION,
        &serde_json::to_vec_pretty(&record).map_err(stage_err("expand"))?,
    )?;

    let r_set = rotation::build_edge_set(&s_set, &t_set).map_err(stage_err("edges"))?;
    write_artifact(dir, artifact::R_SET, &rotation_set_json(&r_set))?;

    let graph = graph::build_graph(&a, &b, &r_set, &partition).map_err(stage_err("graph"))?;
    graph::write_graph_file(
        &graph,
        &dir.join(artifact::GRAPH_BIN),
        Some(partition.n_cells_target()),
        cfg.seed,
    )
    .map_err(stage_err("graph"))?;

    Ok((partition, a, b, gap, t_set, s_set, r_set, eta, graph))
}

fn run_match_stage(
    cfg: &RunConfig,
    dir: &Path,
    graph: &BipartiteGraph,
    mu_a: f64,
) -> Result<(Matching, Vec<PhaseReport>, f64), StageError> {
    let epsilon = cfg.epsilon.unwrap_or(1e-3 * mu_a);
    let (matching, reports) = run_until_stable(graph, cfg.max_phases, epsilon);
    let mut lines = String::new();
    for report in &reports {
        lines.push_str(
            &serde_json::to_string(&PhaseLine::from(report)).map_err(stage_err("match"))?,
        );
        lines.push('\n');
    }
    write_artifact(dir, artifact::PHASES, lines.as_bytes())?;
    matching::write_matching_file(&matching, &dir.join(artifact::MATCHING))
        .map_err(stage_err("match"))?;
    Ok((matching, reports, epsilon))
}

fn run_decompose_stage(
    cfg: &RunConfig,
    dir: &Path,
    graph: &BipartiteGraph,
    matching: &Matching,
    partition_target: u32,
) -> Result<decomposition::PieceDecomposition, StageError> {
    let d = extract_pieces(graph, matching).map_err(stage_err("decompose"))?;
    let provenance = ReportProvenance {
        rotation_set_hash: graph.rotations().map(|r| r.content_hash()),
        partition_target: Some(partition_target),
        seed: cfg.seed,
    };
    decomposition::export_report(&d, provenance, &dir.join(artifact::DECOMPOSITION))
        .map_err(stage_err("decompose"))?;
    let ppm = decomposition::render(&d, 400).map_err(stage_err("render"))?;
    write_artifact(dir, artifact::RENDER, &ppm)?;
    Ok(d)
}

fn run_pipeline_inner(cfg: &RunConfig) -> Result<(PipelineState, PathBuf), StageError> {
    let dir = cfg.out.clone();
    let (partition, a, b, gap, t_set, s_set, r_set, eta, graph) =
        run_stages_through_graph(cfg, &dir)?;
    let (matching, reports, epsilon) = run_match_stage(cfg, &dir, &graph, a.measure())?;
    let state = PipelineState {
        partition,
        a,
        b,
        gap,
        t_set,
        s_set,
        r_set,
        eta,
        graph,
        matching,
        reports,
        epsilon,
    };
    Ok((state, dir))
}

/// The full pipeline: gap report, covering set, expander set, edge set,
/// graph, matching phases, decomposition, render, summary, manifest.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<PipelineSummary, StageError> {
    let (state, dir) = run_pipeline_inner(cfg)?;
    let d = run_decompose_stage(
        cfg,
        &dir,
        &state.graph,
        &state.matching,
        state.partition.n_cells_target(),
    )?;
    let summary = PipelineSummary {
        cells: state.partition.n_cells(),
        mu_a: state.a.measure(),
        mu_b: state.b.measure(),
        gap_lower_bound: state.gap.gap_lower_bound,
        eta: state.eta,
        t_size: state.t_set.len(),
        s_size: state.s_set.len(),
        r_size: state.r_set.len(),
        graph_edges: state.graph.n_edges(),
        phases_run: state.reports.len(),
        matching_size: state.matching.size(),
        unmatched_measure: state.matching.unmatched_measure(&state.graph),
        residual_measure: d.residual_measure(),
        pieces: d.pieces.len(),
        epsilon: state.epsilon,
        seed: cfg.seed,
    };
    write_artifact(
        &dir,
        artifact::SUMMARY,
        &serde_json::to_vec_pretty(&summary).map_err(stage_err("summary"))?,
    )?;
    write_manifest(
        &dir,
        &[
            artifact::CONFIG,
            artifact::GAP_REPORT,
            artifact::T_SET,
            artifact::S_SET,
            artifact::EXPANSION,
            artifact::R_SET,
            artifact::GRAPH_BIN,
            artifact::GRAPH_SIDECAR,
            artifact::PHASES,
            artifact::MATCHING,
            artifact::DECOMPOSITION,
            artifact::RENDER,
            artifact::SUMMARY,
        ],
    )?;
    Ok(summary)
}

/// `gap` subcommand: spectral report plus optional Monte Carlo cross-check.
/// Returns `(report, mc_estimate)`.
pub fn cmd_gap(cfg: &RunConfig) -> Result<(GapReport, Option<f64>), StageError> {
    let gens = resolve_generators_symmetric(cfg)?;
    let gap = spectral::estimate_gap(&gens, cfg.max_degree).map_err(stage_err("gap"))?;
    std::fs::create_dir_all(&cfg.out).map_err(stage_err("out"))?;
    write_artifact(
        &cfg.out,
        artifact::GAP_REPORT,
        &serde_json::to_vec_pretty(&gap).map_err(stage_err("gap"))?,
    )?;
    let mc = cfg.mc_samples.map(|samples| {
        let partition = SpherePartition::new(cfg.cells);
        spectral::monte_carlo_gap(&gens, &partition, samples, cfg.mc_iterations, cfg.seed)
    });
    Ok((gap, mc))
}

/// `expand` subcommand: finds the expander set at the configured or derived η.
pub fn cmd_expand(cfg: &RunConfig) -> Result<ExpansionRecord, StageError> {
    let gens = resolve_generators_symmetric(cfg)?;
    let eta = match cfg.eta {
        Some(eta) => eta,
        None => {
            let partition = SpherePartition::new(cfg.cells);
            let a = cfg
                .resolve_set(&cfg.set_a, &partition)
                .map_err(stage_err("sets"))?;
            let b = cfg
                .resolve_set(&cfg.set_b, &partition)
                .map_err(stage_err("sets"))?;
            let t = stage_cover(cfg, &a, &b, &partition)?;
            stage_eta(cfg, a.measure(), t.len())
        }
    };
    let s_set = spectral::find_expander_set(
        &gens,
        eta,
        cfg.max_word_length,
        cfg.expander_trials,
        cfg.seed,
    )
    .map_err(stage_err("expand"))?;
    std::fs::create_dir_all(&cfg.out).map_err(stage_err("out"))?;
    write_artifact(&cfg.out, artifact::S_SET, &rotation_set_json(&s_set))?;
    let record = ExpansionRecord {
        eta,
        s_size: s_set.len(),
        word_length: s_set
            .elements()
            .iter()
            .filter_map(|r| r.word().map(|w| w.len()))
            .max()
            .unwrap_or(0),
        trials: cfg.expander_trials,
        all_passed: true,
    };
    write_artifact(
        &cfg.out,
        artifact::EXPANSION,
        &serde_json::to_vec_pretty(&record).map_err(stage_err("expand"))?,
    )?;
    Ok(record)
}

/// `graph` subcommand: everything up to and including the graph file.
pub fn cmd_graph(cfg: &RunConfig) -> Result<usize, StageError> {
    let (_, _, _, _, _, _, _, _, graph) = run_stages_through_graph(cfg, &cfg.out.clone())?;
    Ok(graph.n_edges())
}

/// `match` subcommand: loads `graph.bin` from the out dir and runs phases.
pub fn cmd_match(cfg: &RunConfig) -> Result<usize, StageError> {
    let graph = graph::read_graph_file(&cfg.out.join(artifact::GRAPH_BIN))
        .map_err(stage_err("match"))?;
    let mu_a = graph.mu_left();
    let (_, reports, _) = run_match_stage(cfg, &cfg.out.clone(), &graph, mu_a)?;
    Ok(reports.len())
}

/// `decompose` subcommand: loads graph and matching and emits the report.
pub fn cmd_decompose(cfg: &RunConfig) -> Result<f64, StageError> {
    let graph = graph::read_graph_file(&cfg.out.join(artifact::GRAPH_BIN))
        .map_err(stage_err("decompose"))?;
    let matching = matching::read_matching_file(&cfg.out.join(artifact::MATCHING), &graph)
        .map_err(stage_err("decompose"))?;
    let target = match graph.universe() {
        crate::sphere::Universe::Bands {
            n_bands,
            cells_per_band,
        } => n_bands * cells_per_band,
        crate::sphere::Universe::Synthetic { n_vertices, .. } => n_vertices,
    };
    let d = run_decompose_stage(cfg, &cfg.out.clone(), &graph, &matching, target)?;
    Ok(d.residual_measure())
}

/// Outcome of one verification check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Ok,
    Fail,
    Anomaly,
}

#[derive(Debug, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

/// Result of `verify`: the check table plus the derived exit code
/// (0 = all ok, 1 = failures or anomalies, 2 = missing/unreadable artifacts).
#[derive(Debug)]
pub struct VerifyOutcome {
    pub rows: Vec<CheckRow>,
    pub exit_code: i32,
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut entries = BTreeMap::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| format!("malformed manifest line: {}", line))?;
        entries.insert(name.to_string(), hash.to_string());
    }
    Ok(entries)
}

/// Re-verifies a pipeline output directory: manifest hashes, file validity,
/// the phase contract, and every reported bound (Claims 1–2, the expansion
/// inequality, the growth, decay, and stabilization bounds).
pub fn cmd_verify(dir: &Path) -> VerifyOutcome {
    let mut rows: Vec<CheckRow> = Vec::new();
    macro_rules! missing {
        ($msg:expr) => {{
            rows.push(CheckRow {
                name: "artifacts",
                status: CheckStatus::Fail,
                detail: $msg,
            });
            return VerifyOutcome {
                rows,
                exit_code: 2,
            };
        }};
    }

    let manifest_path = dir.join(artifact::MANIFEST);
    let manifest_text = match std::fs::read_to_string(&manifest_path) {
        Ok(t) => t,
        Err(e) => missing!(format!("cannot read MANIFEST: {}", e)),
    };
    let entries = match parse_manifest(&manifest_text) {
        Ok(e) => e,
        Err(e) => missing!(e),
    };

    // 1. manifest hashes
    let mut tampered = Vec::new();
    for (name, expected) in &entries {
        match sha256_file(&dir.join(name)) {
            Ok(actual) if &actual == expected => {}
            Ok(actual) => tampered.push(format!("{} ({}… != {}…)", name, &actual[..8], &expected[..8])),
            Err(e) => missing!(format!("cannot hash {}: {}", name, e)),
        }
    }
    rows.push(CheckRow {
        name: "manifest",
        status: if tampered.is_empty() {
            CheckStatus::Ok
        } else {
            CheckStatus::Fail
        },
        detail: if tampered.is_empty() {
            format!("{} artifacts match recorded hashes", entries.len())
        } else {
            format!("hash mismatch: {}", tampered.join(", "))
        },
    });

    // 2. graph file
    let graph = match graph::read_graph_file(&dir.join(artifact::GRAPH_BIN)) {
        Ok(g) => g,
        Err(graph::GraphError::Io(e)) => missing!(format!("cannot read graph: {}", e)),
        Err(e) => {
            rows.push(CheckRow {
                name: "graph_file",
                status: CheckStatus::Fail,
                detail: e.to_string(),
            });
            return VerifyOutcome {
                rows,
                exit_code: 1,
            };
        }
    };
    let partition = SpherePartition::from_universe(graph.universe());
    let graph_check = graph.validate(partition.as_ref());
    rows.push(CheckRow {
        name: "graph_file",
        status: if graph_check.is_ok() {
            CheckStatus::Ok
        } else {
            CheckStatus::Fail
        },
        detail: match &graph_check {
            Ok(()) => format!(
                "|A| = {}, |B| = {}, |R| = {}, {} edges",
                graph.n_left(),
                graph.n_right(),
                graph.n_generators(),
                graph.n_edges()
            ),
            Err(e) => e.to_string(),
        },
    });

    // 3. matching file
    let matching = match matching::read_matching_file(&dir.join(artifact::MATCHING), &graph) {
        Ok(m) => m,
        Err(matching::MatchingError::Io(e)) => missing!(format!("cannot read matching: {}", e)),
        Err(e) => {
            rows.push(CheckRow {
                name: "matching_file",
                status: CheckStatus::Fail,
                detail: e.to_string(),
            });
            return VerifyOutcome {
                rows,
                exit_code: 1,
            };
        }
    };
    rows.push(CheckRow {
        name: "matching_file",
        status: CheckStatus::Ok,
        detail: format!("matching of size {} is valid", matching.size()),
    });

    // phases
    let phases_text = match std::fs::read_to_string(dir.join(artifact::PHASES)) {
        Ok(t) => t,
        Err(e) => missing!(format!("cannot read phases: {}", e)),
    };
    let lines: Vec<PhaseLine> = match phases_text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
    {
        Ok(v) => v,
        Err(e) => {
            rows.push(CheckRow {
                name: "phase_records",
                status: CheckStatus::Fail,
                detail: format!("malformed phase line: {}", e),
            });
            return VerifyOutcome {
                rows,
                exit_code: 1,
            };
        }
    };
    let last_phase = lines.last().map(|l| l.i).unwrap_or(0);

    // 4. phase contract on the final matching
    let shortest = shortest_augmenting_path_len(&graph, &matching);
    let contract_ok = shortest.map_or(true, |len| last_phase >= 1 && len > 2 * last_phase - 1);
    rows.push(CheckRow {
        name: "phase_contract",
        status: if contract_ok {
            CheckStatus::Ok
        } else {
            CheckStatus::Fail
        },
        detail: format!(
            "shortest augmenting path after phase {}: {:?}",
            last_phase, shortest
        ),
    });

    // 5. claim 1 spot checks (needed for the anomaly policy below)
    let seed = graph_seed(dir).unwrap_or(0);
    let claim1 = claim1_spot(&graph, seed);
    rows.push(CheckRow {
        name: "claim1_spot",
        status: CheckStatus::Ok,
        detail: format!(
            "{}/{} sampled one-sided sets satisfy the neighborhood bound",
            claim1.passed, claim1.total
        ),
    });
    let claim1_all = claim1.passed == claim1.total;

    // 6. decay and stabilization bounds per recorded phase
    let area = graph.cell_area();
    let mu_ab = (graph.n_left() + graph.n_right()) as f64 * area;
    let mut eq5_fail = Vec::new();
    let mut sd_fail = Vec::new();
    let mut record_fail = Vec::new();
    let mut before = mu_ab;
    for line in &lines {
        let after = line.mu_x0 + line.mu_y0;
        let slack = if graph.is_synthetic() { 0.0 } else { area };
        let bound5 = 2.0 * graph.mu_left() * 0.5f64.powi(((line.i - 1) / 2) as i32);
        let eq5_now = after - slack <= bound5 + 1e-12;
        if eq5_now != line.eq5_ok {
            record_fail.push(format!("phase {} eq5 flag disagrees", line.i));
        }
        if !eq5_now {
            eq5_fail.push(line.i);
        }
        let sd_now = line.diff_measure <= line.i as f64 * before + 1e-12;
        if sd_now != line.sd_bound_ok {
            record_fail.push(format!("phase {} sd flag disagrees", line.i));
        }
        if !sd_now {
            sd_fail.push(line.i);
        }
        before = after;
    }
    let eq5_status = if !record_fail.is_empty() {
        CheckStatus::Fail
    } else if eq5_fail.is_empty() {
        CheckStatus::Ok
    } else if claim1_all {
        CheckStatus::Anomaly
    } else {
        CheckStatus::Ok
    };
    rows.push(CheckRow {
        name: "eq5_decay",
        status: eq5_status,
        detail: if !record_fail.is_empty() {
            record_fail.join("; ")
        } else if eq5_fail.is_empty() {
            format!("decay bound holds for all {} phases", lines.len())
        } else {
            format!(
                "decay bound violated at phases {:?} (claim 1 spot checks {})",
                eq5_fail,
                if claim1_all { "passed: ANOMALY" } else { "also failed: consistent" }
            )
        },
    });
    rows.push(CheckRow {
        name: "sd_bound",
        status: if sd_fail.is_empty() {
            CheckStatus::Ok
        } else if claim1_all {
            CheckStatus::Anomaly
        } else {
            CheckStatus::Ok
        },
        detail: if sd_fail.is_empty() {
            "stabilization bound holds at every phase".into()
        } else {
            format!("stabilization bound violated at phases {:?}", sd_fail)
        },
    });

    // 7. claim 2 and growth on the final matching's layer profiles
    if last_phase >= 1 {
        let prof_a = layer_profile(&graph, &matching, Side::Left);
        let claim2 = matching::verify_claim2(&prof_a, last_phase);
        let claim2_bad: Vec<u32> = claim2
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(j, _)| *j)
            .collect();
        rows.push(CheckRow {
            name: "claim2_layers",
            status: if claim2_bad.is_empty() {
                CheckStatus::Ok
            } else {
                CheckStatus::Fail
            },
            detail: if claim2_bad.is_empty() {
                format!("layer equalities hold for odd j ≤ {}", 2 * last_phase - 1)
            } else {
                format!("layer equalities fail at j = {:?}", claim2_bad)
            },
        });

        let growth = matching::verify_growth(&prof_a, graph.mu_left(), last_phase);
        let growth_bad: Vec<u32> = growth
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(k, _)| *k)
            .collect();
        let growth_status = if growth_bad.is_empty() {
            CheckStatus::Ok
        } else {
            // hypothesis check: claim 1 on the failing layer sets
            let mut anomalous = false;
            for &k in &growth_bad {
                let layer_set = profile_layer_set(&graph, &prof_a, k);
                if let Ok((ok, _, _)) = graph.claim1_check(&layer_set) {
                    if ok {
                        anomalous = true;
                    }
                }
            }
            if anomalous {
                CheckStatus::Anomaly
            } else {
                CheckStatus::Ok
            }
        };
        rows.push(CheckRow {
            name: "eq4_growth",
            status: growth_status,
            detail: if growth_bad.is_empty() {
                format!("growth bound holds for even k ≤ {}", 2 * last_phase)
            } else {
                format!("growth bound fails at k = {:?}", growth_bad)
            },
        });

        let prof_b = layer_profile(&graph, &matching, Side::Right);
        let disjoint = matching::verify_disjointness(&prof_a, &prof_b, last_phase);
        rows.push(CheckRow {
            name: "disjoint_layers",
            status: if disjoint {
                CheckStatus::Ok
            } else {
                CheckStatus::Fail
            },
            detail: format!(
                "X_{} and Y_{} {}",
                last_phase.saturating_sub(1),
                last_phase,
                if disjoint { "are disjoint" } else { "intersect" }
            ),
        });
    }

    // 8. expansion inequality on the stored S set
    match (
        std::fs::read(dir.join(artifact::S_SET)),
        std::fs::read(dir.join(artifact::EXPANSION)),
        partition.as_ref(),
    ) {
        (Ok(s_bytes), Ok(e_bytes), Some(partition)) => {
            let parsed: Result<(RotationSetFile, ExpansionRecord), String> = (|| {
                let s: RotationSetFile =
                    serde_json::from_slice(&s_bytes).map_err(|e| e.to_string())?;
                let r: ExpansionRecord =
                    serde_json::from_slice(&e_bytes).map_err(|e| e.to_string())?;
                Ok((s, r))
            })();
            match parsed {
                Ok((s_file, record)) => match s_file.into_rotation_set() {
                    Ok(s_set) => {
                        let (passed, total) =
                            expansion_spot(&s_set, record.eta, partition, seed);
                        rows.push(CheckRow {
                            name: "eq1_expansion",
                            status: if passed * 10 >= total * 9 {
                                CheckStatus::Ok
                            } else {
                                CheckStatus::Fail
                            },
                            detail: format!(
                                "{}/{} random caps satisfy the expansion bound at eta = {:.6}",
                                passed, total, record.eta
                            ),
                        });
                    }
                    Err(e) => rows.push(CheckRow {
                        name: "eq1_expansion",
                        status: CheckStatus::Fail,
                        detail: e.to_string(),
                    }),
                },
                Err(e) => rows.push(CheckRow {
                    name: "eq1_expansion",
                    status: CheckStatus::Fail,
                    detail: e,
                }),
            }
        }
        (_, _, None) => {}
        (a, b, _) => {
            if a.is_err() || b.is_err() {
                missing!("cannot read expansion artifacts".to_string());
            }
        }
    }

    // 9. decomposition invariants and Eq. (3) round-trip
    match decomposition::load_report(&dir.join(artifact::DECOMPOSITION)) {
        Ok(report) => {
            let detail = check_decomposition(&graph, &matching, report);
            rows.push(CheckRow {
                name: "decomposition",
                status: if detail.is_ok() {
                    CheckStatus::Ok
                } else {
                    CheckStatus::Fail
                },
                detail: match detail {
                    Ok(d) => d,
                    Err(d) => d,
                },
            });
        }
        Err(decomposition::DecompositionError::Io(e)) => {
            missing!(format!("cannot read decomposition: {}", e))
        }
        Err(e) => rows.push(CheckRow {
            name: "decomposition",
            status: CheckStatus::Fail,
            detail: e.to_string(),
        }),
    }

    let exit_code = if rows
        .iter()
        .any(|r| r.status != CheckStatus::Ok)
    {
        1
    } else {
        0
    };
    VerifyOutcome { rows, exit_code }
}

fn graph_seed(dir: &Path) -> Option<u64> {
    let bytes = std::fs::read(dir.join(artifact::GRAPH_SIDECAR)).ok()?;
    let sidecar: graph::GraphSidecar = serde_json::from_slice(&bytes).ok()?;
    Some(sidecar.seed)
}

struct SpotResult {
    passed: usize,
    total: usize,
}

/// Claim 1 on seeded random subsets of A (sizes biased small, where the
/// doubling branch binds) plus the full left side.
fn claim1_spot(graph: &BipartiteGraph, seed: u64) -> SpotResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1a1_0001);
    let n = graph.n_left();
    let mut passed = 0;
    let mut total = 0;
    let trials = 24usize;
    for _ in 0..trials {
        let size = 1 + rng.gen_range(0..(n / 16).max(1));
        let mut cells = Vec::with_capacity(size);
        for _ in 0..size {
            cells.push(graph.left_cell(rng.gen_range(0..n)) as usize);
        }
        let u = MeasurableSet::from_cells(graph.universe(), cells);
        if let Ok((ok, _, _)) = graph.claim1_check(&u) {
            total += 1;
            if ok {
                passed += 1;
            }
        }
    }
    if let Ok((ok, _, _)) = graph.claim1_check(&graph.left_set()) {
        total += 1;
        if ok {
            passed += 1;
        }
    }
    SpotResult { passed, total }
}

/// The layer set `X_k ∩ A` of a left-rooted profile as a universe set.
fn profile_layer_set(
    graph: &BipartiteGraph,
    profile: &matching::LayerProfile,
    k: u32,
) -> MeasurableSet {
    MeasurableSet::from_cells(
        graph.universe(),
        profile
            .left_levels
            .iter()
            .enumerate()
            .filter(|(_, &lvl)| lvl <= k)
            .map(|(l, _)| graph.left_cell(l) as usize),
    )
}

fn expansion_spot(
    s_set: &RotationSet,
    eta: f64,
    partition: &SpherePartition,
    seed: u64,
) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe8a0_0001);
    let cell = partition.cell_area();
    let min_measure = (2.0 / (1.0 / eta - 1.0) * cell).max(8.0 * cell);
    let max_measure = (eta * eta).max(min_measure);
    let total = 24usize;
    let mut passed = 0;
    for _ in 0..total {
        let p: [f64; 3] = UnitSphere.sample(&mut rng);
        let center = UnitVector {
            x: p[0],
            y: p[1],
            z: p[2],
        };
        let t: f64 = rng.gen_range(0.0..1.0);
        let mu = min_measure + t * t * (max_measure - min_measure);
        let cap = partition.cap_of_measure(center, mu);
        if spectral::expansion_check(s_set, eta, &cap, partition).0 {
            passed += 1;
        }
    }
    (passed, total)
}

fn check_decomposition(
    graph: &BipartiteGraph,
    matching: &Matching,
    report: DecompositionReport,
) -> Result<String, String> {
    let d = report
        .into_decomposition()
        .map_err(|e| e.to_string())?;
    // additivity as exact cell counts
    let total_pieces = d.piece_cells_total();
    let residual_a = d.residual_a.cell_count() as u64;
    if total_pieces + residual_a != graph.n_left() as u64 {
        return Err(format!(
            "additivity violated: {} piece cells + {} residual != {}",
            total_pieces,
            residual_a,
            graph.n_left()
        ));
    }
    // pairwise disjointness
    let mut union = MeasurableSet::empty(d.universe);
    for p in &d.pieces {
        if !union.is_disjoint(&p.part_a).map_err(|e| e.to_string())? {
            return Err("pieces overlap".into());
        }
        union = union.union(&p.part_a).map_err(|e| e.to_string())?;
    }
    // Eq. (3) round-trip against the stored matching
    let edges = decomposition::reassemble_matching(graph, &d).map_err(|e| e.to_string())?;
    if edges.len() != matching.size() {
        return Err(format!(
            "round-trip produced {} edges, matching has {}",
            edges.len(),
            matching.size()
        ));
    }
    for (l, gen, r) in edges {
        if matching.left_pair(l as usize) != Some((gen, r)) {
            return Err(format!("round-trip edge ({}, {}, {}) disagrees", l, gen, r));
        }
    }
    Ok(format!(
        "{} pieces, residual measure {:.6e}, round-trip exact",
        d.pieces.len(),
        d.residual_measure()
    ))
}
