//! File-based pipeline: every stage reads the previous stage's artifacts
//! from the output directory and writes its own, so a failed run keeps
//! its partial outputs and any stage can be re-run from disk. Artifacts
//! carry the config hash and seed that produced them.

use anyhow::{anyhow, bail, Context, Result};
use qbasis::circuit::{
    default_layout, gen_bv, gen_cuccaro, gen_qaoa, gen_qft, lower, parse_qasm, route, schedule,
    Circuit, GateKind, ScheduledCircuit,
};
use qbasis::fidelity::{
    benchmark_table_csv, benchmark_table_markdown, circuit_fidelity, gate_table_csv,
    gate_table_markdown, BenchmarkTableRow, CoherenceParams, GateTableRow,
};
use qbasis::hamsim::{generate_device, DeviceModel, SiteId, Trajectory};
use qbasis::par;
use qbasis::selector::{
    drive_edge, select_basis, BasisAssignment, CriterionKind, DeviceBasisSet, DriveSettings,
    EdgeFailure,
};
use qbasis::synth::{build_cache, default_targets, SynthesisOptions};
use qbasis::weyl::{weyl_distance, CanonicalCoordinate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

pub const QAOA_GAMMA: f64 = 0.7;
pub const QAOA_BETA: f64 = 0.3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Envelope every JSON file the CLI writes: the hash of the producing
/// configuration, the seed in effect, and the payload itself.
#[derive(Serialize, Deserialize)]
pub struct Artifact<T> {
    pub config_hash: String,
    pub seed: u64,
    pub payload: T,
}

pub fn write_artifact<T: Serialize>(
    path: &Path,
    config_hash: &str,
    seed: u64,
    payload: &T,
) -> Result<()> {
    let a = Artifact { config_hash: config_hash.to_string(), seed, payload };
    let mut text = serde_json::to_string_pretty(&a)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<Artifact<T>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn d_freq_lo() -> f64 {
    3.0
}
fn d_freq_hi() -> f64 {
    5.0
}
fn d_rel_std() -> f64 {
    0.015
}
fn d_t_coherence() -> f64 {
    80.0
}
fn d_baseline_xi() -> f64 {
    0.005
}
fn d_nonstandard_xi() -> f64 {
    0.04
}
fn d_d1q() -> f64 {
    20.0
}

/// Knobs a config may override without touching the built-in defaults.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub synth_threshold: Option<f64>,
    pub synth_restarts: Option<usize>,
    pub baseline_t_max_ns: Option<f64>,
    pub nonstandard_t_max_ns: Option<f64>,
    pub spacing_ns: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub rows: u32,
    pub cols: u32,
    #[serde(default = "d_freq_lo")]
    pub freq_lo_ghz: f64,
    #[serde(default = "d_freq_hi")]
    pub freq_hi_ghz: f64,
    #[serde(default = "d_rel_std")]
    pub rel_std: f64,
    #[serde(default = "d_t_coherence")]
    pub t_coherence_us: f64,
    #[serde(default = "d_baseline_xi")]
    pub baseline_xi: f64,
    #[serde(default = "d_nonstandard_xi")]
    pub nonstandard_xi: f64,
    pub criteria: Vec<String>,
    pub benchmarks: Vec<String>,
    pub output_dir: String,
    #[serde(default = "d_d1q")]
    pub d_1q_ns: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.criteria.is_empty() {
            bail!("config lists no criteria");
        }
        for c in &self.criteria {
            parse_criterion(c)?;
        }
        if self.benchmarks.is_empty() {
            bail!("config lists no benchmarks");
        }
        if self.d_1q_ns <= 0.0 || self.t_coherence_us <= 0.0 {
            bail!("durations must be positive");
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(canon.as_bytes()))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }

    fn coherence(&self) -> CoherenceParams {
        CoherenceParams { t: self.t_coherence_us * 1e-6 }
    }

    fn drive_settings(&self, xi: f64) -> DriveSettings {
        let t = &self.tolerances;
        let base = if xi == self.baseline_xi {
            DriveSettings::low_drive()
        } else {
            DriveSettings::high_drive(xi)
        };
        DriveSettings {
            xi,
            t_max: if xi == self.baseline_xi {
                t.baseline_t_max_ns.map_or(base.t_max, |v| v * 1e-9)
            } else {
                t.nonstandard_t_max_ns.map_or(base.t_max, |v| v * 1e-9)
            },
            spacing: t.spacing_ns.map_or(base.spacing, |v| v * 1e-9),
        }
    }

    fn synth_options(&self) -> SynthesisOptions {
        let mut o = SynthesisOptions { seed: self.seed, ..SynthesisOptions::default() };
        if let Some(t) = self.tolerances.synth_threshold {
            o.threshold = t;
        }
        if let Some(r) = self.tolerances.synth_restarts {
            o.restarts = r;
        }
        o
    }

    fn xi_for(&self, kind: CriterionKind) -> f64 {
        match kind {
            CriterionKind::BaselineSqiswap => self.baseline_xi,
            _ => self.nonstandard_xi,
        }
    }
}

pub fn parse_criterion(s: &str) -> Result<CriterionKind> {
    match s {
        "baseline" | "baseline_sqiswap" => Ok(CriterionKind::BaselineSqiswap),
        "criterion1" => Ok(CriterionKind::Criterion1),
        "criterion2" => Ok(CriterionKind::Criterion2),
        other => Err(anyhow!(
            "unknown criterion {other:?} (expected baseline, criterion1 or criterion2)"
        )),
    }
}

pub fn criterion_label(kind: CriterionKind) -> &'static str {
    match kind {
        CriterionKind::BaselineSqiswap => "baseline",
        CriterionKind::Criterion1 => "criterion 1",
        CriterionKind::Criterion2 => "criterion 2",
        CriterionKind::Custom => "custom",
    }
}

/// A named circuit to push through the device flow. Specs are `bv<N>`,
/// `qft<N>`, `qaoa<N>@<edge density>`, `cuccaro<N>`, or a path to an
/// OpenQASM file.
pub struct Benchmark {
    pub label: String,
    pub tag: String,
    pub circuit: Circuit,
}

pub fn build_benchmark(spec: &str, seed: u64) -> Result<Benchmark> {
    if spec.contains('/') || spec.ends_with(".qasm") {
        let path = Path::new(spec);
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let circuit = parse_qasm(&text).with_context(|| format!("parsing {}", path.display()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        return Ok(Benchmark { label: stem.clone(), tag: stem, circuit });
    }
    let (name, rest) = spec
        .find(|c: char| c.is_ascii_digit())
        .map(|i| spec.split_at(i))
        .ok_or_else(|| anyhow!("benchmark {spec:?} has no size"))?;
    let (size_s, param) = match rest.split_once('@') {
        Some((s, p)) => (s, Some(p)),
        None => (rest, None),
    };
    let n: u32 = size_s.parse().with_context(|| format!("benchmark size in {spec:?}"))?;
    if n < 2 {
        bail!("benchmark {spec:?} needs at least two qubits");
    }
    let circuit = match name {
        "bv" => gen_bv(n, (1u64 << (n - 1)) - 1),
        "qft" => gen_qft(n),
        "qaoa" => {
            let density = match param {
                Some(p) => p.parse().with_context(|| format!("edge density in {spec:?}"))?,
                None => 0.5,
            };
            gen_qaoa(n, density, seed, QAOA_GAMMA, QAOA_BETA)
        }
        "cuccaro" => gen_cuccaro(n),
        other => bail!("unknown benchmark family {other:?} in {spec:?}"),
    };
    Ok(Benchmark {
        label: format!("{name} {n}"),
        tag: spec.replace('@', "_"),
        circuit,
    })
}

/// One edge's simulation outcome at one drive amplitude; kept in file so
/// selection can re-run without another integrator pass.
#[derive(Serialize, Deserialize)]
pub struct TrajOutcome {
    pub edge: (SiteId, SiteId),
    pub trajectory: Option<Trajectory>,
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct TrajSummary {
    pub edge: (SiteId, SiteId),
    pub xi: f64,
    pub samples: usize,
    pub max_leakage: f64,
    pub closest_sqiswap_ns: f64,
    pub closest_sqiswap_distance: f64,
}

#[derive(Serialize, Deserialize)]
pub struct TranspiledCircuit {
    pub benchmark: String,
    pub criterion: String,
    pub n_qubits: u32,
    pub swap_count: usize,
    pub native_layers: usize,
    pub scheduled: ScheduledCircuit,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.with_context(|| format!("stage {name}"))
}

fn traj_file(xi: f64) -> String {
    format!("traj_xi{xi}.json")
}

fn basis_file(kind: CriterionKind) -> String {
    format!("basis_{kind}.json")
}

fn cache_file(kind: CriterionKind) -> String {
    format!("cache_{kind}.json")
}

fn sched_file(tag: &str, kind: CriterionKind) -> String {
    format!("sched_{tag}_{kind}.json")
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.hash();
    let out = cfg.out_dir();
    stage(
        "config",
        fs::create_dir_all(&out)
            .with_context(|| format!("creating {}", out.display()))
            .and_then(|_| write_artifact(&out.join("config.json"), &hash, cfg.seed, cfg)),
    )?;

    let device = generate_device(
        cfg.rows,
        cfg.cols,
        cfg.seed,
        TAU * cfg.freq_lo_ghz * 1e9,
        TAU * cfg.freq_hi_ghz * 1e9,
        cfg.rel_std,
        cfg.t_coherence_us * 1e-6,
    );
    stage("device", write_artifact(&out.join("device.json"), &hash, cfg.seed, &device))?;
    println!(
        "device: {}x{} grid, {} qubits, {} edges",
        cfg.rows,
        cfg.cols,
        device.n_qubits(),
        device.edges.len()
    );

    let criteria: Vec<CriterionKind> =
        cfg.criteria.iter().map(|s| parse_criterion(s)).collect::<Result<_>>()?;
    let mut amplitudes: Vec<f64> = Vec::new();
    for &k in &criteria {
        let xi = cfg.xi_for(k);
        if !amplitudes.contains(&xi) {
            amplitudes.push(xi);
        }
    }

    let mut summaries: Vec<TrajSummary> = Vec::new();
    for &xi in &amplitudes {
        let settings = cfg.drive_settings(xi);
        let outcomes: Vec<TrajOutcome> = par::map_indexed(device.edges.len(), |i| {
            let edge = &device.edges[i];
            match drive_edge(edge, settings) {
                Ok(t) => TrajOutcome { edge: (edge.a, edge.b), trajectory: Some(t), error: None },
                Err(e) => TrajOutcome {
                    edge: (edge.a, edge.b),
                    trajectory: None,
                    error: Some(e.to_string()),
                },
            }
        });
        for o in &outcomes {
            if let Some(t) = &o.trajectory {
                let closest = t
                    .samples
                    .iter()
                    .min_by(|a, b| {
                        weyl_distance(a.coordinate, CanonicalCoordinate::SQRT_ISWAP)
                            .total_cmp(&weyl_distance(b.coordinate, CanonicalCoordinate::SQRT_ISWAP))
                    })
                    .expect("trajectories carry at least the zero sample");
                summaries.push(TrajSummary {
                    edge: o.edge,
                    xi,
                    samples: t.samples.len(),
                    max_leakage: t.samples.iter().map(|s| s.leakage).fold(0.0, f64::max),
                    closest_sqiswap_ns: closest.duration * 1e9,
                    closest_sqiswap_distance: weyl_distance(
                        closest.coordinate,
                        CanonicalCoordinate::SQRT_ISWAP,
                    ),
                });
            }
        }
        stage(
            "trajectories",
            write_artifact(&out.join(traj_file(xi)), &hash, cfg.seed, &outcomes),
        )?;
        let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
        println!(
            "trajectories at xi {xi}: {} edges simulated, {} failed",
            outcomes.len() - failed,
            failed
        );
    }
    stage(
        "trajectories",
        write_artifact(&out.join("traj_summary.json"), &hash, cfg.seed, &summaries),
    )?;

    let opts = cfg.synth_options();
    for &kind in &criteria {
        let xi = cfg.xi_for(kind);
        let outcomes: Artifact<Vec<TrajOutcome>> =
            stage("basis", read_artifact(&out.join(traj_file(xi))))?;
        let mut assignments: Vec<BasisAssignment> = Vec::new();
        let mut failures: Vec<EdgeFailure> = Vec::new();
        for o in outcomes.payload {
            match (o.trajectory, o.error) {
                (Some(t), _) => match select_basis(&t, kind) {
                    Ok(a) => assignments.push(a),
                    Err(e) => failures.push(EdgeFailure { edge: o.edge, message: e.to_string() }),
                },
                (None, e) => failures.push(EdgeFailure {
                    edge: o.edge,
                    message: format!("trajectory: {}", e.unwrap_or_default()),
                }),
            }
        }
        if assignments.is_empty() {
            return Err(anyhow!("criterion {kind}: every edge failed selection"))
                .context("stage basis");
        }
        let set = DeviceBasisSet {
            criterion: kind,
            settings: cfg.drive_settings(xi),
            assignments,
            failures,
        };
        stage("basis", write_artifact(&out.join(basis_file(kind)), &hash, cfg.seed, &set))?;
        let s = set.summary(&cfg.coherence());
        println!(
            "basis {kind}: {} edges, mean {:.2} ns, mean ceiling {:.5}, {} failures",
            s.n_assigned,
            s.mean_duration * 1e9,
            s.mean_fidelity,
            s.n_failed
        );

        let mut cache = build_cache(&set.edge_bases(), &default_targets(), &opts);
        cache.timestamp = fnv1a64(hash.as_bytes());
        stage("cache", write_artifact(&out.join(cache_file(kind)), &hash, cfg.seed, &cache))?;
        if !cache.failures.is_empty() {
            println!("cache {kind}: {} entries failed to decompose", cache.failures.len());
        }
    }

    let benchmarks: Vec<Benchmark> = stage(
        "transpile",
        cfg.benchmarks.iter().map(|s| build_benchmark(s, cfg.seed)).collect::<Result<_>>(),
    )?;
    for bench in &benchmarks {
        if bench.circuit.n_qubits > device.n_qubits() {
            return Err(anyhow!(
                "benchmark {} needs {} qubits, device has {}",
                bench.label,
                bench.circuit.n_qubits,
                device.n_qubits()
            ))
            .context("stage transpile");
        }
        for &kind in &criteria {
            let set: Artifact<DeviceBasisSet> =
                stage("transpile", read_artifact(&out.join(basis_file(kind))))?;
            let cache = stage("transpile", read_artifact(&out.join(cache_file(kind))))?;
            let t = stage(
                "transpile",
                transpile_one(&bench.circuit, &device, &set.payload, &cache.payload, &opts, cfg)
                    .with_context(|| format!("{} under {kind}", bench.label)),
            )?;
            let payload = TranspiledCircuit {
                benchmark: bench.label.clone(),
                criterion: kind.to_string(),
                n_qubits: bench.circuit.n_qubits,
                swap_count: t.1,
                native_layers: t.2,
                scheduled: t.0,
            };
            stage(
                "transpile",
                write_artifact(&out.join(sched_file(&bench.tag, kind)), &hash, cfg.seed, &payload),
            )?;
            println!(
                "transpile {} under {kind}: {} swaps, {} native layers, {:.1} ns",
                bench.label, payload.swap_count, payload.native_layers,
                payload.scheduled.total_duration
            );
        }
    }

    stage("report", write_report(&out))?;
    Ok(())
}

pub fn transpile_one(
    circuit: &Circuit,
    device: &DeviceModel,
    set: &DeviceBasisSet,
    cache: &qbasis::synth::DecompositionCache,
    opts: &SynthesisOptions,
    cfg: &PipelineConfig,
) -> Result<(ScheduledCircuit, usize, usize)> {
    let routed = route(circuit, device, &default_layout(circuit.n_qubits));
    let lowered = lower(&routed.circuit, device, &set.edge_bases(), cache, opts)?;
    let natives = lowered.gates.iter().filter(|g| g.kind == GateKind::Native).count();
    let scheduled = schedule(&lowered, cfg.d_1q_ns, &set.edge_durations_ns(device));
    Ok((scheduled, routed.swap_count, natives))
}

/// Rebuilds the comparison report from the artifacts already on disk;
/// running it twice writes identical bytes.
pub fn write_report(dir: &Path) -> Result<()> {
    let cfg_art: Artifact<PipelineConfig> = read_artifact(&dir.join("config.json"))?;
    let cfg = &cfg_art.payload;
    let hash = &cfg_art.config_hash;
    let cp = cfg.coherence();
    let criteria: Vec<CriterionKind> =
        cfg.criteria.iter().map(|s| parse_criterion(s)).collect::<Result<_>>()?;

    let mut gate_rows: Vec<GateTableRow> = Vec::new();
    for &kind in &criteria {
        let set: Artifact<DeviceBasisSet> = read_artifact(&dir.join(basis_file(kind)))?;
        gate_rows.push(set.payload.table_row(criterion_label(kind), cfg.d_1q_ns));
    }

    let three_way = [
        CriterionKind::BaselineSqiswap,
        CriterionKind::Criterion1,
        CriterionKind::Criterion2,
    ]
    .iter()
    .all(|k| criteria.contains(k));
    let mut bench_rows: Vec<BenchmarkTableRow> = Vec::new();
    if three_way {
        for spec in &cfg.benchmarks {
            let tag = spec.replace('@', "_");
            let tag = if tag.contains('/') || tag.ends_with(".qasm") {
                Path::new(&tag)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or(tag.clone())
            } else {
                tag
            };
            let mut fid = |k: CriterionKind| -> Result<(String, f64)> {
                let t: Artifact<TranspiledCircuit> = read_artifact(&dir.join(sched_file(&tag, k)))?;
                Ok((t.payload.benchmark, 100.0 * circuit_fidelity(&t.payload.scheduled, &cp)))
            };
            let (label, baseline) = fid(CriterionKind::BaselineSqiswap)?;
            let (_, criterion1) = fid(CriterionKind::Criterion1)?;
            let (_, criterion2) = fid(CriterionKind::Criterion2)?;
            bench_rows.push(BenchmarkTableRow { benchmark: label, baseline, criterion1, criterion2 });
        }
    }

    let mut md = String::new();
    md.push_str("# basis-set comparison\n\n");
    md.push_str(&format!(
        "config {hash}, seed {}, {}x{} device, T = {} us, d_1q = {} ns\n\n",
        cfg_art.seed, cfg.rows, cfg.cols, cfg.t_coherence_us, cfg.d_1q_ns
    ));
    md.push_str("## gate durations and coherence ceilings\n\n");
    md.push_str(&gate_table_markdown(&gate_rows, &cp));
    if three_way {
        md.push_str("\n## benchmark circuit fidelities\n\n");
        md.push_str(&benchmark_table_markdown(&bench_rows));
    } else {
        md.push_str("\nbenchmark table skipped: needs baseline, criterion1 and criterion2\n");
    }
    fs::write(dir.join("report.md"), &md)
        .with_context(|| format!("writing {}", dir.join("report.md").display()))?;
    fs::write(dir.join("report_gates.csv"), gate_table_csv(&gate_rows, &cp))?;
    if three_way {
        fs::write(dir.join("report_benchmarks.csv"), benchmark_table_csv(&bench_rows))?;
    }
    println!("report: {}", dir.join("report.md").display());
    Ok(())
}
