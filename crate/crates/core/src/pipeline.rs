// SPDX-License-Identifier: Apache-2.0

//! End-to-end runs over a device population.
//!
//! Per device: synthesize (or ingest) → characterize → reject erroneous sites
//! → improved K-means → relocation → group assignment → placement →
//! constraints → responses over the environment grid. The population is then
//! scored with the metrics and the statistical suite.
//!
//! All randomness comes from the global seed through per-device streams, so a
//! run is reproducible from its config alone and independent of thread count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterize::{self, CleanProfile, RejectMode, DEFAULT_SAMPLES};
use crate::chipmodel::{self, ChipProfile, DeviceKind, DeviceSpec, EnvCondition, DEFAULT_T_ON_US};
use crate::error::{Error, Result};
use crate::metrics::{BitMatrix, EvalReport};
use crate::nist::{self, NistParams, NistReport};
use crate::placement::{self, PlacementPlan};
use crate::puf::{self, ResponseSet, DEFAULT_LFSR_SEED};
use crate::rng::{self, Stage};
use crate::select::{self, Candidate, Seeding, Selection, SelectionConfig};

/// Modeled cost of one counter sample, in seconds.
pub const SAMPLE_COST_S: f64 = 3e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub preset: DeviceKind,
    pub count: usize,
    /// Optional device spec file overriding the preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvGrid {
    pub temperatures: Vec<f64>,
    pub voltages: Vec<f64>,
}

impl Default for EnvGrid {
    fn default() -> Self {
        EnvGrid {
            temperatures: EnvCondition::temperature_sweep()
                .iter()
                .map(|e| e.temp)
                .collect(),
            voltages: EnvCondition::voltage_sweep()
                .iter()
                .map(|e| e.vcc)
                .collect(),
        }
    }
}

impl EnvGrid {
    pub fn reference_only() -> Self {
        EnvGrid {
            temperatures: Vec::new(),
            voltages: Vec::new(),
        }
    }

    /// One-factor-at-a-time conditions: temperatures at reference supply,
    /// then voltages at reference temperature, without repeats.
    pub fn conditions(&self) -> Vec<EnvCondition> {
        let r = EnvCondition::REFERENCE;
        let mut out: Vec<EnvCondition> = Vec::new();
        let all = self
            .temperatures
            .iter()
            .map(|&t| EnvCondition::new(t, r.vcc))
            .chain(self.voltages.iter().map(|&v| EnvCondition::new(r.temp, v)));
        for e in all {
            if !out.contains(&e) {
                out.push(e);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub population: Vec<PopulationEntry>,
    pub m: usize,
    pub kappa: f64,
    pub samples: usize,
    pub t_on: f64,
    pub reject: RejectMode,
    pub seeding: Seeding,
    pub k_max: usize,
    pub max_iter: usize,
    pub relocate: bool,
    pub env: EnvGrid,
    pub lfsr_seed: u32,
    /// Use `lfsr_seed` on every device; otherwise each device derives its own.
    pub shared_lfsr: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub nist: NistParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 2021,
            population: vec![
                PopulationEntry {
                    preset: DeviceKind::Nexys4ddr,
                    count: 24,
                    spec: None,
                },
                PopulationEntry {
                    preset: DeviceKind::Basys3,
                    count: 10,
                    spec: None,
                },
                PopulationEntry {
                    preset: DeviceKind::Zybo,
                    count: 20,
                    spec: None,
                },
            ],
            m: 32,
            kappa: 0.5,
            samples: DEFAULT_SAMPLES,
            t_on: DEFAULT_T_ON_US,
            reject: RejectMode::default(),
            seeding: Seeding::Linear,
            k_max: select::DEFAULT_K_MAX,
            max_iter: select::DEFAULT_MAX_ITER,
            relocate: true,
            env: EnvGrid::default(),
            lfsr_seed: DEFAULT_LFSR_SEED,
            shared_lfsr: true,
            output: None,
            workers: None,
            nist: NistParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn device_count(&self) -> usize {
        self.population.iter().map(|p| p.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.device_count() == 0 {
            return Err(Error::Config("population is empty".into()));
        }
        placement::valid_kappas(self.m).map_err(|e| Error::Config(e.to_string()))?;
        if !placement::valid_kappas(self.m)?
            .iter()
            .any(|&k| (k - self.kappa).abs() < 1e-12)
        {
            return Err(Error::Config(format!(
                "kappa {} is not valid for M = {}",
                self.kappa, self.m
            )));
        }
        if self.samples < 2 {
            return Err(Error::Config("samples must be at least 2".into()));
        }
        if self.lfsr_seed == 0 {
            return Err(Error::Config("lfsr_seed must be nonzero".into()));
        }
        Ok(())
    }

    fn selection_config(&self, device: u64) -> SelectionConfig {
        SelectionConfig {
            m: self.m,
            seeding: self.seeding,
            k_max: self.k_max,
            max_iter: self.max_iter,
            rng_seed: rng::derive_seed(self.seed, device, Stage::Selection),
        }
    }

    /// Specs for every device in population order.
    fn device_specs(&self) -> Result<Vec<DeviceSpec>> {
        let mut out = Vec::with_capacity(self.device_count());
        for entry in &self.population {
            let spec = match &entry.spec {
                Some(path) => DeviceSpec::load(path)?,
                None => DeviceSpec::preset(entry.preset),
            };
            out.extend(std::iter::repeat_n(spec, entry.count));
        }
        Ok(out)
    }
}

/// Seeds one device's stages were run with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSeeds {
    pub index: u64,
    pub chip_seed: u64,
    pub selection_seed: u64,
    pub placement_seed: u64,
    pub lfsr_seed: u32,
}

impl DeviceSeeds {
    fn new(cfg: &PipelineConfig, index: u64) -> Self {
        let lfsr_seed = if cfg.shared_lfsr {
            cfg.lfsr_seed
        } else {
            let w = puf::width_for(cfg.m).unwrap_or(2);
            let period = (1u64 << w) - 1;
            (rng::derive_seed(cfg.seed, index, Stage::Response) % period + 1) as u32
        };
        DeviceSeeds {
            index,
            chip_seed: rng::derive_seed(cfg.seed, index, Stage::Fabric),
            selection_seed: rng::derive_seed(cfg.seed, index, Stage::Selection),
            placement_seed: rng::derive_seed(cfg.seed, index, Stage::Placement),
            lfsr_seed,
        }
    }
}

/// A device after characterization and selection; independent of κ.
#[derive(Debug, Clone)]
pub struct PreparedDevice {
    pub seeds: DeviceSeeds,
    pub chip: ChipProfile,
    pub clean: CleanProfile,
    pub selection: Selection,
    pub t_p2_seconds: f64,
}

impl PreparedDevice {
    /// The oscillators handed to group assignment.
    pub fn selected(&self, relocate: bool) -> &[Candidate] {
        if relocate {
            &self.selection.relocated.chosen
        } else {
            &self.selection.kmeans.chosen
        }
    }
}

/// A device's responses for one κ.
#[derive(Debug, Clone)]
pub struct DeviceResponses {
    pub plan: PlacementPlan,
    pub golden: ResponseSet,
    pub sweep: Vec<ResponseSet>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

/// Characterizes and selects on an existing chip.
pub fn prepare_chip(cfg: &PipelineConfig, index: u64, chip: ChipProfile) -> Result<PreparedDevice> {
    let seeds = DeviceSeeds::new(cfg, index);
    let mut crng = rng::stream(cfg.seed, index, Stage::Characterize);
    let prof = stage(
        "characterize",
        characterize::characterize(
            &chip,
            cfg.samples,
            cfg.t_on,
            EnvCondition::REFERENCE,
            &mut crng,
        ),
    )?;
    let clean = stage("reject", characterize::reject_erroneous(&prof, cfg.reject))?;
    let cands: Vec<Candidate> = clean
        .kept
        .site_refs
        .iter()
        .zip(&clean.kept.mean)
        .map(|(&site, &freq)| Candidate { site, freq })
        .collect();
    let started = Instant::now();
    let selection = stage(
        "select",
        select::select(&cands, &cfg.selection_config(index)),
    )?;
    let t_p2_seconds = started.elapsed().as_secs_f64();
    Ok(PreparedDevice {
        seeds,
        chip,
        clean,
        selection,
        t_p2_seconds,
    })
}

pub fn prepare_device(
    cfg: &PipelineConfig,
    index: u64,
    spec: &DeviceSpec,
) -> Result<PreparedDevice> {
    let seeds = DeviceSeeds::new(cfg, index);
    let chip = stage("synth", chipmodel::synth_chip(spec, seeds.chip_seed))?;
    prepare_chip(cfg, index, chip)
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

/// Synthesizes, characterizes and selects every device of the population.
pub fn prepare_population(cfg: &PipelineConfig) -> Result<Vec<PreparedDevice>> {
    cfg.validate()?;
    let specs = cfg.device_specs()?;
    in_pool(cfg.workers, || {
        specs
            .par_iter()
            .enumerate()
            .map(|(i, spec)| prepare_device(cfg, i as u64, spec))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Groups, places and queries one prepared device at ratio `kappa`.
/// `sweep` selects whether the environment grid is measured too.
pub fn respond_device(
    cfg: &PipelineConfig,
    dev: &PreparedDevice,
    kappa: f64,
    sweep: bool,
) -> Result<DeviceResponses> {
    let idx = dev.seeds.index;
    let mut grng = rng::stream(cfg.seed, idx, Stage::Groups);
    let assignment = stage(
        "groups",
        placement::assign_groups(dev.selected(cfg.relocate), kappa, &mut grng),
    )?;
    let plan = stage(
        "placement",
        placement::randomize_placement(&assignment, &dev.chip.sites, dev.seeds.placement_seed),
    )?;
    let mut rrng = rng::stream(cfg.seed, idx, Stage::Response);
    let golden = stage(
        "respond",
        puf::generate_response(
            &plan,
            &dev.chip,
            dev.seeds.lfsr_seed,
            EnvCondition::REFERENCE,
            cfg.t_on,
            &mut rrng,
        ),
    )?;
    let sweep = if sweep {
        cfg.env
            .conditions()
            .into_iter()
            .map(|env| {
                stage(
                    "respond",
                    puf::generate_response(
                        &plan,
                        &dev.chip,
                        dev.seeds.lfsr_seed,
                        env,
                        cfg.t_on,
                        &mut rrng,
                    ),
                )
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(DeviceResponses {
        plan,
        golden,
        sweep,
    })
}

pub fn respond_population(
    cfg: &PipelineConfig,
    devices: &[PreparedDevice],
    kappa: f64,
    sweep: bool,
) -> Result<Vec<DeviceResponses>> {
    in_pool(cfg.workers, || {
        devices
            .par_iter()
            .map(|d| respond_device(cfg, d, kappa, sweep))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Metrics over golden responses (uniqueness, entropy) and sweeps (reliability).
pub fn evaluate(responses: &[DeviceResponses]) -> Result<EvalReport> {
    let k = responses.first().map_or(0, |r| r.golden.k());
    let mut golden = BitMatrix::new(k);
    for r in responses {
        stage(
            "evaluate",
            golden.push(r.golden.device_id.clone(), &r.golden.bits),
        )?;
    }
    let sweeps: Vec<Vec<Vec<u8>>> = responses
        .iter()
        .map(|r| r.sweep.iter().map(|s| s.bits.clone()).collect())
        .collect();
    stage("evaluate", EvalReport::build(&golden, &sweeps))
}

pub fn nist_report(cfg: &PipelineConfig, responses: &[DeviceResponses]) -> Result<NistReport> {
    let seqs: Vec<Vec<u8>> = responses.iter().map(|r| r.golden.bits.clone()).collect();
    stage("nist", nist::run_suite(&seqs, &cfg.nist))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub device_id: String,
    pub seeds: DeviceSeeds,
    pub sites: usize,
    pub rejected: usize,
    pub chi_kmeans: f64,
    pub chi_relocated: f64,
    pub kmeans_iterations: usize,
    pub relocation_moves: usize,
}

impl DeviceSummary {
    fn of(d: &PreparedDevice) -> Self {
        DeviceSummary {
            device_id: d.chip.device_id.clone(),
            seeds: d.seeds.clone(),
            sites: d.chip.len(),
            rejected: d.clean.rejected_count,
            chi_kmeans: d.selection.kmeans.chi,
            chi_relocated: d.selection.relocated.chi,
            kmeans_iterations: d.selection.kmeans.iterations,
            relocation_moves: d.selection.relocated.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub tool_version: String,
    pub config: PipelineConfig,
    pub devices: Vec<DeviceSummary>,
}

/// In-memory result of a full run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub devices: Vec<PreparedDevice>,
    pub responses: Vec<DeviceResponses>,
    pub eval: EvalReport,
    pub nist: NistReport,
}

impl RunOutcome {
    pub fn manifest(&self, cfg: &PipelineConfig) -> Manifest {
        Manifest {
            status: "complete".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            devices: self.devices.iter().map(DeviceSummary::of).collect(),
        }
    }
}

/// Full run without touching the file system.
pub fn simulate(cfg: &PipelineConfig) -> Result<RunOutcome> {
    let devices = prepare_population(cfg)?;
    finish(cfg, devices)
}

fn finish(cfg: &PipelineConfig, devices: Vec<PreparedDevice>) -> Result<RunOutcome> {
    let responses = respond_population(cfg, &devices, cfg.kappa, true)?;
    let eval = evaluate(&responses)?;
    let nist = nist_report(cfg, &responses)?;
    Ok(RunOutcome {
        devices,
        responses,
        eval,
        nist,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e).at_stage("write"))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e).at_stage("write"))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write(path, s)
}

#[derive(Serialize)]
struct SelectionFile<'a> {
    selection: &'a Selection,
    plan: &'a PlacementPlan,
}

/// Writes the run layout under `dir`: manifest, per-device artifacts and reports.
pub fn write_outputs(cfg: &PipelineConfig, out: &RunOutcome, dir: &Path) -> Result<()> {
    mkdir(&dir.join("reports"))?;
    for (dev, resp) in out.devices.iter().zip(&out.responses) {
        let ddir = dir.join(format!("device_{}", dev.chip.device_id));
        mkdir(&ddir)?;
        write(&ddir.join("profile.csv"), dev.clean.kept.to_csv(&dev.chip))?;
        write_json(
            &ddir.join("selection.json"),
            &SelectionFile {
                selection: &dev.selection,
                plan: &resp.plan,
            },
        )?;
        write(
            &ddir.join("constraints.txt"),
            placement::emit_constraints(&resp.plan),
        )?;
        let mut sets = vec![resp.golden.clone()];
        sets.extend(resp.sweep.iter().cloned());
        write(&ddir.join("responses.csv"), puf::responses_to_csv(&sets))?;
    }
    write_json(&dir.join("reports").join("eval.json"), &out.eval)?;
    write(
        &dir.join("reports").join("hd_histogram.csv"),
        out.eval.hd_histogram_csv(50),
    )?;
    write(&dir.join("reports").join("nist.csv"), out.nist.to_csv())?;
    write_json(&dir.join("reports").join("nist.json"), &out.nist)?;
    write_json(&dir.join("manifest.json"), &out.manifest(cfg))
}

fn mark_incomplete(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    mkdir(dir)?;
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            status: "incomplete".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            devices: Vec::new(),
        },
    )
}

/// Full run written to `dir`; the manifest stays `incomplete` if a stage fails.
pub fn cmd_run(cfg: &PipelineConfig, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    mark_incomplete(cfg, dir)?;
    let out = simulate(cfg)?;
    write_outputs(cfg, &out, dir)?;
    Ok(out)
}

/// Runs an ingested chip through the same chain at the reference condition.
pub fn cmd_ingest(cfg: &PipelineConfig, chip: ChipProfile, dir: &Path) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    cfg.env = EnvGrid::reference_only();
    cfg.population = vec![PopulationEntry {
        preset: DeviceKind::Custom,
        count: 1,
        spec: None,
    }];
    cfg.validate()?;
    mark_incomplete(&cfg, dir)?;
    let dev = prepare_chip(&cfg, 0, chip)?;
    let out = finish(&cfg, vec![dev])?;
    write_outputs(&cfg, &out, dir)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaPoint {
    pub kappa: f64,
    pub pass_rate: f64,
    pub all_passed: bool,
    pub failing: Vec<String>,
    pub uniqueness: Option<f64>,
    pub h_flb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSweep {
    pub m: usize,
    pub points: Vec<KappaPoint>,
}

impl KappaSweep {
    /// κ values where every applicable test passed.
    pub fn full_pass(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.all_passed)
            .map(|p| p.kappa)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kappa,pass_rate,all_passed,uniqueness,h_flb,failing\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{:.4},{},{},{:.4},{}\n",
                p.kappa,
                p.pass_rate,
                p.all_passed,
                p.uniqueness.map_or("NA".into(), |u| format!("{u:.4}")),
                p.h_flb,
                p.failing.join(";")
            ));
        }
        s
    }
}

/// NIST pass rate for every valid κ at the configured M.
pub fn sweep_kappa(cfg: &PipelineConfig) -> Result<KappaSweep> {
    let devices = prepare_population(cfg)?;
    sweep_kappa_prepared(cfg, &devices)
}

pub fn sweep_kappa_prepared(
    cfg: &PipelineConfig,
    devices: &[PreparedDevice],
) -> Result<KappaSweep> {
    let points = placement::valid_kappas(cfg.m)?
        .into_iter()
        .map(|kappa| {
            let resp = respond_population(cfg, devices, kappa, false)?;
            let report = nist_report(cfg, &resp)?;
            let eval = evaluate(&resp)?;
            Ok(KappaPoint {
                kappa,
                pass_rate: report.pass_rate(),
                all_passed: report.all_passed(),
                failing: report
                    .applicable_rows()
                    .filter(|r| !r.pass)
                    .map(|r| r.test.as_str().to_string())
                    .collect(),
                uniqueness: eval.uniqueness,
                h_flb: eval.h_flb,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KappaSweep { m: cfg.m, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MPoint {
    pub m: usize,
    pub kappa: f64,
    pub k: usize,
    pub r_avg: f64,
    pub r_min: f64,
    pub uniqueness: Option<f64>,
    pub h_flb: f64,
    pub nist_pass_rate: f64,
    pub median_chi_kmeans: f64,
    pub median_chi_relocated: f64,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every M in {8, 16, 32, 64} with the valid κ nearest to the configured one.
pub fn sweep_m(cfg: &PipelineConfig) -> Result<Vec<MPoint>> {
    [8usize, 16, 32, 64]
        .into_iter()
        .map(|m| {
            let kappa = placement::valid_kappas(m)?
                .into_iter()
                .min_by(|a, b| (a - cfg.kappa).abs().total_cmp(&(b - cfg.kappa).abs()))
                .unwrap_or(0.0);
            let c = PipelineConfig {
                m,
                kappa,
                ..cfg.clone()
            };
            let out = simulate(&c)?;
            Ok(MPoint {
                m,
                kappa,
                k: puf::response_len(m)?,
                r_avg: out.eval.r_avg,
                r_min: out.eval.r_min,
                uniqueness: out.eval.uniqueness,
                h_flb: out.eval.h_flb,
                nist_pass_rate: out.nist.pass_rate(),
                median_chi_kmeans: median(
                    &mut out
                        .devices
                        .iter()
                        .map(|d| d.selection.kmeans.chi)
                        .collect::<Vec<_>>(),
                ),
                median_chi_relocated: median(
                    &mut out
                        .devices
                        .iter()
                        .map(|d| d.selection.relocated.chi)
                        .collect::<Vec<_>>(),
                ),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchDevice {
    pub device_id: String,
    pub z: usize,
    /// Modeled characterization time in seconds: Z · samples · 3 ms.
    pub t_p1: f64,
    /// Measured selection plus relocation wall time in seconds.
    pub t_p2: f64,
    pub kmeans_iterations: usize,
    pub relocation_moves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub m: usize,
    pub devices: Vec<BenchDevice>,
    /// Mean relocation moves per M in {8, 16, 32, 64} on the first device.
    pub relocation_moves_by_m: Vec<(usize, usize)>,
    pub kmeans_scaling: Vec<ScalingPoint>,
    pub t_p2_much_less_than_t_p1: bool,
}

/// Timing report: modeled characterization against measured selection cost.
pub fn cmd_bench(cfg: &PipelineConfig, scaling_sizes: &[usize]) -> Result<BenchReport> {
    let devices = prepare_population(cfg)?;
    let bench: Vec<BenchDevice> = devices
        .iter()
        .map(|d| BenchDevice {
            device_id: d.chip.device_id.clone(),
            z: d.chip.len(),
            t_p1: d.chip.len() as f64 * cfg.samples as f64 * SAMPLE_COST_S,
            t_p2: d.t_p2_seconds,
            kmeans_iterations: d.selection.kmeans.iterations,
            relocation_moves: d.selection.relocated.iterations,
        })
        .collect();
    let first = &devices[0];
    let cands: Vec<Candidate> = first
        .clean
        .kept
        .site_refs
        .iter()
        .zip(&first.clean.kept.mean)
        .map(|(&site, &freq)| Candidate { site, freq })
        .collect();
    let mut relocation_moves_by_m = Vec::new();
    for m in [8usize, 16, 32, 64] {
        if cands.len() >= m {
            let sc = SelectionConfig {
                m,
                ..cfg.selection_config(0)
            };
            relocation_moves_by_m.push((m, select::select(&cands, &sc)?.relocated.iterations));
        }
    }
    let mut r = rng::stream(cfg.seed, 0, Stage::Trial);
    let kmeans_scaling = scaling_sizes
        .iter()
        .map(|&n| {
            use rand::Rng;
            let f: Vec<Candidate> = (0..n)
                .map(|site| Candidate {
                    site,
                    freq: r.gen_range(380.0..430.0),
                })
                .collect();
            let sc = SelectionConfig {
                m: cfg.m.min(n),
                ..cfg.selection_config(0)
            };
            let t = Instant::now();
            select::improved_kmeans(&f, &sc)?;
            Ok(ScalingPoint {
                n,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let much_less = bench.iter().all(|b| b.t_p2 * 100.0 < b.t_p1);
    Ok(BenchReport {
        m: cfg.m,
        devices: bench,
        relocation_moves_by_m,
        kmeans_scaling,
        t_p2_much_less_than_t_p1: much_less,
    })
}
