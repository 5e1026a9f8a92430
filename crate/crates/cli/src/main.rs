// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ropuf_core::chipmodel::ingest_csv;
use ropuf_core::nist;
use ropuf_core::pipeline::{self, PipelineConfig};
use ropuf_core::puf::{responses_from_csv, RESPONSE_HEADER};

/// Ring-oscillator PUF simulation and evaluation.
#[derive(Parser, Debug)]
#[command(name = "ropuf", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Overrides applied on top of the config file (or the built-in defaults).
#[derive(Args, Debug)]
struct Common {
    /// TOML pipeline config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed [default: 2021]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Oscillators per device, a power of two [default: 32]
    #[arg(short, long, global = true)]
    m: Option<usize>,
    /// Randomness ratio, one of i/2^(log2(M/2)-1) [default: 0.5]
    #[arg(short, long, global = true)]
    kappa: Option<f64>,
    /// Challenge generator seed shared by all devices [default: 1]
    #[arg(long, global = true)]
    lfsr_seed: Option<u32>,
    /// Worker threads [default: all cores]
    #[arg(short, long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Simulate a population and write the full run layout
    Run {
        /// Output directory [default: config `output`, else ./run]
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// NIST pass rate for every valid kappa
    SweepKappa {
        /// CSV destination [default: stdout]
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Metrics for M in {8, 16, 32, 64}
    SweepM {
        /// JSON destination [default: stdout]
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Modeled characterization time against measured selection time
    Bench {
        /// Candidate counts for the k-means scaling run
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        sizes: Vec<usize>,
        /// JSON destination [default: stdout]
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a measured frequency profile through selection and response generation
    Ingest {
        /// CSV with clb_x,clb_y,corner,mhz_1..mhz_m (or count_1..count_m) columns
        profile: PathBuf,
        /// Output directory
        #[arg(short, long, default_value = "ingest")]
        out: PathBuf,
    },
    /// NIST suite on response dumps; exits 1 unless every applicable test passes
    Nist {
        /// responses.csv files (reference rows are used) or files of 0/1 lines
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// CSV destination [default: stdout]
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.m {
        cfg.m = m;
    }
    if let Some(k) = c.kappa {
        cfg.kappa = k;
    } else if c.m.is_some() {
        cfg.kappa = nearest_kappa(cfg.m, cfg.kappa);
    }
    if let Some(l) = c.lfsr_seed {
        cfg.lfsr_seed = l;
    }
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn nearest_kappa(m: usize, want: f64) -> f64 {
    ropuf_core::placement::valid_kappas(m)
        .ok()
        .and_then(|ks| {
            ks.into_iter()
                .min_by(|a, b| (a - want).abs().total_cmp(&(b - want).abs()))
        })
        .unwrap_or(want)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn load_sequences(files: &[PathBuf]) -> Result<Vec<Vec<u8>>> {
    let mut seqs = Vec::new();
    for f in files {
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        if text.lines().next().map(str::trim) == Some(RESPONSE_HEADER) {
            let sets = responses_from_csv(&text).with_context(|| f.display().to_string())?;
            // first reference row per device; the sweep may repeat the reference condition
            let mut seen = HashSet::new();
            seqs.extend(
                sets.into_iter()
                    .filter(|s| s.env.is_reference() && seen.insert(s.device_id.clone()))
                    .map(|s| s.bits),
            );
        } else {
            for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
                seqs.push(nist::parse_bits(line).with_context(|| f.display().to_string())?);
            }
        }
    }
    if seqs.is_empty() {
        bail!("no sequences found");
    }
    Ok(seqs)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = config(&cli.common)?;
    match cli.cmd {
        Cmd::Run { out } => {
            let dir = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("run"));
            let o = pipeline::cmd_run(&cfg, &dir)?;
            eprintln!(
                "{} devices, r_avg {:.4}, r_min {:.4}, u {}, H_FLB {:.4}, NIST {}/{} -> {}",
                o.devices.len(),
                o.eval.r_avg,
                o.eval.r_min,
                o.eval.uniqueness.map_or("NA".into(), |u| format!("{u:.4}")),
                o.eval.h_flb,
                o.nist.applicable_rows().filter(|r| r.pass).count(),
                o.nist.applicable_rows().count(),
                dir.display()
            );
        }
        Cmd::SweepKappa { out } => {
            let s = pipeline::sweep_kappa(&cfg)?;
            emit(out.as_deref(), &s.to_csv())?;
            eprintln!("full pass at kappa {:?}", s.full_pass());
        }
        Cmd::SweepM { out } => emit(out.as_deref(), &json(&pipeline::sweep_m(&cfg)?)?)?,
        Cmd::Bench { sizes, out } => {
            emit(out.as_deref(), &json(&pipeline::cmd_bench(&cfg, &sizes)?)?)?
        }
        Cmd::Ingest { profile, out } => {
            let chip = ingest_csv(&profile)?;
            let o = pipeline::cmd_ingest(&cfg, chip, &out)?;
            eprintln!("{} bits -> {}", o.responses[0].golden.k(), out.display());
        }
        Cmd::Nist { files, out } => {
            let seqs = load_sequences(&files)?;
            let report = nist::run_suite(&seqs, &cfg.nist)?;
            emit(out.as_deref(), &report.to_csv())?;
            eprintln!(
                "{} sequences of {} bits, {} passes needed per test",
                report.sequences, report.n, report.min_passed
            );
            return Ok(report.all_passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
