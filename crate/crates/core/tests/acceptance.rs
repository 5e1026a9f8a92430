// SPDX-License-Identifier: Apache-2.0

//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use proptest::collection::vec as pvec;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::index;
use rand::Rng;

use ropuf_core::chipmodel::{DeviceKind, DeviceSpec};
use ropuf_core::metrics::{hamming, min_entropy, reliability, uniqueness, BitMatrix};
use ropuf_core::nist;
use ropuf_core::pipeline::{self, PipelineConfig, PopulationEntry, PreparedDevice};
use ropuf_core::puf;
use ropuf_core::rng;
use ropuf_core::select::{self, Candidate, SelectionConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn min_gap(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Best χ over every M-subset, by enumeration.
fn brute_force_chi(f: &[f64], m: usize) -> f64 {
    fn rec(f: &[f64], m: usize, start: usize, cur: &mut Vec<f64>, best: &mut f64) {
        if cur.len() == m {
            *best = best.max(min_gap(cur));
            return;
        }
        for i in start..=f.len() - (m - cur.len()) {
            cur.push(f[i]);
            rec(f, m, i + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(f, m, 0, &mut Vec::with_capacity(m), &mut best);
    best
}

fn c1_oracle_bound() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng::seeded(101);
    let (mut good, mut above, mut bad_subset) = (0, 0, 0);
    let cases = 200;
    for case in 0..cases {
        let m = [2, 3, 4][case % 3];
        let n = r.gen_range(m + 1..=20);
        // Coarse grid so that equal frequencies occur now and then.
        let f: Vec<f64> = (0..n)
            .map(|_| 100.0 + r.gen_range(0..400) as f64 * 0.25)
            .collect();
        let mut cfg = SelectionConfig::new(m);
        cfg.rng_seed = case as u64;
        let sel = select::select(&Candidate::from_freqs(&f), &cfg).unwrap();
        let got = sel.relocated.chi;
        let sites = sel.relocated.sites();
        let mut uniq = sites.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let freqs: Vec<f64> = sites.iter().map(|&s| f[s]).collect();
        if uniq.len() != m || min_gap(&freqs) != got {
            bad_subset += 1;
        }
        let opt = brute_force_chi(&f, m);
        if got > opt {
            above += 1;
        }
        if got >= 0.9 * opt {
            good += 1;
        }
    }
    let el = t0.elapsed();
    let frac = good as f64 / cases as f64;
    outcome(
        frac >= 0.95 && above == 0 && bad_subset == 0 && el < Duration::from_secs(10),
        format!(
            "{good}/{cases} within 0.9 of optimum ({:.1}%), {above} above optimum, {bad_subset} invalid subsets, {:.2} s",
            100.0 * frac,
            secs(el)
        ),
    )
}

fn c2_relocation_monotone() -> Outcome {
    let mut r = rng::seeded(202);
    let mut worse = 0;
    let cases = 1000;
    for _ in 0..cases {
        let n = r.gen_range(3..=60);
        let mut nu: Vec<f64> = (0..n)
            .map(|_| 50.0 + r.gen_range(0..200) as f64 * 0.5)
            .collect();
        nu.sort_by(f64::total_cmp);
        let k = r.gen_range(2..=n.min(16));
        let lp: Vec<f64> = index::sample(&mut r, n, k).iter().map(|i| nu[i]).collect();
        let before = min_gap(&lp);
        let after = select::relocate_centroids(&nu, &lp, 200).unwrap().chi;
        if after < before {
            worse += 1;
        }
    }
    outcome(worse == 0, format!("{worse}/{cases} instances lost χ"))
}

fn nexys_config(m: usize, seed: u64, count: usize) -> PipelineConfig {
    PipelineConfig {
        seed,
        m,
        kappa: 0.5,
        population: vec![PopulationEntry {
            preset: DeviceKind::Nexys4ddr,
            count,
            spec: None,
        }],
        ..PipelineConfig::default()
    }
}

fn candidates(dev: &PreparedDevice) -> Vec<Candidate> {
    dev.clean
        .kept
        .site_refs
        .iter()
        .zip(&dev.clean.kept.mean)
        .map(|(&site, &freq)| Candidate { site, freq })
        .collect()
}

fn c3_improved_over_plain() -> Outcome {
    let t0 = Instant::now();
    let cfg = nexys_config(16, 303, 20);
    let devs = pipeline::prepare_population(&cfg).unwrap();
    let mut improved = Vec::new();
    let mut plain = Vec::new();
    for d in &devs {
        let sc = SelectionConfig {
            rng_seed: d.seeds.selection_seed,
            ..SelectionConfig::new(16)
        };
        let c = candidates(d);
        improved.push(select::improved_kmeans(&c, &sc).unwrap().chi);
        plain.push(select::plain_kmeans(&c, &sc).unwrap().chi);
    }
    let (mi, mp) = (median(improved), median(plain));
    let el = t0.elapsed();
    outcome(
        mi > mp && el < Duration::from_secs(60),
        format!(
            "median χ improved {:.4} kHz vs plain {:.4} kHz (+{:.1}%), {:.1} s",
            mi * 1e3,
            mp * 1e3,
            100.0 * (mi - mp) / mp,
            secs(el)
        ),
    )
}

fn relocation_gain(m: usize) -> f64 {
    let devs = pipeline::prepare_population(&nexys_config(m, 404, 20)).unwrap();
    median(
        devs.iter()
            .map(|d| {
                let (k, r) = (d.selection.kmeans.chi, d.selection.relocated.chi);
                (r - k) / k
            })
            .collect(),
    )
}

fn c4_relocation_scaling() -> Outcome {
    let (g8, g64) = (relocation_gain(8), relocation_gain(64));
    outcome(
        g64 > g8,
        format!(
            "median relocation gain M64 {:.1}% vs M8 {:.1}%",
            100.0 * g64,
            100.0 * g8
        ),
    )
}

fn c5_response_lengths() -> Outcome {
    let cfg = PipelineConfig::default();
    let chip = ropuf_core::chipmodel::synth_chip(&DeviceSpec::preset(DeviceKind::Zybo), 5).unwrap();
    let mut got = Vec::new();
    for m in [8usize, 16, 32, 64] {
        let c = PipelineConfig {
            m,
            kappa: 0.0,
            ..cfg.clone()
        };
        let dev = pipeline::prepare_chip(&c, 0, chip.clone()).unwrap();
        let resp = pipeline::respond_device(&c, &dev, 0.0, false).unwrap();
        assert_eq!(resp.golden.k(), puf::response_len(m).unwrap());
        got.push(resp.golden.bits.len());
    }
    outcome(got == [15, 63, 255, 1023], format!("lengths {got:?}"))
}

fn c6_reliability(out: &pipeline::RunOutcome, el: Duration) -> Outcome {
    let e = &out.eval;
    outcome(
        e.r_avg >= 0.99 && e.r_min >= 0.985 && el < Duration::from_secs(300),
        format!(
            "{} devices, r_avg {:.5}, r_min {:.5}, r_max {:.5}, {:.1} s",
            e.reliability_per_device.len(),
            e.r_avg,
            e.r_min,
            e.r_max,
            secs(el)
        ),
    )
}

fn c7_uniqueness(out: &pipeline::RunOutcome) -> Outcome {
    let e = &out.eval;
    let u = e.uniqueness.unwrap_or(f64::NAN);
    let d = &e.hd_inter_distribution;
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    outcome(
        (u - 0.5).abs() <= 0.01 && (mean - 0.5).abs() <= 0.022,
        format!("u {u:.5}, pairwise mean {mean:.5} over {} pairs", d.len()),
    )
}

fn h_flb_at(m: usize, kappa: f64) -> f64 {
    let cfg = PipelineConfig {
        m,
        kappa,
        ..PipelineConfig::default()
    };
    let devs = pipeline::prepare_population(&cfg).unwrap();
    let resp = pipeline::respond_population(&cfg, &devs, kappa, false).unwrap();
    pipeline::evaluate(&resp).unwrap().h_flb
}

fn c8_min_entropy() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, kappas) in [(32usize, [0.375, 0.5]), (64, [0.3125, 0.375])] {
        for k in kappas {
            let h = h_flb_at(m, k);
            pass &= h >= 0.80;
            parts.push(format!("M{m} κ={k} H_FLB {h:.4}"));
        }
    }
    outcome(pass, parts.join(", "))
}

fn c9_nist_oracle() -> Outcome {
    let text = include_str!("fixtures/nist_oracle.json");
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut missing = Vec::new();
    for case in v["cases"].as_array().unwrap() {
        let bits = nist::parse_bits(case["bits"].as_str().unwrap()).unwrap();
        let n = bits.len();
        let lg = (n as f64).log2().floor() as usize;
        let p = &case["p_values"];
        let want = |k: &str, i: usize| p[k][i].as_f64();
        let (s1, s2) = nist::serial(&bits, lg - 3).unwrap();
        let mut got = vec![
            ("Frequency", 0, nist::frequency(&bits).unwrap()),
            (
                "BlockFrequency",
                0,
                nist::block_frequency(&bits, 20).unwrap(),
            ),
            (
                "CumsumForward",
                0,
                nist::cumulative_sums(&bits, false).unwrap(),
            ),
            (
                "CumsumReverse",
                0,
                nist::cumulative_sums(&bits, true).unwrap(),
            ),
            ("Runs", 0, nist::runs(&bits).unwrap()),
            ("LongestRun", 0, nist::longest_run(&bits).unwrap()),
            (
                "ApproximateEntropy",
                0,
                nist::approximate_entropy(&bits, lg - 6).unwrap(),
            ),
            ("Serial", 0, s1),
            ("Serial", 1, s2),
        ];
        if n >= 1000 {
            got.push(("DFT", 0, nist::dft(&bits).unwrap()));
        }
        for (k, i, g) in got {
            match want(k, i) {
                Some(w) => {
                    worst = worst.max((g - w).abs());
                    checked += 1;
                }
                None => missing.push(format!("{k}[{i}] n={n}")),
            }
        }
    }
    outcome(
        worst <= 1e-6 && missing.is_empty() && checked > 0,
        format!(
            "{checked} p-values, max |Δ| {worst:.2e}, {} missing",
            missing.len()
        ),
    )
}

/// Non-decreasing up to the first maximum, non-increasing after the last.
fn unimodal(v: &[f64]) -> bool {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first = v.iter().position(|&x| x == mx).unwrap();
    let last = v.iter().rposition(|&x| x == mx).unwrap();
    v[..=first].windows(2).all(|w| w[0] <= w[1])
        && v[first..=last].iter().all(|&x| x == mx)
        && v[last..].windows(2).all(|w| w[0] >= w[1])
}

fn c10_kappa_window(cfg: &PipelineConfig, devs: &[PreparedDevice]) -> Outcome {
    let sweep = pipeline::sweep_kappa_prepared(cfg, devs).unwrap();
    let rates: Vec<f64> = sweep.points.iter().map(|p| p.pass_rate).collect();
    let mx = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let at_max: Vec<f64> = sweep
        .points
        .iter()
        .filter(|p| p.pass_rate == mx)
        .map(|p| p.kappa)
        .collect();
    let in_window = at_max.iter().all(|&k| (0.25..=0.625).contains(&k));
    let curve: Vec<String> = sweep
        .points
        .iter()
        .map(|p| format!("{}:{:.2}", p.kappa, p.pass_rate))
        .collect();
    outcome(
        unimodal(&rates) && in_window,
        format!("curve [{}], max at κ {at_max:?}", curve.join(" ")),
    )
}

fn bits_strategy(lo: usize, hi: usize) -> impl Strategy<Value = Vec<u8>> {
    pvec(0u8..=1, lo..=hi)
}

fn flip(v: &[u8]) -> Vec<u8> {
    v.iter().map(|b| 1 - b).collect()
}

fn rev(v: &[u8]) -> Vec<u8> {
    v.iter().rev().cloned().collect()
}

fn check(ok: bool, what: &str) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(what.to_string()))
    }
}

const CASES: u32 = 10_000;

fn runner(seed: u8) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases: CASES,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::from_seed(
            proptest::test_runner::RngAlgorithm::ChaCha,
            &[seed; 32],
        ),
    )
}

fn c11_metric_properties() -> Outcome {
    let mut failures = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    let triple =
        (1usize..64).prop_flat_map(|n| (pvec(0u8..=1, n), pvec(0u8..=1, n), pvec(0u8..=1, n)));
    record(
        "hamming axioms",
        runner(1)
            .run(&triple, |(a, b, c)| {
                let ab = hamming(&a, &b).unwrap();
                check(hamming(&a, &a).unwrap() == 0, "identity")?;
                check((ab == 0) == (a == b), "indiscernibles")?;
                check(ab == hamming(&b, &a).unwrap(), "symmetry")?;
                check(
                    ab <= hamming(&a, &c).unwrap() + hamming(&c, &b).unwrap(),
                    "triangle",
                )?;
                check(hamming(&a, &flip(&a)).unwrap() == a.len(), "complement")
            })
            .map_err(|e| e.to_string()),
    );

    let matrix = (1usize..40, 2usize..12).prop_flat_map(|(k, q)| pvec(pvec(0u8..=1, k), q));
    record(
        "metric ranges",
        runner(2)
            .run(&matrix, |rows| {
                let m = BitMatrix::from_rows(&rows).unwrap();
                let refs: Vec<&[u8]> = rows[1..].iter().map(Vec::as_slice).collect();
                let r = reliability(&rows[0], &refs).unwrap();
                let u = uniqueness(&m).unwrap();
                let h = min_entropy(&m).unwrap();
                check((0.0..=1.0).contains(&r), "reliability")?;
                check((0.0..=1.0).contains(&u.u), "uniqueness")?;
                check(
                    u.pairwise.iter().all(|d| (0.0..=1.0).contains(d)),
                    "pairwise",
                )?;
                check((0.0..=1.0).contains(&h.h_flb), "h_flb")?;
                check(
                    h.per_bit.iter().all(|e| (0.0..=1.0).contains(e)),
                    "per-bit entropy",
                )?;
                let flipped: Vec<Vec<u8>> = rows.iter().map(|r| flip(r)).collect();
                let fm = BitMatrix::from_rows(&flipped).unwrap();
                check(
                    uniqueness(&fm).unwrap().u == u.u,
                    "uniqueness under complement",
                )?;
                check(
                    min_entropy(&fm).unwrap().h_flb == h.h_flb,
                    "entropy under complement",
                )
            })
            .map_err(|e| e.to_string()),
    );

    record(
        "nist symmetries",
        runner(3)
            .run(&bits_strategy(128, 400), |e| {
                let lg = (e.len() as f64).log2().floor() as usize;
                let (c, r) = (flip(&e), rev(&e));
                let f = nist::frequency(&e).unwrap();
                check(f == nist::frequency(&c).unwrap(), "frequency complement")?;
                check(f == nist::frequency(&r).unwrap(), "frequency reversal")?;
                check(
                    nist::block_frequency(&e, 20).unwrap()
                        == nist::block_frequency(&c, 20).unwrap(),
                    "block frequency complement",
                )?;
                let fwd = nist::cumulative_sums(&e, false).unwrap();
                check(
                    fwd == nist::cumulative_sums(&c, false).unwrap(),
                    "cusum complement",
                )?;
                check(
                    nist::cumulative_sums(&r, true).unwrap() == fwd,
                    "cusum reverse of reversed is forward",
                )?;
                let ru = nist::runs(&e).unwrap();
                check(ru == nist::runs(&c).unwrap(), "runs complement")?;
                check(ru == nist::runs(&r).unwrap(), "runs reversal")?;
                let ap = nist::approximate_entropy(&e, lg - 6).unwrap();
                check(
                    ap == nist::approximate_entropy(&c, lg - 6).unwrap(),
                    "apen complement",
                )?;
                check(
                    ap == nist::approximate_entropy(&r, lg - 6).unwrap(),
                    "apen reversal",
                )?;
                let s = nist::serial(&e, lg - 3).unwrap();
                check(s == nist::serial(&c, lg - 3).unwrap(), "serial complement")?;
                check(s == nist::serial(&r, lg - 3).unwrap(), "serial reversal")?;
                let all = [f, fwd, ru, ap, s.0, s.1, nist::longest_run(&e).unwrap()];
                check(all.iter().all(|p| (0.0..=1.0).contains(p)), "p-value range")
            })
            .map_err(|e| e.to_string()),
    );

    record(
        "dft symmetries",
        runner(4)
            .run(&bits_strategy(1000, 1100), |e| {
                let d = nist::dft(&e).unwrap();
                check(d == nist::dft(&flip(&e)).unwrap(), "dft complement")?;
                check((0.0..=1.0).contains(&d), "dft range")
            })
            .map_err(|e| e.to_string()),
    );

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("4 properties x {CASES} cases")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "selection oracle bound", c1_oracle_bound()),
        (2, "relocation monotonicity", c2_relocation_monotone()),
        (3, "improved over plain k-means", c3_improved_over_plain()),
        (4, "relocation gain grows with M", c4_relocation_scaling()),
        (5, "response lengths", c5_response_lengths()),
    ];

    let cfg = PipelineConfig::default();
    let t0 = Instant::now();
    let out = pipeline::simulate(&cfg).unwrap();
    let el = t0.elapsed();
    results.push((6, "reliability band", c6_reliability(&out, el)));
    results.push((7, "uniqueness", c7_uniqueness(&out)));
    results.push((8, "min entropy", c8_min_entropy()));
    results.push((9, "nist oracle equivalence", c9_nist_oracle()));
    results.push((10, "kappa window", c10_kappa_window(&cfg, &out.devices)));
    results.push((11, "metric properties", c11_metric_properties()));

    let mut failed = 0;
    for (i, name, o) in &results {
        println!(
            "{} criterion {i:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += !o.pass as usize;
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
