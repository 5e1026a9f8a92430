// SPDX-License-Identifier: Apache-2.0

//! The SP 800-22 tests that apply to short PUF responses, and the
//! population-level verdict over a set of devices.
//!
//! Every test works on a slice of 0/1 bytes. The suite reports, per test, the
//! fraction of sequences with p ≥ α and the χ² uniformity p-value of the
//! sequence p-values. A test passes at population level when at least
//! ⌊(p̂ − 3√(p̂(1−p̂)/s))·s⌋ sequences pass (51 of 54 at α = 0.01) and the
//! uniformity p-value is at least 0.0001.

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf;
use statrs::function::gamma;

use crate::error::{Error, Result};

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    erf::erfc(x)
}

/// Upper regularized incomplete gamma Q(a, x).
pub fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma::gamma_ur(a, x).clamp(0.0, 1.0)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn check_bits(bits: &[u8]) -> Result<usize> {
    if bits.is_empty() {
        return Err(Error::arg("empty bit sequence"));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::arg(format!("bit value {b} is not 0 or 1")));
    }
    Ok(bits.len())
}

pub fn frequency(bits: &[u8]) -> Result<f64> {
    let n = check_bits(bits)?;
    let s: i64 = bits.iter().map(|&b| 2 * b as i64 - 1).sum();
    Ok(erfc(s.abs() as f64 / (n as f64).sqrt() / SQRT_2))
}

pub fn block_frequency(bits: &[u8], block_len: usize) -> Result<f64> {
    let n = check_bits(bits)?;
    if block_len == 0 || n < block_len {
        return Err(Error::NotApplicable(format!(
            "block frequency needs at least one block of {block_len} bits, n = {n}"
        )));
    }
    let blocks = n / block_len;
    // 4M Σ (π − 1/2)² with the sum kept in integers
    let sq: i64 = bits
        .chunks_exact(block_len)
        .take(blocks)
        .map(|b| {
            let d = 2 * b.iter().map(|&x| x as i64).sum::<i64>() - block_len as i64;
            d * d
        })
        .sum();
    let chi2 = sq as f64 / block_len as f64;
    Ok(igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

/// Cumulative sums; `reverse` walks the sequence from its end.
pub fn cumulative_sums(bits: &[u8], reverse: bool) -> Result<f64> {
    let n = check_bits(bits)? as i64;
    let step = |&b: &u8| 2 * b as i64 - 1;
    let mut s = 0i64;
    let mut z = 0i64;
    let mut walk = |x: i64| {
        s += x;
        z = z.max(s.abs());
    };
    if reverse {
        bits.iter().rev().map(step).for_each(&mut walk);
    } else {
        bits.iter().map(step).for_each(&mut walk);
    }
    let sn = (n as f64).sqrt();
    let zf = z as f64;
    let mut sum1 = 0.0;
    for k in ((-n / z + 1) / 4)..=((n / z - 1) / 4) {
        let k = k as f64;
        sum1 += normal_cdf((4.0 * k + 1.0) * zf / sn) - normal_cdf((4.0 * k - 1.0) * zf / sn);
    }
    let mut sum2 = 0.0;
    for k in ((-n / z - 3) / 4)..=((n / z - 1) / 4) {
        let k = k as f64;
        sum2 += normal_cdf((4.0 * k + 3.0) * zf / sn) - normal_cdf((4.0 * k + 1.0) * zf / sn);
    }
    Ok((1.0 - sum1 + sum2).clamp(0.0, 1.0))
}

/// Runs test. Returns 0 when the frequency prerequisite fails.
pub fn runs(bits: &[u8]) -> Result<f64> {
    let len = check_bits(bits)?;
    let ones = bits.iter().filter(|&&b| b == 1).count();
    let n = len as f64;
    // π(1 − π) from counts so that complementing the input is exact
    let pq = (ones * (len - ones)) as f64 / (n * n);
    if (2 * ones).abs_diff(len) as f64 / (2.0 * n) >= 2.0 / n.sqrt() {
        return Ok(0.0);
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let num = (v as f64 - 2.0 * n * pq).abs();
    let den = 2.0 * (2.0 * n).sqrt() * pq;
    Ok(erfc(num / den))
}

struct LongestRunTier {
    block: usize,
    lo: usize,
    probs: &'static [f64],
}

const LONGEST_RUN_TIERS: [(usize, LongestRunTier); 3] = [
    (
        128,
        LongestRunTier {
            block: 8,
            lo: 1,
            probs: &[0.21484375, 0.3671875, 0.23046875, 0.1875],
        },
    ),
    (
        6272,
        LongestRunTier {
            block: 128,
            lo: 4,
            probs: &[
                0.1174035788,
                0.242955959,
                0.249363483,
                0.17517706,
                0.102701071,
                0.112398847,
            ],
        },
    ),
    (
        750_000,
        LongestRunTier {
            block: 10_000,
            lo: 10,
            probs: &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
        },
    ),
];

/// Longest run of ones in a block; the block size tier follows n.
pub fn longest_run(bits: &[u8]) -> Result<f64> {
    let n = check_bits(bits)?;
    let tier = LONGEST_RUN_TIERS
        .iter()
        .rev()
        .find(|(min_n, _)| n >= *min_n)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::NotApplicable(format!("longest run needs n ≥ 128, n = {n}")))?;
    let k = tier.probs.len();
    let blocks = n / tier.block;
    let mut counts = vec![0usize; k];
    for b in bits.chunks_exact(tier.block) {
        let (mut best, mut run) = (0usize, 0usize);
        for &x in b {
            run = if x == 1 { run + 1 } else { 0 };
            best = best.max(run);
        }
        let idx = best.clamp(tier.lo, tier.lo + k - 1) - tier.lo;
        counts[idx] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(tier.probs)
        .map(|(&c, &p)| {
            let e = blocks as f64 * p;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    Ok(igamc((k - 1) as f64 / 2.0, chi2 / 2.0))
}

/// Counts of all overlapping m-bit patterns with wraparound.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<u64> {
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        counts[0] = n as u64;
        return counts;
    }
    let mask = (1usize << m) - 1;
    let mut v = 0usize;
    for &b in &bits[..m - 1] {
        v = (v << 1) | b as usize;
    }
    for i in 0..n {
        v = ((v << 1) | bits[(i + m - 1) % n] as usize) & mask;
        counts[v] += 1;
    }
    counts
}

pub fn approximate_entropy(bits: &[u8], m: usize) -> Result<f64> {
    let n = check_bits(bits)?;
    if m == 0 || m >= n {
        return Err(Error::arg(format!(
            "approximate entropy block length {m} invalid for n = {n}"
        )));
    }
    // summed in count order so relabelling the patterns cannot change the result
    let phi = |mm: usize| -> f64 {
        let mut counts = pattern_counts(bits, mm);
        counts.sort_unstable();
        counts
            .into_iter()
            .filter(|&c| c > 0)
            .map(|c| {
                let p = c as f64 / n as f64;
                p * p.ln()
            })
            .sum()
    };
    let apen = phi(m) - phi(m + 1);
    let chi2 = 2.0 * n as f64 * (LN_2 - apen);
    Ok(igamc((1u64 << (m - 1)) as f64, chi2 / 2.0))
}

/// Serial test; returns both p-values.
pub fn serial(bits: &[u8], m: usize) -> Result<(f64, f64)> {
    let n = check_bits(bits)?;
    if m < 2 || m >= n {
        return Err(Error::arg(format!(
            "serial block length {m} invalid for n = {n}"
        )));
    }
    let psi2 = |mm: usize| -> f64 {
        if mm == 0 {
            return 0.0;
        }
        let sq: f64 = pattern_counts(bits, mm)
            .iter()
            .map(|&c| (c * c) as f64)
            .sum();
        (1u64 << mm) as f64 / n as f64 * sq - n as f64
    };
    let (a, b, c) = (psi2(m), psi2(m - 1), psi2(m - 2));
    let d1 = a - b;
    let d2 = a - 2.0 * b + c;
    Ok((
        igamc((1u64 << (m - 2)) as f64, d1 / 2.0),
        igamc(2f64.powi(m as i32 - 3), d2 / 2.0),
    ))
}

/// Discrete Fourier transform (spectral) test.
pub fn dft(bits: &[u8]) -> Result<f64> {
    let n = check_bits(bits)?;
    let mut buf: Vec<Complex<f64>> = bits
        .iter()
        .map(|&b| Complex::new(2.0 * b as f64 - 1.0, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let t = ((1.0f64 / 0.05).ln() * n as f64).sqrt();
    let n1 = buf[..n / 2].iter().filter(|c| c.norm() < t).count() as f64;
    let n0 = 0.95 * n as f64 / 2.0;
    let d = (n1 - n0) / (n as f64 * 0.95 * 0.05 / 4.0).sqrt();
    Ok(erfc(d.abs() / SQRT_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestName {
    Frequency,
    BlockFrequency,
    CumsumForward,
    CumsumReverse,
    Runs,
    LongestRun,
    ApproximateEntropy,
    Serial1,
    Serial2,
    Dft,
}

impl TestName {
    pub const ALL: [TestName; 10] = [
        TestName::Frequency,
        TestName::BlockFrequency,
        TestName::CumsumForward,
        TestName::CumsumReverse,
        TestName::Runs,
        TestName::LongestRun,
        TestName::ApproximateEntropy,
        TestName::Serial1,
        TestName::Serial2,
        TestName::Dft,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestName::Frequency => "Frequency",
            TestName::BlockFrequency => "BlockFrequency",
            TestName::CumsumForward => "CumsumForward",
            TestName::CumsumReverse => "CumsumReverse",
            TestName::Runs => "Runs",
            TestName::LongestRun => "LongestRun",
            TestName::ApproximateEntropy => "ApproximateEntropy",
            TestName::Serial1 => "Serial1",
            TestName::Serial2 => "Serial2",
            TestName::Dft => "DFT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NistParams {
    pub block_len: usize,
    /// Approximate-entropy block length; `None` picks ⌊log2 n⌋ − 6.
    pub m_entropy: Option<usize>,
    /// Serial block length; `None` picks ⌊log2 n⌋ − 3.
    pub m_serial: Option<usize>,
    pub alpha: f64,
    pub dft_min_n: usize,
    /// Minimum p-value of the uniformity check on a test's p-values.
    pub uniformity_alpha: f64,
    /// When false, the n ≥ 100 style floors are skipped (worked examples).
    pub enforce_min_n: bool,
}

impl Default for NistParams {
    fn default() -> Self {
        NistParams {
            block_len: 20,
            m_entropy: None,
            m_serial: None,
            alpha: 0.01,
            dft_min_n: 1000,
            uniformity_alpha: 0.0001,
            enforce_min_n: true,
        }
    }
}

fn floor_log2(n: usize) -> usize {
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

impl NistParams {
    pub fn entropy_block(&self, n: usize) -> Option<usize> {
        let lg = floor_log2(n.max(1));
        let m = self.m_entropy.or_else(|| lg.checked_sub(6))?;
        (m >= 1 && (!self.enforce_min_n || m + 5 < lg)).then_some(m)
    }

    pub fn serial_block(&self, n: usize) -> Option<usize> {
        let lg = floor_log2(n.max(1));
        let m = self.m_serial.or_else(|| lg.checked_sub(3))?;
        (m >= 2 && (!self.enforce_min_n || m + 2 < lg)).then_some(m)
    }

    /// Whether `test` runs on sequences of length n.
    pub fn applicable(&self, test: TestName, n: usize) -> bool {
        let floor = !self.enforce_min_n || n >= 100;
        match test {
            TestName::Frequency
            | TestName::CumsumForward
            | TestName::CumsumReverse
            | TestName::Runs => floor,
            TestName::BlockFrequency => floor && n >= self.block_len && self.block_len > 0,
            TestName::LongestRun => n >= 128,
            TestName::ApproximateEntropy => floor && self.entropy_block(n).is_some(),
            TestName::Serial1 | TestName::Serial2 => floor && self.serial_block(n).is_some(),
            TestName::Dft => n >= self.dft_min_n,
        }
    }
}

/// Every test on one sequence; inapplicable tests map to `None`.
pub fn run_sequence(bits: &[u8], params: &NistParams) -> Result<Vec<(TestName, Option<f64>)>> {
    let n = check_bits(bits)?;
    let on = |t: TestName| params.applicable(t, n);
    let serial_pair = if on(TestName::Serial1) {
        Some(serial(bits, params.serial_block(n).unwrap_or(2))?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(TestName::ALL.len());
    for t in TestName::ALL {
        let p = if !on(t) {
            None
        } else {
            Some(match t {
                TestName::Frequency => frequency(bits)?,
                TestName::BlockFrequency => block_frequency(bits, params.block_len)?,
                TestName::CumsumForward => cumulative_sums(bits, false)?,
                TestName::CumsumReverse => cumulative_sums(bits, true)?,
                TestName::Runs => runs(bits)?,
                TestName::LongestRun => longest_run(bits)?,
                TestName::ApproximateEntropy => {
                    approximate_entropy(bits, params.entropy_block(n).unwrap_or(1))?
                }
                TestName::Serial1 => serial_pair.map_or(0.0, |p| p.0),
                TestName::Serial2 => serial_pair.map_or(0.0, |p| p.1),
                TestName::Dft => dft(bits)?,
            })
        };
        out.push((t, p));
    }
    Ok(out)
}

/// χ² goodness of fit of p-values against ten equal bins.
pub fn uniformity_p(p_values: &[f64]) -> f64 {
    let s = p_values.len() as f64;
    if p_values.is_empty() {
        return 1.0;
    }
    let mut bins = [0usize; 10];
    for &p in p_values {
        bins[((p * 10.0) as usize).min(9)] += 1;
    }
    let e = s / 10.0;
    let chi2: f64 = bins.iter().map(|&f| (f as f64 - e).powi(2) / e).sum();
    igamc(4.5, chi2 / 2.0)
}

/// Minimum number of passing sequences out of `s`.
pub fn proportion_threshold(alpha: f64, s: usize) -> (f64, usize) {
    let p = 1.0 - alpha;
    let frac = p - 3.0 * (p * (1.0 - p) / s as f64).sqrt();
    (frac, (frac * s as f64).floor() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NistRow {
    pub test: TestName,
    pub applicable: bool,
    pub p_values: Vec<f64>,
    pub passed: usize,
    pub proportion: f64,
    pub uniformity_p: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NistReport {
    pub n: usize,
    pub sequences: usize,
    pub alpha: f64,
    pub proportion_threshold: f64,
    pub min_passed: usize,
    pub rows: Vec<NistRow>,
}

impl NistReport {
    pub fn applicable_rows(&self) -> impl Iterator<Item = &NistRow> {
        self.rows.iter().filter(|r| r.applicable)
    }

    /// Fraction of applicable tests passing at population level.
    pub fn pass_rate(&self) -> f64 {
        let (pass, total) = self
            .applicable_rows()
            .fold((0usize, 0usize), |(p, t), r| (p + r.pass as usize, t + 1));
        if total == 0 {
            0.0
        } else {
            pass as f64 / total as f64
        }
    }

    /// False when no test was applicable.
    pub fn all_passed(&self) -> bool {
        self.applicable_rows().next().is_some() && self.applicable_rows().all(|r| r.pass)
    }

    pub fn row(&self, test: TestName) -> Option<&NistRow> {
        self.rows.iter().find(|r| r.test == test)
    }

    /// `test,p_value,proportion,pass`; inapplicable rows read NA.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,p_value,proportion,pass\n");
        for r in &self.rows {
            if r.applicable {
                let _ = writeln!(
                    out,
                    "{},{:.6},{:.2},{}",
                    r.test.as_str(),
                    r.uniformity_p.unwrap_or(f64::NAN),
                    100.0 * r.proportion,
                    r.pass
                );
            } else {
                let _ = writeln!(out, "{},NA,NA,NA", r.test.as_str());
            }
        }
        out
    }
}

/// Runs the suite over equal-length sequences.
pub fn run_suite(sequences: &[Vec<u8>], params: &NistParams) -> Result<NistReport> {
    use rayon::prelude::*;

    let first = sequences
        .first()
        .ok_or_else(|| Error::arg("run_suite needs at least one sequence"))?;
    let n = first.len();
    if let Some(bad) = sequences.iter().find(|s| s.len() != n) {
        return Err(Error::arg(format!(
            "sequences differ in length ({} vs {n})",
            bad.len()
        )));
    }
    let s = sequences.len();
    let per_seq: Vec<Vec<(TestName, Option<f64>)>> = sequences
        .par_iter()
        .map(|b| run_sequence(b, params))
        .collect::<Result<_>>()?;
    let (frac, min_passed) = proportion_threshold(params.alpha, s);
    let rows = TestName::ALL
        .iter()
        .enumerate()
        .map(|(ti, &test)| {
            let p_values: Vec<f64> = per_seq.iter().filter_map(|r| r[ti].1).collect();
            if p_values.is_empty() {
                return NistRow {
                    test,
                    applicable: false,
                    p_values,
                    passed: 0,
                    proportion: 0.0,
                    uniformity_p: None,
                    pass: false,
                };
            }
            let passed = p_values.iter().filter(|&&p| p >= params.alpha).count();
            let uni = uniformity_p(&p_values);
            NistRow {
                test,
                applicable: true,
                passed,
                proportion: passed as f64 / s as f64,
                uniformity_p: Some(uni),
                pass: passed >= min_passed && uni >= params.uniformity_alpha,
                p_values,
            }
        })
        .collect();
    Ok(NistReport {
        n,
        sequences: s,
        alpha: params.alpha,
        proportion_threshold: frac,
        min_passed,
        rows,
    })
}

/// Parses a string of '0'/'1' characters.
pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.trim()
        .bytes()
        .map(|c| match c {
            b'0' => Ok(0),
            b'1' => Ok(1),
            other => Err(Error::arg(format!(
                "unexpected character `{}`",
                other as char
            ))),
        })
        .collect()
}
