// SPDX-License-Identifier: Apache-2.0

//! Challenge generation and response bits.
//!
//! Challenges come from a maximal-length Galois LFSR of width
//! w = 2·log2(M/2). Each state is split into two halves: the high w/2 bits pick
//! an RO from the lower group, the low w/2 bits one from the upper group. The
//! response bit is 0 when the lower-group counter is at least the upper-group
//! counter and 1 otherwise.
//!
//! Feedback polynomials per width:
//!
//! | w  | polynomial              |
//! |----|-------------------------|
//! | 2  | x² + x + 1              |
//! | 4  | x⁴ + x³ + 1             |
//! | 6  | x⁶ + x⁵ + 1             |
//! | 8  | x⁸ + x⁶ + x⁵ + x⁴ + 1   |
//! | 10 | x¹⁰ + x⁷ + 1            |

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chipmodel::{env_frequency, measure_count, ChipProfile, EnvCondition};
use crate::error::{Error, Result};
use crate::placement::PlacementPlan;
use crate::rng::SimRng;

pub const DEFAULT_LFSR_SEED: u32 = 1;

/// Polynomial exponents (excluding the constant term) for each supported width.
pub fn default_taps(width: u32) -> Option<&'static [u32]> {
    match width {
        2 => Some(&[2, 1]),
        4 => Some(&[4, 3]),
        6 => Some(&[6, 5]),
        8 => Some(&[8, 6, 5, 4]),
        10 => Some(&[10, 7]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lfsr {
    pub width: u32,
    pub taps: Vec<u32>,
    pub state: u32,
    mask: u32,
}

impl Lfsr {
    /// Builds a register and verifies that its period is 2^w − 1.
    pub fn new(width: u32, taps: &[u32], seed_state: u32) -> Result<Lfsr> {
        if !(2..=24).contains(&width) {
            return Err(Error::arg(format!("unsupported LFSR width {width}")));
        }
        let full = (1u32 << width) - 1;
        if seed_state == 0 || seed_state > full {
            return Err(Error::arg(format!(
                "LFSR seed must be a nonzero {width}-bit value, got {seed_state}"
            )));
        }
        if taps.iter().any(|&t| t == 0 || t > width) || !taps.contains(&width) {
            return Err(Error::arg(format!(
                "taps {taps:?} invalid for width {width}"
            )));
        }
        let mask = taps.iter().fold(0u32, |m, &t| m | 1 << (t - 1));
        let mut probe = Lfsr {
            width,
            taps: taps.to_vec(),
            state: 1,
            mask,
        };
        let mut period = 0usize;
        loop {
            probe.step();
            period += 1;
            if probe.state == 1 || period > full as usize {
                break;
            }
        }
        if period != full as usize {
            return Err(Error::NonPrimitive {
                width,
                taps: taps.to_vec(),
                period,
            });
        }
        probe.state = seed_state;
        Ok(probe)
    }

    pub fn with_default_taps(width: u32, seed_state: u32) -> Result<Lfsr> {
        let taps = default_taps(width)
            .ok_or_else(|| Error::arg(format!("no tap table for width {width}")))?;
        Lfsr::new(width, taps, seed_state)
    }

    pub fn step(&mut self) -> u32 {
        let lsb = self.state & 1;
        self.state >>= 1;
        if lsb == 1 {
            self.state ^= self.mask;
        }
        self.state
    }

    pub fn period(&self) -> usize {
        (1usize << self.width) - 1
    }
}

/// All 2^w − 1 states in traversal order, starting with `seed_state`.
pub fn lfsr_sequence(width: u32, taps: &[u32], seed_state: u32) -> Result<Vec<u32>> {
    let mut l = Lfsr::new(width, taps, seed_state)?;
    let mut out = Vec::with_capacity(l.period());
    out.push(l.state);
    for _ in 1..l.period() {
        out.push(l.step());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub lg_index: usize,
    pub ug_index: usize,
}

impl Challenge {
    pub fn decode(state: u32, width: u32) -> Challenge {
        let half = width / 2;
        Challenge {
            lg_index: (state >> half) as usize,
            ug_index: (state & ((1 << half) - 1)) as usize,
        }
    }
}

/// LFSR width for M oscillators.
pub fn width_for(m: usize) -> Result<u32> {
    if m < 4 || !m.is_power_of_two() {
        return Err(Error::arg(format!(
            "M must be a power of two and at least 4, got {m}"
        )));
    }
    Ok(2 * (m / 2).trailing_zeros())
}

/// Response length (M/2)² − 1.
pub fn response_len(m: usize) -> Result<usize> {
    Ok((1usize << width_for(m)?) - 1)
}

pub fn challenges(m: usize, lfsr_seed: u32) -> Result<Vec<Challenge>> {
    let w = width_for(m)?;
    challenges_with_stride(m, lfsr_seed, default_stride(w))
}

/// Challenges taken every `stride` clocks of the register. Any stride
/// coprime to 2^w − 1 still visits each nonzero state exactly once.
pub fn challenges_with_stride(m: usize, lfsr_seed: u32, stride: usize) -> Result<Vec<Challenge>> {
    let w = width_for(m)?;
    let taps = default_taps(w).ok_or_else(|| Error::arg(format!("no tap table for M = {m}")))?;
    let mut l = Lfsr::new(w, taps, lfsr_seed)?;
    let period = l.period();
    if stride == 0 || gcd(stride, period) != 1 {
        return Err(Error::arg(format!(
            "stride {stride} must be coprime to the period {period}"
        )));
    }
    let mut out = Vec::with_capacity(period);
    for _ in 0..period {
        out.push(Challenge::decode(l.state, w));
        for _ in 0..stride {
            l.step();
        }
    }
    Ok(out)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Clocks between challenges for each width.
///
/// Consecutive states of a shift register share all but one bit, so
/// neighbouring challenges reuse oscillators and the response picks up
/// run-length structure. Decimating by a stride coprime to the period still
/// visits every state once.
pub fn default_stride(width: u32) -> usize {
    match width {
        4 => 7,
        6 => 31,
        8 => 89,
        10 => 52,
        _ => 1,
    }
}

/// One comparison: 0 if the lower-group count is at least the upper-group count.
pub fn respond_bit(
    plan: &PlacementPlan,
    chip: &ChipProfile,
    c: Challenge,
    env: EnvCondition,
    t_on: f64,
    rng: &mut SimRng,
) -> Result<u8> {
    let half = plan.half();
    if c.lg_index >= half || c.ug_index >= half {
        return Err(Error::arg(format!(
            "challenge {c:?} outside groups of {half}"
        )));
    }
    let a = plan.site_map[c.lg_index].site_index;
    let b = plan.site_map[half + c.ug_index].site_index;
    chip.check_index(a)?;
    chip.check_index(b)?;
    let alpha_lg = measure_count(env_frequency(chip, a, env)?, t_on, chip.meas_sigma[a], rng);
    let alpha_ug = measure_count(env_frequency(chip, b, env)?, t_on, chip.meas_sigma[b], rng);
    Ok(if alpha_lg >= alpha_ug { 0 } else { 1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub device_id: String,
    pub env: EnvCondition,
    /// One entry per challenge, each 0 or 1.
    pub bits: Vec<u8>,
    /// LFSR seed state the challenges were generated from.
    pub challenge_order: u32,
}

impl ResponseSet {
    pub fn k(&self) -> usize {
        self.bits.len()
    }

    /// Bits as hex, most significant bit first; the tail is zero-padded.
    pub fn hex(&self) -> String {
        bits_to_hex(&self.bits)
    }
}

pub fn generate_response(
    plan: &PlacementPlan,
    chip: &ChipProfile,
    lfsr_seed: u32,
    env: EnvCondition,
    t_on: f64,
    rng: &mut SimRng,
) -> Result<ResponseSet> {
    let m = plan.m();
    if plan.lower().len() != plan.upper().len() {
        return Err(Error::arg("plan groups are unbalanced"));
    }
    let bits = challenges(m, lfsr_seed)?
        .into_iter()
        .map(|c| respond_bit(plan, chip, c, env, t_on, rng))
        .collect::<Result<Vec<u8>>>()?;
    Ok(ResponseSet {
        device_id: chip.device_id.clone(),
        env,
        bits,
        challenge_order: lfsr_seed,
    })
}

pub fn bits_to_hex(bits: &[u8]) -> String {
    bits.chunks(4)
        .map(|nib| {
            let v = nib
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, &b)| acc | (u32::from(b & 1) << (3 - i)));
            char::from_digit(v, 16).unwrap_or('0')
        })
        .collect()
}

/// Inverse of [`bits_to_hex`] keeping the first `k` bits.
pub fn hex_to_bits(hex: &str, k: usize) -> Result<Vec<u8>> {
    if hex.len() * 4 < k {
        return Err(Error::Data(format!(
            "{} hex digits cannot hold {k} bits",
            hex.len()
        )));
    }
    let mut bits = Vec::with_capacity(hex.len() * 4);
    for ch in hex.chars() {
        let v = ch
            .to_digit(16)
            .ok_or_else(|| Error::Data(format!("invalid hex digit `{ch}`")))?;
        bits.extend((0..4).rev().map(|i| ((v >> i) & 1) as u8));
    }
    bits.truncate(k);
    Ok(bits)
}

pub const RESPONSE_HEADER: &str = "device_id,temp,vcc,hexbits";

/// `device_id,temp,vcc,hexbits` per line, under a header.
pub fn responses_to_csv(sets: &[ResponseSet]) -> String {
    let mut out = String::from(RESPONSE_HEADER);
    out.push('\n');
    for s in sets {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.device_id,
            s.env.temp,
            s.env.vcc,
            s.hex()
        );
    }
    out
}

/// Parses a response dump. Response lengths are always 2^w − 1, so k is one
/// less than four times the digit count. The challenge seed is not part of
/// the format and is set to [`DEFAULT_LFSR_SEED`].
pub fn responses_from_csv(text: &str) -> Result<Vec<ResponseSet>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == RESPONSE_HEADER {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", f.len())));
        }
        let temp: f64 = f[1]
            .parse()
            .map_err(|_| err(format!("bad temp `{}`", f[1])))?;
        let vcc: f64 = f[2]
            .parse()
            .map_err(|_| err(format!("bad vcc `{}`", f[2])))?;
        if f[3].is_empty() {
            return Err(err("empty hexbits".into()));
        }
        let k = f[3].len() * 4 - 1;
        let bits = hex_to_bits(f[3], k).map_err(|e| err(e.to_string()))?;
        out.push(ResponseSet {
            device_id: f[0].to_string(),
            env: EnvCondition::new(temp, vcc),
            bits,
            challenge_order: DEFAULT_LFSR_SEED,
        });
    }
    Ok(out)
}

pub fn write_responses(sets: &[ResponseSet], path: &Path) -> Result<()> {
    std::fs::write(path, responses_to_csv(sets)).map_err(|e| Error::io(path, e))
}

pub fn read_responses(path: &Path) -> Result<Vec<ResponseSet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    responses_from_csv(&text)
}
