// SPDX-License-Identifier: Apache-2.0

//! Hamming distance, reliability, uniqueness and min-entropy.
//!
//! Distances are fractional (per bit) unless a function says otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-length bit rows with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitMatrix {
    k: usize,
    bits: Vec<u8>,
    pub row_labels: Vec<String>,
}

impl BitMatrix {
    pub fn new(k: usize) -> Self {
        BitMatrix {
            k,
            bits: Vec::new(),
            row_labels: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let mut m = BitMatrix::new(k);
        for (i, r) in rows.iter().enumerate() {
            m.push(i.to_string(), r)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, label: impl Into<String>, row: &[u8]) -> Result<()> {
        if row.len() != self.k {
            return Err(Error::arg(format!(
                "row of length {} in a matrix of width {}",
                row.len(),
                self.k
            )));
        }
        self.bits.extend(row.iter().map(|b| b & 1));
        self.row_labels.push(label.into());
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.k..(i + 1) * self.k]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[u8]> {
        (0..self.rows()).map(move |i| self.row(i))
    }
}

pub fn hamming(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "hamming distance of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .filter(|(x, y)| (*x & 1) != (*y & 1))
        .count())
}

fn frac_hd(a: &[u8], b: &[u8]) -> Result<f64> {
    let d = hamming(a, b)?;
    Ok(if a.is_empty() {
        0.0
    } else {
        d as f64 / a.len() as f64
    })
}

/// 1 minus the mean fractional distance of `responses` from `golden`.
pub fn reliability(golden: &[u8], responses: &[&[u8]]) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::arg("reliability needs at least one response"));
    }
    let total = responses
        .iter()
        .map(|r| frac_hd(golden, r))
        .sum::<Result<f64>>()?;
    Ok(1.0 - total / responses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uniqueness {
    pub u: f64,
    /// Fractional distances for every pair i < j, row-major.
    pub pairwise: Vec<f64>,
}

pub fn uniqueness(responses: &BitMatrix) -> Result<Uniqueness> {
    let q = responses.rows();
    if q < 2 {
        return Err(Error::arg(format!(
            "uniqueness needs at least 2 devices, got {q}"
        )));
    }
    let mut pairwise = Vec::with_capacity(q * (q - 1) / 2);
    for i in 0..q {
        for j in i + 1..q {
            pairwise.push(frac_hd(responses.row(i), responses.row(j))?);
        }
    }
    let u = pairwise.iter().sum::<f64>() / pairwise.len() as f64;
    Ok(Uniqueness { u, pairwise })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinEntropy {
    pub per_bit: Vec<f64>,
    pub h_flb: f64,
}

/// Per-column −log2 max(p̂₁, p̂₀) and its average over columns.
pub fn min_entropy(matrix: &BitMatrix) -> Result<MinEntropy> {
    let q = matrix.rows();
    if q == 0 {
        return Err(Error::arg("min-entropy needs at least one device"));
    }
    let k = matrix.cols();
    let mut ones = vec![0usize; k];
    for row in matrix.iter_rows() {
        for (c, &b) in ones.iter_mut().zip(row) {
            *c += b as usize;
        }
    }
    let per_bit: Vec<f64> = ones
        .iter()
        .map(|&b1| {
            let p_max = b1.max(q - b1) as f64 / q as f64;
            (-p_max.log2()).max(0.0)
        })
        .collect();
    let h_flb = if k == 0 {
        0.0
    } else {
        per_bit.iter().sum::<f64>() / k as f64
    };
    Ok(MinEntropy { per_bit, h_flb })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub reliability_per_device: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub r_avg: f64,
    pub uniqueness: Option<f64>,
    pub hd_inter_distribution: Vec<f64>,
    pub h_flb: f64,
    pub per_bit_entropy: Vec<f64>,
}

impl EvalReport {
    /// `golden` holds one reference response per device; `sweeps[i]` holds
    /// device i's responses under the other conditions. A device with no
    /// other conditions counts as perfectly reliable.
    pub fn build(golden: &BitMatrix, sweeps: &[Vec<Vec<u8>>]) -> Result<EvalReport> {
        if sweeps.len() != golden.rows() {
            return Err(Error::arg("one sweep per device is required"));
        }
        let reliability_per_device = sweeps
            .iter()
            .enumerate()
            .map(|(i, rs)| {
                if rs.is_empty() {
                    Ok(1.0)
                } else {
                    let refs: Vec<&[u8]> = rs.iter().map(Vec::as_slice).collect();
                    reliability(golden.row(i), &refs)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let n = reliability_per_device.len().max(1) as f64;
        let (uniqueness, hd_inter_distribution) = if golden.rows() >= 2 {
            let u = uniqueness(golden)?;
            (Some(u.u), u.pairwise)
        } else {
            (None, Vec::new())
        };
        let ent = min_entropy(golden)?;
        Ok(EvalReport {
            r_min: reliability_per_device
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min),
            r_max: reliability_per_device
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
            r_avg: reliability_per_device.iter().sum::<f64>() / n,
            reliability_per_device,
            uniqueness,
            hd_inter_distribution,
            h_flb: ent.h_flb,
            per_bit_entropy: ent.per_bit,
        })
    }

    /// Histogram of pairwise distances as `bin_lo,bin_hi,count` lines.
    pub fn hd_histogram_csv(&self, bins: usize) -> String {
        let bins = bins.max(1);
        let mut counts = vec![0usize; bins];
        for &d in &self.hd_inter_distribution {
            let b = ((d * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in counts.iter().enumerate() {
            out.push_str(&format!(
                "{:.4},{:.4},{}\n",
                i as f64 / bins as f64,
                (i + 1) as f64 / bins as f64,
                c
            ));
        }
        out
    }
}
