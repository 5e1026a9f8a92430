// SPDX-License-Identifier: Apache-2.0

//! Group assignment, randomized placement and constraint files.
//!
//! The M selected oscillators are split into a lower group (LG) and an upper
//! group (UG) of M/2 each. A fraction 1 − κ of them, the lowest in frequency,
//! is dealt out by alternating sorted rank; the remaining κ·M are shuffled and
//! split evenly. Logical RO indices `0..M/2` belong to LG and `M/2..M` to UG.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::chipmodel::{Corner, FabricSite, SliceClass};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::select::Candidate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "LG")]
    Lower,
    #[serde(rename = "UG")]
    Upper,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Lower => "LG",
            Group::Upper => "UG",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LG" => Ok(Group::Lower),
            "UG" => Ok(Group::Upper),
            other => Err(Error::arg(format!("unknown group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub kappa: f64,
    pub lower: Vec<Candidate>,
    pub upper: Vec<Candidate>,
    pub ordered_count: usize,
    pub random_count: usize,
}

impl GroupAssignment {
    pub fn m(&self) -> usize {
        self.lower.len() + self.upper.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedRo {
    /// Logical RO index; LG occupies `0..M/2`, UG `M/2..M`.
    pub ro: usize,
    /// Index into the chip's site list.
    pub site_index: usize,
    pub site: FabricSite,
    pub freq: f64,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub assignment: GroupAssignment,
    /// Ordered by logical index.
    pub site_map: Vec<PlacedRo>,
    pub placement_seed: u64,
}

impl PlacementPlan {
    pub fn m(&self) -> usize {
        self.site_map.len()
    }

    pub fn half(&self) -> usize {
        self.site_map.len() / 2
    }

    pub fn lower(&self) -> &[PlacedRo] {
        &self.site_map[..self.half()]
    }

    pub fn upper(&self) -> &[PlacedRo] {
        &self.site_map[self.half()..]
    }
}

fn log2_exact(v: usize) -> Option<u32> {
    (v.is_power_of_two()).then(|| v.trailing_zeros())
}

/// Ratios κ usable with M: multiples of 1/2^(x−1) in [0, 1], x = log2(M/2).
pub fn valid_kappas(m: usize) -> Result<Vec<f64>> {
    let x = match log2_exact(m) {
        Some(e) if m >= 4 => e - 1,
        _ => {
            return Err(Error::arg(format!(
                "M must be a power of two and at least 4, got {m}"
            )))
        }
    };
    let steps = 1usize << (x - 1);
    Ok((0..=steps).map(|i| i as f64 / steps as f64).collect())
}

fn check_kappa(m: usize, kappa: f64) -> Result<()> {
    let grid = valid_kappas(m)?;
    if grid.iter().any(|&k| (k - kappa).abs() < 1e-12) {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "kappa {kappa} is not valid for M = {m}; choose from {grid:?}"
        )))
    }
}

/// Splits the selection into LG and UG. `rng` is untouched when κ = 0.
pub fn assign_groups(
    selected: &[Candidate],
    kappa: f64,
    rng: &mut SimRng,
) -> Result<GroupAssignment> {
    let m = selected.len();
    check_kappa(m, kappa)?;
    let mut sorted = selected.to_vec();
    sorted.sort_by(|a, b| a.freq.total_cmp(&b.freq).then(a.site.cmp(&b.site)));

    let random_count = (kappa * m as f64).round() as usize;
    let ordered_count = m - random_count;
    let (ordered, random) = sorted.split_at(ordered_count);

    let mut lower = Vec::with_capacity(m / 2);
    let mut upper = Vec::with_capacity(m / 2);
    for (rank, c) in ordered.iter().enumerate() {
        if rank % 2 == 0 {
            lower.push(*c);
        } else {
            upper.push(*c);
        }
    }
    if !random.is_empty() {
        let mut pool = random.to_vec();
        pool.shuffle(rng);
        let take = m / 2 - lower.len();
        lower.extend_from_slice(&pool[..take]);
        upper.extend_from_slice(&pool[take..]);
    }
    Ok(GroupAssignment {
        kappa,
        lower,
        upper,
        ordered_count,
        random_count,
    })
}

/// Gives each group member a logical RO index by a uniform permutation within
/// its group. `sites` is the chip's full site list.
pub fn randomize_placement(
    assignment: &GroupAssignment,
    sites: &[FabricSite],
    placement_seed: u64,
) -> Result<PlacementPlan> {
    if assignment.lower.len() != assignment.upper.len() {
        return Err(Error::arg("groups are unbalanced"));
    }
    let mut rng = rng::seeded(placement_seed);
    let half = assignment.lower.len();
    let mut site_map = Vec::with_capacity(2 * half);
    for (group, members) in [
        (Group::Lower, &assignment.lower),
        (Group::Upper, &assignment.upper),
    ] {
        let mut order: Vec<usize> = (0..half).collect();
        order.shuffle(&mut rng);
        for k in order {
            let c = members[k];
            let site = *sites.get(c.site).ok_or_else(|| {
                Error::arg(format!(
                    "site index {} outside the chip ({} sites)",
                    c.site,
                    sites.len()
                ))
            })?;
            site_map.push(PlacedRo {
                ro: site_map.len(),
                site_index: c.site,
                site,
                freq: c.freq,
                group,
            });
        }
    }
    Ok(PlacementPlan {
        assignment: assignment.clone(),
        site_map,
        placement_seed,
    })
}

/// Renders the constraint file for a plan.
pub fn emit_constraints(plan: &PlacementPlan) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# placement_seed={} m={} kappa={}",
        plan.placement_seed,
        plan.m(),
        plan.assignment.kappa
    );
    for ro in &plan.site_map {
        let _ = writeln!(
            out,
            "set_loc RO{} SLICE_X{}Y{} CLASS={} GROUP={}",
            ro.ro,
            ro.site.slice_x(),
            ro.site.clb_y,
            ro.site.class,
            ro.group
        );
    }
    out
}

pub fn write_constraints(plan: &PlacementPlan, path: &Path) -> Result<()> {
    std::fs::write(path, emit_constraints(plan)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintLine {
    pub ro: usize,
    pub site: FabricSite,
    pub group: Group,
}

/// Reads a constraint file back. Comment and blank lines are skipped.
pub fn parse_constraints(text: &str) -> Result<Vec<ConstraintLine>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "set_loc" {
            return Err(err(format!(
                "expected `set_loc RO<i> SLICE_X<x>Y<y> CLASS=.. GROUP=..`, got `{line}`"
            )));
        }
        let ro = fields[1]
            .strip_prefix("RO")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| err(format!("bad RO name `{}`", fields[1])))?;
        let (sx, sy) = fields[2]
            .strip_prefix("SLICE_X")
            .and_then(|s| s.split_once('Y'))
            .and_then(|(x, y)| Some((x.parse::<u32>().ok()?, y.parse::<u32>().ok()?)))
            .ok_or_else(|| err(format!("bad slice location `{}`", fields[2])))?;
        let class: SliceClass = fields[3]
            .strip_prefix("CLASS=")
            .ok_or_else(|| err("missing CLASS=".into()))?
            .parse()
            .map_err(|e: Error| err(e.to_string()))?;
        let group: Group = fields[4]
            .strip_prefix("GROUP=")
            .ok_or_else(|| err("missing GROUP=".into()))?
            .parse()
            .map_err(|e: Error| err(e.to_string()))?;
        let corner = match (class == SliceClass::L12, sx % 2) {
            (true, 0) => Corner::TL,
            (true, _) => Corner::TR,
            (false, 0) => Corner::BL,
            (false, _) => Corner::BR,
        };
        let site = FabricSite::new(sx / 2, sy, corner);
        if site.class != class {
            return Err(err(format!(
                "CLASS={class} does not match slice column {sx}"
            )));
        }
        out.push(ConstraintLine { ro, site, group });
    }
    Ok(out)
}
