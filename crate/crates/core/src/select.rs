// SPDX-License-Identifier: Apache-2.0

//! Choosing M oscillators whose frequencies are as far apart as possible.
//!
//! The figure of merit is χ, the smallest absolute difference over all pairs
//! of chosen frequencies. Selection runs in two passes:
//!
//! 1. one-dimensional K-means whose centroids are snapped to existing
//!    candidates after every iteration, keeping the snapped list with the
//!    largest χ seen over the whole run (not the converged one);
//! 2. centroid relocation, which repeatedly finds the closest adjacent pair and
//!    slides one of its members away, into the gap on the roomier side, for as
//!    long as the move keeps the new gap above the old minimum.
//!
//! All routines work on candidates sorted by `(freq, site)`, so equal
//! frequencies resolve to the lowest site index.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

pub const DEFAULT_K_MAX: usize = 100;
pub const DEFAULT_MAX_ITER: usize = 200;

/// One selectable oscillator: a site index and its characterized frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub site: usize,
    pub freq: f64,
}

impl Candidate {
    /// Candidates whose site index is their position in `freqs`.
    pub fn from_freqs(freqs: &[f64]) -> Vec<Candidate> {
        freqs
            .iter()
            .enumerate()
            .map(|(site, &freq)| Candidate { site, freq })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// Equally spaced across the frequency range.
    Linear,
    /// Equal-count quantiles of the candidates.
    UniformDensity,
    KMeansPlusPlus,
    /// Uniform over the frequency range.
    Random,
    /// Same as `Linear`; named after the mean-based selector it mirrors.
    MeanBased,
    /// Same as `UniformDensity`.
    MedianBased,
    /// M distinct candidates drawn uniformly.
    RandomSelect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    MeanBased,
    MedianBased,
    RandomSelect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub m: usize,
    pub seeding: Seeding,
    pub k_max: usize,
    pub max_iter: usize,
    pub rng_seed: u64,
}

impl SelectionConfig {
    pub fn new(m: usize) -> Self {
        SelectionConfig {
            m,
            seeding: Seeding::Linear,
            k_max: DEFAULT_K_MAX,
            max_iter: DEFAULT_MAX_ITER,
            rng_seed: 0,
        }
    }

    /// True when `m` is one of the four configurations the toolkit is tuned for.
    pub fn is_standard(&self) -> bool {
        matches!(self.m, 8 | 16 | 32 | 64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Chosen oscillators in ascending frequency order.
    pub chosen: Vec<Candidate>,
    /// The snapped centroid list (frequencies of `chosen`).
    pub centroids: Vec<f64>,
    pub chi: f64,
    pub micd_trace: Vec<f64>,
    pub chi_trace: Vec<f64>,
    pub iterations: usize,
}

impl SelectionResult {
    fn from_positions(
        sorted: &SortedCandidates,
        positions: &[usize],
        micd_trace: Vec<f64>,
        chi_trace: Vec<f64>,
        iterations: usize,
    ) -> Self {
        let chosen: Vec<Candidate> = positions.iter().map(|&p| sorted.cands[p]).collect();
        let centroids: Vec<f64> = chosen.iter().map(|c| c.freq).collect();
        SelectionResult {
            chi: chi_sorted(&centroids),
            chosen,
            centroids,
            micd_trace,
            chi_trace,
            iterations,
        }
    }

    pub fn sites(&self) -> Vec<usize> {
        self.chosen.iter().map(|c| c.site).collect()
    }
}

/// Output of the full two-pass selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub kmeans: SelectionResult,
    pub relocated: SelectionResult,
}

/// Minimum pairwise absolute difference.
pub fn chi(freqs: &[f64]) -> Result<f64> {
    if freqs.len() < 2 {
        return Err(Error::arg(format!(
            "chi needs at least 2 frequencies, got {}",
            freqs.len()
        )));
    }
    let mut v = freqs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(chi_sorted(&v))
}

fn chi_sorted(v: &[f64]) -> f64 {
    v.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Micd {
    pub per_cluster: Vec<f64>,
    pub mean: f64,
    /// Indices of clusters with no members.
    pub empty: Vec<usize>,
}

/// Mean intra-cluster distance: per cluster, the average |x − centroid| of its
/// members; averaged over all clusters with empty ones contributing zero.
pub fn micd(points: &[f64], assignments: &[usize], centroids: &[f64]) -> Result<Micd> {
    if points.len() != assignments.len() {
        return Err(Error::arg("points and assignments differ in length"));
    }
    let k = centroids.len();
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (&x, &a) in points.iter().zip(assignments) {
        if a >= k {
            return Err(Error::arg(format!("assignment {a} out of range")));
        }
        sum[a] += (x - centroids[a]).abs();
        count[a] += 1;
    }
    let per_cluster: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    let empty = (0..k).filter(|&j| count[j] == 0).collect();
    let mean = if k == 0 {
        0.0
    } else {
        per_cluster.iter().sum::<f64>() / k as f64
    };
    Ok(Micd {
        per_cluster,
        mean,
        empty,
    })
}

/// Candidates sorted by `(freq, site)` with prefix sums for O(log n) cluster
/// statistics.
struct SortedCandidates {
    cands: Vec<Candidate>,
    freqs: Vec<f64>,
    prefix: Vec<f64>,
}

impl SortedCandidates {
    fn new(f: &[Candidate]) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::arg("empty candidate set"));
        }
        if let Some(bad) = f.iter().find(|c| !c.freq.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite frequency at site {}",
                bad.site
            )));
        }
        let mut cands = f.to_vec();
        cands.sort_by(|a, b| a.freq.total_cmp(&b.freq).then(a.site.cmp(&b.site)));
        let freqs: Vec<f64> = cands.iter().map(|c| c.freq).collect();
        let mut prefix = Vec::with_capacity(freqs.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &x in &freqs {
            acc += x;
            prefix.push(acc);
        }
        Ok(SortedCandidates {
            cands,
            freqs,
            prefix,
        })
    }

    fn len(&self) -> usize {
        self.freqs.len()
    }

    fn range_sum(&self, lo: usize, hi: usize) -> f64 {
        self.prefix[hi] - self.prefix[lo]
    }

    /// Σ |x − c| over sorted positions `lo..hi`.
    fn abs_dev(&self, lo: usize, hi: usize, c: f64) -> f64 {
        let split = lo + self.freqs[lo..hi].partition_point(|&x| x < c);
        let below = c * (split - lo) as f64 - self.range_sum(lo, split);
        let above = self.range_sum(split, hi) - c * (hi - split) as f64;
        below + above
    }

    /// First sorted position holding the candidate nearest to `c`; ties go
    /// to the lower frequency.
    fn nearest(&self, c: f64) -> usize {
        let n = self.len();
        let p = self.freqs.partition_point(|&x| x < c);
        let mut q = if p == 0 {
            0
        } else if p == n {
            n - 1
        } else if c - self.freqs[p - 1] <= self.freqs[p] - c {
            p - 1
        } else {
            p
        };
        while q > 0 && self.freqs[q - 1] == self.freqs[q] {
            q -= 1;
        }
        q
    }

    /// Snaps sorted centroids to strictly increasing candidate positions.
    fn snap(&self, centroids: &[f64]) -> Vec<usize> {
        let n = self.len();
        let m = centroids.len();
        let mut pos: Vec<usize> = centroids.iter().map(|&c| self.nearest(c)).collect();
        for k in 1..m {
            if pos[k] <= pos[k - 1] {
                pos[k] = pos[k - 1] + 1;
            }
        }
        for k in (0..m).rev() {
            let cap = if k + 1 < m { pos[k + 1] - 1 } else { n - 1 };
            if pos[k] > cap {
                pos[k] = cap;
            }
        }
        pos
    }

    fn freqs_at(&self, pos: &[usize]) -> Vec<f64> {
        pos.iter().map(|&p| self.freqs[p]).collect()
    }
}

fn check_m(n: usize, m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::arg(format!("M must be at least 2, got {m}")));
    }
    if n < m {
        return Err(Error::arg(format!(
            "need at least M = {m} candidates, got {n}"
        )));
    }
    Ok(())
}

/// Initial centroids, ascending.
pub fn seed_centroids(
    f: &[Candidate],
    m: usize,
    strategy: Seeding,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let sorted = SortedCandidates::new(f)?;
    if m == 0 || sorted.len() < m {
        return Err(Error::arg(format!(
            "need at least M = {m} candidates, got {}",
            sorted.len()
        )));
    }
    Ok(seed_sorted(&sorted, m, strategy, rng))
}

fn seed_sorted(s: &SortedCandidates, m: usize, strategy: Seeding, rng: &mut SimRng) -> Vec<f64> {
    let n = s.len();
    let lo = s.freqs[0];
    let hi = s.freqs[n - 1];
    let step = |k: usize| {
        if m > 1 {
            k as f64 / (m - 1) as f64
        } else {
            0.5
        }
    };
    let mut c: Vec<f64> = match strategy {
        Seeding::Linear | Seeding::MeanBased => (0..m).map(|k| lo + (hi - lo) * step(k)).collect(),
        Seeding::UniformDensity | Seeding::MedianBased => (0..m)
            .map(|k| s.freqs[((n - 1) as f64 * step(k)).round() as usize])
            .collect(),
        Seeding::Random => (0..m).map(|_| rng.gen_range(lo..=hi)).collect(),
        Seeding::RandomSelect => index::sample(rng, n, m)
            .into_iter()
            .map(|i| s.freqs[i])
            .collect(),
        Seeding::KMeansPlusPlus => kmeanspp(&s.freqs, m, rng),
    };
    c.sort_by(f64::total_cmp);
    c
}

fn kmeanspp(x: &[f64], m: usize, rng: &mut SimRng) -> Vec<f64> {
    let n = x.len();
    let mut centers = Vec::with_capacity(m);
    centers.push(x[rng.gen_range(0..n)]);
    let mut d2: Vec<f64> = x.iter().map(|&v| (v - centers[0]).powi(2)).collect();
    while centers.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            x[pick]
        } else {
            x[rng.gen_range(0..n)]
        };
        centers.push(next);
        for (d, &v) in d2.iter_mut().zip(x) {
            *d = d.min((v - next).powi(2));
        }
    }
    centers
}

struct KMeansRun {
    best: Vec<usize>,
    last: Vec<usize>,
    micd_trace: Vec<f64>,
    chi_trace: Vec<f64>,
    iterations: usize,
}

/// Cluster boundaries for sorted centroids: cluster j owns sorted positions
/// `bounds[j]..bounds[j + 1]`. Points equidistant from two centroids go to
/// the lower one.
fn assign(s: &SortedCandidates, c: &[f64]) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(c.len() + 1);
    bounds.push(0);
    for w in c.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        bounds.push(s.freqs.partition_point(|&x| x <= mid));
    }
    bounds.push(s.len());
    // keep monotone when centroids coincide
    for j in 1..bounds.len() {
        bounds[j] = bounds[j].max(bounds[j - 1]);
    }
    bounds
}

fn micd_of(s: &SortedCandidates, bounds: &[usize], c: &[f64]) -> f64 {
    let m = c.len();
    let total: f64 = (0..m)
        .map(|j| {
            let (lo, hi) = (bounds[j], bounds[j + 1]);
            if hi > lo {
                s.abs_dev(lo, hi, c[j]) / (hi - lo) as f64
            } else {
                0.0
            }
        })
        .sum();
    total / m as f64
}

/// Candidate farthest from every centroid in `c`.
fn farthest_from(s: &SortedCandidates, c: &[f64]) -> f64 {
    let mut best = (f64::NEG_INFINITY, s.freqs[0]);
    for &x in &s.freqs {
        let p = c.partition_point(|&v| v < x);
        let mut d = f64::INFINITY;
        if p < c.len() {
            d = d.min(c[p] - x);
        }
        if p > 0 {
            d = d.min(x - c[p - 1]);
        }
        if d > best.0 {
            best = (d, x);
        }
    }
    best.1
}

fn run_kmeans(s: &SortedCandidates, cfg: &SelectionConfig) -> Result<KMeansRun> {
    check_m(s.len(), cfg.m)?;
    let mut rng = rng::seeded(cfg.rng_seed);
    let mut c = seed_sorted(s, cfg.m, cfg.seeding, &mut rng);

    let snapped = s.snap(&c);
    let mut beta_p = chi_sorted(&s.freqs_at(&snapped));
    let mut best = snapped.clone();
    let mut last = snapped;
    let mut chi_trace = vec![beta_p];
    let mut micd_trace = vec![micd_of(s, &assign(s, &c), &c)];
    let mut iterations = 0;

    while iterations < cfg.k_max {
        iterations += 1;
        let bounds = assign(s, &c);
        let mut next: Vec<f64> = (0..cfg.m)
            .map(|j| {
                let (lo, hi) = (bounds[j], bounds[j + 1]);
                if hi > lo {
                    s.range_sum(lo, hi) / (hi - lo) as f64
                } else {
                    f64::NAN
                }
            })
            .collect();
        for j in 0..cfg.m {
            if next[j].is_nan() {
                let live: Vec<f64> = {
                    let mut v: Vec<f64> = next.iter().copied().filter(|x| !x.is_nan()).collect();
                    v.sort_by(f64::total_cmp);
                    v
                };
                next[j] = farthest_from(s, &live);
            }
        }
        next.sort_by(f64::total_cmp);
        micd_trace.push(micd_of(s, &assign(s, &next), &next));

        last = s.snap(&next);
        let beta_c = chi_sorted(&s.freqs_at(&last));
        chi_trace.push(beta_c);
        if beta_c > beta_p {
            beta_p = beta_c;
            best = last.clone();
        }
        let converged = next == c;
        c = next;
        if converged {
            break;
        }
    }
    Ok(KMeansRun {
        best,
        last,
        micd_trace,
        chi_trace,
        iterations,
    })
}

/// K-means with per-iteration snapping that returns the snapped centroid
/// list with the largest χ over all iterations.
pub fn improved_kmeans(f: &[Candidate], cfg: &SelectionConfig) -> Result<SelectionResult> {
    let s = SortedCandidates::new(f)?;
    let run = run_kmeans(&s, cfg)?;
    Ok(SelectionResult::from_positions(
        &s,
        &run.best,
        run.micd_trace,
        run.chi_trace,
        run.iterations,
    ))
}

/// Conventional K-means: the converged centroids, snapped once at the end.
pub fn plain_kmeans(f: &[Candidate], cfg: &SelectionConfig) -> Result<SelectionResult> {
    let s = SortedCandidates::new(f)?;
    let run = run_kmeans(&s, cfg)?;
    Ok(SelectionResult::from_positions(
        &s,
        &run.last,
        run.micd_trace,
        run.chi_trace,
        run.iterations,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Left,
    Right,
}

/// Core relocation on strictly increasing positions into sorted `v`.
/// Returns the number of accepted moves and the χ after each.
fn relocate_positions(v: &[f64], pos: &mut [usize], max_iter: usize) -> (usize, Vec<f64>) {
    let m = pos.len();
    let mut trace = vec![chi_sorted(&pos.iter().map(|&p| v[p]).collect::<Vec<_>>())];
    let mut moves = 0;
    if m < 2 {
        return (0, trace);
    }
    while moves < max_iter {
        let gaps: Vec<f64> = pos.windows(2).map(|w| v[w[1]] - v[w[0]]).collect();
        let (km, th) =
            gaps.iter().enumerate().fold(
                (0, f64::INFINITY),
                |acc, (k, &g)| if g < acc.1 { (k, g) } else { acc },
            );
        let left = if km > 0 { gaps[km - 1] } else { f64::INFINITY };
        let right = if km + 1 < gaps.len() {
            gaps[km + 1]
        } else {
            f64::INFINITY
        };
        let dir = if left > right { Dir::Left } else { Dir::Right };
        let other = if dir == Dir::Left {
            Dir::Right
        } else {
            Dir::Left
        };
        let moved = try_shift(v, pos, km, th, dir) || try_shift(v, pos, km, th, other);
        if !moved {
            break;
        }
        moves += 1;
        trace.push(chi_sorted(&pos.iter().map(|&p| v[p]).collect::<Vec<_>>()));
    }
    (moves, trace)
}

/// Slides one member of the closest pair `(km, km + 1)`: the left member
/// leftwards or the right member rightwards, as far as possible while its gap
/// to the fixed outer neighbor stays above `th`.
fn try_shift(v: &[f64], pos: &mut [usize], km: usize, th: f64, dir: Dir) -> bool {
    let n = v.len();
    match dir {
        Dir::Left => {
            let i = km;
            let from = pos[i];
            let target = match i.checked_sub(1).map(|j| pos[j]) {
                None => 0,
                Some(fixed) => {
                    // positions fixed+1 ..= from-1, largest shift first
                    let lowest_ok = (fixed + 1..from).find(|&q| v[q] - v[fixed] > th);
                    match lowest_ok {
                        Some(q) => q,
                        None => return false,
                    }
                }
            };
            if target >= from || v[target] >= v[from] {
                return false;
            }
            pos[i] = target;
            true
        }
        Dir::Right => {
            let j = km + 1;
            let from = pos[j];
            let target = match pos.get(j + 1).copied() {
                None => n - 1,
                Some(fixed) => {
                    let highest_ok = (from + 1..fixed).rev().find(|&q| v[fixed] - v[q] > th);
                    match highest_ok {
                        Some(q) => q,
                        None => return false,
                    }
                }
            };
            if target <= from || v[target] <= v[from] {
                return false;
            }
            pos[j] = target;
            true
        }
    }
}

/// Centroid relocation over the sorted candidate frequencies `nu`.
///
/// `lp` must be a sub-multiset of `nu`. Chosen entries in the result carry the
/// position in `nu` as their site index.
pub fn relocate_centroids(nu: &[f64], lp: &[f64], max_iter: usize) -> Result<SelectionResult> {
    if lp.len() < 2 {
        return Err(Error::arg("relocation needs at least 2 centroids"));
    }
    if nu.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::arg("candidate list must be sorted ascending"));
    }
    let s = SortedCandidates::new(&Candidate::from_freqs(nu))?;
    let mut pos = positions_of(&s.freqs, lp)?;
    let (moves, trace) = relocate_positions(&s.freqs, &mut pos, max_iter);
    Ok(SelectionResult::from_positions(
        &s,
        &pos,
        Vec::new(),
        trace,
        moves,
    ))
}

/// Maps each value of `lp` to a distinct position in sorted `v`, taking the
/// lowest unused position among equal values.
fn positions_of(v: &[f64], lp: &[f64]) -> Result<Vec<usize>> {
    let mut want = lp.to_vec();
    want.sort_by(f64::total_cmp);
    let mut pos = Vec::with_capacity(want.len());
    let mut next_free = 0usize;
    for (k, &x) in want.iter().enumerate() {
        let start = if k > 0 && want[k - 1] == x {
            next_free
        } else {
            v.partition_point(|&y| y < x)
        };
        if start >= v.len() || v[start] != x {
            return Err(Error::arg(format!(
                "centroid {x} is not a candidate frequency"
            )));
        }
        pos.push(start);
        next_free = start + 1;
    }
    Ok(pos)
}

/// Improved K-means followed by centroid relocation.
pub fn select(f: &[Candidate], cfg: &SelectionConfig) -> Result<Selection> {
    let s = SortedCandidates::new(f)?;
    let run = run_kmeans(&s, cfg)?;
    let kmeans = SelectionResult::from_positions(
        &s,
        &run.best,
        run.micd_trace,
        run.chi_trace,
        run.iterations,
    );
    let mut pos = run.best;
    let (moves, trace) = relocate_positions(&s.freqs, &mut pos, cfg.max_iter);
    let relocated = SelectionResult::from_positions(&s, &pos, Vec::new(), trace, moves);
    Ok(Selection { kmeans, relocated })
}

/// Reference selectors without clustering.
pub fn baseline_select(
    f: &[Candidate],
    m: usize,
    method: Baseline,
    rng: &mut SimRng,
) -> Result<SelectionResult> {
    let s = SortedCandidates::new(f)?;
    check_m(s.len(), m)?;
    let pos = match method {
        Baseline::MeanBased => s.snap(&seed_sorted(&s, m, Seeding::Linear, rng)),
        Baseline::MedianBased => s.snap(&seed_sorted(&s, m, Seeding::UniformDensity, rng)),
        Baseline::RandomSelect => {
            let mut p = index::sample(rng, s.len(), m).into_vec();
            p.sort_unstable();
            p
        }
    };
    let chi = chi_sorted(&s.freqs_at(&pos));
    Ok(SelectionResult::from_positions(
        &s,
        &pos,
        Vec::new(),
        vec![chi],
        0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(v: &[f64]) -> Vec<Candidate> {
        Candidate::from_freqs(v)
    }

    /// Exhaustive optimum over all M-subsets.
    fn brute_force_chi(f: &[f64], m: usize) -> f64 {
        fn rec(f: &[f64], m: usize, start: usize, cur: &mut Vec<f64>, best: &mut f64) {
            if cur.len() == m {
                *best = best.max(chi(cur).unwrap());
                return;
            }
            for i in start..f.len() {
                cur.push(f[i]);
                rec(f, m, i + 1, cur, best);
                cur.pop();
            }
        }
        let mut best = f64::NEG_INFINITY;
        rec(f, m, 0, &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi(&[100.0, 110.0, 120.0]).unwrap(), 10.0);
        assert_eq!(chi(&[100.0, 100.0, 200.0]).unwrap(), 0.0);
        assert!(matches!(chi(&[5.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn micd_examples() {
        let r = micd(&[100.0, 100.0], &[0, 0], &[100.0]).unwrap();
        assert_eq!(r.mean, 0.0);
        let r = micd(&[99.0, 101.0], &[0, 0], &[100.0]).unwrap();
        assert_eq!(r.mean, 1.0);
        let r = micd(&[99.0, 101.0, 7.0, 13.0], &[0, 0, 1, 1], &[100.0, 10.0]).unwrap();
        assert_eq!(r.per_cluster, vec![1.0, 3.0]);
        assert_eq!(r.mean, 2.0);
        let r = micd(&[1.0], &[0], &[1.0, 5.0]).unwrap();
        assert_eq!(r.empty, vec![1]);
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn linear_seeding_example() {
        let f = cands(&[100.0, 103.0, 117.0, 130.0]);
        let mut rng = rng::seeded(0);
        let c = seed_centroids(&f, 4, Seeding::Linear, &mut rng).unwrap();
        assert_eq!(c, vec![100.0, 110.0, 120.0, 130.0]);
        assert!(seed_centroids(&f, 5, Seeding::Linear, &mut rng).is_err());
    }

    #[test]
    fn kmeanspp_identical_points_gives_equal_centroids() {
        let f = cands(&[7.0; 10]);
        let mut rng = rng::seeded(3);
        let c = seed_centroids(&f, 4, Seeding::KMeansPlusPlus, &mut rng).unwrap();
        assert!(c.iter().all(|&x| x == 7.0));
    }

    #[test]
    fn saturation_selects_everything() {
        let f = [100.0, 104.0, 101.0, 120.0];
        for seeding in [
            Seeding::Linear,
            Seeding::UniformDensity,
            Seeding::KMeansPlusPlus,
            Seeding::Random,
            Seeding::RandomSelect,
        ] {
            let cfg = SelectionConfig {
                seeding,
                ..SelectionConfig::new(4)
            };
            let r = improved_kmeans(&cands(&f), &cfg).unwrap();
            let mut got = r.centroids.clone();
            got.sort_by(f64::total_cmp);
            assert_eq!(got, vec![100.0, 101.0, 104.0, 120.0]);
            assert_eq!(r.chi, 1.0);
        }
    }

    #[test]
    fn improved_kmeans_small_example_bounded_by_oracle() {
        let f = [100.0, 101.0, 105.0, 110.0, 120.0];
        assert_eq!(brute_force_chi(&f, 3), 10.0);
        let cfg = SelectionConfig::new(3);
        let imp = improved_kmeans(&cands(&f), &cfg).unwrap();
        let plain = plain_kmeans(&cands(&f), &cfg).unwrap();
        assert!(imp.chi >= plain.chi);
        assert!(imp.chi <= 10.0);
        let full = select(&cands(&f), &cfg).unwrap();
        assert_eq!(full.relocated.chi, 10.0);
    }

    #[test]
    fn returned_chi_is_trace_maximum() {
        let f: Vec<f64> = (0..300)
            .map(|i| ((i * 7919) % 1000) as f64 * 0.037 + (i as f64).sqrt())
            .collect();
        let r = improved_kmeans(&cands(&f), &SelectionConfig::new(16)).unwrap();
        let max = r
            .chi_trace
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.chi, max);
        assert_eq!(r.chi, chi(&r.centroids).unwrap());
        assert_eq!(r.micd_trace.len(), r.chi_trace.len());
    }

    #[test]
    fn empty_candidates_rejected() {
        assert!(matches!(
            improved_kmeans(&[], &SelectionConfig::new(2)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn duplicates_snap_to_lowest_site() {
        let f = vec![
            Candidate {
                site: 9,
                freq: 100.0,
            },
            Candidate {
                site: 2,
                freq: 100.0,
            },
            Candidate {
                site: 5,
                freq: 200.0,
            },
        ];
        let r = baseline_select(&f, 2, Baseline::MeanBased, &mut rng::seeded(0)).unwrap();
        assert_eq!(r.sites(), vec![2, 5]);
    }

    #[test]
    fn relocation_example() {
        let nu = [100.0, 101.0, 102.0, 103.0, 110.0];
        let r = relocate_centroids(&nu, &[100.0, 101.0, 110.0], 200).unwrap();
        assert_eq!(r.centroids, vec![100.0, 103.0, 110.0]);
        assert_eq!(r.chi, 3.0);
        assert_eq!(brute_force_chi(&nu, 3), 3.0);
    }

    #[test]
    fn relocation_fixpoint_when_nothing_to_move() {
        let nu = [1.0, 5.0, 9.0];
        let r = relocate_centroids(&nu, &nu, 200).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.centroids, nu.to_vec());
    }

    #[test]
    fn relocation_rejects_foreign_centroids() {
        let nu = [1.0, 2.0, 3.0];
        assert!(matches!(
            relocate_centroids(&nu, &[1.0, 2.5], 10),
            Err(Error::Argument(_))
        ));
        assert!(relocate_centroids(&[3.0, 1.0], &[1.0, 3.0], 10).is_err());
    }

    #[test]
    fn relocation_pair_spreads_to_extremes() {
        let nu = [1.0, 2.0, 3.0, 4.0];
        let r = relocate_centroids(&nu, &[2.0, 3.0], 10).unwrap();
        assert_eq!(r.centroids, vec![1.0, 4.0]);
    }

    #[test]
    fn baselines_on_uniform_grid() {
        let f: Vec<f64> = (100..=130).map(|x| x as f64).collect();
        let mut rng = rng::seeded(1);
        let mean = baseline_select(&cands(&f), 4, Baseline::MeanBased, &mut rng).unwrap();
        assert_eq!(mean.centroids, vec![100.0, 110.0, 120.0, 130.0]);
        assert_eq!(mean.chi, 10.0);
        let median = baseline_select(&cands(&f), 4, Baseline::MedianBased, &mut rng).unwrap();
        assert_eq!(median.centroids, mean.centroids);
        let rand = baseline_select(&cands(&f), 4, Baseline::RandomSelect, &mut rng).unwrap();
        assert_eq!(rand.chosen.len(), 4);
        assert!(rand.chi <= 10.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let f: Vec<f64> = (0..500)
            .map(|i| 400.0 + ((i * 37) % 101) as f64 * 0.3)
            .collect();
        let cfg = SelectionConfig {
            seeding: Seeding::KMeansPlusPlus,
            rng_seed: 42,
            ..SelectionConfig::new(8)
        };
        assert_eq!(
            select(&cands(&f), &cfg).unwrap(),
            select(&cands(&f), &cfg).unwrap()
        );
    }
}
