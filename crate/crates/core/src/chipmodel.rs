// SPDX-License-Identifier: Apache-2.0

//! Synthetic ring-oscillator fabric.
//!
//! A chip is a grid of switch-box tiles, each with four slice corners. Every
//! non-excluded slice carries one ring oscillator whose reference-condition
//! frequency is the sum of a device-family base, a routing offset for the
//! slice class, a planar systematic gradient and a per-device random
//! component. Frequencies respond affinely to temperature and relative supply
//! voltage; each measurement adds Gaussian noise before the counter quantizes.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng, Stage};

/// Counter enable window used throughout characterization, in microseconds.
pub const DEFAULT_T_ON_US: f64 = 122.87;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SliceClass {
    L12,
    L3,
    M,
}

impl SliceClass {
    pub const ALL: [SliceClass; 3] = [SliceClass::L12, SliceClass::L3, SliceClass::M];

    /// Top corners are always L slices; bottom corners take the tile's kind.
    pub fn classify(corner: Corner, tile: TileKind) -> SliceClass {
        match (corner, tile) {
            (Corner::TL | Corner::TR, _) => SliceClass::L12,
            (Corner::BL | Corner::BR, TileKind::L) => SliceClass::L3,
            (Corner::BL | Corner::BR, TileKind::M) => SliceClass::M,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SliceClass::L12 => "L12",
            SliceClass::L3 => "L3",
            SliceClass::M => "M",
        }
    }
}

impl fmt::Display for SliceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SliceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L12" => Ok(SliceClass::L12),
            "L3" => Ok(SliceClass::L3),
            "M" => Ok(SliceClass::M),
            other => Err(Error::arg(format!("unknown slice class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Corner {
    TL,
    TR,
    BL,
    BR,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::TL, Corner::TR, Corner::BL, Corner::BR];

    pub fn is_top(self) -> bool {
        matches!(self, Corner::TL | Corner::TR)
    }

    /// 0 for left corners, 1 for right corners.
    pub fn lr(self) -> u32 {
        match self {
            Corner::TL | Corner::BL => 0,
            Corner::TR | Corner::BR => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Corner::TL => "TL",
            Corner::TR => "TR",
            Corner::BL => "BL",
            Corner::BR => "BR",
        }
    }
}

impl FromStr for Corner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "TL" => Ok(Corner::TL),
            "TR" => Ok(Corner::TR),
            "BL" => Ok(Corner::BL),
            "BR" => Ok(Corner::BR),
            other => Err(Error::arg(format!("unknown corner `{other}`"))),
        }
    }
}

/// Kind of the bottom slices of a tile. Columns alternate L / M.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileKind {
    L,
    M,
}

pub fn tile_kind(clb_x: u32) -> TileKind {
    if clb_x % 2 == 1 {
        TileKind::M
    } else {
        TileKind::L
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FabricSite {
    pub clb_x: u32,
    pub clb_y: u32,
    pub corner: Corner,
    pub class: SliceClass,
    pub excluded: bool,
}

impl FabricSite {
    pub fn new(clb_x: u32, clb_y: u32, corner: Corner) -> Self {
        FabricSite {
            clb_x,
            clb_y,
            corner,
            class: SliceClass::classify(corner, tile_kind(clb_x)),
            excluded: false,
        }
    }

    pub fn key(&self) -> (u32, u32, Corner) {
        (self.clb_x, self.clb_y, self.corner)
    }

    /// Slice column in the placement grid: two slice columns per tile.
    pub fn slice_x(&self) -> u32 {
        2 * self.clb_x + self.corner.lr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Nexys4ddr,
    Basys3,
    Zybo,
    Custom,
}

impl FromStr for DeviceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nexys4ddr" => Ok(DeviceKind::Nexys4ddr),
            "basys3" => Ok(DeviceKind::Basys3),
            "zybo" => Ok(DeviceKind::Zybo),
            "custom" => Ok(DeviceKind::Custom),
            other => Err(Error::Config(format!("unknown device kind `{other}`"))),
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DeviceKind::Nexys4ddr => "nexys4ddr",
            DeviceKind::Basys3 => "basys3",
            DeviceKind::Zybo => "zybo",
            DeviceKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Mean frequency offset per slice class, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBias {
    pub l12: f64,
    pub l3: f64,
    pub m: f64,
}

impl ClassBias {
    pub const ZERO: ClassBias = ClassBias {
        l12: 0.0,
        l3: 0.0,
        m: 0.0,
    };

    pub fn of(&self, class: SliceClass) -> f64 {
        match class {
            SliceClass::L12 => self.l12,
            SliceClass::L3 => self.l3,
            SliceClass::M => self.m,
        }
    }
}

/// Generative parameters for one device family.
///
/// Frequencies are in MHz, spreads of measurement noise in kHz. Temperature
/// coefficients are fractions per °C; voltage coefficients are fractions per
/// unit of relative supply deviation `(V - 1000 mV) / 1000 mV`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub kind: DeviceKind,
    /// Number of oscillator-carrying sites (Z).
    pub site_count: usize,
    pub fabric_cols: u32,
    pub fabric_rows: u32,
    /// Centered block of tiles reserved for other logic.
    pub excluded_cols: u32,
    pub excluded_rows: u32,
    pub mean_freq_base: f64,
    /// Target max-min span of nominal frequencies, MHz.
    pub mean_span: f64,
    /// Span of per-site measurement noise, kHz.
    pub sigma_span: f64,
    pub class_bias: ClassBias,
    /// MHz across one full fabric diagonal.
    pub systematic_gradient: f64,
    /// Fixed random-component sigma in MHz. `None` calibrates it per device
    /// so the realized nominal span equals `mean_span`.
    pub random_sigma: Option<f64>,
    pub temp_coeff_mean: f64,
    pub temp_coeff_sigma: f64,
    pub volt_coeff_mean: f64,
    pub volt_coeff_sigma: f64,
    /// Mean per-site measurement noise, kHz.
    pub meas_sigma: f64,
    /// Fraction of sites with grossly unstable counters.
    pub erroneous_fraction: f64,
    /// Measurement noise of those sites, kHz.
    pub erroneous_sigma: f64,
}

// Environmental sensitivity shared by all presets.
const TEMP_COEFF_MEAN: f64 = -1.0e-4;
const TEMP_COEFF_SIGMA: f64 = 0.2e-4;
const VOLT_COEFF_MEAN: f64 = 0.5;
const VOLT_COEFF_SIGMA: f64 = 0.02;

impl DeviceSpec {
    pub fn preset(kind: DeviceKind) -> DeviceSpec {
        match kind {
            DeviceKind::Nexys4ddr => DeviceSpec {
                kind,
                site_count: 11264,
                fabric_cols: 64,
                fabric_rows: 50,
                excluded_cols: 16,
                excluded_rows: 24,
                mean_freq_base: 405.0,
                mean_span: 64.78,
                sigma_span: 249.4,
                class_bias: ClassBias {
                    l12: 7.5,
                    l3: 0.0,
                    m: -7.5,
                },
                systematic_gradient: 6.0,
                ..DeviceSpec::common(kind)
            },
            DeviceKind::Basys3 => DeviceSpec {
                kind,
                site_count: 5696,
                fabric_cols: 40,
                fabric_rows: 40,
                excluded_cols: 16,
                excluded_rows: 11,
                mean_freq_base: 410.0,
                mean_span: 54.28,
                sigma_span: 235.24,
                class_bias: ClassBias {
                    l12: 8.10,
                    l3: 0.2,
                    m: -7.7,
                },
                systematic_gradient: 5.0,
                ..DeviceSpec::common(kind)
            },
            DeviceKind::Zybo => DeviceSpec {
                kind,
                site_count: 3520,
                fabric_cols: 32,
                fabric_rows: 30,
                excluded_cols: 10,
                excluded_rows: 8,
                mean_freq_base: 395.0,
                mean_span: 54.71,
                sigma_span: 229.4,
                class_bias: ClassBias {
                    l12: 7.0,
                    l3: 0.0,
                    m: -7.0,
                },
                systematic_gradient: 5.0,
                ..DeviceSpec::common(kind)
            },
            DeviceKind::Custom => DeviceSpec::common(kind),
        }
    }

    fn common(kind: DeviceKind) -> DeviceSpec {
        DeviceSpec {
            kind,
            site_count: 1024,
            fabric_cols: 16,
            fabric_rows: 16,
            excluded_cols: 0,
            excluded_rows: 0,
            mean_freq_base: 400.0,
            mean_span: 50.0,
            sigma_span: 200.0,
            class_bias: ClassBias::ZERO,
            systematic_gradient: 0.0,
            random_sigma: None,
            temp_coeff_mean: TEMP_COEFF_MEAN,
            temp_coeff_sigma: TEMP_COEFF_SIGMA,
            volt_coeff_mean: VOLT_COEFF_MEAN,
            volt_coeff_sigma: VOLT_COEFF_SIGMA,
            meas_sigma: 150.0,
            erroneous_fraction: 0.01,
            erroneous_sigma: 1500.0,
        }
    }

    /// Loads a spec from TOML: an optional `preset = "<kind>"` key selects the
    /// starting point and every other key overrides the matching field.
    pub fn from_toml_str(text: &str) -> Result<DeviceSpec> {
        let mut table: toml::Table = text.parse()?;
        let base = match table.remove("preset") {
            Some(toml::Value::String(name)) => DeviceSpec::preset(name.parse()?),
            Some(other) => {
                return Err(Error::Config(format!(
                    "`preset` must be a string, got {other}"
                )))
            }
            None => DeviceSpec::preset(DeviceKind::Custom),
        };
        let mut merged = toml::Table::try_from(&base)?;
        for (k, v) in table {
            if !merged.contains_key(&k) && k != "random_sigma" {
                return Err(Error::Config(format!("unknown device spec key `{k}`")));
            }
            merged.insert(k, v);
        }
        let spec: DeviceSpec = merged.try_into()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<DeviceSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DeviceSpec::from_toml_str(&text)
    }

    pub fn capacity(&self) -> usize {
        let total = self.fabric_cols as usize * self.fabric_rows as usize;
        let excl = self.excluded_cols as usize * self.excluded_rows as usize;
        4 * total.saturating_sub(excl)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.site_count == 0 {
            return bad("site_count must be positive");
        }
        if self.excluded_cols > self.fabric_cols || self.excluded_rows > self.fabric_rows {
            return bad("excluded region larger than fabric");
        }
        if self.site_count > self.capacity() {
            return bad("site_count exceeds fabric capacity");
        }
        if !(self.mean_span > 0.0) {
            return bad("mean_span must be positive");
        }
        if !(self.sigma_span >= 0.0) {
            return bad("sigma_span must be non-negative");
        }
        if !(self.meas_sigma >= 0.0) || !(self.erroneous_sigma >= 0.0) {
            return bad("measurement sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.erroneous_fraction) {
            return bad("erroneous_fraction must be within [0, 1]");
        }
        if !(self.mean_freq_base > 0.0) {
            return bad("mean_freq_base must be positive");
        }
        if let Some(s) = self.random_sigma {
            if !(s >= 0.0) {
                return bad("random_sigma must be non-negative");
            }
        }
        if !(self.temp_coeff_sigma >= 0.0) || !(self.volt_coeff_sigma >= 0.0) {
            return bad("coefficient sigmas must be non-negative");
        }
        Ok(())
    }

    /// Oscillator sites in row-major order, skipping the excluded block.
    pub fn fabric_sites(&self) -> Vec<FabricSite> {
        let x0 = (self.fabric_cols - self.excluded_cols) / 2;
        let y0 = (self.fabric_rows - self.excluded_rows) / 2;
        let in_excl = |x: u32, y: u32| {
            (x0..x0 + self.excluded_cols).contains(&x) && (y0..y0 + self.excluded_rows).contains(&y)
        };
        let mut out = Vec::with_capacity(self.site_count);
        'outer: for y in 0..self.fabric_rows {
            for x in 0..self.fabric_cols {
                if in_excl(x, y) {
                    continue;
                }
                for corner in Corner::ALL {
                    if out.len() == self.site_count {
                        break 'outer;
                    }
                    out.push(FabricSite::new(x, y, corner));
                }
            }
        }
        out
    }

    /// Position along the fabric diagonal, centered on zero.
    fn diagonal(&self, site: &FabricSite) -> f64 {
        let u = (site.clb_x as f64 + 0.5) / self.fabric_cols as f64;
        let v = (site.clb_y as f64 + 0.5) / self.fabric_rows as f64;
        0.5 * (u + v) - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvCondition {
    /// °C
    pub temp: f64,
    /// mV
    pub vcc: f64,
}

impl EnvCondition {
    pub const REFERENCE: EnvCondition = EnvCondition {
        temp: 35.0,
        vcc: 1000.0,
    };

    pub fn new(temp: f64, vcc: f64) -> Self {
        EnvCondition { temp, vcc }
    }

    pub fn is_reference(&self) -> bool {
        *self == EnvCondition::REFERENCE
    }

    /// −5 … 75 °C in 10 °C steps at reference supply.
    pub fn temperature_sweep() -> Vec<EnvCondition> {
        (0..9)
            .map(|i| EnvCondition::new(-5.0 + 10.0 * i as f64, 1000.0))
            .collect()
    }

    /// 900 … 1100 mV in 20 mV steps at reference temperature.
    pub fn voltage_sweep() -> Vec<EnvCondition> {
        (0..11)
            .map(|i| EnvCondition::new(35.0, 900.0 + 20.0 * i as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvCoefficients {
    pub temp: Vec<f64>,
    pub volt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipProfile {
    pub device_id: String,
    pub spec: DeviceSpec,
    pub sites: Vec<FabricSite>,
    /// Noise-free reference-condition frequency per site, MHz.
    pub nominal_freq: Vec<f64>,
    /// Per-measurement noise sigma per site, MHz.
    pub meas_sigma: Vec<f64>,
    /// Absent for ingested chips.
    pub env_coeffs: Option<EnvCoefficients>,
}

impl ChipProfile {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn check_index(&self, site_index: usize) -> Result<()> {
        if site_index >= self.sites.len() {
            return Err(Error::arg(format!(
                "site index {site_index} out of range for {} sites",
                self.sites.len()
            )));
        }
        Ok(())
    }

    /// Reference-condition mean per slice class (absent classes omitted).
    pub fn class_means(&self) -> Vec<(SliceClass, f64)> {
        SliceClass::ALL
            .iter()
            .filter_map(|&c| {
                let (sum, n) = self
                    .sites
                    .iter()
                    .zip(&self.nominal_freq)
                    .filter(|(s, _)| s.class == c)
                    .fold((0.0, 0usize), |(s, n), (_, f)| (s + f, n + 1));
                (n > 0).then(|| (c, sum / n as f64))
            })
            .collect()
    }
}

/// Builds one device from its family spec and device seed.
pub fn synth_chip(spec: &DeviceSpec, device_seed: u64) -> Result<ChipProfile> {
    spec.validate()?;
    let sites = spec.fabric_sites();
    let mut rng = rng::stream(device_seed, 0, Stage::Fabric);

    let structure: Vec<f64> = sites
        .iter()
        .map(|s| {
            spec.mean_freq_base
                + spec.class_bias.of(s.class)
                + spec.systematic_gradient * spec.diagonal(s)
        })
        .collect();
    let z: Vec<f64> = (0..sites.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let scale = match spec.random_sigma {
        Some(s) => s,
        None => calibrate_scale(&structure, &z, spec.mean_span),
    };
    let nominal_freq: Vec<f64> = structure
        .iter()
        .zip(&z)
        .map(|(g, z)| g + scale * z)
        .collect();
    if let Some(bad) = nominal_freq.iter().find(|f| !(**f > 0.0)) {
        return Err(Error::Config(format!(
            "spec produces non-positive frequency {bad} MHz"
        )));
    }

    let temp = normal_vec(
        &mut rng,
        sites.len(),
        spec.temp_coeff_mean,
        spec.temp_coeff_sigma,
    );
    let volt = normal_vec(
        &mut rng,
        sites.len(),
        spec.volt_coeff_mean,
        spec.volt_coeff_sigma,
    );

    let spread = if spec.meas_sigma > 0.0 {
        (spec.sigma_span / spec.meas_sigma).min(2.0)
    } else {
        0.0
    };
    let meas_sigma = (0..sites.len())
        .map(|_| {
            let u: f64 = rng.gen();
            let erroneous = rng.gen::<f64>() < spec.erroneous_fraction;
            let khz = if erroneous {
                spec.erroneous_sigma
            } else {
                spec.meas_sigma * (1.0 + spread * (u - 0.5))
            };
            khz / 1000.0
        })
        .collect();

    Ok(ChipProfile {
        device_id: format!("{}-{device_seed}", spec.kind),
        spec: spec.clone(),
        sites,
        nominal_freq,
        meas_sigma,
        env_coeffs: Some(EnvCoefficients { temp, volt }),
    })
}

fn normal_vec(rng: &mut SimRng, n: usize, mean: f64, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![mean; n];
    }
    let d = Normal::new(mean, sigma).expect("sigma validated non-negative");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn span_at(structure: &[f64], z: &[f64], scale: f64) -> f64 {
    let (lo, hi) = structure
        .iter()
        .zip(z)
        .map(|(g, z)| g + scale * z)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
            (lo.min(f), hi.max(f))
        });
    hi - lo
}

/// Smallest random scale whose realized span reaches `target`.
fn calibrate_scale(structure: &[f64], z: &[f64], target: f64) -> f64 {
    if structure.len() < 2 || span_at(structure, z, 0.0) >= target {
        return 0.0;
    }
    let mut hi = 1.0;
    while span_at(structure, z, hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if span_at(structure, z, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Affine environmental response of a single oscillator.
pub fn env_shift(f_nom: f64, temp_coeff: f64, volt_coeff: f64, env: EnvCondition) -> f64 {
    let dt = env.temp - EnvCondition::REFERENCE.temp;
    let dv = (env.vcc - EnvCondition::REFERENCE.vcc) / EnvCondition::REFERENCE.vcc;
    f_nom * (1.0 + temp_coeff * dt + volt_coeff * dv)
}

/// Noise-free frequency of one site under `env`, MHz.
pub fn env_frequency(chip: &ChipProfile, site_index: usize, env: EnvCondition) -> Result<f64> {
    chip.check_index(site_index)?;
    let f_nom = chip.nominal_freq[site_index];
    if env.is_reference() {
        return Ok(f_nom);
    }
    let coeffs = chip.env_coeffs.as_ref().ok_or_else(|| {
        Error::Data(format!(
            "chip `{}` has no environmental coefficients; only the reference condition is available",
            chip.device_id
        ))
    })?;
    Ok(env_shift(
        f_nom,
        coeffs.temp[site_index],
        coeffs.volt[site_index],
        env,
    ))
}

/// One counter reading: pulses seen during `t_on_us` at `freq_mhz` plus noise.
pub fn measure_count(freq_mhz: f64, t_on_us: f64, sigma_mhz: f64, rng: &mut SimRng) -> u64 {
    let noise = if sigma_mhz > 0.0 {
        sigma_mhz * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    let pulses = ((freq_mhz + noise) * t_on_us).round();
    if pulses <= 0.0 {
        0
    } else {
        pulses as u64
    }
}

/// Inverse of the counter: frequency in MHz from a count over `t_on_us`.
pub fn count_to_mhz(count: u64, t_on_us: f64) -> f64 {
    count as f64 / t_on_us
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleUnit {
    Mhz,
    Count,
}

/// Reads per-site samples from CSV.
///
/// Header: `clb_x,clb_y,corner,<unit>_1,...,<unit>_m` with unit `mhz` or
/// `count`. Count files may declare the window with a `# t_on_us=<value>`
/// comment (default 122.87). Blank lines and other `#` lines are ignored.
pub fn ingest_csv(path: &Path) -> Result<ChipProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ingested".into());
    ingest_csv_str(&text, &id)
}

pub fn ingest_csv_str(text: &str, device_id: &str) -> Result<ChipProfile> {
    let mut t_on = DEFAULT_T_ON_US;
    let mut header: Option<(SampleUnit, usize)> = None;
    let mut sites = Vec::new();
    let mut means = Vec::new();
    let mut sigmas = Vec::new();
    let mut seen = HashSet::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("t_on_us=") {
                t_on = v.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad t_on_us value `{v}`"),
                })?;
                if !(t_on > 0.0) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "t_on_us must be positive".into(),
                    });
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some((unit, m)) = header else {
            header = Some(parse_header(&fields, line_no)?);
            continue;
        };
        let need = |i: usize, name: &str| -> Result<&str> {
            fields
                .get(i)
                .copied()
                .filter(|f| !f.is_empty())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("missing `{name}` column"),
                })
        };
        let int = |i: usize, name: &str| -> Result<u32> {
            need(i, name)?.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("column `{name}` is not a non-negative integer"),
            })
        };
        let clb_x = int(0, "clb_x")?;
        let clb_y = int(1, "clb_y")?;
        let corner: Corner = need(2, "corner")?.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("column `corner` has invalid value `{}`", fields[2]),
        })?;
        if fields.len() != 3 + m {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {} sample columns, found {}",
                    m,
                    fields.len().saturating_sub(3)
                ),
            });
        }
        let mut samples = Vec::with_capacity(m);
        for (j, f) in fields[3..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("sample column {} is not numeric: `{f}`", j + 1),
            })?;
            samples.push(match unit {
                SampleUnit::Mhz => v,
                SampleUnit::Count => v / t_on,
            });
        }
        let site = FabricSite::new(clb_x, clb_y, corner);
        if !seen.insert(site.key()) {
            return Err(Error::Data(format!(
                "duplicate site ({clb_x}, {clb_y}, {}) at line {line_no}",
                corner.as_str()
            )));
        }
        let (mean, sd) = mean_sd(&samples);
        if !(mean > 0.0) {
            return Err(Error::Data(format!(
                "site at line {line_no} has non-positive mean frequency"
            )));
        }
        sites.push(site);
        means.push(mean);
        sigmas.push(sd);
    }
    if header.is_none() {
        return Err(Error::Parse {
            line: 0,
            message: "missing header".into(),
        });
    }
    if sites.is_empty() {
        return Err(Error::Data("no site rows".into()));
    }

    let cols = sites.iter().map(|s| s.clb_x).max().unwrap_or(0) + 1;
    let rows = sites.iter().map(|s| s.clb_y).max().unwrap_or(0) + 1;
    let (lo, hi) = min_max(&means);
    let (slo, shi) = min_max(&sigmas);
    let spec = DeviceSpec {
        site_count: sites.len(),
        fabric_cols: cols,
        fabric_rows: rows,
        excluded_cols: 0,
        excluded_rows: 0,
        mean_freq_base: means.iter().sum::<f64>() / means.len() as f64,
        mean_span: (hi - lo).max(f64::MIN_POSITIVE),
        sigma_span: (shi - slo) * 1000.0,
        meas_sigma: sigmas.iter().sum::<f64>() / sigmas.len() as f64 * 1000.0,
        erroneous_fraction: 0.0,
        ..DeviceSpec::preset(DeviceKind::Custom)
    };
    Ok(ChipProfile {
        device_id: device_id.to_string(),
        spec,
        sites,
        nominal_freq: means,
        meas_sigma: sigmas,
        env_coeffs: None,
    })
}

fn parse_header(fields: &[&str], line: usize) -> Result<(SampleUnit, usize)> {
    let expect = ["clb_x", "clb_y", "corner"];
    for (i, name) in expect.iter().enumerate() {
        if fields.get(i) != Some(name) {
            return Err(Error::Parse {
                line,
                message: format!("header column {} must be `{name}`", i + 1),
            });
        }
    }
    let samples = &fields[3..];
    if samples.is_empty() {
        return Err(Error::Parse {
            line,
            message: "header declares no sample columns".into(),
        });
    }
    let unit = if samples[0].starts_with("mhz_") {
        SampleUnit::Mhz
    } else if samples[0].starts_with("count_") {
        SampleUnit::Count
    } else {
        return Err(Error::Parse {
            line,
            message: format!(
                "sample column `{}` must start with `mhz_` or `count_`",
                samples[0]
            ),
        });
    };
    let prefix = if unit == SampleUnit::Mhz {
        "mhz_"
    } else {
        "count_"
    };
    if let Some(bad) = samples.iter().find(|s| !s.starts_with(prefix)) {
        return Err(Error::Parse {
            line,
            message: format!("mixed sample units: `{bad}`"),
        });
    }
    Ok((unit, samples.len()))
}

/// Mean and sample (n − 1) standard deviation; sd is 0 for a single value.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub(crate) fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}
