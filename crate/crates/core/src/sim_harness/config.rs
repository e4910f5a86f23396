//! Scenario configuration: TOML file, dotted `key=value` overrides and
//! consistency checks. Every default is the full-scale scenario.

use serde::{Deserialize, Serialize};

use crate::csi_feedback_dumb::CompressionMode;
use crate::csi_feedback_smart::BsInit;
use crate::error::{Error, Result};
use crate::kalman_smart_ms::MseMode;
use crate::path_align::{self, DeltaSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub channel: ChannelConfig,
    pub pilot: PilotSection,
    pub feedback: FeedbackConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_antennas: usize,
    pub fft_size: usize,
    pub num_users: usize,
    pub subcarrier_spacing_hz: f64,
    pub doppler_hz: f64,
    pub rs_period_symbols: usize,
    pub rho: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub num_taps: usize,
    pub as_deg: f64,
    pub antenna_spacing: f64,
    /// Per-tap base AoD; user `k` sees `mod(base + k·step, 160) − 80`.
    pub aod_base_deg: Vec<f64>,
    pub aod_step_deg: f64,
    /// Support of user 0; other users draw `num_taps` delays in `[0, max_delay]`.
    pub traced_support: Vec<usize>,
    pub max_delay: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    Fixed,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSection {
    pub zc_root: usize,
    pub delta_mode: DeltaMode,
    /// Used when `delta_mode = "fixed"`.
    pub delta: usize,
    /// Cycle set; empty selects the greedy pairwise non-divisible set.
    pub delta_set: Vec<usize>,
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsType {
    Smart,
    Dumb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub ms_type: MsType,
    pub scalars_per_tap: usize,
    /// Total dumb-MS budget `L`; defaults to `scalars_per_tap · num_taps`.
    pub budget: Option<usize>,
    pub compression: CompressionMode,
    pub sigma_o2: f64,
    pub bs_init: BsInit,
    pub mse_mode: MseMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserSelection {
    /// Only user 0 (no spectral efficiency).
    Traced,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub num_rs: usize,
    pub seeds: Vec<u64>,
    pub users: UserSelection,
    pub compute_se: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_antennas: 128,
            fft_size: 1024,
            num_users: 8,
            subcarrier_spacing_hz: 15e3,
            doppler_hz: 50.0,
            rs_period_symbols: 7,
            rho: 0.99,
            snr_db: 10.0,
        }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            num_taps: 7,
            as_deg: 5.0,
            antenna_spacing: 0.5,
            aod_base_deg: vec![40.0, 80.0, 120.0, 80.0, 80.0, 80.0, 80.0],
            aod_step_deg: 7.0,
            traced_support: vec![1, 11, 21, 28, 44, 47, 54],
            max_delay: 55,
        }
    }
}

impl Default for PilotSection {
    fn default() -> Self {
        Self {
            zc_root: 1,
            delta_mode: DeltaMode::Cycle,
            delta: 8,
            delta_set: Vec::new(),
            shuffle_seed: None,
        }
    }
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            ms_type: MsType::Smart,
            scalars_per_tap: 1,
            budget: None,
            compression: CompressionMode::DftCodebook,
            sigma_o2: 1e-4,
            bs_init: BsInit::Prior,
            mse_mode: MseMode::BlockDiagonal,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_rs: 35,
            seeds: vec![0],
            users: UserSelection::All,
            compute_se: true,
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            channel: ChannelConfig::default(),
            pilot: PilotSection::default(),
            feedback: FeedbackConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Applies `section.key=value` overrides; values are parsed as TOML
    /// literals and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root =
            toml::Table::try_from(self).map_err(|e| Error::Serialization(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("override `{item}` is not key=value")))?;
            let value = parse_literal(raw.trim());
            set_path(&mut root, key.trim(), value)?;
        }
        let text = toml::to_string(&root).map_err(|e| Error::Serialization(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn delta_spread(&self) -> usize {
        self.channel.max_delay + 1
    }

    /// The Δ values allowed for this system.
    pub fn delta_candidates(&self) -> Result<Vec<usize>> {
        path_align::delta_candidates(
            self.system.fft_size,
            self.system.num_antennas,
            self.delta_spread(),
        )
    }

    pub fn delta_schedule(&self) -> Result<DeltaSchedule> {
        let candidates = self.delta_candidates()?;
        let check = |d: usize| {
            if candidates.contains(&d) {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "delta {d} is not among the allowed values {candidates:?}"
                )))
            }
        };
        match self.pilot.delta_mode {
            DeltaMode::Fixed => {
                check(self.pilot.delta)?;
                Ok(DeltaSchedule::Fixed(self.pilot.delta))
            }
            DeltaMode::Cycle => {
                let set = if self.pilot.delta_set.is_empty() {
                    path_align::delta_cycle_set(&candidates)?
                } else {
                    self.pilot.delta_set.clone()
                };
                for &d in &set {
                    check(d)?;
                }
                if set.is_empty() {
                    return Err(Error::validation("delta cycle set is empty"));
                }
                Ok(DeltaSchedule::Cycle {
                    set,
                    shuffle_seed: self.pilot.shuffle_seed,
                })
            }
        }
    }

    pub fn budget(&self) -> usize {
        self.feedback
            .budget
            .unwrap_or(self.feedback.scalars_per_tap * self.channel.num_taps)
    }

    pub fn pilot_noise_var(&self) -> f64 {
        let s = &self.system;
        s.num_antennas as f64 / s.fft_size as f64 * 10f64.powf(-s.snr_db / 10.0)
    }

    pub fn data_noise_var(&self) -> f64 {
        10f64.powf(-self.system.snr_db / 10.0) / self.system.fft_size as f64
    }

    pub fn active_users(&self) -> usize {
        match self.run.users {
            UserSelection::Traced => 1,
            UserSelection::All => self.system.num_users,
        }
    }

    pub fn se_enabled(&self) -> bool {
        self.run.compute_se && self.run.users == UserSelection::All
    }

    /// AoD of tap `p` of user `k` in degrees.
    pub fn aod_deg(&self, k: usize, p: usize) -> f64 {
        let c = &self.channel;
        (c.aod_base_deg[p] + k as f64 * c.aod_step_deg).rem_euclid(160.0) - 80.0
    }

    pub fn validate(&self) -> Result<()> {
        let (s, c, f, r) = (&self.system, &self.channel, &self.feedback, &self.run);
        let fail = |msg: String| Err(Error::Validation(msg));
        if s.num_antennas == 0 || s.fft_size == 0 || s.num_users == 0 {
            return fail("num_antennas, fft_size and num_users must be positive".into());
        }
        if s.num_users > s.num_antennas {
            return fail(format!(
                "K = {} exceeds M = {}",
                s.num_users, s.num_antennas
            ));
        }
        if s.num_users > 255 || s.num_antennas > u16::MAX as usize + 1 {
            return fail("system too large for the codebook message format".into());
        }
        if !(0.0..=1.0).contains(&s.rho) {
            return fail("rho must lie in [0, 1]".into());
        }
        if !s.snr_db.is_finite() {
            return fail("snr_db must be finite".into());
        }
        if c.num_taps == 0 {
            return fail("num_taps must be positive".into());
        }
        if c.aod_base_deg.len() < c.num_taps {
            return fail(format!("aod_base_deg needs {} entries", c.num_taps));
        }
        if c.traced_support.len() != c.num_taps {
            return fail("traced_support must contain num_taps delays".into());
        }
        if c.traced_support.windows(2).any(|w| w[0] >= w[1]) {
            return fail("traced_support must be strictly increasing".into());
        }
        if c.traced_support.last().is_some_and(|&d| d > c.max_delay) {
            return fail("traced_support exceeds max_delay".into());
        }
        if c.max_delay + 1 < c.num_taps {
            return fail("max_delay too small for num_taps distinct delays".into());
        }
        if self.delta_spread() > s.fft_size {
            return fail("delay spread exceeds the FFT size".into());
        }
        if !(c.as_deg > 0.0) || !(c.antenna_spacing > 0.0) {
            return fail("as_deg and antenna_spacing must be positive".into());
        }
        if self.pilot.zc_root == 0 {
            return fail("zc_root must be positive".into());
        }
        self.delta_schedule()?;
        match f.ms_type {
            MsType::Smart => {
                if f.scalars_per_tap == 0 || f.scalars_per_tap > s.num_antennas {
                    return fail(format!(
                        "scalars_per_tap must lie in [1, {}]",
                        s.num_antennas
                    ));
                }
                if !(f.sigma_o2 > 0.0) {
                    return fail("sigma_o2 must be positive".into());
                }
            }
            MsType::Dumb => {
                let l = self.budget();
                let max_groups = c.num_taps.min(
                    self.delta_schedule()?
                        .values()
                        .into_iter()
                        .min()
                        .unwrap_or(1),
                );
                if l == 0 || l > s.num_antennas * max_groups.max(1) {
                    return fail(format!("budget L = {l} must lie in [1, M·G]"));
                }
            }
        }
        if r.num_rs == 0 || r.seeds.is_empty() {
            return fail("num_rs and seeds must be non-empty".into());
        }
        let mut seeds = r.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return fail("seeds must be distinct".into());
        }
        Ok(())
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().unwrap();
    let mut table = root;
    for part in path {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::Validation(format!("override key `{key}`: `{part}` is not a section"))
            })?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
