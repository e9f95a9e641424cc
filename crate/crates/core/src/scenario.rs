//! Scenario data: users, groups, global radio/cloud parameters.
//!
//! All quantities are SI (bits, seconds, watts, hertz, cycles). Conversions
//! from dBm or dB happen only when a scenario is built from a config.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::noma_phy::Link;

/// Per-user task and radio parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserParams {
    /// Input data size in bits.
    #[serde(rename = "data_size_R")]
    pub data_size: f64,
    /// CPU cycles needed per input bit.
    #[serde(rename = "cycles_per_bit_C")]
    pub cycles_per_bit: f64,
    /// Local CPU speed in cycles/s.
    #[serde(rename = "local_capacity_F")]
    pub local_capacity: f64,
    /// Local energy per CPU cycle in joule.
    #[serde(rename = "energy_per_cycle_Q")]
    pub energy_per_cycle: f64,
    /// Transmit power cap in watt.
    #[serde(rename = "max_power_P")]
    pub max_power: f64,
    /// Linear uplink power gain.
    #[serde(rename = "channel_gain_h")]
    pub channel_gain: f64,
}

impl UserParams {
    /// Cycles needed to run the whole input locally.
    pub fn total_cycles(&self) -> f64 {
        self.cycles_per_bit * self.data_size
    }

    pub fn local_time(&self, offloaded: f64) -> f64 {
        self.cycles_per_bit * (self.data_size - offloaded) / self.local_capacity
    }

    pub fn local_energy(&self, offloaded: f64) -> f64 {
        self.cycles_per_bit * self.energy_per_cycle * (self.data_size - offloaded)
    }

    /// Smallest offload that lets local execution finish by `deadline`.
    pub fn min_offload(&self, deadline: f64) -> f64 {
        ((self.total_cycles() - deadline * self.local_capacity) / self.cycles_per_bit).max(0.0)
    }

    fn validate(&self, at: &str) -> Result<()> {
        let positive = [
            ("data_size_R", self.data_size),
            ("cycles_per_bit_C", self.cycles_per_bit),
            ("local_capacity_F", self.local_capacity),
            ("energy_per_cycle_Q", self.energy_per_cycle),
            ("channel_gain_h", self.channel_gain),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::field(format!("{at}.{name}"), format!("must be positive, got {v}")));
            }
        }
        if !(self.max_power.is_finite() && self.max_power >= 0.0) {
            return Err(Error::field(
                format!("{at}.max_power_P"),
                format!("must be non-negative, got {}", self.max_power),
            ));
        }
        Ok(())
    }
}

/// Edge cloud computation capacity in cycles/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CloudCapacity {
    Finite(f64),
    Infinite,
}

impl CloudCapacity {
    pub fn is_infinite(&self) -> bool {
        matches!(self, CloudCapacity::Infinite)
    }

    pub fn value(&self) -> f64 {
        match *self {
            CloudCapacity::Finite(v) => v,
            CloudCapacity::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for CloudCapacity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            CloudCapacity::Finite(v) => s.serialize_f64(v),
            CloudCapacity::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for CloudCapacity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(CloudCapacity::Finite(v)),
            Raw::Text(t) if t.eq_ignore_ascii_case("infinite") || t.eq_ignore_ascii_case("inf") => {
                Ok(CloudCapacity::Infinite)
            }
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "cloud_capacity_F must be a number or \"infinite\", got {t:?}"
            ))),
        }
    }
}

/// How groups share the uplink.
///
/// `TimeShared` is the NOMA/TDMA model: groups take turns using the full
/// band, with time-sharing factors summing to one. `FrequencyShared`
/// splits the band into equal static subbands, one per group, each used
/// for the whole slot (FDMA baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplexing {
    #[default]
    TimeShared,
    FrequencyShared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Group user lists, strongest channel first inside each group.
    pub groups: Vec<Vec<UserParams>>,
    #[serde(rename = "bandwidth_B")]
    pub bandwidth: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    #[serde(rename = "cloud_capacity_F")]
    pub cloud_capacity: CloudCapacity,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "is_time_shared")]
    pub multiplexing: Multiplexing,
}

fn is_time_shared(m: &Multiplexing) -> bool {
    *m == Multiplexing::TimeShared
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.groups.iter().any(|g| g.is_empty()) {
            return Err(Error::field("groups", "every group needs at least one user"));
        }
        if !(self.omega.is_finite() && (0.0..=1.0).contains(&self.omega)) {
            return Err(Error::field("omega", format!("must lie in [0, 1], got {}", self.omega)));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::field("bandwidth_B", format!("must be positive, got {}", self.bandwidth)));
        }
        if !(self.noise_psd.is_finite() && self.noise_psd > 0.0) {
            return Err(Error::field("noise_psd", format!("must be positive, got {}", self.noise_psd)));
        }
        if let CloudCapacity::Finite(f) = self.cloud_capacity {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::field(
                    "cloud_capacity_F",
                    format!("must be positive or \"infinite\", got {f}"),
                ));
            }
        }
        for (i, g) in self.groups.iter().enumerate() {
            for (j, u) in g.iter().enumerate() {
                u.validate(&format!("groups[{i}][{j}]"))?;
            }
            if g.windows(2).any(|w| w[0].channel_gain < w[1].channel_gain) {
                return Err(Error::field(
                    format!("groups[{i}]"),
                    "channel gains must be sorted strongest first",
                ));
            }
        }
        Ok(())
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn user_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn users(&self) -> impl Iterator<Item = &UserParams> {
        self.groups.iter().flatten()
    }

    /// Bandwidth seen by group `i` while it transmits.
    pub fn group_bandwidth(&self) -> f64 {
        match self.multiplexing {
            Multiplexing::TimeShared => self.bandwidth,
            Multiplexing::FrequencyShared => self.bandwidth / self.groups.len() as f64,
        }
    }

    /// Noise power over one group's band, σ²·B_i.
    pub fn group_noise_power(&self) -> f64 {
        self.noise_psd * self.group_bandwidth()
    }

    /// Band a group transmits on.
    pub fn link(&self) -> Link {
        Link::new(self.group_bandwidth(), self.noise_psd)
    }

    /// Time-sharing factors imposed by the multiplexing mode, if any.
    pub fn fixed_shares(&self) -> Option<Vec<f64>> {
        match self.multiplexing {
            Multiplexing::TimeShared => None,
            Multiplexing::FrequencyShared => Some(vec![1.0; self.groups.len()]),
        }
    }

    /// Completion time when nothing is offloaded, max C·R/F_ij.
    pub fn local_only_time(&self) -> f64 {
        self.users().map(|u| u.local_time(0.0)).fold(0.0, f64::max)
    }

    /// Local energy when nothing is offloaded, Σ C·Q·R.
    pub fn local_only_energy(&self) -> f64 {
        self.users().map(|u| u.local_energy(0.0)).sum()
    }

    /// Per-user lower bounds on offloaded data for a completion time.
    pub fn min_offloads(&self, deadline: f64) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|u| u.min_offload(deadline)).collect())
            .collect()
    }

    pub fn gains(&self, group: usize) -> Vec<f64> {
        self.groups[group].iter().map(|u| u.channel_gain).collect()
    }

    pub fn power_caps(&self, group: usize) -> Vec<f64> {
        self.groups[group].iter().map(|u| u.max_power).collect()
    }

    pub fn with_omega(&self, omega: f64) -> Scenario {
        Scenario { omega, ..self.clone() }
    }

    pub fn with_cloud_capacity(&self, cloud_capacity: CloudCapacity) -> Scenario {
        Scenario {
            cloud_capacity,
            ..self.clone()
        }
    }

    /// Same scenario with every user's power cap replaced.
    pub fn with_max_power(&self, max_power: f64) -> Scenario {
        let mut s = self.clone();
        for u in s.groups.iter_mut().flatten() {
            u.max_power = max_power;
        }
        s
    }

    /// All users, strongest first, as one list.
    pub fn flat_users(&self) -> Vec<UserParams> {
        let mut users: Vec<UserParams> = self.users().copied().collect();
        sort_by_gain(&mut users);
        users
    }

    /// Rebuild the groups from all users with a pairing method.
    pub fn regroup(&self, method: PairingMethod) -> Result<Scenario> {
        Ok(Scenario {
            groups: apply_pairing(&self.flat_users(), method)?,
            ..self.clone()
        })
    }
}

fn sort_by_gain(users: &mut [UserParams]) {
    users.sort_by(|a, b| b.channel_gain.total_cmp(&a.channel_gain));
}

/// User pairing strategies used to form NOMA groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairingMethod {
    /// Strong-strong: ranks (1,2), (3,4), ...
    #[serde(alias = "ss")]
    SS,
    /// Strong-weak: ranks (1,M), (2,M-1), ...
    #[serde(alias = "sw")]
    SW,
    /// Strong-middle: rank k with rank k+M/2.
    #[serde(alias = "sm")]
    SM,
    /// Every user in one NOMA group.
    #[serde(alias = "one-group")]
    OneGroup,
    /// One user per group (reduces to TDMA).
    #[serde(alias = "singletons")]
    Singletons,
}

impl PairingMethod {
    pub const ALL: [PairingMethod; 5] = [
        PairingMethod::SS,
        PairingMethod::SW,
        PairingMethod::SM,
        PairingMethod::OneGroup,
        PairingMethod::Singletons,
    ];

    fn is_pairwise(self) -> bool {
        matches!(self, PairingMethod::SS | PairingMethod::SW | PairingMethod::SM)
    }
}

impl fmt::Display for PairingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PairingMethod::SS => "ss",
            PairingMethod::SW => "sw",
            PairingMethod::SM => "sm",
            PairingMethod::OneGroup => "one-group",
            PairingMethod::Singletons => "singletons",
        };
        f.write_str(s)
    }
}

impl FromStr for PairingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(PairingMethod::SS),
            "sw" => Ok(PairingMethod::SW),
            "sm" => Ok(PairingMethod::SM),
            "one-group" | "onegroup" | "og" => Ok(PairingMethod::OneGroup),
            "singletons" | "singleton" => Ok(PairingMethod::Singletons),
            other => Err(Error::field("pairing", format!("unknown pairing method {other:?}"))),
        }
    }
}

/// Access scheme being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeConfig {
    /// Alternating solver with optimised time sharing.
    Noma,
    /// Multi-start alternating solver with x pinned to 1/N.
    NomaEqualTime { start_count: usize },
    /// Multi-start alternating solver.
    NomaExhaustive { start_count: usize },
    Tdma,
    Fdma,
}

impl SchemeConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeConfig::Noma => "noma",
            SchemeConfig::NomaEqualTime { .. } => "noma-et",
            SchemeConfig::NomaExhaustive { .. } => "noma-exh",
            SchemeConfig::Tdma => "tdma",
            SchemeConfig::Fdma => "fdma",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SchemeConfig::NomaEqualTime { start_count } | SchemeConfig::NomaExhaustive { start_count }
                if start_count == 0 =>
            {
                Err(Error::field("start_count", "must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// Parse a scheme name; `starts` applies to the multi-start variants.
    pub fn parse(name: &str, starts: usize) -> Result<Self> {
        let scheme = match name.to_ascii_lowercase().as_str() {
            "noma" => SchemeConfig::Noma,
            "noma-et" | "noma_et" => SchemeConfig::NomaEqualTime { start_count: starts },
            "noma-exh" | "noma_exh" => SchemeConfig::NomaExhaustive { start_count: starts },
            "tdma" => SchemeConfig::Tdma,
            "fdma" => SchemeConfig::Fdma,
            other => return Err(Error::field("scheme", format!("unknown scheme {other:?}"))),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl fmt::Display for SchemeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of the random drop used to create users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomModel {
    pub user_count: usize,
    /// Distance range to the base station in km.
    pub cell_radius_km: (f64, f64),
    /// Path loss at 1 km in dB.
    pub pathloss_intercept_db: f64,
    /// Path loss slope in dB per decade of distance.
    pub pathloss_slope_db: f64,
    pub shadow_sigma_db: f64,
    pub seed: u64,
    pub cycles_per_bit: (f64, f64),
}

impl Default for RandomModel {
    fn default() -> Self {
        RandomModel {
            user_count: 30,
            cell_radius_km: (0.05, 0.5),
            pathloss_intercept_db: 128.1,
            pathloss_slope_db: 37.6,
            shadow_sigma_db: 4.0,
            seed: 0,
            cycles_per_bit: (500.0, 1500.0),
        }
    }
}

/// Network-wide constants and the per-user values shared by all users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalParams {
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub cloud_capacity: CloudCapacity,
    pub omega: f64,
    pub data_size_bits: f64,
    pub local_capacity_hz: f64,
    pub energy_per_cycle_j: f64,
    pub max_power_dbm: f64,
}

impl Default for GlobalParams {
    fn default() -> Self {
        GlobalParams {
            bandwidth_hz: 10e6,
            noise_psd_dbm_per_hz: -169.0,
            cloud_capacity: CloudCapacity::Finite(2e10),
            omega: 0.5,
            data_size_bits: 100e3,
            local_capacity_hz: 1e9,
            energy_per_cycle_j: 1e-10,
            max_power_dbm: 1.0,
        }
    }
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

/// Linear channel power gain for a distance (km), shadowing (dB) and
/// small-scale power gain.
pub fn channel_gain(model: &RandomModel, distance_km: f64, shadow_db: f64, fading: f64) -> f64 {
    let loss_db = model.pathloss_intercept_db + model.pathloss_slope_db * distance_km.log10() + shadow_db;
    10f64.powf(-loss_db / 10.0) * fading
}

impl RandomModel {
    pub fn validate(&self) -> Result<()> {
        if self.user_count == 0 {
            return Err(Error::field("user_count", "must be positive"));
        }
        let (r0, r1) = self.cell_radius_km;
        if !(r0 > 0.0 && r1 >= r0 && r1.is_finite()) {
            return Err(Error::field("cell_radius_km", format!("need 0 < min <= max, got ({r0}, {r1})")));
        }
        let (c0, c1) = self.cycles_per_bit;
        if !(c0 > 0.0 && c1 >= c0 && c1.is_finite()) {
            return Err(Error::field("cycles_per_bit", format!("need 0 < min <= max, got ({c0}, {c1})")));
        }
        if !(self.shadow_sigma_db >= 0.0 && self.shadow_sigma_db.is_finite()) {
            return Err(Error::field("shadow_sigma_db", "must be non-negative"));
        }
        Ok(())
    }
}

/// Draw users per the random model; all users share the global task values.
pub fn generate_users(model: &RandomModel, global: &GlobalParams) -> Result<Vec<UserParams>> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let shadow = Normal::new(0.0, model.shadow_sigma_db)
        .map_err(|e| Error::field("shadow_sigma_db", e.to_string()))?;
    let max_power = dbm_to_watt(global.max_power_dbm);
    let (r0, r1) = model.cell_radius_km;
    let (c0, c1) = model.cycles_per_bit;
    let mut users = Vec::with_capacity(model.user_count);
    for _ in 0..model.user_count {
        let distance = if r1 > r0 { rng.random_range(r0..r1) } else { r0 };
        let x: f64 = shadow.sample(&mut rng);
        let g: f64 = Exp1.sample(&mut rng);
        let cycles = if c1 > c0 { rng.random_range(c0..c1) } else { c0 };
        users.push(UserParams {
            data_size: global.data_size_bits,
            cycles_per_bit: cycles,
            local_capacity: global.local_capacity_hz,
            energy_per_cycle: global.energy_per_cycle_j,
            max_power,
            // Exp(1) can return exactly 0 with vanishing probability
            channel_gain: channel_gain(model, distance, x, g.max(f64::MIN_POSITIVE)),
        });
    }
    Ok(users)
}

/// Random scenario with every user in one group (strongest first); apply a
/// pairing with [`Scenario::regroup`].
pub fn generate_scenario(model: &RandomModel, global: &GlobalParams) -> Result<Scenario> {
    let mut users = generate_users(model, global)?;
    sort_by_gain(&mut users);
    let scenario = Scenario {
        groups: vec![users],
        bandwidth: global.bandwidth_hz,
        noise_psd: dbm_to_watt(global.noise_psd_dbm_per_hz),
        cloud_capacity: global.cloud_capacity,
        omega: global.omega,
        multiplexing: Multiplexing::TimeShared,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Group users by channel rank.
pub fn apply_pairing(users: &[UserParams], method: PairingMethod) -> Result<Vec<Vec<UserParams>>> {
    let mut ranked = users.to_vec();
    sort_by_gain(&mut ranked);
    let m = ranked.len();
    if method.is_pairwise() && m % 2 == 1 {
        return Err(Error::OddUserCount {
            method: method.to_string(),
            count: m,
        });
    }
    let groups = match method {
        PairingMethod::OneGroup => vec![ranked],
        PairingMethod::Singletons => ranked.into_iter().map(|u| vec![u]).collect(),
        PairingMethod::SS => ranked.chunks(2).map(<[UserParams]>::to_vec).collect(),
        PairingMethod::SW => (0..m / 2).map(|k| vec![ranked[k], ranked[m - 1 - k]]).collect(),
        PairingMethod::SM => (0..m / 2).map(|k| vec![ranked[k], ranked[k + m / 2]]).collect(),
    };
    Ok(groups)
}

/// Scenario variant solved for a baseline scheme.
pub fn derive_baseline(scenario: &Scenario, scheme: SchemeConfig) -> Scenario {
    match scheme {
        SchemeConfig::Noma | SchemeConfig::NomaEqualTime { .. } | SchemeConfig::NomaExhaustive { .. } => {
            scenario.clone()
        }
        SchemeConfig::Tdma => Scenario {
            groups: scenario.flat_users().into_iter().map(|u| vec![u]).collect(),
            multiplexing: Multiplexing::TimeShared,
            ..scenario.clone()
        },
        SchemeConfig::Fdma => Scenario {
            groups: scenario.flat_users().into_iter().map(|u| vec![u]).collect(),
            multiplexing: Multiplexing::FrequencyShared,
            ..scenario.clone()
        },
    }
}
