//! Multicell MISO downlink model: topology, channels, beamformers, and the
//! rate/power evaluations every algorithm is scored against.
//!
//! A network has `B` coordinated base stations with `N` transmit antennas
//! each and `K` single-antenna users, each served by exactly one BS. The
//! SINR of user `k` is
//!
//! ```text
//!            |h[b(k),k] w_k|^2
//! γ_k = ------------------------------
//!        σ² + Σ_{i≠k} |h[b(i),k] w_i|^2
//! ```
//!
//! where user `i`'s interference at user `k` flows through the channel from
//! `i`'s serving BS to user `k` (intra-cell interferers share `b(i) = b(k)`).
//! The weighted sum rate is `Σ_k α_k log2(1 + γ_k)` in bits/s/Hz.
//!
//! All types here are immutable after construction and all operations are
//! pure functions, so Monte Carlo callers may share them across threads
//! freely.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::rng::{complex_cn01, substream};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("assignment length {got} does not match num_users {expected}")]
    AssignmentLength { got: usize, expected: usize },
    #[error("user {user} is assigned to BS {bs}, but num_bs = {num_bs}")]
    AssignmentOutOfRange { user: usize, bs: usize, num_bs: usize },
    #[error("power budget of BS {bs} is negative ({value})")]
    NegativePower { bs: usize, value: f64 },
    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("weight of user {user} must be positive, got {value}")]
    NonPositiveWeight { user: usize, value: f64 },
    #[error("power budget length {got} does not match num_bs {expected}")]
    PowerLength { got: usize, expected: usize },
    #[error("weights length {got} does not match num_users {expected}")]
    WeightsLength { got: usize, expected: usize },
    #[error("dimensions must be positive (B={num_bs}, N={num_antennas}, K={num_users})")]
    ZeroDimension { num_bs: usize, num_antennas: usize, num_users: usize },
    #[error("non-finite channel entry at (bs {bs}, user {user})")]
    NonFiniteChannel { bs: usize, user: usize },
}

/// Topology and scalar parameters of the network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub num_bs: usize,
    pub num_antennas: usize,
    pub num_users: usize,
    /// `assignment[k]` is the serving BS of user `k`.
    pub assignment: Vec<usize>,
    /// Per-BS transmit power budget, linear scale.
    pub power_budget: Vec<f64>,
    /// Noise variance σ² (same for every user).
    pub noise_var: f64,
    /// Per-user rate weights α_k.
    pub weights: Vec<f64>,
}

impl NetworkConfig {
    pub fn new(
        num_bs: usize,
        num_antennas: usize,
        num_users: usize,
        assignment: Vec<usize>,
        power_budget: Vec<f64>,
        noise_var: f64,
        weights: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let cfg = Self { num_bs, num_antennas, num_users, assignment, power_budget, noise_var, weights };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single cell: one BS with power budget `power` serving all `num_users`
    /// with unit noise-relative weights `weights`.
    pub fn single_cell(num_antennas: usize, num_users: usize, power: f64, weights: Vec<f64>) -> Result<Self, NetworkError> {
        Self::new(1, num_antennas, num_users, vec![0; num_users], vec![power], 1.0, weights)
    }

    /// `num_bs` symmetric cells, `users_per_cell` users each, all BSs with the
    /// same power budget. Users are assigned in blocks: users `[b*u, (b+1)*u)`
    /// belong to BS `b`.
    pub fn symmetric_cells(
        num_bs: usize,
        num_antennas: usize,
        users_per_cell: usize,
        power: f64,
        weights: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let num_users = num_bs * users_per_cell;
        let assignment = (0..num_users).map(|k| k / users_per_cell.max(1)).collect();
        Self::new(num_bs, num_antennas, num_users, assignment, vec![power; num_bs], 1.0, weights)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.num_bs == 0 || self.num_antennas == 0 || self.num_users == 0 {
            return Err(NetworkError::ZeroDimension {
                num_bs: self.num_bs,
                num_antennas: self.num_antennas,
                num_users: self.num_users,
            });
        }
        if self.assignment.len() != self.num_users {
            return Err(NetworkError::AssignmentLength { got: self.assignment.len(), expected: self.num_users });
        }
        if let Some((user, &bs)) = self.assignment.iter().enumerate().find(|(_, &b)| b >= self.num_bs) {
            return Err(NetworkError::AssignmentOutOfRange { user, bs, num_bs: self.num_bs });
        }
        if self.power_budget.len() != self.num_bs {
            return Err(NetworkError::PowerLength { got: self.power_budget.len(), expected: self.num_bs });
        }
        if let Some((bs, &p)) = self.power_budget.iter().enumerate().find(|(_, &p)| !(p >= 0.0)) {
            return Err(NetworkError::NegativePower { bs, value: p });
        }
        if !(self.noise_var > 0.0) {
            return Err(NetworkError::NonPositiveNoise(self.noise_var));
        }
        if self.weights.len() != self.num_users {
            return Err(NetworkError::WeightsLength { got: self.weights.len(), expected: self.num_users });
        }
        if let Some((user, &a)) = self.weights.iter().enumerate().find(|(_, &a)| !(a > 0.0)) {
            return Err(NetworkError::NonPositiveWeight { user, value: a });
        }
        Ok(())
    }

    /// Serving BS of user `k`.
    pub fn serving_bs(&self, k: usize) -> usize {
        self.assignment[k]
    }

    /// Users served by BS `b`.
    pub fn users_of(&self, b: usize) -> Vec<usize> {
        (0..self.num_users).filter(|&k| self.assignment[k] == b).collect()
    }
}

/// Channel row vectors `h[b][k]` of length `N` for every (BS, user) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    num_bs: usize,
    num_users: usize,
    num_antennas: usize,
    /// Layout: `h[(b * num_users + k) * num_antennas + i]`.
    entries: Vec<Complex64>,
}

impl ChannelSet {
    pub fn new(num_bs: usize, num_users: usize, num_antennas: usize, entries: Vec<Complex64>) -> Self {
        assert_eq!(entries.len(), num_bs * num_users * num_antennas);
        Self { num_bs, num_users, num_antennas, entries }
    }

    /// Channel row vector from BS `b` to user `k`.
    pub fn row(&self, b: usize, k: usize) -> &[Complex64] {
        let start = (b * self.num_users + k) * self.num_antennas;
        &self.entries[start..start + self.num_antennas]
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn validate(&self, cfg: &NetworkConfig) -> Result<(), NetworkError> {
        assert_eq!(self.num_bs, cfg.num_bs);
        assert_eq!(self.num_users, cfg.num_users);
        assert_eq!(self.num_antennas, cfg.num_antennas);
        for b in 0..self.num_bs {
            for k in 0..self.num_users {
                if self.row(b, k).iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(NetworkError::NonFiniteChannel { bs: b, user: k });
                }
            }
        }
        Ok(())
    }
}

/// One complex beamforming vector of length `N` per user.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    num_users: usize,
    num_antennas: usize,
    /// Layout: `w[k * num_antennas + i]`.
    entries: Vec<Complex64>,
}

impl BeamformerSet {
    pub fn zeros(num_users: usize, num_antennas: usize) -> Self {
        Self { num_users, num_antennas, entries: vec![Complex64::new(0.0, 0.0); num_users * num_antennas] }
    }

    pub fn from_vectors(vectors: Vec<Vec<Complex64>>) -> Self {
        let num_users = vectors.len();
        let num_antennas = vectors.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(num_users * num_antennas);
        for v in &vectors {
            assert_eq!(v.len(), num_antennas);
            entries.extend_from_slice(v);
        }
        Self { num_users, num_antennas, entries }
    }

    pub fn beam(&self, k: usize) -> &[Complex64] {
        &self.entries[k * self.num_antennas..(k + 1) * self.num_antennas]
    }

    pub fn beam_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.entries[k * self.num_antennas..(k + 1) * self.num_antennas]
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }
}

/// `h · w` for a channel row and a beamformer column (no conjugation).
pub fn channel_dot(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    debug_assert_eq!(h.len(), w.len());
    h.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// i.i.d. Rayleigh channels: every entry of `h[b][k]` is CN(0, 1).
///
/// Deterministic in `seed`; entries for each (BS, user) pair come from their
/// own substream, so draws are independent of iteration order.
pub fn generate_rayleigh_channels(cfg: &NetworkConfig, seed: u64) -> ChannelSet {
    let mut entries = Vec::with_capacity(cfg.num_bs * cfg.num_users * cfg.num_antennas);
    for b in 0..cfg.num_bs {
        for k in 0..cfg.num_users {
            let mut rng = substream(seed, b as u64, k as u64);
            for _ in 0..cfg.num_antennas {
                entries.push(complex_cn01(&mut rng));
            }
        }
    }
    ChannelSet::new(cfg.num_bs, cfg.num_users, cfg.num_antennas, entries)
}

/// Interference-plus-noise power at user `k`:
/// `σ² + Σ_{i≠k} |h[b(i),k] w_i|²`.
pub fn interference_plus_noise(cfg: &NetworkConfig, channels: &ChannelSet, beams: &BeamformerSet, k: usize) -> f64 {
    let mut acc = cfg.noise_var;
    for i in 0..cfg.num_users {
        if i == k {
            continue;
        }
        let r = channel_dot(channels.row(cfg.serving_bs(i), k), beams.beam(i));
        acc += r.norm_sqr();
    }
    acc
}

/// SINR γ_k of user `k`.
pub fn sinr(cfg: &NetworkConfig, channels: &ChannelSet, beams: &BeamformerSet, k: usize) -> f64 {
    let sig = channel_dot(channels.row(cfg.serving_bs(k), k), beams.beam(k)).norm_sqr();
    sig / interference_plus_noise(cfg, channels, beams, k)
}

/// `Σ_k α_k log2(1 + γ_k)` in bits/s/Hz.
pub fn weighted_sum_rate(cfg: &NetworkConfig, channels: &ChannelSet, beams: &BeamformerSet) -> f64 {
    (0..cfg.num_users)
        .map(|k| cfg.weights[k] * (1.0 + sinr(cfg, channels, beams, k)).log2())
        .sum()
}

/// Total power transmitted by BS `b`: `Σ_{k∈U_b} ‖w_k‖²`.
pub fn per_bs_power(cfg: &NetworkConfig, beams: &BeamformerSet, b: usize) -> f64 {
    (0..cfg.num_users)
        .filter(|&k| cfg.serving_bs(k) == b)
        .map(|k| beams.beam(k).iter().map(Complex64::norm_sqr).sum::<f64>())
        .sum()
}

/// True iff every BS satisfies its power budget within `tol`.
pub fn is_power_feasible(cfg: &NetworkConfig, beams: &BeamformerSet, tol: f64) -> bool {
    (0..cfg.num_bs).all(|b| per_bs_power(cfg, beams, b) <= cfg.power_budget[b] + tol)
}

// ---------------------------------------------------------------------------
// JSON schema
//
// Complex numbers serialize as [re, im] pairs. A channel set is
//   { "num_bs": B, "num_users": K, "num_antennas": N,
//     "h": [ B ][ K ][ N ][2] }
// and a beamformer set is
//   { "num_users": K, "num_antennas": N, "w": [ K ][ N ][2] }.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ChannelSetJson {
    num_bs: usize,
    num_users: usize,
    num_antennas: usize,
    h: Vec<Vec<Vec<[f64; 2]>>>,
}

impl Serialize for ChannelSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let h = (0..self.num_bs)
            .map(|b| {
                (0..self.num_users)
                    .map(|k| self.row(b, k).iter().map(|c| [c.re, c.im]).collect())
                    .collect()
            })
            .collect();
        ChannelSetJson { num_bs: self.num_bs, num_users: self.num_users, num_antennas: self.num_antennas, h }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ChannelSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ChannelSetJson::deserialize(deserializer)?;
        let mut entries = Vec::with_capacity(raw.num_bs * raw.num_users * raw.num_antennas);
        if raw.h.len() != raw.num_bs {
            return Err(serde::de::Error::custom("channel array length does not match num_bs"));
        }
        for bs in &raw.h {
            if bs.len() != raw.num_users {
                return Err(serde::de::Error::custom("channel array length does not match num_users"));
            }
            for row in bs {
                if row.len() != raw.num_antennas {
                    return Err(serde::de::Error::custom("channel row length does not match num_antennas"));
                }
                entries.extend(row.iter().map(|p| Complex64::new(p[0], p[1])));
            }
        }
        Ok(ChannelSet::new(raw.num_bs, raw.num_users, raw.num_antennas, entries))
    }
}

#[derive(Serialize, Deserialize)]
struct BeamformerSetJson {
    num_users: usize,
    num_antennas: usize,
    w: Vec<Vec<[f64; 2]>>,
}

impl Serialize for BeamformerSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let w = (0..self.num_users)
            .map(|k| self.beam(k).iter().map(|c| [c.re, c.im]).collect())
            .collect();
        BeamformerSetJson { num_users: self.num_users, num_antennas: self.num_antennas, w }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BeamformerSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BeamformerSetJson::deserialize(deserializer)?;
        if raw.w.len() != raw.num_users || raw.w.iter().any(|v| v.len() != raw.num_antennas) {
            return Err(serde::de::Error::custom("beamformer array shape mismatch"));
        }
        Ok(BeamformerSet::from_vectors(
            raw.w
                .into_iter()
                .map(|v| v.into_iter().map(|p| Complex64::new(p[0], p[1])).collect())
                .collect(),
        ))
    }
}
