//! Successive convex approximation for weighted sum-rate maximization.
//!
//! Each iteration solves one SOCP built from the product-of-rates form of
//! the problem:
//!
//! * the objective `Π t_k` enters through a geometric-mean tree rooted at
//!   `z⁰` (leaves padded with constant-1 variables when `K` is not a power
//!   of two);
//! * the nonconvex `√x_k · β_k ≤ Re(h w_k)` is replaced by its AM-GM
//!   overestimate `G(x, β, φ) = (φ/2)β² + x/(2φ)`, tight at `φ = √x/β`,
//!   written as a rotated cone;
//! * `t_k^{1/α_k} ≤ x_k + 1` is linearized around the previous `t_k` (the
//!   weights are first rescaled so every `α_k > 1`, making the power
//!   concave), or represented exactly by a cone tower in
//!   [`run_exact_variant`] after rescaling to `α_k ≤ 1`;
//! * interference norms, per-BS power, and `Im(h w_k) = 0` are cones and
//!   equalities as they stand.
//!
//! Updating `(t, β, x)` from the subproblem optimum and `φ_k = √x_k/β_k`
//! makes the previous optimum feasible for the next subproblem, so the
//! objective trace is nondecreasing; the fixed point satisfies the KKT
//! conditions of the lifted problem, which [`kkt_residual`] certifies
//! numerically.

mod kkt;

pub use kkt::{beta_activeness_gap, kkt_residual, KktMultipliers};

use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network::{
    interference_plus_noise, is_power_feasible, sinr, weighted_sum_rate, BeamformerSet, ChannelSet, NetworkConfig,
};
use crate::rng::substream;
use crate::solver::{solve, ConeProgram, ConeSolution, LinExpr, SolveStatus, SolverOptions};

/// φ is kept inside [PHI_MIN, PHI_MAX] so a muted user (x → 0) or a vanishing
/// interference bound never produces a degenerate next subproblem.
pub const PHI_MIN: f64 = 1e-6;
pub const PHI_MAX: f64 = 1e6;
/// β below this is treated as zero in the φ update.
pub const BETA_FLOOR: f64 = 1e-12;

/// Stream tag for the RandomFeasible initialization substream.
const INIT_TAG: u64 = 0x7363_6100_696e_6974;

#[derive(Debug, thiserror::Error)]
pub enum ScaError {
    #[error("subproblem at iteration {iter} returned {status:?}")]
    Solver { iter: usize, status: SolveStatus },
    #[error("subproblem infeasible at iteration 0 after {retries} phi reductions")]
    InitInfeasible { retries: usize },
    #[error(
        "weights not on the supported exact grid: 1/alpha[{user}] = {value} is not m/2^p with p <= {max_p}, m <= {max_m}"
    )]
    UnsupportedWeights { user: usize, value: f64, max_p: u32, max_m: u32 },
    #[error("feasibility carryover violated at iteration {iter}: eq {eq_violation:.3e}, cone {cone_violation:.3e}")]
    CarryoverViolated { iter: usize, eq_violation: f64, cone_violation: f64 },
    #[error("failed to write debug dump: {0}")]
    DebugDump(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScaleMode {
    /// Rescale all weights by `1.01 / min α_k` so every scaled `α_k > 1`.
    ScaleAbove1,
    /// Use the weights as given.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// Maximum-ratio start: `w_k = √(P_b/|U_b|) hᴴ/‖h‖`, state from its
    /// actual SINRs. Always yields a feasible first subproblem.
    MrtStart,
    /// `φ_k ~ U(0.1, 10)`, `t_k = 1`, zero beams.
    RandomFeasible,
}

#[derive(Debug, Clone)]
pub struct DebugOptions {
    /// Dump each iteration's cone program in the sparse-triplet format.
    pub dump_dir: Option<PathBuf>,
    /// Re-insert the previous optimum into each new subproblem and fail if
    /// it violates any constraint (direct check of the convergence
    /// argument).
    pub check_carryover: bool,
}

impl Default for DebugOptions {
    fn default() -> Self {
        Self { dump_dir: None, check_carryover: false }
    }
}

#[derive(Debug, Clone)]
pub struct ScaConfig {
    /// Stop when the weighted sum rate changes by less than this between
    /// consecutive iterations.
    pub stop_tol: f64,
    pub max_outer_iters: usize,
    pub weight_scale_mode: WeightScaleMode,
    pub init_mode: InitMode,
    /// Extra positive factor applied to all weights before scaling.
    pub scale_factor: f64,
    pub solver: SolverOptions,
    pub debug: DebugOptions,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            stop_tol: 1e-2,
            max_outer_iters: 100,
            weight_scale_mode: WeightScaleMode::ScaleAbove1,
            init_mode: InitMode::MrtStart,
            scale_factor: 1.0,
            solver: SolverOptions::default(),
            debug: DebugOptions::default(),
        }
    }
}

/// Per-user iterates of the algorithm.
#[derive(Debug, Clone)]
pub struct ScaState {
    pub t: Vec<f64>,
    pub beta: Vec<f64>,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub iter: usize,
    /// Weighted sum rate (under the config's original weights) after each
    /// iteration; for an MRT start the first entry is the MRT rate.
    pub objective_trace: Vec<f64>,
    pub beams: BeamformerSet,
}

/// Last accepted subproblem iterates, kept for post-hoc checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalIterates {
    pub t: Vec<f64>,
    pub beta: Vec<f64>,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Output of [`run`] / [`run_exact_variant`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaResult {
    pub beams: BeamformerSet,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub multipliers: KktMultipliers,
    /// The (rescaled) weights the subproblems actually used.
    pub weights_used: Vec<f64>,
    pub final_iterates: FinalIterates,
    /// Wall-clock seconds spent inside each subproblem solve.
    pub solve_seconds: Vec<f64>,
}

impl ScaResult {
    pub fn weighted_sum_rate(&self) -> f64 {
        *self.trace.last().unwrap_or(&0.0)
    }
}

/// Rescales weights so the minimum becomes 1.01 (> 1), preserving ratios
/// exactly. The optimum of the WSRM problem is invariant to a common
/// positive factor on the weights.
pub fn scale_weights(weights: &[f64]) -> Vec<f64> {
    let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let c = 1.01 / min;
    weights.iter().map(|a| a * c).collect()
}

/// AM-GM overestimate `G(x, β, φ) = (φ/2)β² + x/(2φ) ≥ √x·β`, with equality
/// at `φ = √x/β`.
pub fn amgm_overestimate(x: f64, beta: f64, phi: f64) -> f64 {
    debug_assert!(phi > 0.0);
    0.5 * phi * beta * beta + x / (2.0 * phi)
}

/// Tangent majorant of the concave `t ↦ t^{1/α}` (α > 1) at `t_ref`:
/// `L(t) = slope·t + intercept ≥ t^{1/α}` for all `t > 0`, with equality and
/// matching derivative at `t_ref`.
#[derive(Debug, Clone, Copy)]
pub struct PowerLinearization {
    pub slope: f64,
    pub intercept: f64,
}

impl PowerLinearization {
    pub fn eval(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }
}

/// Rejects `alpha ≤ 1`: the tangent of a convex power lies below it, so the
/// linearization direction would be invalid (that case is handled exactly by
/// the cone tower in [`run_exact_variant`]).
pub fn linearize_power(t_ref: f64, alpha: f64) -> Result<PowerLinearization, String> {
    if !(alpha > 1.0) {
        return Err(format!("linearize_power requires alpha > 1, got {alpha}"));
    }
    if !(t_ref > 0.0) {
        return Err(format!("linearize_power requires t_ref > 0, got {t_ref}"));
    }
    let value = t_ref.powf(1.0 / alpha);
    let slope = value / (alpha * t_ref); // (1/α) t_ref^{1/α − 1}
    Ok(PowerLinearization { slope, intercept: value - slope * t_ref })
}

/// Which representation of `t^{1/α} ≤ x + 1` the subproblem uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RateConstraint {
    /// Linearized around the iterate (requires α > 1).
    Linearized,
    /// Exact cone tower on the dyadic-rational grid (requires α ≤ 1).
    ExactTower,
}

/// Variable and constraint indices of one iteration's SOCP.
///
/// Variable order: all `Re(w_k)` blocks (N entries per user), all `Im(w_k)`
/// blocks, then the slacks `t_0..t_{K-1}`, `β_0..β_{K-1}`, `x_0..x_{K-1}`,
/// then the tree variables (padding leaves first, then internal nodes, root
/// last). Exact-tower auxiliaries, when present, come after the tree block.
#[derive(Debug, Clone)]
pub struct ScaVarMap {
    pub num_users: usize,
    pub num_antennas: usize,
    pub t0: usize,
    pub beta0: usize,
    pub x0: usize,
    pub root: usize,
    pub amgm_cones: Vec<usize>,
    pub rate_cones: Vec<usize>,
    pub x_nonneg_cones: Vec<usize>,
    pub interference_cones: Vec<usize>,
    pub power_cones: Vec<usize>,
    pub im_equalities: Vec<usize>,
}

impl ScaVarMap {
    pub fn re_w(&self, k: usize, i: usize) -> usize {
        k * self.num_antennas + i
    }

    pub fn im_w(&self, k: usize, i: usize) -> usize {
        (self.num_users + k) * self.num_antennas + i
    }

    pub fn t(&self, k: usize) -> usize {
        self.t0 + k
    }

    pub fn beta(&self, k: usize) -> usize {
        self.beta0 + k
    }

    pub fn x(&self, k: usize) -> usize {
        self.x0 + k
    }

    /// Copies the beamformers out of a primal vector.
    pub fn extract_beams(&self, primal: &[f64]) -> BeamformerSet {
        let mut beams = BeamformerSet::zeros(self.num_users, self.num_antennas);
        for k in 0..self.num_users {
            for i in 0..self.num_antennas {
                beams.beam_mut(k)[i] = Complex64::new(primal[self.re_w(k, i)], primal[self.im_w(k, i)]);
            }
        }
        beams
    }
}

/// `Re(h · w_k)` as an affine form over the split beamformer variables.
fn re_hw_expr(map: &ScaVarMap, h: &[Complex64], k: usize) -> LinExpr {
    let mut e = LinExpr::default();
    for (i, hi) in h.iter().enumerate() {
        e.terms.push((map.re_w(k, i), hi.re));
        e.terms.push((map.im_w(k, i), -hi.im));
    }
    e
}

/// `Im(h · w_k)` as an affine form.
fn im_hw_expr(map: &ScaVarMap, h: &[Complex64], k: usize) -> LinExpr {
    let mut e = LinExpr::default();
    for (i, hi) in h.iter().enumerate() {
        e.terms.push((map.re_w(k, i), hi.im));
        e.terms.push((map.im_w(k, i), hi.re));
    }
    e
}

/// Decomposes `value` as `m/2^p` with integer `m ≤ max_m`, `p ≤ max_p`.
fn dyadic_rational(value: f64, max_p: u32, max_m: u32) -> Option<(u32, u32)> {
    for p in 0..=max_p {
        let scaled = value * f64::from(1u32 << p);
        let m = scaled.round();
        if (scaled - m).abs() < 1e-9 && m >= 1.0 && m <= f64::from(max_m) {
            return Some((m as u32, p));
        }
    }
    None
}

/// Builds one iteration's SOCP from the current `(φ, t)` iterate.
///
/// `alpha` must be the already-rescaled weights (all > 1 for the linearized
/// variant, all ≤ 1 on the dyadic grid for the exact variant).
pub(crate) fn build_socp(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    alpha: &[f64],
    state: &ScaState,
    variant: RateConstraint,
) -> Result<(ConeProgram, ScaVarMap), ScaError> {
    let (n, k_users) = (cfg.num_antennas, cfg.num_users);
    let mut prog = ConeProgram::new();
    let _w_vars = prog.add_vars(2 * n * k_users);
    let t0 = prog.add_vars(k_users).start;
    let beta0 = prog.add_vars(k_users).start;
    let x0 = prog.add_vars(k_users).start;

    let mut map = ScaVarMap {
        num_users: k_users,
        num_antennas: n,
        t0,
        beta0,
        x0,
        root: 0,
        amgm_cones: Vec::new(),
        rate_cones: Vec::new(),
        x_nonneg_cones: Vec::new(),
        interference_cones: Vec::new(),
        power_cones: Vec::new(),
        im_equalities: Vec::new(),
    };

    // Objective: the root of the geometric-mean tree over the t_k.
    let leaves: Vec<usize> = (0..k_users).map(|k| map.t(k)).collect();
    map.root = prog.add_geometric_mean_tree(&leaves);
    prog.add_objective_term(map.root, 1.0);

    for k in 0..k_users {
        let h = channels.row(cfg.serving_bs(k), k);
        let phi = state.phi[k];
        debug_assert!(phi > 0.0);

        // AM-GM cone: G(x, β, φ) ≤ Re(h w) in rotated form with
        // u = Re(h w) − x/(2φ):
        //   ‖[ (u−1)/2 , √(φ/2) β ]‖ ≤ (u+1)/2.
        let u = re_hw_expr(&map, h, k).plus_term(map.x(k), -1.0 / (2.0 * phi));
        let mut row0 = u.clone();
        for t in &mut row0.terms {
            t.1 *= 0.5;
        }
        row0.constant = (u.constant - 1.0) * 0.5;
        let row1 = LinExpr::term(map.beta(k), (phi / 2.0).sqrt());
        let mut rhs = u.clone();
        for t in &mut rhs.terms {
            t.1 *= 0.5;
        }
        rhs.constant = (u.constant + 1.0) * 0.5;
        map.amgm_cones.push(prog.add_soc(vec![row0, row1], rhs));

        // Rate-power constraint t^{1/α} ≤ x + 1.
        match variant {
            RateConstraint::Linearized => {
                let lin = linearize_power(state.t[k], alpha[k]).map_err(|_| ScaError::UnsupportedWeights {
                    user: k,
                    value: 1.0 / alpha[k],
                    max_p: 0,
                    max_m: 0,
                })?;
                // x + 1 − L(t) ≥ 0.
                map.rate_cones.push(prog.add_nonneg(
                    LinExpr::term(map.x(k), 1.0)
                        .plus_term(map.t(k), -lin.slope)
                        .plus_const(1.0 - lin.intercept),
                ));
            }
            RateConstraint::ExactTower => {
                map.rate_cones.push(add_exact_rate_tower(&mut prog, &map, k, alpha[k])?);
            }
        }

        // Domain of f(x, β) = √x β.
        map.x_nonneg_cones.push(prog.add_nonneg(LinExpr::var(map.x(k))));

        // Interference cone: ‖[σ, h_{b_i,k} w_i (i≠k)]‖ ≤ β_k, complex
        // entries split into real and imaginary rows.
        let mut rows = vec![LinExpr::constant(cfg.noise_var.sqrt())];
        for i in 0..k_users {
            if i == k {
                continue;
            }
            let hik = channels.row(cfg.serving_bs(i), k);
            rows.push(re_hw_expr(&map, hik, i));
            rows.push(im_hw_expr(&map, hik, i));
        }
        map.interference_cones.push(prog.add_soc(rows, LinExpr::var(map.beta(k))));

        // Phase alignment: Im(h w_k) = 0.
        map.im_equalities.push(prog.add_equality(im_hw_expr(&map, h, k)));
    }

    // Per-BS power cones: ‖stacked w_k, k ∈ U_b‖ ≤ √P_b.
    for b in 0..cfg.num_bs {
        let mut rows = Vec::new();
        for k in cfg.users_of(b) {
            for i in 0..n {
                rows.push(LinExpr::var(map.re_w(k, i)));
                rows.push(LinExpr::var(map.im_w(k, i)));
            }
        }
        map.power_cones.push(prog.add_soc(rows, LinExpr::constant(cfg.power_budget[b].sqrt())));
    }

    Ok((prog, map))
}

/// Exact cone-tower representation of `t^{1/α} ≤ x + 1` for `1/α = m/2^p`
/// (α ≤ 1): with `y = x + 1` and `κ = ⌈log₂ m⌉`,
/// `t ≤ geomean(y ×2^p, t ×(2^κ − m), 1 ×(m − 2^p))` over `2^κ` leaves is
/// equivalent to `t^m ≤ y^{2^p}`. For α = 1 it degenerates to `t ≤ x + 1`.
/// Returns the id of the final linear cone.
fn add_exact_rate_tower(prog: &mut ConeProgram, map: &ScaVarMap, k: usize, alpha: f64) -> Result<usize, ScaError> {
    const MAX_P: u32 = 6;
    const MAX_M: u32 = 64;
    let inv_alpha = 1.0 / alpha;
    let (m, p) = dyadic_rational(inv_alpha, MAX_P, MAX_M).ok_or(ScaError::UnsupportedWeights {
        user: k,
        value: inv_alpha,
        max_p: MAX_P,
        max_m: MAX_M,
    })?;
    if m < 1u32 << p {
        // Would mean α > 1: nonconvex side, not representable.
        return Err(ScaError::UnsupportedWeights { user: k, value: inv_alpha, max_p: MAX_P, max_m: MAX_M });
    }
    if m == 1u32 << p {
        // α = 1: linear t ≤ x + 1.
        return Ok(prog.add_nonneg(LinExpr::term(map.x(k), 1.0).plus_term(map.t(k), -1.0).plus_const(1.0)));
    }
    let kappa = 32 - (m - 1).leading_zeros(); // ceil(log2 m), m >= 2 here
    let y = prog.add_var();
    prog.add_equality(LinExpr::term(y, 1.0).plus_term(map.x(k), -1.0).plus_const(-1.0));
    let mut leaves = Vec::with_capacity(1 << kappa);
    for _ in 0..(1u32 << p) {
        leaves.push(y);
    }
    for _ in 0..((1u32 << kappa) - m) {
        leaves.push(map.t(k));
    }
    if m > 1u32 << p {
        let one = prog.add_var();
        prog.add_equality(LinExpr::term(one, 1.0).plus_const(-1.0));
        for _ in 0..(m - (1u32 << p)) {
            leaves.push(one);
        }
    }
    let root = prog.add_geometric_mean_tree(&leaves);
    Ok(prog.add_nonneg(LinExpr::term(root, 1.0).plus_term(map.t(k), -1.0)))
}

/// Maximum-ratio beams: `w_k = √(P_b/|U_b|) hᴴ/‖h‖`.
pub fn mrt_beams(cfg: &NetworkConfig, channels: &ChannelSet) -> BeamformerSet {
    let mut beams = BeamformerSet::zeros(cfg.num_users, cfg.num_antennas);
    for k in 0..cfg.num_users {
        let b = cfg.serving_bs(k);
        let share = cfg.power_budget[b] / cfg.users_of(b).len() as f64;
        let h = channels.row(b, k);
        let norm = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 && share > 0.0 {
            let scale = share.sqrt() / norm;
            for (wi, hi) in beams.beam_mut(k).iter_mut().zip(h) {
                *wi = hi.conj() * scale;
            }
        }
    }
    beams
}

fn clamp_phi(x: f64, beta: f64) -> f64 {
    if beta <= BETA_FLOOR {
        return PHI_MAX;
    }
    (x.max(0.0).sqrt() / beta).clamp(PHI_MIN, PHI_MAX)
}

fn init_state(cfg: &NetworkConfig, channels: &ChannelSet, alpha: &[f64], sca: &ScaConfig, seed: u64) -> ScaState {
    let k_users = cfg.num_users;
    match sca.init_mode {
        InitMode::MrtStart => {
            let beams = mrt_beams(cfg, channels);
            let mut t = vec![0.0; k_users];
            let mut beta = vec![0.0; k_users];
            let mut x = vec![0.0; k_users];
            let mut phi = vec![0.0; k_users];
            for k in 0..k_users {
                let g = sinr(cfg, channels, &beams, k);
                beta[k] = interference_plus_noise(cfg, channels, &beams, k).sqrt();
                x[k] = g;
                t[k] = (1.0 + g).powf(alpha[k]);
                phi[k] = clamp_phi(x[k], beta[k]);
            }
            let wsr = weighted_sum_rate(cfg, channels, &beams);
            ScaState { t, beta, x, phi, iter: 0, objective_trace: vec![wsr], beams }
        }
        InitMode::RandomFeasible => {
            let mut rng = substream(seed, INIT_TAG, 0);
            let phi = (0..k_users).map(|_| 0.1 + 9.9 * rng.gen::<f64>()).collect();
            ScaState {
                t: vec![1.0; k_users],
                beta: vec![cfg.noise_var.sqrt(); k_users],
                x: vec![0.0; k_users],
                phi,
                iter: 0,
                objective_trace: Vec::new(),
                beams: BeamformerSet::zeros(k_users, cfg.num_antennas),
            }
        }
    }
}

/// Copies the subproblem optimum into the state and sets
/// `φ_k = √x_k / β_k` (clamped to `[PHI_MIN, PHI_MAX]`; `β ≤ BETA_FLOOR`
/// clamps to `PHI_MAX`). Appends the new weighted sum rate to the trace.
pub fn update_state(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    solution: &ConeSolution,
    map: &ScaVarMap,
    state: &mut ScaState,
) {
    for k in 0..map.num_users {
        state.t[k] = solution.primal[map.t(k)];
        state.beta[k] = solution.primal[map.beta(k)];
        state.x[k] = solution.primal[map.x(k)].max(0.0);
        state.phi[k] = clamp_phi(state.x[k], state.beta[k]);
    }
    state.beams = map.extract_beams(&solution.primal);
    state.iter += 1;
    state.objective_trace.push(weighted_sum_rate(cfg, channels, &state.beams));
}

/// Runs the linearized algorithm (one SOCP per iteration) to the stopping
/// rule `|Δ WSR| < stop_tol`.
pub fn run(cfg: &NetworkConfig, channels: &ChannelSet, sca: &ScaConfig, seed: u64) -> Result<ScaResult, ScaError> {
    run_variant(cfg, channels, sca, seed, RateConstraint::Linearized)
}

/// Runs the exact (non-linearized) variant: weights are rescaled down to
/// `α_k ≤ 1` and `t^{1/α} ≤ x+1` is represented exactly by cone towers.
/// Requires every `1/α_k` (after rescaling by the maximum weight) to be a
/// dyadic rational `m/2^p`, `p ≤ 6`, `m ≤ 64`; equal weights reduce to the
/// linear constraint `t ≤ x + 1`.
pub fn run_exact_variant(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    sca: &ScaConfig,
    seed: u64,
) -> Result<ScaResult, ScaError> {
    run_variant(cfg, channels, sca, seed, RateConstraint::ExactTower)
}

fn scaled_weights(cfg: &NetworkConfig, sca: &ScaConfig, variant: RateConstraint) -> Vec<f64> {
    let base: Vec<f64> = cfg.weights.iter().map(|a| a * sca.scale_factor).collect();
    match variant {
        RateConstraint::Linearized => match sca.weight_scale_mode {
            WeightScaleMode::ScaleAbove1 => scale_weights(&base),
            WeightScaleMode::Raw => base,
        },
        // The exact tower needs the concave direction flipped: α_k ≤ 1.
        RateConstraint::ExactTower => {
            let max = base.iter().cloned().fold(0.0, f64::max);
            base.iter().map(|a| a / max).collect()
        }
    }
}

fn run_variant(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    sca: &ScaConfig,
    seed: u64,
    variant: RateConstraint,
) -> Result<ScaResult, ScaError> {
    const MAX_INIT_RETRIES: usize = 8;
    let alpha = scaled_weights(cfg, sca, variant);
    let mut state = init_state(cfg, channels, &alpha, sca, seed);
    let mut prev_primal: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut init_retries = 0;
    let mut last: Option<(ConeSolution, ScaVarMap, Vec<f64>)> = None;
    let mut solve_seconds = Vec::new();

    while state.iter < sca.max_outer_iters {
        let (prog, map) = build_socp(cfg, channels, &alpha, &state, variant)?;
        if let Some(dir) = &sca.debug.dump_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("iter_{:03}.socp", state.iter)), prog.to_triplet_text())?;
        }
        if sca.debug.check_carryover {
            if let Some(prev) = &prev_primal {
                let (eq, cone) = prog.point_violation(prev);
                if eq > 1e-6 || cone > 1e-6 {
                    return Err(ScaError::CarryoverViolated {
                        iter: state.iter,
                        eq_violation: eq,
                        cone_violation: cone,
                    });
                }
            }
        }
        let started = Instant::now();
        let sol = solve(&prog, &sca.solver);
        solve_seconds.push(started.elapsed().as_secs_f64());
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible
                if state.iter == 0 && sca.init_mode == InitMode::RandomFeasible && init_retries < MAX_INIT_RETRIES =>
            {
                // Large sampled φ can make the first subproblem infeasible at
                // low SNR (the signal floor φσ²/2 exceeds the power budget);
                // halving φ restores feasibility without leaving the random
                // regime.
                for p in &mut state.phi {
                    *p = (*p / 2.0).max(PHI_MIN);
                }
                init_retries += 1;
                continue;
            }
            SolveStatus::Infeasible if init_retries >= MAX_INIT_RETRIES => {
                return Err(ScaError::InitInfeasible { retries: init_retries });
            }
            status => return Err(ScaError::Solver { iter: state.iter, status }),
        }
        prev_primal = Some(sol.primal.clone());
        let build_phi = state.phi.clone();
        update_state(cfg, channels, &sol, &map, &mut state);
        last = Some((sol, map, build_phi));
        let n = state.objective_trace.len();
        if n >= 2 && (state.objective_trace[n - 1] - state.objective_trace[n - 2]).abs() < sca.stop_tol {
            converged = true;
            break;
        }
    }

    let (sol, map, build_phi) = last.ok_or(ScaError::InitInfeasible { retries: init_retries })?;
    let iterations = state.iter;

    // Certification passes: multipliers recovered from an interior-point
    // solution carry an O(√gap) scalarization error, and the residual of
    // the certificate scales with the distance to the SCA fixed point. Both
    // shrink by re-solving the subproblem at the converged iterate with a
    // much tighter gap; a few extra fixed-point passes contract the
    // remaining mismatch. Best-effort: a pass that does not reach a clean
    // point is discarded.
    let mut multipliers = kkt::extract_multipliers(cfg, channels, &alpha, &sol, &map, &build_phi);
    let mut kkt_residual = kkt::residual_from_parts(cfg, channels, &alpha, &state.beams, &multipliers);
    if converged {
        let cert_opts = SolverOptions {
            tol_feas: sca.solver.tol_feas.min(1e-9),
            tol_gap: 1e-12,
            max_iters: sca.solver.max_iters.max(150),
            ..sca.solver.clone()
        };
        for _pass in 0..4 {
            if kkt_residual < 1e-6 {
                break;
            }
            let Ok((cert_prog, cert_map)) = build_socp(cfg, channels, &alpha, &state, variant) else {
                break;
            };
            let started = Instant::now();
            let cert = solve(&cert_prog, &cert_opts);
            solve_seconds.push(started.elapsed().as_secs_f64());
            let clean = matches!(cert.status, SolveStatus::Optimal | SolveStatus::MaxIterations)
                && cert.kkt_residuals.primal_res < 1e-6
                && cert.kkt_residuals.dual_res < 1e-6;
            if !clean {
                break;
            }
            let pass_phi = state.phi.clone();
            update_state(cfg, channels, &cert, &cert_map, &mut state);
            let cand_mult = kkt::extract_multipliers(cfg, channels, &alpha, &cert, &cert_map, &pass_phi);
            let cand_res = kkt::residual_from_parts(cfg, channels, &alpha, &state.beams, &cand_mult);
            let stalled = cand_res > 0.9 * kkt_residual;
            multipliers = cand_mult;
            kkt_residual = cand_res;
            if stalled {
                break;
            }
        }
    }
    debug_assert!(is_power_feasible(cfg, &state.beams, 1e-6));
    Ok(ScaResult {
        beams: state.beams,
        trace: state.objective_trace,
        iterations,
        converged,
        kkt_residual,
        multipliers,
        weights_used: alpha,
        final_iterates: FinalIterates { t: state.t, beta: state.beta, x: state.x, phi: state.phi },
        solve_seconds,
    })
}

#[cfg(test)]
mod tests;
