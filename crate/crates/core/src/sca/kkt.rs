//! Local-optimality certification at an SCA fixed point.
//!
//! The lifted problem whose KKT conditions the converged point satisfies is
//!
//! ```text
//! maximize  ψ(t) = (Π_k t_k)^(1/M)
//! s.t.      √(t_k^{1/α_k} − 1) · β_k ≤ Re(h_k w_k)      [μ_k]
//!           Im(h_k w_k) = 0                            [ζ_k]
//!           √(σ² + Σ_{i≠k} |h_i w_i|²) ≤ β_k           [ν_k]
//!           Σ_{k∈U_b} ‖w_k‖² ≤ P_b                     [π_b]
//! ```
//!
//! with `M` the padded tree size (ψ is a monotone transform of `Π t_k`, so
//! the KKT points coincide). The multipliers come from the final
//! subproblem's cone duals: the AM-GM overestimate matches the left side of
//! the first constraint in value and gradient at the fixed point, so its
//! scalarized multiplier transfers unchanged; norm-form cones transfer
//! directly; the power cone multiplier is rescaled from norm form to
//! squared form.
//!
//! The reported residual is the max-norm over stationarity in `(w, t, β)`,
//! complementarity, and feasibility violations, normalized by the larger of
//! 1, the objective gradient, and the largest multiplier, which makes it
//! invariant to a common rescaling of the weights.

use serde::{Deserialize, Serialize};

use crate::network::{channel_dot, interference_plus_noise, per_bs_power, BeamformerSet, ChannelSet, NetworkConfig};
use crate::solver::ConeSolution;

use super::{ScaResult, ScaVarMap};

/// Multipliers of the lifted problem, recovered from the last subproblem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktMultipliers {
    /// Per-user multiplier of the signal constraint.
    pub mu: Vec<f64>,
    /// Per-user multiplier of the interference-norm constraint.
    pub nu: Vec<f64>,
    /// Per-BS multiplier of the power constraint (squared form).
    pub pi: Vec<f64>,
    /// Per-user multiplier of the `Im(h w) = 0` equality.
    pub zeta: Vec<f64>,
}

/// A candidate point of the lifted problem.
pub(crate) struct Eq6Point {
    pub beams: BeamformerSet,
    pub t: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Eq6Point {
    /// The point induced by beams alone: `β` at the interference norm
    /// (active at any optimum) and `t = (1+γ)^α` (epigraph active).
    fn from_beams(cfg: &NetworkConfig, channels: &ChannelSet, alpha: &[f64], beams: &BeamformerSet) -> Self {
        let mut t = vec![0.0; cfg.num_users];
        let mut beta = vec![0.0; cfg.num_users];
        for k in 0..cfg.num_users {
            let inp = interference_plus_noise(cfg, channels, beams, k);
            beta[k] = inp.sqrt();
            let r = channel_dot(channels.row(cfg.serving_bs(k), k), beams.beam(k)).re;
            let gamma = (r * r / inp).max(0.0);
            t[k] = (1.0 + gamma).powf(alpha[k]);
        }
        Self { beams: beams.clone(), t, beta }
    }
}

fn padded_size(k: usize) -> f64 {
    k.next_power_of_two() as f64
}

/// `ψ(t) = (Π t)^{1/M}`.
fn objective(t: &[f64]) -> f64 {
    let m = padded_size(t.len());
    t.iter().product::<f64>().powf(1.0 / m)
}

/// Lagrangian of the lifted problem (used by the finite-difference tests).
#[cfg(test)]
pub(crate) fn lagrangian(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    alpha: &[f64],
    point: &Eq6Point,
    m: &KktMultipliers,
) -> f64 {
    let mut val = objective(&point.t);
    for k in 0..cfg.num_users {
        let h = channels.row(cfg.serving_bs(k), k);
        let hw = channel_dot(h, point.beams.beam(k));
        let s = (point.t[k].powf(1.0 / alpha[k]) - 1.0).max(0.0).sqrt();
        val -= m.mu[k] * (s * point.beta[k] - hw.re);
        let r = interference_plus_noise(cfg, channels, &point.beams, k).sqrt();
        val -= m.nu[k] * (r - point.beta[k]);
        val -= m.zeta[k] * hw.im;
    }
    for b in 0..cfg.num_bs {
        val -= m.pi[b] * (per_bs_power(cfg, &point.beams, b) - cfg.power_budget[b]);
    }
    val
}

pub(crate) struct Gradients {
    /// Per user: `[∂/∂Re w_k[0..N], ∂/∂Im w_k[0..N]]` concatenated.
    pub w: Vec<f64>,
    pub t: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Analytic gradient of the Lagrangian at a point.
pub(crate) fn gradients(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    alpha: &[f64],
    point: &Eq6Point,
    m: &KktMultipliers,
) -> Gradients {
    let (n, k_users) = (cfg.num_antennas, cfg.num_users);
    let big_m = padded_size(k_users);
    let psi = objective(&point.t);

    let mut grad_t = vec![0.0; k_users];
    let mut grad_beta = vec![0.0; k_users];
    for k in 0..k_users {
        let tk = point.t[k];
        let power = tk.powf(1.0 / alpha[k]); // t^{1/α}
        let s = (power - 1.0).max(0.0).sqrt();
        let s_eff = s.max(1e-12);
        // d/dt √(t^{1/α}−1) = t^{1/α−1} / (2 α s).
        let ds_dt = (power / tk) / (2.0 * alpha[k] * s_eff);
        grad_t[k] = psi / (big_m * tk) - m.mu[k] * point.beta[k] * ds_dt;
        grad_beta[k] = -m.mu[k] * s + m.nu[k];
    }

    let mut grad_w = vec![0.0; 2 * n * k_users];
    for k in 0..k_users {
        let base = 2 * n * k;
        let bk = cfg.serving_bs(k);
        let hk = channels.row(bk, k);
        for i in 0..n {
            // Signal term +μ ∇Re(h w) and phase term −ζ ∇Im(h w).
            grad_w[base + i] += m.mu[k] * hk[i].re - m.zeta[k] * hk[i].im;
            grad_w[base + n + i] += -m.mu[k] * hk[i].im - m.zeta[k] * hk[i].re;
            // Power term −π 2w.
            grad_w[base + i] -= 2.0 * m.pi[bk] * point.beams.beam(k)[i].re;
            grad_w[base + n + i] -= 2.0 * m.pi[bk] * point.beams.beam(k)[i].im;
        }
        // Interference terms: w_k appears in every other user's norm.
        for j in 0..k_users {
            if j == k {
                continue;
            }
            let r_j = interference_plus_noise(cfg, channels, &point.beams, j).sqrt();
            if r_j <= 0.0 {
                continue;
            }
            let hj = channels.row(bk, j); // channel from k's serving BS to user j
            let c = channel_dot(hj, point.beams.beam(k));
            let scale = m.nu[j] / r_j;
            for i in 0..n {
                grad_w[base + i] -= scale * (c.re * hj[i].re + c.im * hj[i].im);
                grad_w[base + n + i] -= scale * (-c.re * hj[i].im + c.im * hj[i].re);
            }
        }
    }
    Gradients { w: grad_w, t: grad_t, beta: grad_beta }
}

/// Recovers the lifted problem's multipliers from the last subproblem's cone
/// duals. `build_phi` must be the φ the subproblem was built with.
pub(crate) fn extract_multipliers(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    _alpha: &[f64],
    sol: &ConeSolution,
    map: &ScaVarMap,
    build_phi: &[f64],
) -> KktMultipliers {
    let k_users = cfg.num_users;
    let beams = map.extract_beams(&sol.primal);
    let mut mu = vec![0.0; k_users];
    let mut nu = vec![0.0; k_users];
    let mut zeta = vec![0.0; k_users];
    for k in 0..k_users {
        let r = channel_dot(channels.row(cfg.serving_bs(k), k), beams.beam(k)).re;
        // The AM-GM cone scalarizes ‖·‖ − (u+1)/2 with u = Re(hw) − x/(2φ);
        // converting its multiplier to the plain G ≤ Re(hw) form divides by
        // the cone's rhs value 2·(u+1)/2.
        let u = r - sol.primal[map.x(k)] / (2.0 * build_phi[k]);
        mu[k] = sol.soc_duals[map.amgm_cones[k]][0] / (u + 1.0).max(1e-12);
        nu[k] = sol.soc_duals[map.interference_cones[k]][0];
        zeta[k] = sol.eq_duals[map.im_equalities[k]];
    }
    let mut pi = vec![0.0; cfg.num_bs];
    for b in 0..cfg.num_bs {
        let norm = per_bs_power(cfg, &beams, b).sqrt();
        pi[b] = if norm > 1e-12 { sol.soc_duals[map.power_cones[b]][0] / (2.0 * norm) } else { 0.0 };
    }
    KktMultipliers { mu, nu, pi, zeta }
}

/// A user below this SINR is treated as muted in the certificate.
const MUTED_SINR: f64 = 1e-6;

/// Max-norm KKT residual at the beam-induced point.
///
/// Muted users (SINR below [`MUTED_SINR`]) are excluded from the `t`/`β`
/// stationarity rows: at `t = 1` the constraint `√(t^{1/α}−1)β ≤ Re(h w)`
/// has an unbounded one-sided derivative, so the smooth KKT system does not
/// exist there — the certificate then covers the reduced problem over the
/// users actually served (a muted user's own multipliers vanish with its
/// beam, which the remaining rows still check).
pub(crate) fn residual_from_parts(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    alpha: &[f64],
    beams: &BeamformerSet,
    m: &KktMultipliers,
) -> f64 {
    let point = Eq6Point::from_beams(cfg, channels, alpha, beams);
    let grads = gradients(cfg, channels, alpha, &point, m);
    let psi = objective(&point.t);
    let big_m = padded_size(cfg.num_users);
    let active: Vec<bool> = (0..cfg.num_users)
        .map(|k| {
            let r = channel_dot(channels.row(cfg.serving_bs(k), k), beams.beam(k)).re;
            let inp = interference_plus_noise(cfg, channels, beams, k);
            r * r / inp >= MUTED_SINR
        })
        .collect();

    let mut denom: f64 = 1.0;
    for k in 0..cfg.num_users {
        denom = denom.max(psi / (big_m * point.t[k]));
        denom = denom.max(m.mu[k].abs()).max(m.nu[k].abs()).max(m.zeta[k].abs());
    }
    for b in 0..cfg.num_bs {
        denom = denom.max(m.pi[b].abs());
    }

    let mut res: f64 = 0.0;
    for g in &grads.w {
        res = res.max(g.abs());
    }
    for k in 0..cfg.num_users {
        if active[k] {
            res = res.max(grads.t[k].abs()).max(grads.beta[k].abs());
        }
    }
    // Complementarity and feasibility of the power constraints; the signal
    // and interference constraints are active by construction of the
    // beam-induced point.
    for b in 0..cfg.num_bs {
        let slack = per_bs_power(cfg, beams, b) - cfg.power_budget[b];
        res = res.max((m.pi[b] * slack).abs());
        res = res.max(slack.max(0.0));
        res = res.max(-m.pi[b].min(0.0)); // dual feasibility
    }
    for k in 0..cfg.num_users {
        let hw = channel_dot(channels.row(cfg.serving_bs(k), k), beams.beam(k));
        res = res.max(hw.im.abs());
        res = res.max(-m.mu[k].min(0.0)).max(-m.nu[k].min(0.0));
    }
    res / denom
}

/// KKT residual of the lifted problem at a finished run's beams, using the
/// multipliers recovered from its final subproblem.
pub fn kkt_residual(cfg: &NetworkConfig, channels: &ChannelSet, result: &ScaResult) -> f64 {
    residual_from_parts(cfg, channels, &result.weights_used, &result.beams, &result.multipliers)
}

/// Interference-bound activeness at a finished run:
/// `max_k |β_k − ‖[σ, interf]‖|` with β from the final subproblem.
pub fn beta_activeness_gap(cfg: &NetworkConfig, channels: &ChannelSet, result: &ScaResult) -> f64 {
    (0..cfg.num_users)
        .map(|k| {
            let norm = interference_plus_noise(cfg, channels, &result.beams, k).sqrt();
            (result.final_iterates.beta[k] - norm).abs()
        })
        .fold(0.0, f64::max)
}
