//! Primal-dual path-following interior-point method for SOCPs.
//!
//! The program is solved through the homogeneous self-dual embedding, so
//! infeasibility and unboundedness come out as certificates instead of
//! iteration-limit ambiguity. Search directions use Nesterov–Todd scaling
//! with a Mehrotra predictor-corrector step; the reduced KKT system is
//! factored densely (LU with partial pivoting) with static regularization
//! and iterative refinement against the unregularized operator. Problem
//! data is Ruiz-equilibrated up front (one uniform factor per cone block so
//! the cones are preserved); all reported metrics refer to the original
//! data.
//!
//! Internal standard form (built by [`super::program::ConeProgram`]):
//!
//! ```text
//! minimize qᵀy   s.t.   G y + s = h,   s ∈ {0}^m_eq × Π SOC(dᵢ)
//! ```
//!
//! Equality rows carry a free dual and a fixed zero slack; every cone block
//! is laid out head-first. A one-dimensional block is exactly a nonnegative
//! slack, so the orthant needs no separate code path.

use serde::{Deserialize, Serialize};

use super::dense::{dot, lu_factor, norm2, norm_inf, LuFactors, Mat};
use super::program::{ConeProgram, StandardForm};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative primal/dual residual tolerance.
    pub tol_feas: f64,
    /// Complementarity gap tolerance (relative to the objective scale).
    pub tol_gap: f64,
    /// Certificate quality tolerance for infeasibility/unboundedness.
    pub tol_infeas: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Static KKT regularization (applied to the equilibrated system).
    pub static_reg: f64,
    /// Iterative refinement passes per KKT solve.
    pub refine_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            tol_infeas: 1e-8,
            max_iters: 100,
            step_fraction: 0.99,
            static_reg: 1e-10,
            refine_steps: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
}

impl KktResiduals {
    fn score(&self, opts: &SolverOptions) -> f64 {
        (self.primal_res / opts.tol_feas).max(self.dual_res / opts.tol_feas).max(self.gap / opts.tol_gap)
    }
}

/// Solver output. Duals are reported for the **maximize** convention: at an
/// optimum, `c = Σ_eq μⱼ aⱼ + Σ_soc (λ₀ᵢ fᵢ − Fᵢᵀ λ̄ᵢ)` holds with
/// `λ₀ᵢ ≥ ‖λ̄ᵢ‖`, i.e. `soc_duals[i][0]` is the nonnegative multiplier of the
/// scalarized constraint `‖Fᵢ y + gᵢ‖ − (fᵢᵀy + dᵢ) ≤ 0`.
#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub soc_duals: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub dual_objective: f64,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    /// Infeasible: a dual ray `z` with `Gᵀz ≈ 0`, `hᵀz = −1`.
    /// Unbounded: a primal ray `y` with `Gy ∈ −K`, `qᵀy = −1`.
    pub certificate: Option<Vec<f64>>,
}

impl ConeSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves the cone program (maximize convention).
pub fn solve(prog: &ConeProgram, opts: &SolverOptions) -> ConeSolution {
    let sf = prog.to_standard_form();
    if sf.h.is_empty() {
        // No constraints at all: optimal iff the objective is zero.
        let n = prog.num_vars();
        let unconstrained_ok = sf.q.iter().all(|&v| v == 0.0);
        return ConeSolution {
            status: if unconstrained_ok { SolveStatus::Optimal } else { SolveStatus::Unbounded },
            primal: vec![0.0; n],
            eq_duals: Vec::new(),
            soc_duals: Vec::new(),
            objective_value: 0.0,
            dual_objective: 0.0,
            kkt_residuals: KktResiduals::default(),
            iterations: 0,
            certificate: None,
        };
    }
    Ipm::new(sf, opts.clone()).run()
}

// ---------------------------------------------------------------------------
// Jordan-algebra kernels for a single second-order cone block.
// ---------------------------------------------------------------------------

/// `u₀² − ‖ū‖²`, computed in factored form to limit cancellation.
fn jnorm_sq(u: &[f64]) -> f64 {
    let tail = norm2(&u[1..]);
    (u[0] - tail) * (u[0] + tail)
}

/// Jordan product `a ∘ b = (aᵀb, a₀b̄ + b₀ā)`.
fn jordan_mul(a: &[f64], b: &[f64], out: &mut [f64]) {
    out[0] = dot(a, b);
    for i in 1..a.len() {
        out[i] = a[0] * b[i] + b[0] * a[i];
    }
}

/// Solves `λ ∘ u = d` for `u` (arrow-matrix inverse).
fn jordan_solve(lam: &[f64], d: &[f64], out: &mut [f64]) {
    let det = jnorm_sq(lam);
    let lam_dot_dbar: f64 = lam[1..].iter().zip(&d[1..]).map(|(a, b)| a * b).sum();
    let u0 = (lam[0] * d[0] - lam_dot_dbar) / det;
    out[0] = u0;
    for i in 1..lam.len() {
        out[i] = (d[i] - u0 * lam[i]) / lam[0];
    }
}

/// Largest `α ≥ 0` with `u + α d` in the cone (`u` strictly interior);
/// `f64::INFINITY` when the ray never leaves.
fn step_to_boundary(u: &[f64], d: &[f64]) -> f64 {
    if u.len() == 1 {
        // Nonnegative slack: exact, avoids the discriminant cancellation.
        return if d[0] < 0.0 { -u[0] / d[0] } else { f64::INFINITY };
    }
    let c0 = jnorm_sq(u);
    let a0 = jnorm_sq(d);
    let b0 = u[0] * d[0] - u[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum::<f64>();
    if a0 < 0.0 {
        // −a0·c0 > 0, so the true discriminant is positive.
        let disc = (b0 * b0 - a0 * c0).max(0.0);
        (b0 + disc.sqrt()) / (-a0)
    } else if b0 < 0.0 {
        let disc = b0 * b0 - a0 * c0;
        // A tangent ray has disc ≈ 0 and can round negative; treat it as a
        // crossing so the step stays short of the touch point.
        if disc >= -1e-10 * b0 * b0 {
            c0 / (-b0 + disc.max(0.0).sqrt())
        } else {
            f64::INFINITY
        }
    } else {
        f64::INFINITY
    }
}

/// Nesterov–Todd scaling of one cone block: `W = η (2 ṽ ṽᵀ − J)` with
/// `ṽᵀJṽ = 1`, so that `λ = W z = W⁻¹ s`.
struct BlockScaling {
    eta: f64,
    wbar: Vec<f64>,
}

impl BlockScaling {
    fn identity(dim: usize) -> Self {
        let mut wbar = vec![0.0; dim];
        wbar[0] = 1.0;
        Self { eta: 1.0, wbar }
    }

    fn compute(s: &[f64], z: &[f64]) -> Self {
        let nrm_s = jnorm_sq(s).max(f64::MIN_POSITIVE).sqrt();
        let nrm_z = jnorm_sq(z).max(f64::MIN_POSITIVE).sqrt();
        let dim = s.len();
        // Scaling point w (J-normalized) with P(w) z = s.
        let mut point = vec![0.0; dim];
        let mut sdotz = 0.0;
        for i in 0..dim {
            sdotz += (s[i] / nrm_s) * (z[i] / nrm_z);
        }
        let gamma = ((1.0 + sdotz) / 2.0).sqrt();
        point[0] = (s[0] / nrm_s + z[0] / nrm_z) / (2.0 * gamma);
        for i in 1..dim {
            point[i] = (s[i] / nrm_s - z[i] / nrm_z) / (2.0 * gamma);
        }
        // The matrix needs the Jordan square root of the scaling point:
        // ṽ₀ = √((w₀+1)/2), ṽ̄ = w̄ / (2 ṽ₀); ṽ is again J-unit.
        let mut wbar = vec![0.0; dim];
        wbar[0] = ((point[0] + 1.0) / 2.0).sqrt();
        for i in 1..dim {
            wbar[i] = point[i] / (2.0 * wbar[0]);
        }
        Self { eta: (nrm_s / nrm_z).sqrt(), wbar }
    }

    /// `out = W u`.
    fn apply_w(&self, u: &[f64], out: &mut [f64]) {
        let wu = dot(&self.wbar, u);
        out[0] = self.eta * (2.0 * self.wbar[0] * wu - u[0]);
        for i in 1..u.len() {
            out[i] = self.eta * (2.0 * self.wbar[i] * wu + u[i]);
        }
    }

    /// `out = W⁻¹ u`; `W⁻¹ = (1/η)(2 (Jṽ)(Jṽ)ᵀ − J)`.
    fn apply_w_inv(&self, u: &[f64], out: &mut [f64]) {
        let mut vu = self.wbar[0] * u[0];
        for i in 1..u.len() {
            vu -= self.wbar[i] * u[i];
        }
        out[0] = (2.0 * self.wbar[0] * vu - u[0]) / self.eta;
        for i in 1..u.len() {
            out[i] = (-2.0 * self.wbar[i] * vu + u[i]) / self.eta;
        }
    }

    /// Writes `−H = −WᵀW` into the KKT matrix block at `(row0, col0)`.
    fn subtract_h_from(&self, k: &mut Mat, row0: usize, col0: usize) {
        let d = self.wbar.len();
        let e2 = self.eta * self.eta;
        let wsq = dot(&self.wbar, &self.wbar);
        for r in 0..d {
            let jr = if r == 0 { self.wbar[0] } else { -self.wbar[r] };
            for c in 0..d {
                let jc = if c == 0 { self.wbar[0] } else { -self.wbar[c] };
                let mut v = 4.0 * wsq * self.wbar[r] * self.wbar[c] - 2.0 * (self.wbar[r] * jc + jr * self.wbar[c]);
                if r == c {
                    v += 1.0;
                }
                *k.at_mut(row0 + r, col0 + c) -= e2 * v;
            }
        }
    }

    /// `out = H u = W(Wu)`, used for refinement matvecs.
    fn apply_h(&self, u: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        self.apply_w(u, tmp);
        self.apply_w(tmp, out);
    }
}

// ---------------------------------------------------------------------------
// The solver proper. All iteration state lives in the equilibrated space;
// metrics and outputs are mapped back to the original data.
// ---------------------------------------------------------------------------

struct Ipm {
    g: Mat,
    h: Vec<f64>,
    q: Vec<f64>,
    m_eq: usize,
    /// Cone blocks as `(row offset, dim)`; offsets include the equality rows.
    blocks: Vec<(usize, usize)>,
    opts: SolverOptions,
    n: usize,
    m: usize,

    // Equilibration: scaled = (row_scale ⊗ col_scale applied to G,
    // sigma_h·row_scale·h, sigma_q·col_scale·q).
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    sigma_h: f64,
    sigma_q: f64,
    orig_q: Vec<f64>,
    orig_h: Vec<f64>,
    norm_h_orig: f64,
    norm_q_orig: f64,

    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,

    best: Option<Snapshot>,
}

struct Snapshot {
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
    metrics: KktResiduals,
    score: f64,
}

struct KktSystem {
    factors: LuFactors,
    /// Unregularized matrix for refinement matvecs.
    matrix: Mat,
}

fn trace_enabled() -> bool {
    std::env::var_os("WSRM_IPM_TRACE").is_some()
}

impl Ipm {
    fn new(sf: StandardForm, opts: SolverOptions) -> Self {
        let StandardForm { mut g, h, q, m_eq, soc_dims } = sf;
        let mut blocks = Vec::with_capacity(soc_dims.len());
        let mut off = m_eq;
        for d in soc_dims {
            blocks.push((off, d));
            off += d;
        }
        let n = q.len();
        let m = h.len();
        let orig_q = q.clone();
        let orig_h = h.clone();

        // Ruiz equilibration; cone blocks share one row factor so the cone
        // geometry is preserved.
        let mut row_scale = vec![1.0; m];
        let mut col_scale = vec![1.0; n];
        for _ in 0..4 {
            let mut row_norm = vec![0.0_f64; m];
            for r in 0..m {
                row_norm[r] = g.row(r).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            }
            let mut row_factor = vec![1.0_f64; m];
            for r in 0..m_eq {
                row_factor[r] = 1.0 / row_norm[r].max(1e-12).sqrt();
            }
            for &(boff, d) in &blocks {
                let block_norm = row_norm[boff..boff + d].iter().fold(0.0_f64, |a, &v| a.max(v)).max(1e-12);
                let f = 1.0 / block_norm.sqrt();
                for rf in &mut row_factor[boff..boff + d] {
                    *rf = f;
                }
            }
            for r in 0..m {
                let f = row_factor[r];
                row_scale[r] *= f;
                for v in g.row_mut(r) {
                    *v *= f;
                }
            }
            let mut col_norm = vec![0.0_f64; n];
            for r in 0..m {
                for (c, v) in g.row(r).iter().enumerate() {
                    col_norm[c] = col_norm[c].max(v.abs());
                }
            }
            for c in 0..n {
                let f = 1.0 / col_norm[c].max(1e-12).sqrt();
                col_scale[c] *= f;
            }
            for r in 0..m {
                for (c, v) in g.row_mut(r).iter_mut().enumerate() {
                    *v *= col_scale_step(&col_norm, c);
                }
            }
        }

        let mut h_scaled: Vec<f64> = h.iter().zip(&row_scale).map(|(v, r)| v * r).collect();
        let mut q_scaled: Vec<f64> = q.iter().zip(&col_scale).map(|(v, c)| v * c).collect();
        let sigma_h = 1.0 / norm_inf(&h_scaled).clamp(1e-8, 1e8).max(1.0_f64.min(f64::INFINITY)).max(1e-12);
        let sigma_q = 1.0 / norm_inf(&q_scaled).clamp(1e-8, 1e8).max(1e-12);
        for v in &mut h_scaled {
            *v *= sigma_h;
        }
        for v in &mut q_scaled {
            *v *= sigma_q;
        }

        let norm_h_orig = norm2(&orig_h);
        let norm_q_orig = norm2(&orig_q);
        Self {
            g,
            h: h_scaled,
            q: q_scaled,
            m_eq,
            blocks,
            opts,
            n,
            m,
            row_scale,
            col_scale,
            sigma_h,
            sigma_q,
            orig_q,
            orig_h,
            norm_h_orig,
            norm_q_orig,
            y: vec![0.0; n],
            z: vec![0.0; m],
            s: vec![0.0; m],
            tau: 1.0,
            kappa: 1.0,
            best: None,
        }
    }

    /// Barrier degree: one per cone block.
    fn degree(&self) -> f64 {
        self.blocks.len().max(1) as f64
    }

    /// Metrics of the embedded iterate measured on the ORIGINAL data.
    fn metrics(&self, r_dual: &[f64], r_prim: &[f64]) -> KktResiduals {
        let inv_tau = 1.0 / self.tau;
        let mut pres_sq = 0.0;
        for (i, r) in r_prim.iter().enumerate() {
            let v = r / (self.row_scale[i] * self.sigma_h);
            pres_sq += v * v;
        }
        let mut dres_sq = 0.0;
        for (j, r) in r_dual.iter().enumerate() {
            let v = r / (self.col_scale[j] * self.sigma_q);
            dres_sq += v * v;
        }
        let pres = pres_sq.sqrt() * inv_tau / (1.0 + self.norm_h_orig);
        let dres = dres_sq.sqrt() * inv_tau / (1.0 + self.norm_q_orig);
        let gap = (dot(&self.s, &self.z) / (self.sigma_h * self.sigma_q)) * inv_tau * inv_tau;
        let pcost = dot(&self.q, &self.y) / (self.sigma_h * self.sigma_q) * inv_tau;
        let dcost = -dot(&self.h, &self.z) / (self.sigma_h * self.sigma_q) * inv_tau;
        let relgap = gap.abs() / (1.0 + pcost.abs().min(dcost.abs()));
        KktResiduals { primal_res: pres, dual_res: dres, gap: relgap }
    }

    fn run(mut self) -> ConeSolution {
        if !self.initialize() {
            return self.finish(SolveStatus::NumericalFailure, 0, KktResiduals::default());
        }

        let n = self.n;
        let m = self.m;
        let mut r_dual = vec![0.0; n];
        let mut r_prim = vec![0.0; m];
        let mut scratch_n = vec![0.0; n];
        let mut scratch_m = vec![0.0; m];
        let mut stall_count = 0_usize;
        let mut metrics_now = KktResiduals::default();

        for iter in 0..self.opts.max_iters {
            // Residuals of the homogeneous embedding (scaled space).
            self.g.matvec_transpose(&self.z, &mut r_dual);
            for i in 0..n {
                r_dual[i] += self.q[i] * self.tau;
            }
            self.g.matvec(&self.y, &mut r_prim);
            for i in 0..m {
                r_prim[i] += self.s[i] - self.h[i] * self.tau;
            }
            let r_gap = dot(&self.q, &self.y) + dot(&self.h, &self.z) + self.kappa;

            metrics_now = self.metrics(&r_dual, &r_prim);
            let score = metrics_now.score(&self.opts);
            let improved = self.best.as_ref().map_or(true, |b| score < b.score * 0.999);
            if improved {
                self.best = Some(Snapshot {
                    y: self.y.clone(),
                    z: self.z.clone(),
                    s: self.s.clone(),
                    tau: self.tau,
                    kappa: self.kappa,
                    metrics: metrics_now,
                    score,
                });
                stall_count = 0;
            } else {
                stall_count += 1;
            }

            if trace_enabled() {
                eprintln!(
                    "ipm iter {iter:3}: pres {:9.3e} dres {:9.3e} relgap {:9.3e} tau {:9.3e} kappa {:9.3e}",
                    metrics_now.primal_res, metrics_now.dual_res, metrics_now.gap, self.tau, self.kappa
                );
            }

            if score <= 1.0 {
                return self.finish(SolveStatus::Optimal, iter, metrics_now);
            }

            // Infeasibility certificates (tested on original data).
            let hz = dot(&self.h, &self.z) / (self.sigma_h * self.sigma_q);
            if hz < 0.0 {
                self.g.matvec_transpose(&self.z, &mut scratch_n);
                let mut nrm = 0.0_f64;
                for (j, v) in scratch_n.iter().enumerate() {
                    let u = v / (self.col_scale[j] * self.sigma_q);
                    nrm += u * u;
                }
                if nrm.sqrt() / (-hz) <= self.opts.tol_infeas * (1.0 + self.norm_h_orig) {
                    let cert: Vec<f64> = (0..m).map(|i| self.z[i] * self.row_scale[i] / self.sigma_q / -hz).collect();
                    let mut sol = self.finish(SolveStatus::Infeasible, iter, metrics_now);
                    sol.certificate = Some(cert);
                    return sol;
                }
            }
            let qy = dot(&self.q, &self.y) / (self.sigma_h * self.sigma_q);
            if qy < 0.0 {
                self.g.matvec(&self.y, &mut scratch_m);
                let mut nrm = 0.0_f64;
                for (i, v) in scratch_m.iter().enumerate() {
                    let u = (v + self.s[i]) / (self.row_scale[i] * self.sigma_h);
                    nrm += u * u;
                }
                if nrm.sqrt() / (-qy) <= self.opts.tol_infeas * (1.0 + self.norm_q_orig) {
                    let cert: Vec<f64> = (0..n).map(|j| self.y[j] * self.col_scale[j] / self.sigma_h / -qy).collect();
                    let mut sol = self.finish(SolveStatus::Unbounded, iter, metrics_now);
                    sol.certificate = Some(cert);
                    return sol;
                }
            }

            // Late-stage noise: once the KKT solves stop improving the
            // iterate, further centering only degrades it.
            if stall_count >= 10 {
                self.restore_best();
                let status =
                    if self.best.as_ref().is_some_and(|b| b.score <= 1.0) { SolveStatus::Optimal } else { SolveStatus::MaxIterations };
                let best_metrics = self.best.as_ref().map(|b| b.metrics).unwrap_or(metrics_now);
                return self.finish(status, iter, best_metrics);
            }

            let mu = (dot(&self.s, &self.z) + self.tau * self.kappa) / (self.degree() + 1.0);
            if !mu.is_finite() {
                self.restore_best();
                return self.finish(SolveStatus::NumericalFailure, iter, metrics_now);
            }

            // NT scalings and scaled complementarity point λ.
            let scalings: Vec<BlockScaling> = self
                .blocks
                .iter()
                .map(|&(off, d)| BlockScaling::compute(&self.s[off..off + d], &self.z[off..off + d]))
                .collect();
            let mut lambda = vec![0.0; m];
            for (bi, &(off, d)) in self.blocks.iter().enumerate() {
                scalings[bi].apply_w(&self.z[off..off + d], &mut lambda[off..off + d]);
            }

            let kkt = match self.factor_kkt(&scalings) {
                Some(k) => k,
                None => {
                    self.restore_best();
                    return self.finish(SolveStatus::NumericalFailure, iter, metrics_now);
                }
            };

            // Constant-column solve: K [y₁; z₁] = [−q; h]. Near convergence
            // the KKT matrix degenerates and this solution blows up; if it
            // cannot be computed accurately the τ coupling is dropped for
            // the iteration (τ is essentially frozen there anyway).
            let mut sol1 = vec![0.0; n + m];
            for i in 0..n {
                sol1[i] = -self.q[i];
            }
            sol1[n..].copy_from_slice(&self.h);
            let sol1_res = self.solve_refined(&kkt, &mut sol1);
            let sol1_ok = sol1_res <= 1e-6 * (1.0 + norm_inf(&self.h).max(norm_inf(&self.q)));
            let sol1_opt = if sol1_ok { Some(sol1.as_slice()) } else { None };

            // Affine (predictor) direction: σ = 0, d_s = −λ∘λ, d_κ = −τκ.
            let mut ds = vec![0.0; m];
            for &(off, d) in &self.blocks {
                let mut sq = vec![0.0; d];
                jordan_mul(&lambda[off..off + d], &lambda[off..off + d], &mut sq);
                for i in 0..d {
                    ds[off + i] = -sq[i];
                }
            }
            let aff =
                self.direction(&kkt, &scalings, &lambda, sol1_opt, &r_dual, &r_prim, r_gap, &ds, -self.tau * self.kappa, 1.0);
            let (_dy_a, dz_a, ds_a, dtau_a, dkappa_a) = match aff {
                Some(d) => d,
                None => {
                    self.restore_best();
                    return self.finish(SolveStatus::NumericalFailure, iter, metrics_now);
                }
            };

            let alpha_aff = self.max_step(&dz_a, &ds_a, dtau_a, dkappa_a).min(1.0);
            let mut mu_aff = (self.tau + alpha_aff * dtau_a) * (self.kappa + alpha_aff * dkappa_a);
            for i in 0..m {
                mu_aff += (self.s[i] + alpha_aff * ds_a[i]) * (self.z[i] + alpha_aff * dz_a[i]);
            }
            mu_aff /= self.degree() + 1.0;
            // Mehrotra exponent with a cap so the residual targets keep
            // shrinking even on nearly-centered iterates.
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3).min(0.99);

            // Corrector: d_s = σμe − λ∘λ − (W⁻ᵀΔs_aff)∘(WΔz_aff).
            for (bi, &(off, d)) in self.blocks.iter().enumerate() {
                let mut wis = vec![0.0; d];
                let mut wz = vec![0.0; d];
                let mut corr = vec![0.0; d];
                scalings[bi].apply_w_inv(&ds_a[off..off + d], &mut wis);
                scalings[bi].apply_w(&dz_a[off..off + d], &mut wz);
                jordan_mul(&wis, &wz, &mut corr);
                let mut sq = vec![0.0; d];
                jordan_mul(&lambda[off..off + d], &lambda[off..off + d], &mut sq);
                ds[off] = sigma * mu - sq[0] - corr[0];
                for i in 1..d {
                    ds[off + i] = -sq[i] - corr[i];
                }
            }
            let dkappa_rhs = sigma * mu - self.tau * self.kappa - dtau_a * dkappa_a;
            let comb =
                self.direction(&kkt, &scalings, &lambda, sol1_opt, &r_dual, &r_prim, r_gap, &ds, dkappa_rhs, 1.0 - sigma);
            let (dy, dz, ds_dir, dtau, dkappa) = match comb {
                Some(d) => d,
                None => {
                    self.restore_best();
                    return self.finish(SolveStatus::NumericalFailure, iter, metrics_now);
                }
            };

            let mut alpha = (self.opts.step_fraction * self.max_step(&dz, &ds_dir, dtau, dkappa)).min(1.0);
            // With feasibility already met, a full step can overshoot μ far
            // below the gap tolerance, where direction noise starts eroding
            // the residuals again; land the gap just below tolerance instead.
            if metrics_now.primal_res <= self.opts.tol_feas
                && metrics_now.dual_res <= self.opts.tol_feas
                && metrics_now.gap > self.opts.tol_gap
                && sigma < 1.0
            {
                let target = 0.25 * self.opts.tol_gap / metrics_now.gap;
                if target < 1.0 {
                    alpha = alpha.min((1.0 - target) / (1.0 - sigma));
                }
            }
            // Rounding can strand the boundary estimate a few ulps long;
            // verify strict interiority and back off if needed.
            let mut interior_tries = 0;
            while !self.step_keeps_interior(&dz, &ds_dir, dtau, dkappa, alpha) && interior_tries < 40 {
                alpha *= 0.7;
                interior_tries += 1;
            }
            if !alpha.is_finite() || alpha <= 1e-13 || interior_tries >= 40 {
                self.restore_best();
                let best_metrics = self.best.as_ref().map(|b| b.metrics).unwrap_or(metrics_now);
                let status = if self.best.as_ref().is_some_and(|b| b.score <= 1.0) {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::NumericalFailure
                };
                return self.finish(status, iter, best_metrics);
            }
            for i in 0..n {
                self.y[i] += alpha * dy[i];
            }
            for i in 0..m {
                self.z[i] += alpha * dz[i];
                self.s[i] += alpha * ds_dir[i];
            }
            // Equality slacks stay pinned at zero.
            for i in 0..self.m_eq {
                self.s[i] = 0.0;
            }
            self.tau += alpha * dtau;
            self.kappa += alpha * dkappa;
            if self.tau <= 0.0 || self.kappa <= 0.0 || !self.tau.is_finite() {
                self.restore_best();
                return self.finish(SolveStatus::NumericalFailure, iter, metrics_now);
            }
            // The embedding is homogeneous: renormalizing to τ = 1 keeps all
            // ratios and stops 1/τ from amplifying floating-point error in
            // the scaled-back residuals.
            if self.tau < 0.2 || self.tau > 5.0 {
                let c = 1.0 / self.tau;
                for v in self.y.iter_mut().chain(&mut self.z).chain(&mut self.s) {
                    *v *= c;
                }
                self.kappa *= c;
                self.tau = 1.0;
            }
        }
        self.restore_best();
        let status =
            if self.best.as_ref().is_some_and(|b| b.score <= 1.0) { SolveStatus::Optimal } else { SolveStatus::MaxIterations };
        let best_metrics = self.best.as_ref().map(|b| b.metrics).unwrap_or(metrics_now);
        self.finish(status, self.opts.max_iters, best_metrics)
    }

    fn restore_best(&mut self) {
        if let Some(b) = &self.best {
            self.y.copy_from_slice(&b.y);
            self.z.copy_from_slice(&b.z);
            self.s.copy_from_slice(&b.s);
            self.tau = b.tau;
            self.kappa = b.kappa;
        }
    }

    /// Least-squares start: one KKT solve with identity scaling for the
    /// primal, one for the dual, slacks shifted into the cone interior.
    fn initialize(&mut self) -> bool {
        let n = self.n;
        let m = self.m;
        let identity: Vec<BlockScaling> = self.blocks.iter().map(|&(_, d)| BlockScaling::identity(d)).collect();
        let kkt = match self.factor_kkt(&identity) {
            Some(k) => k,
            None => return false,
        };

        // Primal: G y + ŝ = h with ŝ of minimum norm on the cone rows.
        let mut sol = vec![0.0; n + m];
        sol[n..].copy_from_slice(&self.h);
        self.solve_refined(&kkt, &mut sol);
        self.y.copy_from_slice(&sol[..n]);
        let mut gy = vec![0.0; m];
        self.g.matvec(&self.y, &mut gy);
        let mut shift = 0.0_f64;
        for &(off, d) in &self.blocks {
            let head = self.h[off] - gy[off];
            let tail: f64 = (1..d).map(|i| (self.h[off + i] - gy[off + i]).powi(2)).sum::<f64>().sqrt();
            shift = shift.max(tail - head);
        }
        for &(off, d) in &self.blocks {
            self.s[off] = self.h[off] - gy[off] + (1.0 + shift);
            for i in 1..d {
                self.s[off + i] = self.h[off + i] - gy[off + i];
            }
        }

        // Dual: Gᵀ z = −q in the least-squares sense.
        let mut sol = vec![0.0; n + m];
        for i in 0..n {
            sol[i] = -self.q[i];
        }
        self.solve_refined(&kkt, &mut sol);
        self.z.copy_from_slice(&sol[n..]);
        let mut shift = 0.0_f64;
        for &(off, d) in &self.blocks {
            let tail: f64 = (1..d).map(|i| self.z[off + i].powi(2)).sum::<f64>().sqrt();
            shift = shift.max(tail - self.z[off]);
        }
        for &(off, _) in &self.blocks {
            self.z[off] += 1.0 + shift;
        }

        self.tau = 1.0;
        self.kappa = 1.0;
        true
    }

    /// Assembles and factors `[[δI, Gᵀ], [G, −H − δI]]`.
    fn factor_kkt(&self, scalings: &[BlockScaling]) -> Option<KktSystem> {
        let n = self.n;
        let m = self.m;
        let mut k = Mat::zeros(n + m, n + m);
        for r in 0..m {
            for c in 0..n {
                let v = self.g.at(r, c);
                if v != 0.0 {
                    *k.at_mut(n + r, c) = v;
                    *k.at_mut(c, n + r) = v;
                }
            }
        }
        for (bi, &(off, _)) in self.blocks.iter().enumerate() {
            scalings[bi].subtract_h_from(&mut k, n + off, n + off);
        }
        let matrix = k.clone();
        let mut delta = self.opts.static_reg;
        for _attempt in 0..3 {
            let mut reg = k.clone();
            for i in 0..n {
                *reg.at_mut(i, i) += delta;
            }
            for i in 0..m {
                *reg.at_mut(n + i, n + i) -= delta;
            }
            if let Some(factors) = lu_factor(&reg) {
                return Some(KktSystem { factors, matrix });
            }
            delta *= 100.0;
        }
        None
    }

    /// Solves the KKT system with iterative refinement against the
    /// unregularized matrix, tracking the best candidate. Returns the
    /// max-norm residual of the returned solution.
    fn solve_refined(&self, kkt: &KktSystem, rhs: &mut Vec<f64>) -> f64 {
        let dim = rhs.len();
        let rhs0 = rhs.clone();
        kkt.factors.solve_in_place(rhs);
        let mut residual = vec![0.0; dim];
        let mut best = rhs.clone();
        let mut best_res = f64::INFINITY;
        let scale = 1.0 + norm_inf(&rhs0);
        for _ in 0..self.opts.refine_steps {
            kkt.matrix.matvec(rhs, &mut residual);
            for i in 0..dim {
                residual[i] = rhs0[i] - residual[i];
            }
            let res_norm = norm_inf(&residual);
            if res_norm < best_res {
                best_res = res_norm;
                best.copy_from_slice(rhs);
            }
            if res_norm <= 1e-15 * scale || res_norm > 2.0 * best_res {
                break;
            }
            kkt.factors.solve_in_place(&mut residual);
            for i in 0..dim {
                rhs[i] += residual[i];
            }
        }
        kkt.matrix.matvec(rhs, &mut residual);
        let mut res_norm = 0.0_f64;
        for i in 0..dim {
            res_norm = res_norm.max((rhs0[i] - residual[i]).abs());
        }
        if res_norm > best_res {
            rhs.copy_from_slice(&best);
            res_norm = best_res;
        }
        res_norm
    }

    /// Computes one Newton direction of the embedding given the
    /// complementarity right-hand sides `ds` (per cone row) and `dkappa_rhs`,
    /// with linear residuals scaled by `res_weight` (1 for the predictor,
    /// 1−σ for the corrector).
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        kkt: &KktSystem,
        scalings: &[BlockScaling],
        lambda: &[f64],
        sol1: Option<&[f64]>,
        r_dual: &[f64],
        r_prim: &[f64],
        r_gap: f64,
        ds: &[f64],
        dkappa_rhs: f64,
        res_weight: f64,
    ) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64, f64)> {
        let n = self.n;
        let m = self.m;

        // W(λ⁻¹∘ds) per cone block (zero on equality rows).
        let mut wlds = vec![0.0; m];
        for (bi, &(off, d)) in self.blocks.iter().enumerate() {
            let mut tmp = vec![0.0; d];
            jordan_solve(&lambda[off..off + d], &ds[off..off + d], &mut tmp);
            scalings[bi].apply_w(&tmp, &mut wlds[off..off + d]);
        }

        let mut rhs = vec![0.0; n + m];
        for i in 0..n {
            rhs[i] = -res_weight * r_dual[i];
        }
        for i in 0..m {
            rhs[n + i] = -res_weight * r_prim[i] - wlds[i];
        }
        self.solve_refined(kkt, &mut rhs);
        let (y2, z2) = rhs.split_at(n);

        let dtau = match sol1 {
            Some(sol1) => {
                let rhs3 = -res_weight * r_gap - dkappa_rhs / self.tau;
                let denom = dot(&self.q, &sol1[..n]) + dot(&self.h, &sol1[n..]) - self.kappa / self.tau;
                if denom.abs() < 1e-300 || !denom.is_finite() {
                    return None;
                }
                (rhs3 - dot(&self.q, y2) - dot(&self.h, z2)) / denom
            }
            None => 0.0,
        };

        let mut dy = y2.to_vec();
        let mut dz = z2.to_vec();
        if let Some(sol1) = sol1 {
            for i in 0..n {
                dy[i] += dtau * sol1[i];
            }
            for i in 0..m {
                dz[i] += dtau * sol1[n + i];
            }
        }
        // Δs = W(λ⁻¹∘ds) − H Δz on cone rows, 0 on equality rows.
        let mut dsv = vec![0.0; m];
        for (bi, &(off, d)) in self.blocks.iter().enumerate() {
            let mut tmp = vec![0.0; d];
            let mut hdz = vec![0.0; d];
            scalings[bi].apply_h(&dz[off..off + d], &mut tmp, &mut hdz);
            for i in 0..d {
                dsv[off + i] = wlds[off + i] - hdz[i];
            }
        }
        let dkappa = (dkappa_rhs - self.kappa * dtau) / self.tau;
        if !dtau.is_finite() || !dkappa.is_finite() {
            return None;
        }
        Some((dy, dz, dsv, dtau, dkappa))
    }

    /// True when stepping by `alpha` keeps every block strictly interior.
    fn step_keeps_interior(&self, dz: &[f64], ds: &[f64], dtau: f64, dkappa: f64, alpha: f64) -> bool {
        if self.tau + alpha * dtau <= 0.0 || self.kappa + alpha * dkappa <= 0.0 {
            return false;
        }
        let mut buf = Vec::new();
        for &(off, d) in &self.blocks {
            for (u, du) in [(&self.s, ds), (&self.z, dz)] {
                buf.clear();
                buf.extend((0..d).map(|i| u[off + i] + alpha * du[off + i]));
                if buf[0] <= 0.0 || jnorm_sq(&buf) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Maximum cone-feasible step for `(z, s, τ, κ)` along the direction.
    fn max_step(&self, dz: &[f64], ds: &[f64], dtau: f64, dkappa: f64) -> f64 {
        let mut alpha = f64::INFINITY;
        for &(off, d) in &self.blocks {
            alpha = alpha.min(step_to_boundary(&self.s[off..off + d], &ds[off..off + d]));
            alpha = alpha.min(step_to_boundary(&self.z[off..off + d], &dz[off..off + d]));
        }
        if dtau < 0.0 {
            alpha = alpha.min(-self.tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / dkappa);
        }
        alpha
    }

    /// Maps the iterate back to the original data and packages the output.
    fn finish(&self, status: SolveStatus, iterations: usize, kkt: KktResiduals) -> ConeSolution {
        let inv_tau = if self.tau > 1e-300 { 1.0 / self.tau } else { 0.0 };
        let primal: Vec<f64> =
            (0..self.n).map(|j| self.y[j] * self.col_scale[j] / self.sigma_h * inv_tau).collect();
        let dual_at = |i: usize| self.z[i] * self.row_scale[i] / self.sigma_q * inv_tau;
        let eq_duals: Vec<f64> = (0..self.m_eq).map(dual_at).collect();
        let soc_duals: Vec<Vec<f64>> =
            self.blocks.iter().map(|&(off, d)| (off..off + d).map(dual_at).collect()).collect();
        let objective_value = -dot(&self.orig_q, &primal);
        let mut dual_objective = 0.0;
        for i in 0..self.m {
            dual_objective += self.orig_h[i] * dual_at(i);
        }
        ConeSolution {
            status,
            primal,
            eq_duals,
            soc_duals,
            objective_value,
            dual_objective,
            kkt_residuals: kkt,
            iterations,
            certificate: None,
        }
    }
}

fn col_scale_step(col_norm: &[f64], c: usize) -> f64 {
    1.0 / col_norm[c].max(1e-12).sqrt()
}
