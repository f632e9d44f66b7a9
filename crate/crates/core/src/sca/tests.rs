use num_complex::Complex64;
use rand::Rng;

use super::kkt::{gradients, lagrangian, Eq6Point};
use super::*;
use crate::network::generate_rayleigh_channels;
use crate::solver::solve as solve_cone;

fn paper_weights() -> Vec<f64> {
    vec![0.14, 0.21, 0.28, 0.36]
}

#[test]
fn scale_weights_uniform() {
    let scaled = scale_weights(&[1.0, 1.0, 1.0, 1.0]);
    for s in scaled {
        assert!((s - 1.01).abs() < 1e-15);
    }
}

#[test]
fn scale_weights_preserves_ratios() {
    let w = paper_weights();
    let scaled = scale_weights(&w);
    assert!((scaled[0] - 1.01).abs() < 1e-12);
    assert!((scaled[0] - 1.01 / 0.14 * 0.14).abs() < 1e-12);
    for (i, j) in [(3, 0), (2, 1), (3, 2)] {
        let got = scaled[i] / scaled[j];
        let want = w[i] / w[j];
        assert!((got - want).abs() <= 1e-15 * want, "ratio {i}/{j}");
    }
    assert!(scaled.iter().all(|&s| s > 1.0));
}

#[test]
fn amgm_hand_values() {
    assert!((amgm_overestimate(1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
    assert!((amgm_overestimate(4.0, 1.0, 1.0) - 2.5).abs() < 1e-15);
    let (beta, phi) = (1.7, 0.3);
    assert!((amgm_overestimate(0.0, beta, phi) - 0.5 * phi * beta * beta).abs() < 1e-15);
}

#[test]
fn amgm_dominates_sqrt_product() {
    let mut rng = crate::rng::substream(31, 0, 0);
    for _ in 0..10_000 {
        let x = 10.0 * rng.gen::<f64>();
        let beta = 10.0 * rng.gen::<f64>();
        let phi = 0.01 + 10.0 * rng.gen::<f64>();
        let g = amgm_overestimate(x, beta, phi);
        let f = x.sqrt() * beta;
        assert!(g >= f - 1e-12, "G({x},{beta},{phi}) = {g} < {f}");
    }
}

#[test]
fn linearization_hand_values() {
    let lin = linearize_power(4.0, 2.0).unwrap();
    assert!((lin.eval(4.0) - 2.0).abs() < 1e-15);
    assert!((lin.eval(9.0) - 3.25).abs() < 1e-15);
    assert!((lin.eval(1.0) - 1.25).abs() < 1e-15);
    assert!(lin.eval(9.0) >= 3.0);
    assert!(lin.eval(1.0) >= 1.0);
    assert!(linearize_power(4.0, 1.0).is_err());
    assert!(linearize_power(4.0, 0.5).is_err());
    assert!(linearize_power(0.0, 2.0).is_err());
}

#[test]
fn build_variable_count_single_user() {
    // K=1, N=1, B=1: w re/im + t + beta + x = 5 variables, degenerate tree.
    let cfg = NetworkConfig::single_cell(1, 1, 1.0, vec![1.0]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 3);
    let alpha = scale_weights(&cfg.weights);
    let state = ScaState {
        t: vec![1.0],
        beta: vec![1.0],
        x: vec![0.0],
        phi: vec![1.0],
        iter: 0,
        objective_trace: Vec::new(),
        beams: BeamformerSet::zeros(1, 1),
    };
    let (prog, map) = build_socp(&cfg, &ch, &alpha, &state, RateConstraint::Linearized).unwrap();
    assert_eq!(prog.num_vars(), 5);
    assert_eq!(map.root, map.t(0));
}

#[test]
fn build_k4_tree_has_three_cones() {
    let cfg = NetworkConfig::single_cell(2, 4, 4.0, vec![1.0; 4]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 5);
    let alpha = scale_weights(&cfg.weights);
    let state = ScaState {
        t: vec![1.0; 4],
        beta: vec![1.0; 4],
        x: vec![0.0; 4],
        phi: vec![1.0; 4],
        iter: 0,
        objective_trace: Vec::new(),
        beams: BeamformerSet::zeros(4, 2),
    };
    let (prog, map) = build_socp(&cfg, &ch, &alpha, &state, RateConstraint::Linearized).unwrap();
    // Tree cones are the first three: K=4 needs exactly 3 hyperbolic cones.
    assert!(map.amgm_cones.iter().all(|&id| id >= 3));
    let tree_cones = prog.num_socs()
        - map.amgm_cones.len()
        - map.rate_cones.len()
        - map.x_nonneg_cones.len()
        - map.interference_cones.len()
        - map.power_cones.len();
    assert_eq!(tree_cones, 3);
    // Variable order: 2NK beam entries, then t, beta, x blocks, then tree.
    assert_eq!(map.t0, 16);
    assert_eq!(map.beta0, 20);
    assert_eq!(map.x0, 24);
    assert_eq!(prog.num_vars(), 16 + 12 + 3);
}

#[test]
fn amgm_cone_tight_iff_phi_matched() {
    // At phi = sqrt(x)/beta the cone's boundary is G = Re(hw) = sqrt(x) beta.
    let cfg = NetworkConfig::single_cell(1, 1, 4.0, vec![1.0]).unwrap();
    let ch = crate::network::ChannelSet::new(1, 1, 1, vec![Complex64::new(1.0, 0.0)]);
    let alpha = scale_weights(&cfg.weights);
    let (x, beta): (f64, f64) = (4.0, 2.0);
    let phi = x.sqrt() / beta;
    let state = ScaState {
        t: vec![2.0],
        beta: vec![beta],
        x: vec![x],
        phi: vec![phi],
        iter: 0,
        objective_trace: Vec::new(),
        beams: BeamformerSet::zeros(1, 1),
    };
    let (prog, map) = build_socp(&cfg, &ch, &alpha, &state, RateConstraint::Linearized).unwrap();
    // Point with Re(h w) exactly sqrt(x)*beta = 2: boundary of the cone.
    let mut point = vec![0.0; prog.num_vars()];
    point[map.re_w(0, 0)] = x.sqrt() * beta; // h = 1 so Re(hw) = re_w
    point[map.x(0)] = x;
    point[map.beta(0)] = beta;
    let slack = prog.soc(map.amgm_cones[0]).slack(&point);
    assert!(slack.abs() < 1e-12, "slack {slack}");
    // Any larger Re(hw) is strictly feasible, smaller infeasible.
    point[map.re_w(0, 0)] = x.sqrt() * beta + 0.1;
    assert!(prog.soc(map.amgm_cones[0]).slack(&point) > 0.0);
    point[map.re_w(0, 0)] = x.sqrt() * beta - 0.1;
    assert!(prog.soc(map.amgm_cones[0]).slack(&point) < 0.0);
}

#[test]
fn update_state_phi_rules() {
    let cfg = NetworkConfig::single_cell(1, 2, 4.0, vec![1.0, 1.0]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 7);
    let alpha = scale_weights(&cfg.weights);
    let mut state = init_state(&cfg, &ch, &alpha, &ScaConfig::default(), 0);
    let (prog, map) = build_socp(&cfg, &ch, &alpha, &state, RateConstraint::Linearized).unwrap();
    let mut sol = solve_cone(&prog, &SolverOptions::default());
    assert!(sol.is_optimal());
    // Forced values: x = 4, beta = 2 -> phi = 1.
    sol.primal[map.x(0)] = 4.0;
    sol.primal[map.beta(0)] = 2.0;
    // User shut off: x = 0 -> phi clamps at PHI_MIN, not 0.
    sol.primal[map.x(1)] = 0.0;
    sol.primal[map.beta(1)] = 1.0;
    update_state(&cfg, &ch, &sol, &map, &mut state);
    assert!((state.phi[0] - 1.0).abs() < 1e-15);
    assert_eq!(state.phi[1], PHI_MIN);
}

#[test]
fn single_user_reaches_closed_form_capacity() {
    // K=1, N=2, P=1, sigma^2=1: optimum is MRT with rate log2(1 + P ||h||^2).
    let cfg = NetworkConfig::single_cell(2, 1, 1.0, vec![1.0]).unwrap();
    for seed in 0..5 {
        let ch = generate_rayleigh_channels(&cfg, seed);
        let h_norm_sq: f64 = ch.row(0, 0).iter().map(|c| c.norm_sqr()).sum();
        let capacity = (1.0 + h_norm_sq).log2();
        let result = run(&cfg, &ch, &ScaConfig { stop_tol: 1e-5, ..ScaConfig::default() }, seed).unwrap();
        assert!(result.converged);
        assert!(
            (result.weighted_sum_rate() - capacity).abs() < 1e-3,
            "seed {seed}: got {} want {capacity}",
            result.weighted_sum_rate()
        );
        assert!(result.kkt_residual < 1e-5, "seed {seed}: kkt {}", result.kkt_residual);
    }
}

#[test]
fn trace_monotone_and_power_feasible() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    for seed in [0, 1, 2] {
        let ch = generate_rayleigh_channels(&cfg, seed);
        let result = run(&cfg, &ch, &ScaConfig::default(), seed).unwrap();
        assert!(result.converged, "seed {seed}");
        for w in result.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "seed {seed}: trace dip {} -> {}", w[0], w[1]);
        }
        assert!(is_power_feasible(&cfg, &result.beams, 1e-6));
        assert!(beta_activeness_gap(&cfg, &ch, &result) < 1e-6, "seed {seed}");
    }
}

#[test]
fn two_cell_paper_setup_converges_fast() {
    // B=2, N=8, K=4, P_b = 12 dB, paper weights.
    let p = 10f64.powf(1.2);
    let cfg = NetworkConfig::symmetric_cells(2, 8, 2, p, paper_weights()).unwrap();
    for seed in [11, 12] {
        let ch = generate_rayleigh_channels(&cfg, seed);
        let result = run(&cfg, &ch, &ScaConfig::default(), seed).unwrap();
        assert!(result.converged, "seed {seed}");
        assert!(result.iterations <= 15, "seed {seed}: {} iterations", result.iterations);
    }
}

#[test]
fn random_feasible_init_runs() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 21);
    let sca = ScaConfig { init_mode: InitMode::RandomFeasible, ..ScaConfig::default() };
    let result = run(&cfg, &ch, &sca, 21).unwrap();
    assert!(result.converged);
    for w in result.trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-6);
    }
}

#[test]
fn random_feasible_low_power_retries_instead_of_failing() {
    // At tiny power budgets a large sampled phi makes the first subproblem
    // infeasible; the guard halves phi and recovers.
    let cfg = NetworkConfig::single_cell(2, 2, 0.05, vec![1.0, 1.0]).unwrap();
    for seed in 0..8 {
        let ch = generate_rayleigh_channels(&cfg, 100 + seed);
        let sca = ScaConfig { init_mode: InitMode::RandomFeasible, ..ScaConfig::default() };
        let result = run(&cfg, &ch, &sca, seed).unwrap();
        assert!(result.converged, "seed {seed}");
    }
}

#[test]
fn fixed_point_of_update() {
    // Two successive updates with identical solutions leave the state (and
    // trace) unchanged: run to a tight fixed point and compare.
    let cfg = NetworkConfig::single_cell(2, 2, 2.0, vec![1.0, 1.0]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 33);
    let sca = ScaConfig { stop_tol: 1e-9, max_outer_iters: 200, ..ScaConfig::default() };
    let result = run(&cfg, &ch, &sca, 33).unwrap();
    assert!(result.converged);
    let n = result.trace.len();
    assert!((result.trace[n - 1] - result.trace[n - 2]).abs() < 1e-6);
}

#[test]
fn exact_variant_equal_weights_linear_and_matches_run() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    for seed in [2, 5, 9] {
        let ch = generate_rayleigh_channels(&cfg, seed);
        let approx = run(&cfg, &ch, &ScaConfig::default(), seed).unwrap();
        let exact = run_exact_variant(&cfg, &ch, &ScaConfig::default(), seed).unwrap();
        assert!(exact.converged);
        let d = (approx.weighted_sum_rate() - exact.weighted_sum_rate()).abs();
        assert!(d < 1e-2, "seed {seed}: approx {} vs exact {}", approx.weighted_sum_rate(), exact.weighted_sum_rate());
    }
}

#[test]
fn exact_variant_dyadic_grid_weights() {
    // Weights (1/2, 1/2, 1, 1) rescale to themselves (max = 1): towers with
    // 1/alpha = (2, 2, 1, 1).
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![0.5, 0.5, 1.0, 1.0]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 14);
    let approx = run(&cfg, &ch, &ScaConfig::default(), 14).unwrap();
    let exact = run_exact_variant(&cfg, &ch, &ScaConfig::default(), 14).unwrap();
    assert!(exact.converged);
    let d = (approx.weighted_sum_rate() - exact.weighted_sum_rate()).abs();
    assert!(d < 1e-2, "approx {} vs exact {}", approx.weighted_sum_rate(), exact.weighted_sum_rate());
}

#[test]
fn exact_variant_rejects_off_grid_weights() {
    let cfg = NetworkConfig::single_cell(2, 2, 4.0, vec![0.3, 1.0]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 1);
    // 1/alpha = 10/3 after rescaling: not m/2^p.
    match run_exact_variant(&cfg, &ch, &ScaConfig::default(), 1) {
        Err(ScaError::UnsupportedWeights { .. }) => {}
        other => panic!("expected UnsupportedWeights, got {other:?}"),
    }
}

#[test]
fn exact_tower_encodes_rational_powers() {
    // maximize t s.t. t^{1/alpha} <= x+1 with x fixed: optimum (x+1)^alpha.
    for (alpha, x_fix) in [(0.5, 3.0), (2.0 / 3.0, 7.0), (0.25, 1.0)] {
        let mut prog = ConeProgram::new();
        let t = prog.add_var();
        let x = prog.add_var();
        prog.add_equality(LinExpr::term(x, 1.0).plus_const(-x_fix));
        prog.add_objective_term(t, 1.0);
        let map = ScaVarMap {
            num_users: 1,
            num_antennas: 0,
            t0: t,
            beta0: 0,
            x0: x,
            root: 0,
            amgm_cones: vec![],
            rate_cones: vec![],
            x_nonneg_cones: vec![],
            interference_cones: vec![],
            power_cones: vec![],
            im_equalities: vec![],
        };
        super::add_exact_rate_tower(&mut prog, &map, 0, alpha).unwrap();
        let sol = solve_cone(&prog, &SolverOptions::default());
        assert!(sol.is_optimal(), "alpha {alpha}");
        let want = (x_fix + 1.0).powf(alpha);
        assert!(
            (sol.primal[t] - want).abs() < 1e-6 * want,
            "alpha {alpha}: t* = {} want {want}",
            sol.primal[t]
        );
    }
}

#[test]
fn carryover_check_passes_in_debug_mode() {
    let cfg = NetworkConfig::single_cell(3, 3, 5.0, vec![1.0; 3]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 40);
    let sca = ScaConfig {
        debug: DebugOptions { dump_dir: None, check_carryover: true },
        ..ScaConfig::default()
    };
    let result = run(&cfg, &ch, &sca, 40).unwrap();
    assert!(result.converged);
}

#[test]
fn broken_phi_update_breaks_monotonicity() {
    // Mutation check: driving phi away from sqrt(x)/beta (here: inverted)
    // must produce a trace the monotonicity check rejects. This guards the
    // verify suite's ability to catch update bugs.
    let cfg = NetworkConfig::single_cell(4, 4, 100.0, vec![1.0; 4]).unwrap();
    let mut violated = false;
    for seed in 0..10 {
        let ch = generate_rayleigh_channels(&cfg, 50 + seed);
        let alpha = scale_weights(&cfg.weights);
        let mut state = init_state(&cfg, &ch, &alpha, &ScaConfig::default(), seed);
        for _ in 0..8 {
            let (prog, map) = build_socp(&cfg, &ch, &alpha, &state, RateConstraint::Linearized).unwrap();
            let sol = solve_cone(&prog, &SolverOptions::default());
            if !sol.is_optimal() {
                break;
            }
            update_state(&cfg, &ch, &sol, &map, &mut state);
            // Injected bug: phi inverted.
            for p in &mut state.phi {
                *p = (1.0 / *p).clamp(PHI_MIN, PHI_MAX);
            }
        }
        if state.objective_trace.windows(2).any(|w| w[1] < w[0] - 1e-6) {
            violated = true;
            break;
        }
    }
    assert!(violated, "inverted phi update should break monotonicity on some seed");
}

#[test]
fn lagrangian_gradients_match_finite_differences() {
    let cfg = NetworkConfig::symmetric_cells(2, 2, 2, 3.0, vec![0.7, 1.3, 0.9, 1.1]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 60);
    let alpha = scale_weights(&cfg.weights);
    let mut rng = crate::rng::substream(61, 0, 0);
    let mut vectors = Vec::new();
    for _ in 0..cfg.num_users {
        vectors.push((0..cfg.num_antennas).map(|_| crate::rng::complex_cn01(&mut rng)).collect::<Vec<_>>());
    }
    let point = Eq6Point {
        beams: BeamformerSet::from_vectors(vectors),
        t: (0..cfg.num_users).map(|_| 1.5 + 3.0 * rng.gen::<f64>()).collect(),
        beta: (0..cfg.num_users).map(|_| 0.5 + rng.gen::<f64>()).collect(),
    };
    let mults = KktMultipliers {
        mu: (0..cfg.num_users).map(|_| rng.gen::<f64>()).collect(),
        nu: (0..cfg.num_users).map(|_| rng.gen::<f64>()).collect(),
        pi: (0..cfg.num_bs).map(|_| rng.gen::<f64>()).collect(),
        zeta: (0..cfg.num_users).map(|_| rng.gen::<f64>() - 0.5).collect(),
    };
    let grads = gradients(&cfg, &ch, &alpha, &point, &mults);
    let eps = 1e-6;

    let fd = |plus: &Eq6Point, minus: &Eq6Point| {
        (lagrangian(&cfg, &ch, &alpha, plus, &mults) - lagrangian(&cfg, &ch, &alpha, minus, &mults)) / (2.0 * eps)
    };
    let clone_with_beam = |k: usize, i: usize, re: bool, delta: f64| {
        let mut p = Eq6Point { beams: point.beams.clone(), t: point.t.clone(), beta: point.beta.clone() };
        let c = p.beams.beam(k)[i];
        p.beams.beam_mut(k)[i] = if re { c + Complex64::new(delta, 0.0) } else { c + Complex64::new(0.0, delta) };
        p
    };

    for k in 0..cfg.num_users {
        for i in 0..cfg.num_antennas {
            for (re, idx) in [(true, 2 * cfg.num_antennas * k + i), (false, 2 * cfg.num_antennas * k + cfg.num_antennas + i)] {
                let num = fd(&clone_with_beam(k, i, re, eps), &clone_with_beam(k, i, re, -eps));
                let ana = grads.w[idx];
                assert!(
                    (num - ana).abs() <= 1e-5 * (1.0 + ana.abs()),
                    "w grad k={k} i={i} re={re}: fd {num} vs {ana}"
                );
            }
        }
        let mut tp = Eq6Point { beams: point.beams.clone(), t: point.t.clone(), beta: point.beta.clone() };
        tp.t[k] += eps;
        let mut tm = Eq6Point { beams: point.beams.clone(), t: point.t.clone(), beta: point.beta.clone() };
        tm.t[k] -= eps;
        let num = fd(&tp, &tm);
        assert!((num - grads.t[k]).abs() <= 1e-5 * (1.0 + grads.t[k].abs()), "t grad {k}: fd {num} vs {}", grads.t[k]);

        let mut bp = Eq6Point { beams: point.beams.clone(), t: point.t.clone(), beta: point.beta.clone() };
        bp.beta[k] += eps;
        let mut bm = Eq6Point { beams: point.beams.clone(), t: point.t.clone(), beta: point.beta.clone() };
        bm.beta[k] -= eps;
        let num = fd(&bp, &bm);
        assert!((num - grads.beta[k]).abs() <= 1e-5 * (1.0 + grads.beta[k].abs()), "beta grad {k}");
    }
}

#[test]
fn kkt_residual_increases_under_perturbation() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 70);
    let sca = ScaConfig { stop_tol: 1e-5, ..ScaConfig::default() };
    let result = run(&cfg, &ch, &sca, 70).unwrap();
    assert!(result.converged);
    let base = result.kkt_residual;
    // 1% multiplicative perturbation of one beam direction.
    let mut perturbed = result.clone();
    let w0 = perturbed.beams.beam(0).to_vec();
    for (i, c) in perturbed.beams.beam_mut(0).iter_mut().enumerate() {
        *c = w0[i] * Complex64::new(1.0 + 0.01 * (i as f64 + 1.0), 0.01);
    }
    let worse = kkt_residual(&cfg, &ch, &perturbed);
    assert!(worse > base * 5.0, "residual {base} -> {worse} after perturbation");
}

#[test]
fn weight_scaling_solution_level_invariance() {
    // Running with alpha and with c*alpha (same seed and init) gives beams
    // whose sum rates under the ORIGINAL weights differ by < 1e-2.
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, paper_weights()).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 80);
    let base = run(&cfg, &ch, &ScaConfig::default(), 80).unwrap();
    let scaled = run(&cfg, &ch, &ScaConfig { scale_factor: 3.7, ..ScaConfig::default() }, 80).unwrap();
    let wsr_base = weighted_sum_rate(&cfg, &ch, &base.beams);
    let wsr_scaled = weighted_sum_rate(&cfg, &ch, &scaled.beams);
    assert!((wsr_base - wsr_scaled).abs() < 1e-2, "{wsr_base} vs {wsr_scaled}");
}

#[test]
#[ignore]
fn debug_kkt_breakdown() {
    let cfg = NetworkConfig::single_cell(2, 1, 1.0, vec![1.0]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 1);
    let sca = ScaConfig { stop_tol: 1e-8, ..ScaConfig::default() };
    let r = run(&cfg, &ch, &sca, 1).unwrap();
    let point = Eq6Point {
        beams: r.beams.clone(),
        t: r.final_iterates.t.clone(),
        beta: r.final_iterates.beta.clone(),
    };
    println!("solution t {:?} beta {:?} x {:?} phi {:?}", r.final_iterates.t, r.final_iterates.beta, r.final_iterates.x, r.final_iterates.phi);
    let hw = crate::network::channel_dot(ch.row(0,0), r.beams.beam(0));
    let inp = crate::network::interference_plus_noise(&cfg, &ch, &r.beams, 0);
    let gamma = hw.re*hw.re/inp;
    println!("hw {hw}, inp {inp}, gamma {gamma}, t_implied {}", (1.0+gamma).powf(r.weights_used[0]));
    println!("mults mu {:?} nu {:?} pi {:?} zeta {:?}", r.multipliers.mu, r.multipliers.nu, r.multipliers.pi, r.multipliers.zeta);
    let g = gradients(&cfg, &ch, &r.weights_used, &point, &r.multipliers);
    println!("grad w {:?}", g.w);
    println!("grad t {:?}", g.t);
    println!("grad beta {:?}", g.beta);
    let pw = per_bs_power_probe(&cfg, &r.beams);
    println!("power {} budget {}", pw, cfg.power_budget[0]);
}

fn per_bs_power_probe(cfg: &NetworkConfig, beams: &BeamformerSet) -> f64 {
    crate::network::per_bs_power(cfg, beams, 0)
}
