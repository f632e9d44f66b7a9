use wsrm_core::network::*;
use wsrm_core::sca::*;
use wsrm_core::solver::SolverOptions;

fn main() {
    // Tightness sweep on the solver tolerances.
    for (tf, tg) in [(1e-8, 1e-8), (1e-9, 1e-10), (1e-10, 1e-11), (1e-10, 1e-12)] {
        let mut worst: f64 = 0.0;
        let mut fails = 0;
        // single-user
        let cfg1 = NetworkConfig::single_cell(2, 1, 1.0, vec![1.0]).unwrap();
        for seed in 0..10u64 {
            let ch = generate_rayleigh_channels(&cfg1, seed);
            let solver = SolverOptions { tol_feas: tf, tol_gap: tg, ..SolverOptions::default() };
            let sca = ScaConfig { stop_tol: 1e-5, solver, ..ScaConfig::default() };
            match run(&cfg1, &ch, &sca, seed) {
                Ok(r) => worst = worst.max(r.kkt_residual),
                Err(_) => fails += 1,
            }
        }
        // multi-user
        let cfg4 = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
        let mut worst4: f64 = 0.0;
        for seed in 0..20u64 {
            let ch = generate_rayleigh_channels(&cfg4, seed);
            let solver = SolverOptions { tol_feas: tf, tol_gap: tg, ..SolverOptions::default() };
            let sca = ScaConfig { stop_tol: 1e-5, solver, ..ScaConfig::default() };
            match run(&cfg4, &ch, &sca, seed) {
                Ok(r) => worst4 = worst4.max(r.kkt_residual),
                Err(e) => { fails += 1; eprintln!("  fail seed {seed}: {e}"); }
            }
        }
        println!("tf {tf:.0e} tg {tg:.0e}: worst K=1 {worst:.2e}, worst K=4 {worst4:.2e}, fails {fails}");
    }
}
