use wsrm_core::network::*;
use wsrm_core::sca::*;
use wsrm_core::solver::{SolverOptions};

fn main() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 29);
    // run with increasingly many allowed outer iterations at tight stop to
    // see if the fixed point keeps contracting.
    for stop in [1e-5f64, 1e-7, 1e-9, 1e-11] {
        let sca = ScaConfig { stop_tol: stop, max_outer_iters: 500,
            solver: SolverOptions { tol_feas: 1e-9, tol_gap: 1e-12, max_iters: 200, ..Default::default() },
            ..ScaConfig::default() };
        let r = run(&cfg, &ch, &sca, 29).unwrap();
        println!("stop {stop:.0e}: iters {} kkt {:.3e} wsr {:.10}", r.iterations, r.kkt_residual, r.weighted_sum_rate());
    }
}
