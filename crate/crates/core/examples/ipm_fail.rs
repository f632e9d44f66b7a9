use wsrm_core::network::*;
use wsrm_core::sca::*;
use wsrm_core::solver::SolverOptions;

fn main() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 9);
    let sca = ScaConfig { stop_tol: 1e-5, solver: SolverOptions::default(), ..ScaConfig::default() };
    match run(&cfg, &ch, &sca, 9) {
        Ok(r) => println!("ok: {} iters, kkt {:.2e}", r.iterations, r.kkt_residual),
        Err(e) => println!("err: {e}"),
    }
}
