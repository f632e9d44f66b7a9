use wsrm_core::network::*;
use wsrm_core::sca::*;
use wsrm_core::solver::SolverOptions;

fn main() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    for seed in 0..30u64 {
        let ch = generate_rayleigh_channels(&cfg, seed);
        let solver = SolverOptions { static_reg: 1e-12, ..SolverOptions::default() };
        let sca = ScaConfig { stop_tol: 1e-5, solver, ..ScaConfig::default() };
        match run(&cfg, &ch, &sca, seed) {
            Ok(_) => {}
            Err(e) => println!("seed {seed}: {e}"),
        }
    }
}
