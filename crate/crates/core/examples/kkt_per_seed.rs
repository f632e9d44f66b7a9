use wsrm_core::network::*;
use wsrm_core::sca::*;

fn main() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    for seed in 0..15u64 {
        let ch = generate_rayleigh_channels(&cfg, seed);
        let sca = ScaConfig { stop_tol: 1e-6, max_outer_iters: 200, ..ScaConfig::default() };
        match run(&cfg, &ch, &sca, seed) {
            Ok(r) => {
                let gammas: Vec<f64> = (0..4).map(|k| sinr(&cfg, &ch, &r.beams, k)).collect();
                let gmin = gammas.iter().cloned().fold(f64::INFINITY, f64::min);
                println!("seed {seed:2}: kkt {:9.3e} iters {:3} gamma_min {gmin:9.3e} mu {:?}", r.kkt_residual, r.iterations, r.multipliers.mu.iter().map(|v| (v*1e3).round()/1e3).collect::<Vec<_>>());
            }
            Err(e) => println!("seed {seed}: ERR {e}"),
        }
    }
}
