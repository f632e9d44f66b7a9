use wsrm_core::network::*;
use wsrm_core::sca::*;

fn main() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    for stop in [1e-2, 1e-4, 1e-5, 1e-6, 1e-7] {
        let mut kkts = Vec::new();
        let mut fails = 0;
        for seed in 0..30u64 {
            let ch = generate_rayleigh_channels(&cfg, seed);
            let sca = ScaConfig { stop_tol: stop, max_outer_iters: 200, ..ScaConfig::default() };
            match run(&cfg, &ch, &sca, seed) {
                Ok(r) => kkts.push(r.kkt_residual),
                Err(_) => fails += 1,
            }
        }
        kkts.sort_by(f64::total_cmp);
        let med = kkts[kkts.len()/2];
        let p95 = kkts[(kkts.len()*95/100).min(kkts.len()-1)];
        println!("stop {stop:.0e}: fails {fails}, kkt med {med:.2e} p95 {p95:.2e} max {:.2e}", kkts.last().unwrap());
    }
}
