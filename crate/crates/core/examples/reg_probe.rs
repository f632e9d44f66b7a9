use wsrm_core::network::*;
use wsrm_core::sca::*;
use wsrm_core::solver::SolverOptions;

fn main() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    for reg in [1e-9, 1e-10, 1e-11, 1e-12, 1e-13] {
        for (tf, tg) in [(1e-8, 1e-8), (1e-9, 1e-10)] {
            let mut fails = 0;
            let mut worst_kkt: f64 = 0.0;
            let mut kkts = Vec::new();
            for seed in 0..30u64 {
                let ch = generate_rayleigh_channels(&cfg, seed);
                let solver = SolverOptions { tol_feas: tf, tol_gap: tg, static_reg: reg, ..SolverOptions::default() };
                let sca = ScaConfig { stop_tol: 1e-5, solver, ..ScaConfig::default() };
                match run(&cfg, &ch, &sca, seed) {
                    Ok(r) => { worst_kkt = worst_kkt.max(r.kkt_residual); kkts.push(r.kkt_residual); }
                    Err(_) => fails += 1,
                }
            }
            kkts.sort_by(f64::total_cmp);
            let med = kkts.get(kkts.len()/2).copied().unwrap_or(f64::NAN);
            println!("reg {reg:.0e} tf {tf:.0e} tg {tg:.0e}: fails {fails:2}/30, kkt med {med:.2e} worst {worst_kkt:.2e}");
        }
    }
}
