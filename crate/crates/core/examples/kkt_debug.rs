use wsrm_core::network::*;
use wsrm_core::sca::*;

fn main() {
    let cfg = NetworkConfig::single_cell(4, 4, 10.0, vec![1.0; 4]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 0);
    let sca = ScaConfig { stop_tol: 1e-6, ..ScaConfig::default() };
    let r = run(&cfg, &ch, &sca, 0).unwrap();
    println!("converged {} iters {} kkt {:.3e}", r.converged, r.iterations, r.kkt_residual);
    println!("weights_used {:?}", r.weights_used);
    println!("t {:?}", r.final_iterates.t);
    println!("beta {:?}", r.final_iterates.beta);
    println!("x {:?}", r.final_iterates.x);
    println!("phi {:?}", r.final_iterates.phi);
    println!("mu {:?}", r.multipliers.mu);
    println!("nu {:?}", r.multipliers.nu);
    println!("pi {:?}", r.multipliers.pi);
    println!("zeta {:?}", r.multipliers.zeta);
    // Internal consistency: nu_k should equal mu_k * s_k at a KKT point.
    for k in 0..4 {
        let gamma = sinr(&cfg, &ch, &r.beams, k);
        let s = gamma.sqrt();
        println!("user {k}: gamma {gamma:.4}, mu*s = {:.6}, nu = {:.6}", r.multipliers.mu[k]*s, r.multipliers.nu[k]);
    }
}
