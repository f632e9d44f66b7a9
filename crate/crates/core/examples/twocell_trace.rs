use wsrm_core::network::*;
use wsrm_core::sca::*;

fn main() {
    let p = 10f64.powf(1.2);
    let cfg = NetworkConfig::symmetric_cells(2, 8, 2, p, vec![0.14, 0.21, 0.28, 0.36]).unwrap();
    let ch = generate_rayleigh_channels(&cfg, 11);
    match run(&cfg, &ch, &ScaConfig::default(), 11) {
        Ok(r) => println!("ok {} iters", r.iterations),
        Err(e) => println!("err {e}"),
    }
}
