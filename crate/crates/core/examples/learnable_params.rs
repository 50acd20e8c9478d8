//! Gradients of a scalar loss with respect to mu and tau, through both the
//! explicit bias and the eta columns, checked against finite differences.

use hype::grad::{
    attention_param_grads, attention_param_grads_concat, finite_difference_grads, Loss,
};
use hype::metrics::rel_diff;
use hype::{Fill, HypeHeadParams, Matrix};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (len, d) = (16, 8);
    let q = Matrix::<f64>::random_fill(len, d, 11, Fill::StandardNormal);
    let k = Matrix::<f64>::random_fill(len, d, 12, Fill::StandardNormal);
    let v = Matrix::<f64>::random_fill(len, d, 13, Fill::StandardNormal);
    for (mu, tau) in [(0.0, 1.0), (0.02, 1.0), (0.05, 2.0)] {
        let p = HypeHeadParams::new(mu, tau)?;
        let explicit = attention_param_grads(&q, &k, &v, p, false, Loss::Sum)?;
        let concat = attention_param_grads_concat(&q, &k, &v, p, 1, false, Loss::Sum)?;
        let fd = finite_difference_grads(&q, &k, &v, p, false, Loss::Sum)?;
        println!(
            "mu={mu:<5} tau={tau}: dL/dmu = {:+.6e} (fd {:+.6e}), dL/dtau = {:+.6e} (fd {:+.6e})",
            explicit.d_mu, fd.d_mu, explicit.d_tau, fd.d_tau
        );
        assert!(
            rel_diff(explicit.d_mu, fd.d_mu) < 1e-5 && rel_diff(explicit.d_tau, fd.d_tau) < 1e-5
        );
        assert!(rel_diff(explicit.d_mu, concat.d_mu) < 1e-10);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
