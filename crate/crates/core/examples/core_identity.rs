//! Appending the eta columns to Q and K reproduces the hyperbolic bias
//! inside the logit product, and the concat path gives the same attention
//! output as adding the explicit L x L bias.

use hype::attention::augment;
use hype::metrics::{identity_error, max_rel_error};
use hype::{
    attend_hype_concat, attend_with_bias, build_bias_hype, build_eta_pair, Fill, HypeHeadParams,
    Matrix,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (len, d) = (32, 8);
    let params = HypeHeadParams::new(0.01, 1.0)?;
    let q = Matrix::<f64>::random_fill(len, d, 1, Fill::StandardNormal);
    let k = Matrix::<f64>::random_fill(len, d, 2, Fill::StandardNormal);
    let v = Matrix::<f64>::random_fill(len, d, 3, Fill::StandardNormal);

    let eta = build_eta_pair::<f64>(len, d, params, 1)?;
    let (q_hat, k_hat) = augment(&q, &k, &eta)?;
    println!(
        "Q {:?} -> Q^ {:?}, K {:?} -> K^ {:?}",
        q.shape(),
        q_hat.shape(),
        k.shape(),
        k_hat.shape()
    );

    let bias = build_bias_hype::<f64>(len, params)?;
    let err = identity_error(&q, &k, &eta, &bias)?;
    println!(
        "(Q^K^T - QK^T)/sqrt(d) vs bias: scaled rel err {:.2e}, abs err {:.2e}",
        err.rel, err.abs
    );

    let explicit = attend_with_bias(&q, &k, &v, &bias, false)?;
    let concat = attend_hype_concat(&q, &k, &v, params, 1, false)?;
    let out_err = max_rel_error(&concat, &explicit);
    println!("attention output, concat vs explicit: {out_err:.2e}");
    assert!(err.rel <= 1e-12 && out_err <= 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
