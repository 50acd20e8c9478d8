//! Per-head slopes from the default schedule, run through the multi-head
//! concat path and checked head by head against explicit masks.

use hype::attention::head_output;
use hype::metrics::max_rel_error;
use hype::{
    attend_multihead, attend_with_bias, build_bias_hype, recommend_mu_schedule, AttentionConfig,
    Fill, HeadWeights, Matrix, Width,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (len, d, n_heads, l_extra) = (64, 8, 4, 256);
    let heads = recommend_mu_schedule(n_heads, l_extra)?;
    for (h, p) in heads.iter().enumerate() {
        println!(
            "head {h}: mu = {:.6e} (1/L_extra = {:.6e}), tau = {}",
            p.mu,
            1.0 / l_extra as f64,
            p.tau
        );
    }
    let config = AttentionConfig {
        seq_len: len,
        head_dim: d,
        n_heads,
        heads: heads.clone(),
        causal: true,
        n_copies: 2,
        width: Width::F64,
    };
    let d_model = d * n_heads;
    let x = Matrix::<f64>::random_fill(len, d_model, 7, Fill::StandardNormal);
    let weights = (0..n_heads)
        .map(|h| HeadWeights::random(d_model, d, 100 + 3 * h as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = attend_multihead(&x, &weights, &config)?;
    println!("merged output: {:?}", merged.shape());
    for (h, (w, p)) in weights.iter().zip(&heads).enumerate() {
        let (q, k, v) = w.project(&x)?;
        let explicit = attend_with_bias(&q, &k, &v, &build_bias_hype(len, *p)?, true)?;
        let err = max_rel_error(&head_output(&merged, h, d)?, &explicit);
        println!("head {h}: concat vs explicit {err:.2e}");
        assert!(err <= 1e-12);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
