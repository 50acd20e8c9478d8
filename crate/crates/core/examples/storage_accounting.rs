//! Counts the positional values each multi-head path materialises as the
//! sequence grows: 4nLh for the eta columns, L^2 for a shared mask.

use hype::attention::{attend_multihead_explicit, attend_multihead_recorded};
use hype::storage::PeLedger;
use hype::{recommend_mu_schedule, AttentionConfig, Fill, HeadWeights, Matrix, Width};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (d, n_heads, n_copies) = (4, 8, 1);
    println!(
        "{:>6} {:>12} {:>12} {:>8}",
        "L", "concat", "explicit", "ratio"
    );
    for len in [64, 128, 256, 512] {
        let config = AttentionConfig {
            seq_len: len,
            head_dim: d,
            n_heads,
            heads: recommend_mu_schedule(n_heads, 2 * len)?,
            causal: false,
            n_copies,
            width: Width::F32,
        };
        let d_model = d * n_heads;
        let x = Matrix::<f64>::random_fill(len, d_model, 0, Fill::StandardNormal).cast::<f32>()?;
        let weights = (0..n_heads)
            .map(|h| HeadWeights::random(d_model, d, 1 + 3 * h as u64))
            .collect::<Result<Vec<_>, _>>()?;
        let (concat, explicit) = (PeLedger::new(), PeLedger::new());
        attend_multihead_recorded(&x, &weights, &config, &concat)?;
        attend_multihead_explicit(&x, &weights, &config, &explicit)?;
        let (c, e) = (concat.counts().eta_values, explicit.counts().mask_values);
        println!("{len:>6} {c:>12} {e:>12} {:>8.1}", e as f64 / c as f64);
        assert_eq!(c, 4 * n_copies * len * n_heads);
        assert_eq!(e, len * len);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
