//! At tau = 1 the hyperbolic bias is ALiBi's linear ramp plus a cubic
//! correction. Prints the worst entrywise gap for a few slopes.

use hype::{build_bias_alibi, build_bias_hype, HypeHeadParams};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let len = 256;
    println!(
        "{:>12} {:>10} {:>14} {:>14}",
        "mu", "max |x|", "max gap", "max |x|^3/6"
    );
    for mu in [
        1.0 / 4096.0,
        1.0 / 1024.0,
        1.0 / (2.0 * len as f64),
        1.0 / len as f64,
    ] {
        let hype = build_bias_hype::<f64>(len, HypeHeadParams::new(mu, 1.0)?)?;
        let alibi = build_bias_alibi::<f64>(len, mu)?;
        let gap = hype.values.sub(&alibi.values)?.max_abs();
        let x = mu * (len - 1) as f64;
        println!(
            "{mu:>12.3e} {x:>10.4} {gap:>14.3e} {:>14.3e}",
            x.powi(3) / 6.0
        );
        assert!(gap <= x.powi(3) * 1f64.sinh());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
