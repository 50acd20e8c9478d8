//! A 4 x 6 "image" of tokens: one eta column pair per axis gives the sum of
//! per-axis hyperbolic biases without building the 24 x 24 mask.

use hype::metrics::max_rel_error;
use hype::{
    attend_grid, attend_with_bias, build_bias_grid, build_eta_grid, Fill, GridShape,
    HypeHeadParams, Matrix,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let shape = GridShape::new(vec![4, 6])?;
    let params = [
        HypeHeadParams::new(0.1, 1.0)?,
        HypeHeadParams::new(0.05, 2.0)?,
    ];
    let d = 8;
    let eta = build_eta_grid::<f64>(&shape, d, &params)?;
    println!(
        "grid {:?}: {} tokens, eta width {} ({} stored values vs {} for the mask)",
        shape.dims(),
        shape.len(),
        eta.eta_q.cols(),
        eta.stored_values(),
        shape.len() * shape.len()
    );
    let bias = build_bias_grid::<f64>(&shape, &params)?;
    println!(
        "bias between cell {:?} and cell {:?}: {:.6}",
        shape.coords(0),
        shape.coords(shape.len() - 1),
        bias.values.get(0, shape.len() - 1)
    );

    let q = Matrix::<f64>::random_fill(shape.len(), d, 1, Fill::StandardNormal);
    let k = Matrix::<f64>::random_fill(shape.len(), d, 2, Fill::StandardNormal);
    let v = Matrix::<f64>::random_fill(shape.len(), d, 3, Fill::StandardNormal);
    let concat = attend_grid(&q, &k, &v, &shape, &params, false)?;
    let explicit = attend_with_bias(&q, &k, &v, &bias, false)?;
    let err = max_rel_error(&concat, &explicit);
    println!("grid attention, concat vs explicit: {err:.2e}");
    assert!(err <= 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
