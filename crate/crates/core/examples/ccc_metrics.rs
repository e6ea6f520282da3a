//! Concordance correlation, its gradient against central differences, and
//! the two policies for constant series.
//!
//! Usage: cargo run --example ccc_metrics

use affect::metrics::{ccc, ccc_gradient, ccc_strict, mse, pearson};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let y = [0.1, 0.4, 0.35, 0.8, 0.6, 0.9];
    let shifted: Vec<f64> = y.iter().map(|v| v + 0.2).collect();
    // a constant offset leaves Pearson at 1 but costs concordance
    println!("pearson {:.4}  ccc {:.4}  mse {:.4}", pearson(&y, &shifted)?, ccc(&y, &shifted)?, mse(&y, &shifted)?);

    let p = [0.2, 0.3, 0.5, 0.7, 0.5, 0.95];
    let analytic = ccc_gradient(&y, &p)?;
    let h = 1e-6;
    for (i, g) in analytic.iter().enumerate() {
        let (mut up, mut down) = (p, p);
        up[i] += h;
        down[i] -= h;
        let numeric = (ccc(&y, &up)? - ccc(&y, &down)?) / (2.0 * h);
        println!("d ccc / d p[{i}]  analytic {g:>10.6}  numeric {numeric:>10.6}");
    }

    let flat = [0.5; 6];
    println!("constant predictions: loss mode {}, strict mode {:?}", ccc(&y, &flat)?, ccc_strict(&y, &flat));
    Ok(())
}
