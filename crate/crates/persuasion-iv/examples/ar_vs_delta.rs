//! Weak-identification-robust confidence sets versus delta-method
//! intervals.
//!
//! With a strong first stage the two agree and converge; with a weak
//! first stage the robust inversion returns an honest unbounded set
//! while the delta interval stays misleadingly narrow.
//!
//! Run with: `cargo run --example ar_vs_delta`

use persuasion_iv::estimands::{estimand_components, WaldEstimand};
use persuasion_iv::inference::{ar_confidence_set, delta_inference, GridSpec};
use persuasion_iv::moments::{row_fn, wald_components, TransformSpec};
use persuasion_iv::oracle::LatentDgp;

fn main() -> persuasion_iv::Result<()> {
    let dgp = LatentDgp::dgp1();

    println!("local persuasion rate, strong first stage:");
    for n in [2_000usize, 20_000, 80_000] {
        let sample = dgp.draw_sample(n, 17)?;
        let c = estimand_components(&sample, WaldEstimand::ThetaLocal)?;
        let delta = delta_inference(&c, 0.05)?;
        let ar = ar_confidence_set(&c, 0.05, None)?;
        let i = ar.ci[0];
        println!(
            "  n = {n:>6}: delta [{:.4}, {:.4}]  robust [{:.4}, {:.4}]",
            delta.ci_lo,
            delta.ci_hi,
            i.lo.unwrap(),
            i.hi.unwrap()
        );
    }

    // a nearly irrelevant instrument: the covariate is independent of
    // the assignment, so its arm contrast is pure noise around zero
    println!("\nartificially weak denominator:");
    let sample = dgp.draw_sample(2_000, 31)?;
    let spec = TransformSpec {
        f: row_fn(|y, _, _| y as f64),
        h: row_fn(|_, _, x| x[0]),
    };
    let c = wald_components(&sample, &spec)?;
    let delta = delta_inference(&c, 0.05);
    match &delta {
        Ok(d) => println!(
            "  delta interval: [{:.2}, {:.2}] around {:.2}",
            d.ci_lo, d.ci_hi, d.estimate
        ),
        Err(e) => println!("  delta interval: {e}"),
    }
    let grid = GridSpec {
        lo: -100.0,
        hi: 100.0,
        points: 4001,
    };
    let ar = ar_confidence_set(&c, 0.05, Some(grid))?;
    println!("  robust set over [-100, 100]:");
    for i in &ar.ci {
        println!(
            "    [{}, {}]",
            i.lo.map_or("-inf".into(), |v| format!("{v:.2}")),
            i.hi.map_or("+inf".into(), |v| format!("{v:.2}"))
        );
    }
    println!("  (an endpoint at the grid edge means the set is unbounded on that side)");
    Ok(())
}
