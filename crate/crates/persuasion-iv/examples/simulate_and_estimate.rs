//! Simulate an encouragement experiment and estimate the complier
//! potential-outcome distributions with both kinds of confidence
//! intervals.
//!
//! Run with: `cargo run --example simulate_and_estimate`

use persuasion_iv::estimands::{estimand_components, WaldEstimand};
use persuasion_iv::inference::{ar_confidence_set, delta_inference};
use persuasion_iv::moments::wald_ratio;
use persuasion_iv::oracle::LatentDgp;
use persuasion_iv::{compare_dk_local, joint_po, marginal_po, persuasion_rates};

fn main() -> persuasion_iv::Result<()> {
    let dgp = LatentDgp::dgp1();
    let sample = dgp.draw_sample(20_000, 7)?;
    println!("simulated {} rows from the reference process\n", sample.n());

    let joint = joint_po(&sample)?;
    let marginal = marginal_po(&sample)?;
    let rates = persuasion_rates(&sample)?;
    println!("first stage (complier share): {:.3}", joint.first_stage);
    println!("P[Y(0)=1 | complier] = {:.3}", marginal.y0_one());
    println!("P[Y(1)=1 | complier] = {:.3}", marginal.y1_one());
    println!("always-voters among compliers:  p11 = {:.3}", joint.p11);
    println!("never-voters among compliers:   p00 = {:.3}", joint.p00);
    println!("mobilised among compliers:      p01 = {:.3}", joint.p01);
    println!("local persuasion rate:          {:.3}", rates.theta_local);
    println!("approximated persuasion rate:   {:.3}", rates.theta_dk);

    let diagnostic = compare_dk_local(&sample)?;
    println!(
        "gap between the two rates:      {:.4} (one-sided control: {}, treatment: {})\n",
        diagnostic.gap, diagnostic.one_sided_control, diagnostic.one_sided_treatment
    );

    println!(
        "{:<16} {:>9} {:>22} {:>22}",
        "estimand", "estimate", "95% delta CI", "95% robust CI"
    );
    for which in [
        WaldEstimand::ThetaLocal,
        WaldEstimand::P11,
        WaldEstimand::P00,
        WaldEstimand::P01,
    ] {
        let c = estimand_components(&sample, which)?;
        let estimate = wald_ratio(&c)?;
        let delta = delta_inference(&c, 0.05)?;
        let ar = ar_confidence_set(&c, 0.05, None)?;
        let interval = ar.ci[0];
        println!(
            "{:<16} {:>9.3} {:>10.3} {:>11.3} {:>10.3} {:>11.3}",
            which.label(),
            estimate,
            delta.ci_lo,
            delta.ci_hi,
            interval.lo.unwrap_or(f64::NEG_INFINITY),
            interval.hi.unwrap_or(f64::INFINITY),
        );
    }

    let truth = dgp.truth_joint_po();
    println!(
        "\npopulation truth: p11 = {}, p00 = {}, p01 = {}",
        truth.0, truth.1, truth.2
    );
    Ok(())
}
