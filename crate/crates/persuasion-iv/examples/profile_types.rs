//! Profile the latent persuasion types with a pre-treatment covariate:
//! who are the always-voters, never-voters, and mobilised voters among
//! compliers?
//!
//! Run with: `cargo run --example profile_types`

use persuasion_iv::estimands::{
    kappa_moment_inference, profile_at_nt_inference, profile_marginal_inference,
    profile_persuasion_inference, PersuasionTarget, TakerGroup,
};
use persuasion_iv::inference::delta_inference;
use persuasion_iv::oracle::LatentDgp;
use persuasion_iv::{conditional_cdf, TypeProfile};

fn print_row(label: &str, profile: &TypeProfile) {
    let inference = delta_inference(&profile.components, 0.05).expect("finite components");
    println!(
        "{label:<44} {:>7.3}  [{:>6.3}, {:>6.3}]",
        profile.value, inference.ci_lo, inference.ci_hi
    );
}

fn main() -> persuasion_iv::Result<()> {
    let dgp = LatentDgp::dgp1();
    let sample = dgp.draw_sample(40_000, 23)?;
    println!("covariate mean by latent subpopulation (estimate, 95% CI)\n");

    // the covariate is binary, so each mean is a share
    let x = |_t: u8, x: &[f64]| x[0];
    print_row(
        "compliers",
        &kappa_moment_inference(&sample, |_, _, x| x[0], 1)?,
    );
    print_row(
        "compliers with Y(0) = 0",
        &profile_marginal_inference(&sample, x, 0, 0)?,
    );
    print_row(
        "always-voters among compliers",
        &profile_persuasion_inference(&sample, x, PersuasionTarget::Always)?,
    );
    print_row(
        "never-voters among compliers",
        &profile_persuasion_inference(&sample, x, PersuasionTarget::Never)?,
    );
    print_row(
        "mobilised among compliers",
        &profile_persuasion_inference(&sample, x, PersuasionTarget::Mobilised)?,
    );
    print_row(
        "always-takers with Y(1) = 1",
        &profile_at_nt_inference(&sample, |x| x[0], TakerGroup::AlwaysTaker, 1)?,
    );
    print_row(
        "never-takers with Y(0) = 0",
        &profile_at_nt_inference(&sample, |x| x[0], TakerGroup::NeverTaker, 0)?,
    );

    println!("\npopulation truth by type:");
    for (label, target) in [
        ("always-voters", PersuasionTarget::Always),
        ("never-voters", PersuasionTarget::Never),
        ("mobilised", PersuasionTarget::Mobilised),
    ] {
        let truth = dgp.truth_profile_persuasion(&|_, x| x[0], target).unwrap();
        println!("  {label:<16} {truth:.3}");
    }

    let cdf = conditional_cdf(&sample, 0, PersuasionTarget::Mobilised, &[0.0, 1.0])?;
    println!("\nconditional distribution of the covariate among mobilised compliers:");
    for (point, value) in cdf {
        println!("  P[X <= {point}] = {value:.3}");
    }
    Ok(())
}
