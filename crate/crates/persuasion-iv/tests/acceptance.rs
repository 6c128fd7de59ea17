//! Acceptance suite: one test per criterion, each printing a pass line
//! with its runtime. Every tolerance is pinned in the assertions.
//!
//! The suite is oracle- and property-based: synthetic populations with
//! exact moments provide ground truth, published arithmetic fixtures
//! pin the sensitivity table and persuasion-rate ratios, and the
//! falsification solver is cross-checked against an independent
//! brute-force minimizer.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use persuasion_iv::estimands::{
    self, estimand_components, joint_from_marginals, MarginalPo, PersuasionTarget, TakerGroup,
    WaldEstimand,
};
use persuasion_iv::falsifier::{self, FalsifierSystem, Restrictions};
use persuasion_iv::inference::{ar_confidence_set, ar_statistic, delta_inference};
use persuasion_iv::moments::wald_ratio;
use persuasion_iv::oracle::LatentDgp;
use persuasion_iv::sample::{partition_cells, BinningSpec};
use persuasion_iv::sensitivity::sensitivity_curve;

const ORACLE_TOL: f64 = 1e-10;

fn assert_close(label: &str, got: f64, want: f64, tol: f64) {
    assert!(
        (got - want).abs() <= tol,
        "{label}: got {got}, want {want} (tolerance {tol:.1e})"
    );
}

/// Criterion 1: every estimand evaluated on exact population moments
/// agrees with the directly computed ground truth for fifty random
/// valid processes, within 1e-10, in under ten seconds.
#[test]
fn acceptance_01_oracle_equivalence() {
    let start = Instant::now();
    for seed in 0..50u64 {
        let dgp = LatentDgp::random_valid(seed);
        let label = format!("dgp seed {seed}");

        let marginal = estimands::marginal_po(&dgp).unwrap();
        let (t_y0, t_y1) = dgp.truth_marginal_po();
        assert_close(
            &format!("{label} marginal y0"),
            marginal.y0_one(),
            t_y0,
            ORACLE_TOL,
        );
        assert_close(
            &format!("{label} marginal y1"),
            marginal.y1_one(),
            t_y1,
            ORACLE_TOL,
        );

        let joint = estimands::joint_po(&dgp).unwrap();
        let (p11, p00, p01) = dgp.truth_joint_po();
        assert_close(&format!("{label} p11"), joint.p11, p11, ORACLE_TOL);
        assert_close(&format!("{label} p00"), joint.p00, p00, ORACLE_TOL);
        assert_close(&format!("{label} p01"), joint.p01, p01, ORACLE_TOL);

        let rates = estimands::persuasion_rates(&dgp).unwrap();
        assert_close(
            &format!("{label} theta_local"),
            rates.theta_local,
            dgp.truth_theta_local().unwrap(),
            ORACLE_TOL,
        );
        assert_close(
            &format!("{label} theta_dk"),
            rates.theta_dk,
            dgp.truth_theta_dk().unwrap(),
            ORACLE_TOL,
        );
        assert_eq!(rates.theta_local, rates.theta_local_untreated);

        let diag = estimands::compare_dk_local(&dgp).unwrap();
        assert_close(
            &format!("{label} dk gap"),
            diag.gap,
            dgp.truth_theta_dk().unwrap() - dgp.truth_theta_local().unwrap(),
            ORACLE_TOL,
        );

        // treatment-dependent transform exercises the arm weighting
        let g_kappa = |y: u8, t: u8, x: &[f64]| (1.0 + y as f64) * (2.0 + t as f64) * (0.5 + x[0]);
        for t in [0u8, 1u8] {
            let got = estimands::kappa_moment(&dgp, move |_, _, x| x[0], t).unwrap();
            assert_close(
                &format!("{label} kappa x t={t}"),
                got,
                dgp.truth_kappa(&|_, _, x| x[0], t).unwrap(),
                ORACLE_TOL,
            );
            let got = estimands::kappa_moment(&dgp, g_kappa, t).unwrap();
            assert_close(
                &format!("{label} kappa composite t={t}"),
                got,
                dgp.truth_kappa(&g_kappa, t).unwrap(),
                ORACLE_TOL,
            );
        }

        let g_profile = |t: u8, x: &[f64]| (1.0 + t as f64) * (0.25 + x[0]);
        for t in [0u8, 1u8] {
            for y in [0u8, 1u8] {
                let got = estimands::profile_marginal(&dgp, g_profile, t, y).unwrap();
                assert_close(
                    &format!("{label} marginal profile t={t} y={y}"),
                    got,
                    dgp.truth_profile_marginal(&g_profile, t, y).unwrap(),
                    ORACLE_TOL,
                );
            }
        }

        for target in [
            PersuasionTarget::Always,
            PersuasionTarget::Never,
            PersuasionTarget::Mobilised,
        ] {
            let got = estimands::profile_persuasion(&dgp, g_profile, target).unwrap();
            assert_close(
                &format!("{label} persuasion {target:?}"),
                got,
                dgp.truth_profile_persuasion(&g_profile, target).unwrap(),
                ORACLE_TOL,
            );
        }

        for variant in 1..=6u8 {
            let got = estimands::profile_joint_indicator(&dgp, g_profile, variant).unwrap();
            assert_close(
                &format!("{label} joint indicator {variant}"),
                got,
                dgp.truth_profile_joint_indicator(&g_profile, variant)
                    .unwrap(),
                ORACLE_TOL,
            );
        }

        for group in [TakerGroup::AlwaysTaker, TakerGroup::NeverTaker] {
            for y in [0u8, 1u8] {
                let got = estimands::profile_at_nt(&dgp, |x| x[0], group, y).unwrap();
                assert_close(
                    &format!("{label} {group:?} y={y}"),
                    got,
                    dgp.truth_profile_at_nt(&|x| x[0], group, y).unwrap(),
                    ORACLE_TOL,
                );
            }
        }

        let cdf =
            estimands::conditional_cdf(&dgp, 0, PersuasionTarget::Mobilised, &[0.0, 1.0]).unwrap();
        for (point, value) in cdf {
            let truth = dgp
                .truth_profile_persuasion(
                    &|_, x| (x[0] <= point) as u8 as f64,
                    PersuasionTarget::Mobilised,
                )
                .unwrap();
            assert_close(&format!("{label} cdf at {point}"), value, truth, ORACLE_TOL);
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "took {elapsed:?}, budget 10 s"
    );
    println!("criterion 1 (oracle equivalence, 50 random processes): PASS in {elapsed:?}");
}

/// Criterion 2: the in-sample algebraic identities hold to 1e-12 on
/// every simulated sample, including adversarial n=20 samples.
#[test]
fn acceptance_02_in_sample_identities() {
    let start = Instant::now();
    let dgp = LatentDgp::dgp1();
    let mut checked = 0usize;
    let mut tiny_checked = 0usize;
    for (n, seeds) in [(20usize, 200u64), (100, 50), (1000, 20)] {
        for seed in 0..seeds {
            let sample = dgp.draw_sample(n, 40_000 + seed).unwrap();
            // a tiny sample can fail the first-stage guard; the
            // identities are claims about estimable samples
            let joint = match estimands::joint_po(&sample) {
                Ok(j) => j,
                Err(_) => continue,
            };
            assert!(
                (joint.p11 + joint.p00 + joint.p01 - 1.0).abs() <= 1e-12,
                "n={n} seed={seed}: sum {}",
                joint.p11 + joint.p00 + joint.p01
            );
            if let Ok(rates) = estimands::persuasion_rates(&sample) {
                assert!(
                    (rates.theta_local * (joint.p01 + joint.p00) - joint.p01).abs() <= 1e-12,
                    "n={n} seed={seed}"
                );
            }
            checked += 1;
            if n == 20 {
                tiny_checked += 1;
            }
        }
    }
    assert!(
        tiny_checked >= 100,
        "only {tiny_checked} adversarial n=20 samples were estimable"
    );
    let elapsed = start.elapsed();
    println!("criterion 2 (in-sample identities on {checked} samples, {tiny_checked} at n=20): PASS in {elapsed:?}");
}

/// Criterion 3: published arithmetic fixtures reproduce to +-0.001.
#[test]
fn acceptance_03_paper_arithmetic_fixtures() {
    let start = Instant::now();
    let tol = 1e-3;

    // full-sample sensitivity rows
    let full = MarginalPo {
        p_y0: [1.0 - 0.302, 0.302],
        p_y1: [1.0 - 0.381, 0.381],
    };
    let deltas = [0.1, 0.12, 0.14, 0.16, 0.18, 0.2];
    let expected_p11 = [0.202, 0.182, 0.162, 0.142, 0.122, 0.102];
    let expected_p00 = [0.519, 0.499, 0.479, 0.459, 0.439, 0.419];
    let expected_p01 = [0.179, 0.199, 0.219, 0.239, 0.259, 0.279];
    let points = sensitivity_curve(&full, &deltas).unwrap();
    for (i, p) in points.iter().enumerate() {
        assert_close(&format!("full p11 row {i}"), p.p11, expected_p11[i], tol);
        assert_close(&format!("full p00 row {i}"), p.p00, expected_p00[i], tol);
        assert_close(&format!("full p01 row {i}"), p.p01, expected_p01[i], tol);
    }

    // restricted-city sensitivity rows
    let bridgeport = MarginalPo {
        p_y0: [1.0 - 0.111, 0.111],
        p_y1: [1.0 - 0.250, 0.250],
    };
    let deltas = [0.05, 0.06, 0.07, 0.08, 0.09, 0.1];
    let expected_p11 = [0.061, 0.051, 0.041, 0.031, 0.021, 0.011];
    let expected_p00 = [0.7, 0.69, 0.68, 0.67, 0.66, 0.65];
    let expected_p01 = [0.189, 0.199, 0.209, 0.219, 0.229, 0.239];
    let points = sensitivity_curve(&bridgeport, &deltas).unwrap();
    for (i, p) in points.iter().enumerate() {
        assert_close(&format!("city p11 row {i}"), p.p11, expected_p11[i], tol);
        assert_close(&format!("city p00 row {i}"), p.p00, expected_p00[i], tol);
        assert_close(&format!("city p01 row {i}"), p.p01, expected_p01[i], tol);
    }

    // local persuasion rate consistency with the reported joints
    let (p11, p00, p01) = joint_from_marginals(&full);
    assert_close("full implied p11", p11, 0.302, tol);
    assert_close("full implied p00", p00, 0.619, tol);
    assert_close("full implied p01", p01, 0.079, tol);
    assert_close("full theta_local", p01 / (p01 + p00), 0.113, tol);

    let (p11, p00, p01) = joint_from_marginals(&bridgeport);
    assert_close("city implied p11", p11, 0.111, tol);
    assert_close("city implied p00", p00, 0.750, tol);
    assert_close("city implied p01", p01, 0.139, tol);
    assert_close("city theta_local", p01 / (p01 + p00), 0.157, tol);

    let elapsed = start.elapsed();
    println!("criterion 3 (published arithmetic fixtures): PASS in {elapsed:?}");
}

/// Criterion 4: Monte Carlo consistency of the joint distribution at
/// n=20000 over 500 replications, with delta-method coverage inside
/// [0.93, 0.97], in under two minutes.
#[test]
fn acceptance_04_monte_carlo_consistency() {
    let start = Instant::now();
    let dgp = LatentDgp::dgp1();
    let truth = [0.3, 0.6, 0.1];
    let which = [WaldEstimand::P11, WaldEstimand::P00, WaldEstimand::P01];
    let reps = 500u64;
    let mut sums = [0.0f64; 3];
    let mut covered = [0usize; 3];
    for rep in 0..reps {
        let sample = dgp.draw_sample(20_000, 100_000 + rep).unwrap();
        for (i, &w) in which.iter().enumerate() {
            let c = estimand_components(&sample, w).unwrap();
            sums[i] += wald_ratio(&c).unwrap();
            let inf = delta_inference(&c, 0.05).unwrap();
            if inf.ci_lo <= truth[i] && truth[i] <= inf.ci_hi {
                covered[i] += 1;
            }
        }
    }
    for i in 0..3 {
        let mean = sums[i] / reps as f64;
        assert_close(&format!("mean of component {i}"), mean, truth[i], 0.01);
        let coverage = covered[i] as f64 / reps as f64;
        assert!(
            (0.93..=0.97).contains(&coverage),
            "coverage of component {i} = {coverage}"
        );
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "took {elapsed:?}, budget 2 min"
    );
    println!(
        "criterion 4 (Monte Carlo consistency, coverage {:?}): PASS in {elapsed:?}",
        covered.map(|c| c as f64 / reps as f64)
    );
}

/// Criterion 5: the robust statistic vanishes at the point estimate on
/// every sample, and the robust and delta intervals Hausdorff-converge
/// as n grows.
#[test]
fn acceptance_05_ar_correctness() {
    let start = Instant::now();
    let dgp = LatentDgp::dgp1();

    // statistic at the point estimate: zero up to one rounding of the
    // ratio itself
    for seed in 0..50u64 {
        let sample = dgp.draw_sample(2_000, 60_000 + seed).unwrap();
        for which in [
            WaldEstimand::ThetaLocal,
            WaldEstimand::P11,
            WaldEstimand::P00,
            WaldEstimand::P01,
            WaldEstimand::MarginalY0One,
            WaldEstimand::MarginalY1One,
        ] {
            let c = estimand_components(&sample, which).unwrap();
            let estimate = wald_ratio(&c).unwrap();
            let statistic = ar_statistic(&c, estimate).unwrap();
            assert!(
                statistic <= 1e-20,
                "seed {seed} {which:?}: statistic {statistic:.3e}"
            );
        }
    }

    // Hausdorff distance between the delta and robust intervals
    let mean_distance = |n: usize| -> f64 {
        let mut total = 0.0;
        for seed in 0..5u64 {
            let sample = dgp.draw_sample(n, 70_000 + seed).unwrap();
            let c = estimand_components(&sample, WaldEstimand::ThetaLocal).unwrap();
            let delta = delta_inference(&c, 0.05).unwrap();
            let ar = ar_confidence_set(&c, 0.05, None).unwrap();
            assert_eq!(ar.ci.len(), 1, "strong first stage gives one interval");
            let lo = ar.ci[0].lo.expect("bounded");
            let hi = ar.ci[0].hi.expect("bounded");
            assert!(ar.contains(delta.estimate));
            total += (lo - delta.ci_lo).abs().max((hi - delta.ci_hi).abs());
        }
        total / 5.0
    };
    let d_small = mean_distance(5_000);
    let d_large = mean_distance(80_000);
    assert!(
        d_large < d_small / 2.0,
        "Hausdorff distance did not halve: {d_small:.6} -> {d_large:.6}"
    );
    let elapsed = start.elapsed();
    println!(
        "criterion 5 (robust-test correctness, Hausdorff {d_small:.5} -> {d_large:.5}): PASS in {elapsed:?}"
    );
}

/// Independent brute-force minimizer: dense random search over the
/// simplex followed by pairwise-exchange coordinate descent. Shares no
/// code with the projected-gradient solver.
fn brute_force_objective(sys: &FalsifierSystem, seed: u64) -> f64 {
    let n = sys.n_cols;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut best = vec![1.0 / n as f64; n];
    let mut best_r = sys.residual_norm(&best);
    for _ in 0..20_000 {
        // exponential spacings give a uniform simplex point
        let mut p: Vec<f64> = (0..n)
            .map(|_| -(rng.random::<f64>().max(1e-300)).ln())
            .collect();
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        let r = sys.residual_norm(&p);
        if r < best_r {
            best_r = r;
            best = p;
        }
    }

    // pairwise mass transfers with the exact one-dimensional step
    let column = |j: usize| -> Vec<f64> { (0..sys.n_rows).map(|r| sys.entry(r, j)).collect() };
    let cols: Vec<Vec<f64>> = (0..n).map(column).collect();
    let mut resid: Vec<f64> = {
        let mut ap = vec![0.0; sys.n_rows];
        for (j, &w) in best.iter().enumerate() {
            for (r, v) in ap.iter_mut().enumerate() {
                *v += cols[j][r] * w;
            }
        }
        ap.iter().zip(&sys.b_hat).map(|(a, b)| a - b).collect()
    };
    for _ in 0..5_000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                // direction e_i - e_j
                let mut num = 0.0;
                let mut den = 0.0;
                for r in 0..sys.n_rows {
                    let d = cols[i][r] - cols[j][r];
                    num += d * resid[r];
                    den += d * d;
                }
                if den == 0.0 {
                    continue;
                }
                let step = (-num / den).clamp(-best[i], best[j]);
                if step == 0.0 {
                    continue;
                }
                best[i] += step;
                best[j] -= step;
                for r in 0..sys.n_rows {
                    resid[r] += step * (cols[i][r] - cols[j][r]);
                }
                moved = moved.max(step.abs());
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
    sys.residual_norm(&best)
}

/// Criterion 6: population-level soundness of the falsification test,
/// cross-checked against the brute-force minimizer.
#[test]
fn acceptance_06_falsifier_soundness() {
    let start = Instant::now();

    // every valid process is feasible at the population
    for seed in 0..50u64 {
        let dgp = LatentDgp::random_valid(seed);
        let cells = dgp.support_partition().unwrap();
        let sys = falsifier::build_system(&dgp, &cells, Restrictions::IaIvPlusMtr).unwrap();
        let (residual, _) = falsifier::solve_feasibility(&sys).unwrap();
        assert!(
            residual < 1e-8,
            "seed {seed}: population residual {residual:.3e}"
        );
    }

    // the demobilised-complier process is detectably infeasible
    let violating = LatentDgp::dgp1_mtr_violating();
    let cells = violating.support_partition().unwrap();
    let bad_sys = falsifier::build_system(&violating, &cells, Restrictions::IaIvPlusMtr).unwrap();
    let (bad_residual, _) = falsifier::solve_feasibility(&bad_sys).unwrap();
    assert!(bad_residual > 1e-3, "violating residual {bad_residual:.3e}");

    // brute-force agreement on feasible, infeasible, and noisy systems
    let dgp = LatentDgp::dgp1();
    let pop_cells = dgp.support_partition().unwrap();
    let feasible = falsifier::build_system(&dgp, &pop_cells, Restrictions::IaIvPlusMtr).unwrap();
    let sample = dgp.draw_sample(500, 80_001).unwrap();
    let sample_cells = partition_cells(
        &sample,
        &BinningSpec::Discrete {
            covariates: vec![0],
        },
    )
    .unwrap();
    let noisy = falsifier::build_system(&sample, &sample_cells, Restrictions::IaIvPlusMtr).unwrap();
    for (label, sys) in [
        ("feasible population", &feasible),
        ("violating population", &bad_sys),
        ("noisy sample", &noisy),
    ] {
        let (qp, _) = falsifier::solve_feasibility(sys).unwrap();
        let bf = brute_force_objective(sys, 42);
        assert!(
            (qp - bf).abs() <= 1e-6,
            "{label}: projected gradient {qp:.9} vs brute force {bf:.9}"
        );
    }

    let elapsed = start.elapsed();
    println!(
        "criterion 6 (falsifier soundness, violating residual {bad_residual:.4}): PASS in {elapsed:?}"
    );
}

/// Criterion 7: subsampling test size and power at n=20000, M=200,
/// b=ceil(n^(2/3)), within ten minutes.
#[test]
fn acceptance_07_falsifier_size_power() {
    let start = Instant::now();
    let n = 20_000usize;
    let b = falsifier::default_subsample_size(n);
    assert_eq!(b, 737);
    let reps = 200u64;

    let rejection_rate = |dgp: &LatentDgp, seed_base: u64| -> f64 {
        let mut rejections = 0usize;
        for rep in 0..reps {
            let sample = dgp.draw_sample(n, seed_base + rep).unwrap();
            let cells = partition_cells(
                &sample,
                &BinningSpec::Discrete {
                    covariates: vec![0],
                },
            )
            .unwrap();
            let result = falsifier::subsample_test(
                &sample,
                &cells,
                Restrictions::IaIvPlusMtr,
                0.05,
                b,
                200,
                rep,
            )
            .unwrap();
            if result.rejected {
                rejections += 1;
            }
        }
        rejections as f64 / reps as f64
    };

    let size = rejection_rate(&LatentDgp::dgp1(), 200_000);
    assert!(size <= 0.08, "size {size} exceeds 0.08");
    let power = rejection_rate(&LatentDgp::dgp1_mtr_violating(), 300_000);
    assert!(power >= 0.8, "power {power} below 0.8");

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 600.0,
        "took {elapsed:?}, budget 10 min"
    );
    println!("criterion 7 (falsifier size {size}, power {power}): PASS in {elapsed:?}");
}

/// Criterion 8: identical seeds reproduce byte-identical CLI outputs.
#[test]
fn acceptance_08_cli_determinism() {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_persuasion-iv");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sim.csv");

    let run = |args: &[&str]| -> (Vec<u8>, Vec<u8>) {
        let out = std::process::Command::new(bin)
            .args(args)
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        (out.stdout, out.stderr)
    };

    let csv_path = csv.to_str().unwrap();
    let sim = [
        "simulate", "--preset", "dgp1", "--n", "5000", "--seed", "11", "--output", csv_path,
    ];
    run(&sim);
    let first = std::fs::read(&csv).unwrap();
    run(&sim);
    let second = std::fs::read(&csv).unwrap();
    assert_eq!(first, second, "simulated CSV bytes differ across runs");

    let (est1, _) = run(&["estimate", "--input", csv_path, "--alpha", "0.05"]);
    let (est2, _) = run(&["estimate", "--input", csv_path, "--alpha", "0.05"]);
    assert_eq!(est1, est2, "estimate output differs across runs");

    let falsify = [
        "falsify", "--input", csv_path, "--b", "auto", "--M", "50", "--seed", "7",
    ];
    let (f1, _) = run(&falsify);
    let (f2, _) = run(&falsify);
    assert_eq!(f1, f2, "falsify output differs across runs");

    let elapsed = start.elapsed();
    println!("criterion 8 (byte-identical CLI outputs): PASS in {elapsed:?}");
}
