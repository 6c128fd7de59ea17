//! File-based workflow: write a sample to CSV, load it back, restrict a
//! multi-valued instrument to a binary pair, and partition covariates
//! into cells.
//!
//! Run with: `cargo run --example data_io`

use persuasion_iv::oracle::LatentDgp;
use persuasion_iv::sample::{
    load_csv, partition_cells, restrict_pair, write_csv, BinningSpec, CsvSchema, ObservedSample,
};

fn main() -> persuasion_iv::Result<()> {
    let dgp = LatentDgp::dgp1();
    let base = dgp.draw_sample(2_000, 3)?;

    // stack a second encouraged arm as instrument level 2
    let extra = dgp.draw_sample(2_000, 4)?;
    let mut rows = base.rows().to_vec();
    rows.extend(extra.rows().iter().filter(|r| r.z == 1).map(|r| {
        let mut r = r.clone();
        r.z = 2;
        r
    }));
    let sample = ObservedSample::new(rows, base.covariate_names().to_vec())?;
    println!("instrument levels: {:?}", sample.instrument_levels());

    let dir = std::env::temp_dir().join("persuasion-iv-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("experiment.csv");
    write_csv(&sample, &path)?;
    let loaded = load_csv(&path, &CsvSchema::default())?;
    assert_eq!(loaded, sample);
    println!(
        "wrote and re-read {} rows from {}",
        loaded.n(),
        path.display()
    );

    // estimands need a binary instrument: restrict to a pair
    let (pair02, swapped) = restrict_pair(&loaded, 0, 2)?;
    println!(
        "restricted to levels (0, 2): {} rows, swapped = {swapped}",
        pair02.n()
    );
    let joint = persuasion_iv::joint_po(&pair02)?;
    println!(
        "joint distribution from the (0, 2) pair: ({:.3}, {:.3}, {:.3})",
        joint.p11, joint.p00, joint.p01
    );

    // covariate cells for the falsification test
    let cells = partition_cells(
        &pair02,
        &BinningSpec::Discrete {
            covariates: vec![0],
        },
    )?;
    let counts = cells.counts(&pair02)?;
    println!(
        "cells over the covariate support: {:?} with counts {counts:?}",
        cells.cell_ids()
    );

    // malformed input is rejected with the offending row and column
    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "y,t,z\n1,1,1\n0,0,0\n2,0,1\n")?;
    match load_csv(&bad, &CsvSchema::default()) {
        Err(e) => println!("loader rejected bad file: {e}"),
        Ok(_) => unreachable!("validation must fail"),
    }
    Ok(())
}
