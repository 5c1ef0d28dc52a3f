//! Four-level atom in three-photon resonance: the closed-form terms set
//! against the blocks the numerical rotation engine finds.
//!
//! cargo run --example three_photon

use lieham::basis::{sector_of, BasisState};
use lieham::lie_transform::IterateOptions;
use lieham::multilevel::{compare_with_pipeline, three_photon_terms, CascadeModelSpec};

fn main() -> lieham::Result<()> {
    let spec =
        CascadeModelSpec::from_detunings(4, 1, vec![1.0, 1.0, 1.0], vec![0.0, 20.0, 40.0, 0.0])?;
    let sector = sector_of(&BasisState::uniform(3, 4, 1, 1))?;
    let terms = three_photon_terms(&spec, &sector)?;
    println!("largest coupling entry {:.4e}", terms.coupling.max_abs());
    println!("largest Stark entry    {:.4e}", terms.stark.max_abs());

    let cmp = compare_with_pipeline(&spec, &sector, &IterateOptions::default(), false)?;
    println!(
        "pipeline: {} steps, max|alpha| {:.3}, spectrum shift {:.1e}",
        cmp.transform.steps.len(),
        cmp.max_alpha,
        cmp.spectrum_shift
    );
    for b in &cmp.blocks {
        println!(
            "block {:?}: coupling error {:.3e} ({:.2} max|alpha|), diagonal error {:.3e}",
            b.states,
            b.coupling_error,
            b.relative_coupling_error() / cmp.max_alpha,
            b.diagonal_error
        );
    }
    Ok(())
}
