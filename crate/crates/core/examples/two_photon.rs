//! Three-level atom in two-photon resonance. The closed-form effective
//! Hamiltonian is compared with the exact sector spectrum and propagated
//! next to the exact dynamics in the rotated frame.
//!
//! cargo run --example two_photon

use lieham::basis::{sector_of, BasisState, Space};
use lieham::dynamics::{
    effective_rabi_period, eigenvalue_compare, fidelity_series, Frame, TimeGrid,
};
use lieham::multilevel::{
    build_hamiltonian, effective_two_photon, empty_levels_mask, t1_generator, CascadeModelSpec,
};
use lieham::operator::{expm_antihermitian, unit_vector};

fn main() -> lieham::Result<()> {
    for d2 in [20.0, 40.0] {
        let spec = CascadeModelSpec::from_detunings(3, 1, vec![1.0, 1.0], vec![0.0, d2, 0.0])?;
        let start = BasisState::uniform(4, 3, 1, 1);
        let sector = sector_of(&start)?;
        let h = build_hamiltonian(&spec, &sector, false)?;

        // eigenvalues on the states with level 2 empty
        let projected = effective_two_photon(&spec, &sector, true)?;
        let support: Vec<usize> = empty_levels_mask(&sector, &[2])
            .iter()
            .enumerate()
            .filter_map(|(k, keep)| keep.then_some(k))
            .collect();
        let cmp = eigenvalue_compare(&h, &projected, Some(&support))?;

        let h_eff = effective_two_photon(&spec, &sector, false)?;
        let u = expm_antihermitian(&t1_generator(&spec, &sector)?)?;
        let psi0 = unit_vector(sector.len(), sector.index_of(&start).unwrap());
        let period = effective_rabi_period(&h_eff, &u.apply(&psi0))?;
        let grid = TimeGrid::linspace(3.0 * period, 1500)?;
        let f = fidelity_series(&h, &h_eff, &psi0, &grid, Frame::Rotated(&u))?;
        println!(
            "Δ₂ = {d2}: eigenvalue error {:.2e}, period {period:.2}, min fidelity {:.5}",
            cmp.max_error, f.min_fidelity
        );
    }
    Ok(())
}
