//! Error of the truncated effective series against ε = g/Δ on a spin-2
//! module, with the fitted power per truncation order. For ordinary spin
//! the second-order term only moves eigenvectors, so orders 1 and 2 share
//! a slope.
//!
//! cargo run --example scaling

use lieham::deformed::{
    build_module, effective_series, interaction_hamiltonian, StructuralPolynomial,
    Su2HamiltonianSpec,
};
use lieham::dynamics::{eigenvalue_compare, scaling_study};

fn main() -> lieham::Result<()> {
    let module = build_module(StructuralPolynomial::spin(2.0), -2.0, 5)?;
    let base = Su2HamiltonianSpec::new(1.0, 0.1, module)?;
    let eps = [0.08, 0.04, 0.02, 0.01];
    for order in 1..=3 {
        let study = scaling_study(&eps, |e| {
            let spec = base.with_couplings(1.0, e)?;
            let h_eff = effective_series(&spec, order)?;
            Ok(eigenvalue_compare(&interaction_hamiltonian(&spec), &h_eff, None)?.max_error)
        })?;
        println!(
            "order {order}: slope {:.3}, errors {:?}",
            study.fitted_exponent, study.errors
        );
    }
    Ok(())
}
