//! Cubic deformation of su(2): check the algebra on the finite module, then
//! compare the effective series with exact eigenvalues order by order.
//!
//! cargo run --example deformed_su2

use lieham::deformed::{
    build_module, effective_series, interaction_hamiltonian, verify_algebra, StructuralPolynomial,
    Su2HamiltonianSpec,
};
use lieham::dynamics::eigenvalue_compare;

fn main() -> lieham::Result<()> {
    // Φ(m) = m (p + 1 − m)(q + m), lowest weight 0, p + 1 states
    let p = 5.0;
    let module = build_module(StructuralPolynomial::cubic(p, 1.0), 0.0, 6)?;
    let r = verify_algebra(&module);
    println!(
        "algebra: interior {:.1e}, corner {:.1e}",
        r.max_interior(),
        r.corner_mismatch()
    );

    let spec = Su2HamiltonianSpec::new(10.0, 0.2, module)?;
    let h = interaction_hamiltonian(&spec);
    println!("eps = {}", spec.epsilon());
    for order in 1..=3 {
        let cmp = eigenvalue_compare(&h, &effective_series(&spec, order)?, None)?;
        println!(
            "order {order}: max |E_exact - E_eff| = {:.3e}",
            cmp.max_error
        );
    }
    Ok(())
}
