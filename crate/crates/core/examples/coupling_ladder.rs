//! Coupling constants of the cascade atom: the rotation angles α⁽¹⁾, the
//! k-photon couplings ψ⁽ᵏ⁾, the second-order angles and the Stark matrix β.
//!
//! cargo run --example coupling_ladder

use lieham::multilevel::{alpha1, alpha2, beta, psi_ladder, CascadeModelSpec};

fn main() -> lieham::Result<()> {
    let spec = CascadeModelSpec::from_detunings(
        5,
        1,
        vec![1.0, 0.8, 1.2, 0.9],
        vec![0.0, 20.0, 50.0, 75.0, 0.0],
    )?;
    println!("alpha1 {:?}", alpha1(&spec)?);
    for (k, row) in psi_ladder(&spec)?.iter().enumerate() {
        println!("psi^({}) {:?}", k + 1, row);
    }
    println!("alpha2 {:?}", alpha2(&spec)?);
    for row in beta(&spec)? {
        println!("beta {row:?}");
    }
    Ok(())
}
