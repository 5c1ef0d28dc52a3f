use lieham::basis::{build_sector, Excitation};
use lieham::deformed::{
    build_module, effective_series, interaction_hamiltonian, verify_algebra, StructuralPolynomial,
    Su2HamiltonianSpec,
};
use lieham::lie_transform::{iterate, IterateOptions};
use lieham::multilevel::{
    build_hamiltonian, h0, one_photon_coupling, t1_generator, CascadeModelSpec,
};
use lieham::operator::{commutator, excitation_op, hermitian_eig};
use lieham::{Error, Operator, SectorBasis};
use proptest::prelude::*;

fn cascade() -> impl Strategy<Value = (CascadeModelSpec, SectorBasis)> {
    (2usize..5, 1usize..3, 0usize..4).prop_flat_map(|(n, a, step)| {
        (
            proptest::collection::vec(0.05f64..0.5, n - 1),
            proptest::collection::vec((5.0f64..30.0, any::<bool>()), n - 1),
        )
            .prop_map(move |(g, d)| {
                let mut detunings = vec![0.0];
                detunings.extend(d.iter().map(|&(x, neg)| if neg { -x } else { x }));
                let spec = CascadeModelSpec::from_detunings(n, a, g, detunings).unwrap();
                let mut e = Excitation::minimum(n, a);
                for _ in 0..step {
                    e = e.succ();
                }
                (spec, build_sector(n, a, e).unwrap())
            })
    })
}

fn sorted(h: &Operator) -> Vec<f64> {
    let mut e = hermitian_eig(h).unwrap().eigenvalues;
    e.sort_by(f64::total_cmp);
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn cascade_hamiltonian_is_hermitian_and_keeps_excitation((spec, sector) in cascade()) {
        let h = build_hamiltonian(&spec, &sector, false).unwrap();
        let scale = h.max_abs().max(1.0);
        prop_assert!(h.hermiticity_residual() <= 1e-12 * scale);
        let c = commutator(&h, &excitation_op(&sector)).unwrap();
        prop_assert!(c.max_abs() <= 1e-12 * scale);
    }

    #[test]
    fn first_generator_removes_the_coupling((spec, sector) in cascade()) {
        let Ok(t1) = t1_generator(&spec, &sector) else { return Ok(()) };
        let v = one_photon_coupling(&spec, &sector).unwrap();
        let r = &commutator(&t1, &h0(&spec, &sector).unwrap()).unwrap() + &v;
        prop_assert!(r.max_abs() <= 1e-12 * v.max_abs().max(1.0), "{}", r.max_abs());
        prop_assert!((&t1 + &t1.adjoint()).max_abs() <= 1e-14);
    }

    #[test]
    fn rotation_keeps_the_sector_spectrum((spec, sector) in cascade()) {
        let h = build_hamiltonian(&spec, &sector, false).unwrap();
        let report = match iterate(&h, &h0(&spec, &sector).unwrap(), &IterateOptions::default()) {
            Ok(r) => r,
            // breakdown is only reported when some rotation angle is not small
            Err(Error::Divergence { largest_ratio, .. }) => {
                prop_assert!(largest_ratio > 0.5, "{largest_ratio}");
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let tol = 1e-9 * (1.0 + h.max_abs());
        for (a, b) in sorted(&h).iter().zip(&sorted(&report.final_h)) {
            prop_assert!((a - b).abs() <= tol, "{a} vs {b}");
        }
    }

    #[test]
    fn cubic_modules_obey_the_algebra(p in 1usize..8, q in 0.5f64..4.0) {
        let module = build_module(StructuralPolynomial::cubic(p as f64, q), 0.0, p + 1).unwrap();
        let r = verify_algebra(&module);
        let scale = (0..=p).map(|k| module.phi_realized(k as f64).abs()).fold(1.0, f64::max);
        prop_assert!(r.max_interior() <= 1e-12 * scale);
        prop_assert!(r.corner_mismatch() <= 1e-12 * scale);
    }

    #[test]
    fn deformed_series_is_hermitian(twice_j in 1usize..9, eps in 0.001f64..0.1, order in 1usize..4) {
        let j = twice_j as f64 / 2.0;
        let module = build_module(StructuralPolynomial::spin(j), -j, twice_j + 1).unwrap();
        let spec = Su2HamiltonianSpec::new(1.0, eps, module).unwrap();
        let h = effective_series(&spec, order).unwrap();
        prop_assert!(h.hermiticity_residual() <= 1e-14);
        prop_assert!(interaction_hamiltonian(&spec).hermiticity_residual() <= 1e-14);
    }
}
