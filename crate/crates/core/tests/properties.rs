use proptest::prelude::*;

use qshoot::coupled::{CoupledProblem, CoupledShooter};
use qshoot::potentials::{MatrixPotentialSpec, PotentialSpec};
use qshoot::radial::{count_nodes, simpson, RadialMesh};
use qshoot::search::ShootingConfig;
use qshoot::shooting::{Shooter, ShootingProblem};
use qshoot::spectrum::SpectrumModel;

fn mesh() -> RadialMesh {
    RadialMesh::new(1e-5, 25.0, 6001).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn node_count_is_monotone(a in -0.5f64..0.5, k in 0.2f64..1.5, l in 0u32..3) {
        let problem = ShootingProblem::new(PotentialSpec::cornell(a, k).unwrap(), l, 1.0, mesh()).unwrap();
        let s = Shooter::new(&problem).unwrap();
        let counts: Vec<usize> = (0..40).map(|i| s.nodes_at(-1.0 + 0.25 * i as f64)).collect();
        prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    }

    #[test]
    fn solutions_have_n_nodes_and_unit_norm(k in 0.3f64..1.5, n in 0usize..4, l in 0u32..3) {
        let problem = ShootingProblem::new(PotentialSpec::cornell(-0.2, k).unwrap(), l, 1.0, mesh()).unwrap();
        let sol = Shooter::new(&problem).unwrap().solve(&ShootingConfig::new(-2.0, 15.0), n).unwrap();
        prop_assert_eq!(count_nodes(&sol.wavefunction, sol.truncation_index), n);
        let y2: Vec<f64> = sol.wavefunction.values().iter().map(|y| y * y).collect();
        prop_assert!((simpson(&y2, problem.mesh.step()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oscillator_scales_with_frequency(c in 0.1f64..2.0, l in 0u32..2) {
        // V = c r^2 with m = 1 has E = 2 sqrt(c) (2n + l + 3/2)
        let problem = ShootingProblem::new(PotentialSpec::power(c, 2.0).unwrap(), l, 1.0, mesh()).unwrap();
        let sol = Shooter::new(&problem).unwrap().solve(&ShootingConfig::new(0.0, 20.0), 1).unwrap();
        let exact = 2.0 * c.sqrt() * (2.0 + l as f64 + 1.5);
        prop_assert!((sol.energy - exact).abs() < 1e-5, "{} vs {exact}", sol.energy);
    }

    #[test]
    fn coupled_mixing_is_a_unit_vector(b1 in 0.05f64..0.3, a1 in 1.5f64..3.0) {
        let spec = MatrixPotentialSpec::hybrid_log(1.0, 0.5, a1, b1, 1, 1.0).unwrap();
        let problem = CoupledProblem::new(spec, 1, 1.0, RadialMesh::new(1e-5, 30.0, 8001).unwrap()).unwrap();
        let sol = CoupledShooter::new(&problem).unwrap().solve(&ShootingConfig::new(0.0, 4.0), 0).unwrap();
        let norm: f64 = sol.mixing.iter().map(|c| c * c).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        let h = problem.mesh.step();
        let total: f64 = sol
            .components
            .iter()
            .map(|u| simpson(&u.values().iter().map(|v| v * v).collect::<Vec<_>>(), h))
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn first_order_shift_is_linear(c in 0.001f64..0.05) {
        let v0 = PotentialSpec::cornell(0.1, 0.5).unwrap();
        let cfg = ShootingConfig::new(0.0, 10.0);
        let shift = |scale: f64| {
            SpectrumModel::new(v0.clone(), 0, 1.0, cfg)
                .unwrap()
                .with_mesh(mesh())
                .with_v_1m(Some(PotentialSpec::power(scale * c, 1.0).unwrap()))
                .with_basis_max(3)
                .unwrap()
                .mass_at_order(0)
                .unwrap()
                .nlo
        };
        let (one, two) = (shift(1.0), shift(2.0));
        prop_assert!((two - 2.0 * one).abs() <= 1e-12 * two.abs().max(1e-300));
    }
}
