use nlsv_core::grid::{l2_norm, Field, Grid};
use nlsv_core::potentials::PotentialSpec;
use nlsv_core::spectral::{
    bound_states, default_grid, log_space, scattering_coefficients, scattering_table, SpectralOptions,
};

// nu = 2: V = -3 sech^2, reflectionless with states at -kappa^2/2, kappa = 1, 2
#[test]
fn two_state_well_is_reflectionless() {
    let spec = PotentialSpec::PoschlTeller { beta: 3.0, center: 0.0 };
    let grid = default_grid();
    let opts = SpectralOptions::default();
    let states = bound_states(&spec, &grid, &opts).unwrap();
    let energies: Vec<f64> = states.iter().map(|s| s.energy).collect();
    assert_eq!(energies.len(), 2, "{energies:?}");
    assert!((energies[0] + 2.0).abs() < 1e-6, "{energies:?}");
    assert!((energies[1] + 0.5).abs() < 1e-6, "{energies:?}");

    // ground state is sqrt(3)/2 sech^2, excited is sqrt(3/2) sech tanh
    let ground = Field::from_real_fn(grid, |x| 3f64.sqrt() / 2.0 / x.cosh().powi(2));
    let err = l2_norm(&states[0].phi.difference(&ground).unwrap())
        .min(l2_norm(&states[0].phi.scaled((-1.0).into()).difference(&ground).unwrap()));
    assert!(err < 1e-5, "ground state error {err}");

    for c in scattering_table(&spec, &grid, &log_space(0.5, 20.0, 12), &opts).unwrap() {
        assert!(c.r.norm() < 1e-6, "R({}) = {}", c.lambda, c.r);
        assert!((c.t.norm() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn moduli_are_translation_invariant() {
    let grid = default_grid();
    let opts = SpectralOptions::default();
    for lambda in [0.7, 3.0, 11.0] {
        let a = scattering_coefficients(&PotentialSpec::Gaussian { q: 1.5, sigma: 0.8, center: 0.0 }, &grid, lambda, &opts).unwrap();
        let b = scattering_coefficients(&PotentialSpec::Gaussian { q: 1.5, sigma: 0.8, center: 3.0 }, &grid, lambda, &opts).unwrap();
        assert!((a.t - b.t).norm() < 1e-8, "T at {lambda}");
        assert!((a.r.norm() - b.r.norm()).abs() < 1e-8);
    }
}

#[test]
fn repulsive_barrier_has_no_bound_states() {
    let states = bound_states(
        &PotentialSpec::Algebraic { q: 1.0, s: 3.0, center: 0.0 },
        &Grid::symmetric(64.0, 1 << 14).unwrap(),
        &SpectralOptions::default(),
    )
    .unwrap();
    assert!(states.is_empty());
}

#[test]
fn transmission_tends_to_one() {
    let grid = default_grid();
    let opts = SpectralOptions::default();
    let spec = PotentialSpec::Gaussian { q: 2.0, sigma: 1.0, center: 0.0 };
    let defects: Vec<f64> = [2.0, 8.0, 32.0]
        .iter()
        .map(|&v| (scattering_coefficients(&spec, &grid, v, &opts).unwrap().t - 1.0).norm())
        .collect();
    assert!(defects.windows(2).all(|w| w[1] < w[0]), "{defects:?}");
}
