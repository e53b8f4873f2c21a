//! Frame-separability end to end: a state that factorizes in (x_c, x_r)
//! keeps its CoM-conditional weak value equal to the weak field of the CoM
//! factor evolved on its own 1D grid with mass 2.

use equipart_core::comframe::com_conditional_weak_momentum;
use equipart_core::lattice::{ConfigGrid, Grid1D, WaveFunction};
use equipart_core::model::{
    build_initial_state, GaussianSpec, PotentialField, TrapParams,
};
use equipart_core::propagator::Propagator;
use equipart_core::weakfields::{weak_momentum, Differentiator, WeakFieldSet};

#[test]
fn com_conditional_tracks_the_evolved_com_factor() {
    let m = 256;
    let half = 16.0;
    let omega = 1.0;
    let dt = 1e-3;

    // Two-particle side: D2-type start (equal boosts) factorizes in (c, r)
    // with CoM factor exp(-c^2) e^{i 8 c}.
    let grid2 = ConfigGrid::new(Grid1D::new(m, half).unwrap(), 2).unwrap();
    let params = TrapParams { gamma_d: 0.0, ..TrapParams::default() };
    let pot2 = PotentialField::build(&params, &grid2).unwrap();
    let specs = [
        GaussianSpec::new(-2.0, 4.0, 1.0).unwrap(),
        GaussianSpec::new(2.0, 4.0, 1.0).unwrap(),
    ];
    let mut psi2 = build_initial_state(&specs, &grid2).unwrap();
    let mut prop2 = Propagator::new(&grid2, &pot2, dt).unwrap();
    let mut diff2 = Differentiator::spectral(&grid2);

    // CoM side: the factor lives on the doubled grid (spacing dx/2) that the
    // anti-diagonal marginal produces, with mass 2 under omega^2 x_c^2.
    let grid_c = ConfigGrid::new(Grid1D::new(2 * m, half).unwrap(), 1).unwrap();
    let pot_c_values: Vec<f64> = (0..2 * m)
        .map(|i| {
            let c = grid_c.coordinate(i, 0);
            omega * omega * c * c
        })
        .collect();
    let pot_c = PotentialField::from_values(&grid_c, pot_c_values).unwrap();
    let sigma_c = 0.5f64.sqrt();
    let mut psi_c = build_initial_state(
        &[GaussianSpec::new(0.0, 8.0, sigma_c).unwrap()],
        &grid_c,
    )
    .unwrap();
    let mut prop_c = Propagator::with_mass(&grid_c, &pot_c, dt, 2.0).unwrap();
    let mut diff_c = Differentiator::spectral(&grid_c);

    let mut checked_nodes = 0usize;
    for _segment in 0..4 {
        prop2.advance(&mut psi2, 500).unwrap();
        prop_c.advance(&mut psi_c, 500).unwrap();

        let wf2 = WeakFieldSet::compute(&psi2, &mut diff2).unwrap();
        let cond = com_conditional_weak_momentum(&psi2, &wf2).unwrap();
        let pw_c = weak_momentum(&psi_c, &mut diff_c, 0).unwrap();
        let peak = cond
            .marginal
            .iter()
            .fold(0.0f64, |acc, &p| acc.max(p));
        for (s, &xc) in cond.nodes.iter().enumerate() {
            if cond.mask[s] || cond.marginal[s] < 1e-6 * peak {
                continue;
            }
            let got = cond.values[s];
            let want = pw_c[s];
            assert!(
                (got - want).norm() < 1e-8,
                "t = {}, x_c = {xc}: conditional {got} vs 1D factor {want}",
                psi2.time
            );
            checked_nodes += 1;
        }
    }
    assert!(checked_nodes > 500, "only {checked_nodes} nodes compared");
}

#[test]
fn com_conditional_expectation_matches_full_weak_momentum_sum() {
    // <p~_c> over the CoM marginal equals <p_w,1> + <p_w,2> over |psi|^2.
    let m = 192;
    let grid = ConfigGrid::new(Grid1D::new(m, 12.0).unwrap(), 2).unwrap();
    let params = TrapParams { gamma_d: 1.0, seed: 21, ..TrapParams::default() };
    let pot = PotentialField::build(&params, &grid).unwrap();
    let specs = [
        GaussianSpec::new(-2.0, 3.0, 1.0).unwrap(),
        GaussianSpec::new(2.0, 3.0, 1.0).unwrap(),
    ];
    let mut psi = build_initial_state(&specs, &grid).unwrap();
    let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
    prop.advance(&mut psi, 800).unwrap();

    let mut diff = Differentiator::spectral(&grid);
    let wf = WeakFieldSet::compute(&psi, &mut diff).unwrap();
    let cond = com_conditional_weak_momentum(&psi, &wf).unwrap();
    let lhs = cond.expectation(grid.axis().spacing());

    let n = grid.total_points();
    let dvol = grid.cell_volume();
    let rho_weighted = |field: &WaveFunction, j: usize| -> num_complex::Complex64 {
        let d = &wf.derivative(j);
        equipart_core::lattice::pairwise_csum_by(0, n, &|i| {
            num_complex::Complex64::new(0.0, -1.0) * d[i] * field.amplitudes[i].conj()
        }) * dvol
    };
    let rhs = rho_weighted(&psi, 0) + rho_weighted(&psi, 1);
    assert!(
        (lhs - rhs).norm() < 1e-8,
        "conditional expectation {lhs} vs direct {rhs}"
    );
}
