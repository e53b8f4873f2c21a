//! Scratch calibration driver: time the stepper and watch the equipartition
//! indicator on a disordered preset.
//!
//! Usage: calibrate <x0> <p0> <gamma_d> <sigma_d> <points> <half_width> <dt> <t_final> <seed>

use std::time::Instant;

use equipart_core::diagnostics::{self, Channel};
use equipart_core::lattice::{ConfigGrid, Grid1D};
use equipart_core::model::{build_initial_state, GaussianSpec, PotentialField, TrapParams};
use equipart_core::propagator::Propagator;
use equipart_core::weakfields::{Differentiator, WeakFieldSet};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (x0, p0, gamma_d, sigma_d) = (args[0], args[1], args[2], args[3]);
    let (points, half) = (args[4] as usize, args[5]);
    let (dt, t_final, seed) = (args[6], args[7], args[8] as u64);

    let grid = ConfigGrid::new(Grid1D::new(points, half).unwrap(), 2).unwrap();
    let params = TrapParams { gamma_d, sigma_d, seed, ..TrapParams::default() };
    let pot = PotentialField::build(&params, &grid).unwrap();
    let mut psi = build_initial_state(
        &[
            GaussianSpec::new(-x0, p0, 1.0).unwrap(),
            GaussianSpec::new(x0, p0, 1.0).unwrap(),
        ],
        &grid,
    )
    .unwrap();
    let mut prop = Propagator::new(&grid, &pot, dt).unwrap();
    if prop.plan().phase_wrap_warning {
        eprintln!("warning: dt * max|V| exceeds pi");
    }
    let mut diff = Differentiator::spectral(&grid);

    let t0 = Instant::now();
    let mut series = Vec::new();
    let sample_every = (0.25 / dt).round() as usize;
    prop.evolve(&mut psi, t_final, sample_every, |t, s| {
        let wf = WeakFieldSet::compute(s, &mut diff)?;
        let rec = diagnostics::sample(s, &pot, &wf)?;
        if series.len() % 20 == 0 {
            println!(
                "t={:7.2} norm={:.3e} H={:10.4} K={:9.3} V_H={:9.3} K_B={:9.3} Q_B={:9.3} eqind={:7.4} vir={:6.3} Cpp={:+.3e} Cxx={:+.3e} ImCw={:+.2e} wall={:6.1}s",
                t,
                rec.norm - 1.0,
                rec.h_total,
                rec.k_total,
                rec.v_h_mean,
                rec.k_b_total(),
                rec.q_b_total(),
                (rec.k_b_total() - rec.q_b_total()).abs() / rec.k_total,
                rec.virial_ratio,
                rec.c_pp,
                rec.c_xx,
                rec.c_weak.im,
                t0.elapsed().as_secs_f64()
            );
        }
        series.push(rec);
        Ok(())
    })
    .unwrap();

    for channel in [Channel::Equipartition, Channel::Virial, Channel::Correlation] {
        let v = diagnostics::detect_t_eq_channel(&series, 0.1, 20.0, channel);
        match v {
            Ok(v) => println!("{}: t_eq = {:?}", channel.name(), v.t_eq),
            Err(e) => println!("{}: {e}", channel.name()),
        }
    }
    let h0 = series[0].h_total;
    let hmax = series.iter().map(|r| (r.h_total - h0).abs() / h0.abs()).fold(0.0f64, f64::max);
    let nmax = series.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0f64, f64::max);
    println!("H drift {hmax:.3e}  norm drift {nmax:.3e}  wall {:.1}s", t0.elapsed().as_secs_f64());
}
