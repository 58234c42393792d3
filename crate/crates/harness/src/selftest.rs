//! A handful of fast correctness checks that run in well under a second.

use nlac::stepper::{energy_discrete, run, RunOptions, Scheme, SchemeConfig};
use nlac::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn selftest() -> Result<Vec<Check>> {
    Ok(vec![
        convolution()?,
        kernel_constant()?,
        prox_fixed_points()?,
        pure_phase_energy()?,
        energy_decay()?,
    ])
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// FFT convolution against the direct periodic sum on a small 2D grid.
fn convolution() -> Result<Check> {
    let grid = Grid64::new(&[1.0, 0.5], &[8, 6])?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = Field64::from_vec(&grid, (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let g = Field64::from_vec(&grid, (0..grid.len()).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let kernel = KernelGrid64::from_samples(g.clone());
    let fast = circular_convolve(&u, &kernel)?;
    let h = grid.cell_volume();
    let counts = grid.counts();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let a = grid.multi_index(i);
        let mut sum = 0.0;
        for j in 0..grid.len() {
            let b = grid.multi_index(j);
            let d = [(a[0] + counts[0] - b[0]) % counts[0], (a[1] + counts[1] - b[1]) % counts[1]];
            sum += g.data()[grid.flat_index(&d)] * u.data()[j];
        }
        worst = worst.max((h * sum - fast.data()[i]).abs());
    }
    Ok(check("convolution matches direct sum", worst <= 1e-12, format!("max error {worst:e}")))
}

fn kernel_constant() -> Result<Check> {
    let grid = Grid64::cube(1, 1.0, 512)?;
    let k = sample_periodic(&KernelSpec64::new(0.1, 0.1, 1)?, &grid)?;
    let rel = (k.c_gamma_n() - 4.0).abs() / 4.0;
    Ok(check("kernel mass 4 eps^2/delta^2", rel <= 1e-6, format!("relative error {rel:e}")))
}

/// Optimality of the prox: a clamp for the obstacle, a stationary point otherwise.
fn prox_fixed_points() -> Result<Check> {
    let mut worst = 0.0f64;
    for pot in [PotentialSpec64::obstacle(1.0)?, PotentialSpec64::regular(1.0)?] {
        let w = ProxWeight::first_order(3.0)?;
        for v in [-5.0, -0.3, 0.0, 0.7, 12.0] {
            let s = pot.prox(w, v);
            // optimality: lambda (s - v) + psi'(s) = 0 for smooth interior points
            if pot.kind() == PotentialKind::Regular {
                let r = w.effective() * (s - v) + pot.psi_prime(s)?;
                worst = worst.max(r.abs());
            } else {
                worst = worst.max((s - v.clamp(-1.0, 1.0)).abs());
            }
        }
    }
    Ok(check("prox optimality", worst <= 1e-12, format!("max residual {worst:e}")))
}

fn pure_phase_energy() -> Result<Check> {
    let grid = Grid64::cube(2, 1.0, 16)?;
    let k = sample_periodic(&KernelSpec64::new(0.1, 0.1, 2)?, &grid)?;
    let pot = PotentialSpec64::obstacle(1.0)?;
    let e = [1.0, -1.0]
        .iter()
        .map(|&c| energy_discrete(&Field64::constant(&grid, c), &k, &pot))
        .collect::<nlac::Result<Vec<f64>>>()?;
    let worst = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(check("pure phases have zero energy", worst <= 1e-12, format!("max |E| {worst:e}")))
}

fn energy_decay() -> Result<Check> {
    let grid = Grid64::cube(1, 1.0, 64)?;
    let k = sample_periodic(&KernelSpec64::new(0.1, 0.1, 1)?, &grid)?;
    let u0 = Field64::from_fn(&grid, |x| 0.5 * ((std::f64::consts::PI * x[0]).sin() + (2.0 * std::f64::consts::PI * x[0]).sin()));
    let mut worst = f64::NEG_INFINITY;
    for scheme in Scheme::all() {
        let cfg = SchemeConfig::new(scheme, PotentialSpec64::obstacle(1.0)?, 0.01, 50)?;
        let out = run(&u0, &k, &cfg, &[], RunOptions::default())?;
        worst = worst.max(out.trace.worst_relative_increase());
    }
    Ok(check("energy decays for every scheme", worst <= 1e-10, format!("worst relative increase {worst:e}")))
}

