//! Non-isothermal model: an obstacle-potential phase field coupled to a
//! heat equation with latent-heat source, decoupled per step.
//!
//! Phase (explicit coupling, projection):
//! `u^k = clamp(((mu/tau) u^{k-1} + gamma*u^{k-1} + c_F m(theta^{k-1})) / (mu/tau + xi_N))`.
//!
//! Temperature (implicit Euler in Fourier space):
//! `theta^k = (I - tau D Laplacian)^{-1} (theta^{k-1} + L (u^k - u^{k-1}))`.

use crate::error::{invalid, Result};
use crate::kernel::KernelGrid;
use crate::scalar::Scalar;
use num_complex::Complex;

use crate::spectral::{half_spectrum, laplacian_symbol, Field, SpectralContext};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledConfig<T> {
    /// Thermal diffusivity `D`.
    pub diffusivity: T,
    /// Relaxation time `mu`.
    pub mu: T,
    /// Latent heat `L`.
    pub latent: T,
    pub alpha: T,
    pub rho: T,
    /// Equilibrium temperature.
    pub theta_e: T,
    pub tau: T,
    pub steps: usize,
    pub c_f: T,
}

impl<T: Scalar> CoupledConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("diffusivity", self.diffusivity)?;
        positive("mu", self.mu)?;
        positive("tau", self.tau)?;
        positive("rho", self.rho)?;
        positive("c_f", self.c_f)?;
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !self.latent.is_finite() || !self.theta_e.is_finite() {
            return Err(invalid("latent/theta_e", "must be finite".to_string()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> T {
        T::from_count(self.steps) * self.tau
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState<T> {
    pub u: Field<T>,
    pub theta: Field<T>,
    pub k: usize,
    pub time: T,
}

/// `m(theta) = (alpha/pi) atan(rho (theta_e - theta))`, bounded by `alpha/2`.
pub fn coupling_m<T: Scalar>(theta: T, cfg: &CoupledConfig<T>) -> T {
    cfg.alpha / T::PI() * (cfg.rho * (cfg.theta_e - theta)).atan()
}

/// Fraction of nodes with `u < 0`.
pub fn liquid_fraction<T: Scalar>(u: &Field<T>) -> f64 {
    let liquid = u.data().iter().filter(|&&v| v < T::zero()).count();
    liquid as f64 / u.len().max(1) as f64
}

/// Owns the spectral context and the heat-solve multiplier for one run.
pub struct CoupledStepper<'k, T: Scalar> {
    kernel: &'k KernelGrid<T>,
    cfg: CoupledConfig<T>,
    ctx: SpectralContext<T>,
    /// `1 / (1 - tau D lambda_l)` on the half spectrum.
    heat_multiplier: Vec<Complex<T>>,
    xi_n: T,
}

impl<'k, T: Scalar> CoupledStepper<'k, T> {
    pub fn new(kernel: &'k KernelGrid<T>, cfg: CoupledConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let grid = kernel.grid();
        let xi_n = kernel.xi_n(cfg.c_f);
        if xi_n < T::zero() {
            log::warn!("xi_N = {xi_n} is negative");
        }
        let td = cfg.tau * cfg.diffusivity;
        let full: Vec<T> = laplacian_symbol(grid)
            .into_iter()
            .map(|l| T::one() / (T::one() - td * l))
            .collect();
        let heat_multiplier = half_spectrum(grid, &full)
            .into_iter()
            .map(|m| Complex::new(m, T::zero()))
            .collect();
        Ok(Self {
            kernel,
            cfg,
            ctx: SpectralContext::new(grid),
            heat_multiplier,
            xi_n,
        })
    }

    pub fn config(&self) -> &CoupledConfig<T> {
        &self.cfg
    }

    /// Projection step for the phase with `theta` frozen.
    pub fn phase_step(&mut self, u_prev: &Field<T>, theta: &Field<T>) -> Result<Field<T>> {
        let grid = self.kernel.grid();
        grid.check_same(u_prev.grid())?;
        grid.check_same(theta.grid())?;
        let mut out = vec![T::zero(); grid.len()];
        self.ctx.convolve_into(u_prev.data(), self.kernel, &mut out)?;
        let mu_tau = self.cfg.mu / self.cfg.tau;
        let lambda = mu_tau + self.xi_n;
        if !(lambda > T::zero()) {
            return Err(invalid("lambda", format!("mu/tau + xi_N = {lambda} is not positive")));
        }
        let (lo, hi) = (-T::one(), T::one());
        for ((o, &u), &th) in out.iter_mut().zip(u_prev.data()).zip(theta.data()) {
            let forcing = self.cfg.c_f * coupling_m(th, &self.cfg);
            *o = (((*o + u * mu_tau) + forcing) / lambda).max(lo).min(hi);
        }
        Field::from_vec(grid, out)
    }

    /// Implicit heat step with source `L (u_new - u_prev)`.
    pub fn temperature_step(
        &mut self,
        theta_prev: &Field<T>,
        u_prev: &Field<T>,
        u_new: &Field<T>,
    ) -> Result<Field<T>> {
        let grid = self.kernel.grid();
        grid.check_same(theta_prev.grid())?;
        let latent = self.cfg.latent;
        let rhs: Vec<T> = theta_prev
            .data()
            .iter()
            .zip(u_new.data().iter().zip(u_prev.data()))
            .map(|(&th, (&un, &up))| th + latent * (un - up))
            .collect();
        // A constant field is a fixed point of the solve; skip the transform
        // round trip so it stays exact.
        if rhs.iter().all(|&v| v == rhs[0]) {
            return Field::from_vec(grid, rhs);
        }
        let mut out = vec![T::zero(); grid.len()];
        self.ctx.real_filter(&rhs, &mut out, &self.heat_multiplier);
        Field::from_vec(grid, out)
    }

    pub fn step(&mut self, state: &CoupledState<T>) -> Result<CoupledState<T>> {
        let u = self.phase_step(&state.u, &state.theta)?;
        let theta = self.temperature_step(&state.theta, &state.u, &u)?;
        let k = state.k + 1;
        Ok(CoupledState {
            u,
            theta,
            k,
            time: T::from_count(k) * self.cfg.tau,
        })
    }
}

/// One coupled step.
pub fn step_coupled<T: Scalar>(
    state: &CoupledState<T>,
    kernel: &KernelGrid<T>,
    cfg: &CoupledConfig<T>,
) -> Result<CoupledState<T>> {
    CoupledStepper::new(kernel, *cfg)?.step(state)
}

#[derive(Clone, Debug)]
pub struct CoupledRecord {
    pub k: usize,
    pub time: f64,
    pub liquid_fraction: f64,
    pub max_abs_m: f64,
    pub theta_mean: f64,
}

#[derive(Clone, Debug)]
pub struct CoupledOutput<T> {
    pub state: CoupledState<T>,
    pub records: Vec<CoupledRecord>,
    pub snapshots: Vec<CoupledState<T>>,
}

fn record<T: Scalar>(state: &CoupledState<T>, cfg: &CoupledConfig<T>) -> CoupledRecord {
    let max_abs_m = state
        .theta
        .data()
        .iter()
        .map(|&th| coupling_m(th, cfg).abs().to_f64_lossy())
        .fold(0.0, f64::max);
    CoupledRecord {
        k: state.k,
        time: state.time.to_f64_lossy(),
        liquid_fraction: liquid_fraction(&state.u),
        max_abs_m,
        theta_mean: state.theta.mean().to_f64_lossy(),
    }
}

/// Runs `cfg.steps` coupled steps, recording diagnostics every step and
/// snapshots at the steps nearest `snapshot_times`.
pub fn run_coupled<T: Scalar>(
    u0: &Field<T>,
    theta0: &Field<T>,
    kernel: &KernelGrid<T>,
    cfg: &CoupledConfig<T>,
    snapshot_times: &[T],
) -> Result<CoupledOutput<T>> {
    let mut stepper = CoupledStepper::new(kernel, *cfg)?;
    if u0.data().iter().any(|v| v.abs() > T::one()) {
        return Err(invalid("u0", "initial phase leaves [-1, 1]".to_string()));
    }
    let mut targets: Vec<usize> = snapshot_times
        .iter()
        .map(|&t| crate::stepper::nearest_step(t, cfg.tau, cfg.steps))
        .collect();
    targets.sort_unstable();

    let mut state = CoupledState {
        u: u0.clone(),
        theta: theta0.clone(),
        k: 0,
        time: T::zero(),
    };
    let mut records = vec![record(&state, cfg)];
    let mut snapshots = Vec::new();
    let take = |state: &CoupledState<T>, snapshots: &mut Vec<CoupledState<T>>| {
        for _ in targets.iter().filter(|&&k| k == state.k) {
            snapshots.push(state.clone());
        }
    };
    take(&state, &mut snapshots);
    for _ in 0..cfg.steps {
        state = stepper.step(&state)?;
        records.push(record(&state, cfg));
        take(&state, &mut snapshots);
    }
    Ok(CoupledOutput {
        state,
        records,
        snapshots,
    })
}
