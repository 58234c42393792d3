//! Time steppers for `u_t + xi u - gamma * u + d psi(u) ∋ 0` on a
//! collocation grid, with `xi = xi_N = c_gamma^N - c_F`.
//!
//! * first order: `u^k = prox_{psi/lambda}((gamma*u^{k-1} + u^{k-1}/tau)/lambda)`,
//!   `lambda = xi + 1/tau`;
//! * second order implicit: the fixed-point iteration
//!   `u_m = prox_{psi/(2 lambda)}(q_m / lambda)`, `lambda = 1/tau + xi/2`,
//!   `q_m = (1/tau - xi/2) u^{k-1} + gamma * (u^{k-1} + u_{m-1})/2 - psi'(u^{k-1})/2`,
//!   started from `u_0 = u^{k-1}` and stopped once `|u_m - u_{m-1}|_h < tol`
//!   or after `M` sweeps;
//! * second order explicit: exactly two sweeps of the same iteration.
//!
//! `psi'(u^{k-1})` is dropped for the obstacle potential.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::kernel::KernelGrid;
use crate::potentials::{PotentialKind, PotentialSpec, ProxWeight};
use crate::scalar::Scalar;
use crate::spectral::{distance_h, Field, SpectralContext};

/// Below this many nodes the pointwise prox runs on the calling thread.
const PAR_MIN_LEN: usize = 4096;
pub const DEFAULT_FP_MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    FirstOrder,
    SecondOrderImplicit,
    SecondOrderExplicit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::FirstOrder => "first-order",
            Scheme::SecondOrderImplicit => "second-order-implicit",
            Scheme::SecondOrderExplicit => "second-order-explicit",
        }
    }

    pub fn all() -> [Scheme; 3] {
        [
            Scheme::FirstOrder,
            Scheme::SecondOrderImplicit,
            Scheme::SecondOrderExplicit,
        ]
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "first-order" | "first" | "euler" => Ok(Scheme::FirstOrder),
            "second-order-implicit" | "implicit" | "second-implicit" => {
                Ok(Scheme::SecondOrderImplicit)
            }
            "second-order-explicit" | "explicit" | "second-explicit" => {
                Ok(Scheme::SecondOrderExplicit)
            }
            other => Err(invalid("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig<T> {
    pub scheme: Scheme,
    pub tau: T,
    pub steps: usize,
    pub fp_tol: T,
    pub fp_max_iter: usize,
    pub potential: PotentialSpec<T>,
}

impl<T: Scalar> SchemeConfig<T> {
    /// Config with the default fixed-point tolerance for the potential and
    /// `M = 100`.
    pub fn new(scheme: Scheme, potential: PotentialSpec<T>, tau: T, steps: usize) -> Result<Self> {
        let cfg = Self {
            scheme,
            tau,
            steps,
            fp_tol: default_fp_tol(potential.kind()),
            fp_max_iter: DEFAULT_FP_MAX_ITER,
            potential,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_fp_tol(mut self, tol: T) -> Result<Self> {
        self.fp_tol = tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_fp_max_iter(mut self, m: usize) -> Result<Self> {
        self.fp_max_iter = m;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(invalid("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.fp_tol > T::zero()) {
            return Err(invalid("fp_tol", format!("must be positive, got {}", self.fp_tol)));
        }
        if self.fp_max_iter < 2 {
            return Err(invalid(
                "fp_max_iter",
                format!("must be at least 2, got {}", self.fp_max_iter),
            ));
        }
        Ok(())
    }

    /// Final time `K tau`.
    pub fn horizon(&self) -> T {
        T::from_count(self.steps) * self.tau
    }

    /// Logs the step-size conditions under which the stability and
    /// contraction results apply. Never rejects.
    pub fn warn_on_step_restrictions(&self, xi_n: T) {
        let two = T::lit(2.0);
        let c_f = self.potential.c_f();
        if xi_n < T::zero() {
            log::warn!("xi_N = {xi_n} is negative; energy stability is not guaranteed");
        }
        if self.scheme != Scheme::FirstOrder {
            if self.tau >= two / c_f {
                log::warn!(
                    "tau = {} >= 2/c_F = {}: the fixed-point iteration need not contract",
                    self.tau,
                    two / c_f
                );
            }
            if xi_n > T::zero() && self.tau >= two / xi_n {
                log::warn!(
                    "tau = {} >= 2/xi_N = {}: second-order energy decay is not guaranteed",
                    self.tau,
                    two / xi_n
                );
            }
            if self.potential.kind() == PotentialKind::Logarithmic {
                log::debug!(
                    "logarithmic second-order stability additionally needs tau < 2/(xi + C/2) \
                     with C bounding psi'' on the visited range"
                );
            }
        }
    }
}

/// Fixed-point tolerances used for the benchmark solutions:
/// `1e-15` for obstacle and regular, `1e-10` for logarithmic.
pub fn default_fp_tol<T: Scalar>(kind: PotentialKind) -> T {
    match kind {
        PotentialKind::Logarithmic => T::lit(1e-10),
        _ => T::lit(1e-15),
    }
}

/// `xi_N + 1/tau`, the first-order prox weight.
pub fn lambda_first<T: Scalar>(xi_n: T, tau: T) -> Result<T> {
    if xi_n < T::zero() {
        log::warn!("xi_N = {xi_n} is negative");
    }
    let lambda = xi_n + T::one() / tau;
    if !(lambda > T::zero()) {
        return Err(invalid("lambda", format!("xi_N + 1/tau = {lambda} is not positive")));
    }
    Ok(lambda)
}

/// `1/tau + xi_N/2`, the second-order prox weight.
pub fn lambda_second<T: Scalar>(xi_n: T, tau: T) -> Result<T> {
    let lambda = T::one() / tau + T::lit(0.5) * xi_n;
    if !(lambda > T::zero()) {
        return Err(invalid("lambda", format!("1/tau + xi_N/2 = {lambda} is not positive")));
    }
    Ok(lambda)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepState<T> {
    pub u: Field<T>,
    pub k: usize,
    pub time: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord<T> {
    pub k: usize,
    pub time: T,
    /// `E_N(u^k)`, when energy recording is on.
    pub energy: Option<T>,
    pub fp_iters: usize,
    /// Convolutions the scheme consumed in this step.
    pub convolutions: usize,
    pub max_abs: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTrace<T> {
    pub initial_energy: Option<T>,
    pub records: Vec<StepRecord<T>>,
}

impl<T: Scalar> EnergyTrace<T> {
    pub fn new() -> Self {
        Self {
            initial_energy: None,
            records: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `E_N(u^0), E_N(u^1), ...` for as long as energies were recorded.
    pub fn energies(&self) -> Vec<T> {
        self.initial_energy
            .into_iter()
            .chain(self.records.iter().map_while(|r| r.energy))
            .collect()
    }

    /// Largest normalized increase `(E_k - E_{k-1}) / (1 + |E_{k-1}|)`
    /// over consecutive steps; non-positive for a decaying trace.
    pub fn worst_relative_increase(&self) -> T {
        self.energies()
            .windows(2)
            .map(|w| (w[1] - w[0]) / (T::one() + w[0].abs()))
            .fold(T::neg_infinity(), T::max)
    }
}

impl<T: Scalar> Default for EnergyTrace<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    /// Convolutions consumed by the schemes, by their closed-form count.
    pub scheme_convolutions: usize,
    /// Convolutions evaluated only for energy diagnostics.
    pub energy_convolutions: usize,
    /// Convolutions actually computed with FFTs (cache hits excluded).
    pub computed_convolutions: usize,
    pub fp_iterations: usize,
    /// Implicit steps that stopped at `M` without meeting the tolerance.
    pub fp_cap_hits: usize,
}

/// Observer over fixed-point sweeps: `(m, u_m)`.
type SweepObserver<'o, T> = &'o mut dyn FnMut(usize, &[T]);

/// One solver run: owns the spectral context and a single-entry
/// convolution cache so that `gamma * u^k`, once computed for the energy of
/// `u^k`, is reused by the next step.
pub struct Stepper<'k, T: Scalar> {
    kernel: &'k KernelGrid<T>,
    cfg: SchemeConfig<T>,
    ctx: SpectralContext<T>,
    xi_n: T,
    cache_input: Vec<T>,
    cache_output: Vec<T>,
    cache_valid: bool,
    counters: Counters,
}

impl<'k, T: Scalar> Stepper<'k, T> {
    pub fn new(kernel: &'k KernelGrid<T>, cfg: SchemeConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let grid = kernel.grid();
        let xi_n = kernel.xi_n(cfg.potential.c_f());
        cfg.warn_on_step_restrictions(xi_n);
        Ok(Self {
            kernel,
            cfg,
            ctx: SpectralContext::new(grid),
            xi_n,
            cache_input: vec![T::zero(); grid.len()],
            cache_output: vec![T::zero(); grid.len()],
            cache_valid: false,
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &SchemeConfig<T> {
        &self.cfg
    }

    pub fn xi_n(&self) -> T {
        self.xi_n
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn kernel(&self) -> &KernelGrid<T> {
        self.kernel
    }

    /// `gamma_N (*) u` through the cache.
    fn convolution(&mut self, u: &[T]) -> Result<Vec<T>> {
        if self.cache_valid && self.cache_input.as_slice() == u {
            return Ok(self.cache_output.clone());
        }
        self.ctx
            .convolve_into(u, self.kernel, &mut self.cache_output)?;
        self.cache_input.copy_from_slice(u);
        self.cache_valid = true;
        self.counters.computed_convolutions += 1;
        Ok(self.cache_output.clone())
    }

    fn apply_prox(&self, weight: ProxWeight<T>, args: &mut [T]) {
        let prox = self.cfg.potential.prepare_prox(weight);
        args.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .for_each(|v| *v = prox.apply(*v));
    }

    pub fn step_first_order(&mut self, u_prev: &Field<T>) -> Result<Field<T>> {
        self.kernel.grid().check_same(u_prev.grid())?;
        let lambda = lambda_first(self.xi_n, self.cfg.tau)?;
        let inv_tau = T::one() / self.cfg.tau;
        let mut args = self.convolution(u_prev.data())?;
        for (a, &u) in args.iter_mut().zip(u_prev.data()) {
            *a = (*a + u * inv_tau) / lambda;
        }
        self.apply_prox(ProxWeight::first_order(lambda)?, &mut args);
        self.counters.scheme_convolutions += 1;
        Field::from_vec(u_prev.grid(), args)
    }

    /// Runs the fixed-point sweeps from `u_0 = u_prev`. With a tolerance it
    /// stops at the first `m` with `|u_m - u_{m-1}|_h < tol`; otherwise it
    /// performs exactly `max_sweeps` sweeps. Returns `(u_m, m, converged)`.
    fn sweeps(
        &mut self,
        u_prev: &Field<T>,
        max_sweeps: usize,
        tol: Option<T>,
        mut observer: Option<SweepObserver<'_, T>>,
    ) -> Result<(Vec<T>, usize, bool)> {
        self.kernel.grid().check_same(u_prev.grid())?;
        let grid = u_prev.grid().clone();
        let tau = self.cfg.tau;
        let xi = self.xi_n;
        let half = T::lit(0.5);
        let lambda = lambda_second(xi, tau)?;
        let weight = ProxWeight::second_order(lambda)?;
        let pot = self.cfg.potential;

        let conv_prev = self.convolution(u_prev.data())?;
        let explicit_coeff = T::one() / tau - half * xi;
        // q_m = base + conv(u_{m-1}) / 2
        let base: Vec<T> = u_prev
            .data()
            .iter()
            .zip(&conv_prev)
            .map(|(&u, &c)| explicit_coeff * u + half * c - half * pot.explicit_derivative(u))
            .collect();

        let mut previous = u_prev.data().to_vec();
        let mut conv_previous = conv_prev;
        let mut sweeps_done = 0;
        let mut converged = false;
        let mut used = 1;
        for m in 1..=max_sweeps {
            if m > 1 {
                conv_previous = self.convolution(&previous)?;
                used += 1;
            }
            let mut next: Vec<T> = base
                .iter()
                .zip(&conv_previous)
                .map(|(&b, &c)| (b + half * c) / lambda)
                .collect();
            self.apply_prox(weight, &mut next);
            sweeps_done = m;
            if let Some(obs) = observer.as_mut() {
                obs(m, &next);
            }
            let change = distance_h(&grid, &next, &previous);
            previous = next;
            if let Some(tol) = tol {
                if change < tol {
                    converged = true;
                    break;
                }
            }
        }
        self.counters.scheme_convolutions += used;
        self.counters.fp_iterations += sweeps_done;
        Ok((previous, sweeps_done, converged))
    }

    /// Fixed-point solve of the second-order implicit step. Returns the new
    /// state and the number of sweeps used.
    pub fn step_second_order_implicit(&mut self, u_prev: &Field<T>) -> Result<(Field<T>, usize)> {
        let (u, m, converged) =
            self.sweeps(u_prev, self.cfg.fp_max_iter, Some(self.cfg.fp_tol), None)?;
        if !converged {
            self.counters.fp_cap_hits += 1;
            log::warn!(
                "fixed-point iteration hit M = {} sweeps without reaching tol = {}",
                self.cfg.fp_max_iter,
                self.cfg.fp_tol
            );
        }
        Ok((Field::from_vec(u_prev.grid(), u)?, m))
    }

    /// Two sweeps of the fixed-point map, no tolerance check.
    pub fn step_second_order_explicit(&mut self, u_prev: &Field<T>) -> Result<Field<T>> {
        let (u, _, _) = self.sweeps(u_prev, 2, None, None)?;
        Field::from_vec(u_prev.grid(), u)
    }

    /// All fixed-point iterates `u_1, ..., u_sweeps` of one step, without a
    /// stopping test.
    pub fn fixed_point_iterates(&mut self, u_prev: &Field<T>, sweeps: usize) -> Result<Vec<Field<T>>> {
        let grid = u_prev.grid().clone();
        let mut iterates = Vec::with_capacity(sweeps);
        let mut record = |_m: usize, u: &[T]| iterates.push(u.to_vec());
        self.sweeps(u_prev, sweeps, None, Some(&mut record))?;
        iterates
            .into_iter()
            .map(|d| Field::from_vec(&grid, d))
            .collect()
    }

    /// One step of the configured scheme: `(u^k, fixed-point sweeps)`.
    pub fn step(&mut self, u_prev: &Field<T>) -> Result<(Field<T>, usize)> {
        match self.cfg.scheme {
            Scheme::FirstOrder => Ok((self.step_first_order(u_prev)?, 0)),
            Scheme::SecondOrderImplicit => self.step_second_order_implicit(u_prev),
            Scheme::SecondOrderExplicit => Ok((self.step_second_order_explicit(u_prev)?, 2)),
        }
    }

    /// Discrete energy `E_N(u)`; `+inf` when a node is infeasible.
    pub fn energy(&mut self, u: &Field<T>) -> Result<T> {
        self.kernel.grid().check_same(u.grid())?;
        let before = self.counters.computed_convolutions;
        let conv = self.convolution(u.data())?;
        self.counters.energy_convolutions += self.counters.computed_convolutions - before;
        Ok(energy_from_convolution(
            u,
            &conv,
            self.xi_n,
            &self.cfg.potential,
        ))
    }
}

/// `E_N(u) = (xi/2)|u|_h^2 - (gamma*u, u)_h / 2 + (c_F/2)|Omega| + h sum psi(u)`
/// given `conv = gamma_N (*) u`.
pub fn energy_from_convolution<T: Scalar>(
    u: &Field<T>,
    conv: &[T],
    xi_n: T,
    pot: &PotentialSpec<T>,
) -> T {
    let grid = u.grid();
    let half = T::lit(0.5);
    let mut quadratic = T::zero();
    let mut local = T::zero();
    for (&v, &c) in u.data().iter().zip(conv) {
        let psi = pot.psi_value(v);
        if psi == T::infinity() {
            return T::infinity();
        }
        quadratic += half * xi_n * v * v - half * c * v;
        local += psi;
    }
    grid.cell_volume() * (quadratic + local) + half * pot.c_f() * grid.volume()
}

/// Discrete energy with a one-off convolution.
pub fn energy_discrete<T: Scalar>(
    u: &Field<T>,
    kernel: &KernelGrid<T>,
    pot: &PotentialSpec<T>,
) -> Result<T> {
    let mut ctx = SpectralContext::new(kernel.grid());
    let conv = ctx.convolve(u, kernel)?;
    Ok(energy_from_convolution(
        u,
        conv.data(),
        kernel.xi_n(pot.c_f()),
        pot,
    ))
}

/// Whether every node satisfies `psi(u) < inf`.
pub fn is_admissible<T: Scalar>(u: &Field<T>, pot: &PotentialSpec<T>) -> bool {
    u.data().iter().all(|&v| pot.is_admissible(v))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub record_energy: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_energy: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T> {
    pub requested_time: T,
    pub k: usize,
    pub time: T,
    pub field: Field<T>,
}

#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub state: StepState<T>,
    pub trace: EnergyTrace<T>,
    pub snapshots: Vec<Snapshot<T>>,
    pub counters: Counters,
}

/// Step index nearest to time `t`, clamped to `0..=steps`.
pub fn nearest_step<T: Scalar>(t: T, tau: T, steps: usize) -> usize {
    let k = (t / tau).round();
    if !(k > T::zero()) {
        0
    } else {
        k.to_usize().unwrap_or(usize::MAX).min(steps)
    }
}

/// Advances `u0` by `cfg.steps` steps of `cfg.scheme`.
pub fn run<T: Scalar>(
    u0: &Field<T>,
    kernel: &KernelGrid<T>,
    cfg: &SchemeConfig<T>,
    snapshot_times: &[T],
    opts: RunOptions,
) -> Result<RunOutput<T>> {
    let mut stepper = Stepper::new(kernel, *cfg)?;
    kernel.grid().check_same(u0.grid())?;
    if cfg.potential.kind().is_bounded() && !is_admissible(u0, &cfg.potential) {
        return Err(invalid(
            "u0",
            format!("initial state leaves [-1, 1] (max |u0| = {})", u0.max_abs()),
        ));
    }

    let mut pending: Vec<(usize, T)> = snapshot_times
        .iter()
        .map(|&t| (nearest_step(t, cfg.tau, cfg.steps), t))
        .collect();
    pending.sort_by_key(|&(k, _)| k);
    let mut snapshots = Vec::with_capacity(pending.len());
    let mut emit = |k: usize, u: &Field<T>, snapshots: &mut Vec<Snapshot<T>>| {
        while let Some(&(target, t)) = pending.first() {
            if target != k {
                break;
            }
            snapshots.push(Snapshot {
                requested_time: t,
                k,
                time: T::from_count(k) * cfg.tau,
                field: u.clone(),
            });
            pending.remove(0);
        }
    };

    let mut trace = EnergyTrace::new();
    if opts.record_energy && cfg.steps > 0 {
        trace.initial_energy = Some(stepper.energy(u0)?);
    }
    emit(0, u0, &mut snapshots);

    let mut u = u0.clone();
    for k in 1..=cfg.steps {
        let before = stepper.counters().scheme_convolutions;
        let (next, fp_iters) = stepper.step(&u)?;
        let convolutions = stepper.counters().scheme_convolutions - before;
        u = next;
        let energy = if opts.record_energy {
            Some(stepper.energy(&u)?)
        } else {
            None
        };
        trace.records.push(StepRecord {
            k,
            time: T::from_count(k) * cfg.tau,
            energy,
            fp_iters,
            convolutions,
            max_abs: u.max_abs(),
        });
        emit(k, &u, &mut snapshots);
    }

    Ok(RunOutput {
        state: StepState {
            u,
            k: cfg.steps,
            time: cfg.horizon(),
        },
        trace,
        snapshots,
        counters: stepper.counters(),
    })
}
