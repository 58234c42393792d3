//! Scaled Gaussian interaction kernel
//! `gamma(z) = 4 eps^2 / (pi^{n/2} delta^{n+2}) exp(-|z|^2 / delta^2)`
//! and its periodized samples on a collocation grid.

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::spectral::{half_spectrum, Field, Grid, SpectralContext, Spectrum, MAX_DIM};

const MAX_IMAGE_DEPTH: usize = 64;
const IMAGE_SUM_REL_TOL: f64 = 1e-16;
const COARSE_GRID_REL_TOL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec<T> {
    epsilon: T,
    delta: T,
    dim: usize,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(epsilon: T, delta: T, dim: usize) -> Result<Self> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(invalid("delta", format!("must be positive, got {delta}")));
        }
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid("dim", format!("must be 1, 2 or 3, got {dim}")));
        }
        Ok(Self {
            epsilon,
            delta,
            dim,
        })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Continuum `c_gamma = int gamma = 4 eps^2 / delta^2`.
    pub fn c_gamma(&self) -> T {
        let r = self.epsilon / self.delta;
        T::lit(4.0) * r * r
    }

    fn amplitude(&self) -> T {
        let n = self.dim as i32;
        T::lit(4.0) * self.epsilon * self.epsilon
            / (T::PI().powf(T::lit(0.5) * T::from_count(self.dim)) * self.delta.powi(n + 2))
    }

    /// Kernel value at displacement `z` (`dim` components).
    pub fn kernel_value(&self, z: &[T]) -> T {
        debug_assert_eq!(z.len(), self.dim);
        let r2 = z.iter().fold(T::zero(), |acc, &c| acc + c * c);
        self.amplitude() * (-r2 / (self.delta * self.delta)).exp()
    }
}

/// Periodized kernel samples `gamma_N` on a grid, indexed by displacement,
/// with `c_gamma^N = h sum gamma_N` and the convolution symbol
/// `hat = h * FFT(gamma_N)`.
#[derive(Clone, Debug)]
pub struct KernelGrid<T> {
    values: Field<T>,
    c_gamma_n: T,
    hat: Spectrum<T>,
    half_hat: Vec<Complex<T>>,
    coarse: bool,
}

impl<T: Scalar> KernelGrid<T> {
    /// Builds the grid form from displacement-indexed samples: entry `i`
    /// along an axis holds the kernel at displacement `i h` (wrapped into
    /// `[-X, X)`). Any real samples are accepted; even kernels get a real
    /// symbol.
    pub fn from_samples(values: Field<T>) -> Self {
        let grid = values.grid().clone();
        let weight = grid.cell_volume();
        let c_gamma_n = weight * values.data().iter().copied().sum::<T>();

        let mut ctx = SpectralContext::new(&grid);
        let mut symbol: Vec<Complex<T>> = values
            .data()
            .iter()
            .map(|&v| Complex::new(v, T::zero()))
            .collect();
        ctx.fft_in_place(&mut symbol);
        let even = is_even(&values);
        for c in symbol.iter_mut() {
            *c = c.scale(weight);
            if even {
                c.im = T::zero();
            }
        }
        symbol[0] = Complex::new(c_gamma_n, T::zero());
        let half_hat = half_spectrum(&grid, &symbol);
        let hat = Spectrum::from_vec(&grid, symbol).expect("symbol has one entry per node");
        Self {
            values,
            c_gamma_n,
            hat,
            half_hat,
            coarse: false,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        self.values.grid()
    }

    pub fn values(&self) -> &Field<T> {
        &self.values
    }

    /// Discrete `c_gamma^N = gamma_N (*) 1`.
    pub fn c_gamma_n(&self) -> T {
        self.c_gamma_n
    }

    /// Convolution symbol: `dft(gamma_N (*) u) = hat * dft(u)`.
    pub fn hat(&self) -> &Spectrum<T> {
        &self.hat
    }

    pub(crate) fn half_hat(&self) -> &[Complex<T>] {
        &self.half_hat
    }

    /// `xi_N = c_gamma^N - c_F`.
    pub fn xi_n(&self, c_f: T) -> T {
        self.c_gamma_n - c_f
    }

    /// Set when the sampled constant misses `4 eps^2/delta^2` by more than 1%.
    pub fn is_coarse(&self) -> bool {
        self.coarse
    }
}

/// Samples the kernel periodically on `grid`.
///
/// Each node sums the kernel over image shifts `s * period`,
/// `s in {-S..S}^n`, adding shells of increasing `S` until a shell changes
/// no node by more than `1e-16` relative. The shell sums are nested per
/// axis as `g(0) + sum_s (g(s) + g(-s))` so that the samples are bit-exactly
/// symmetric under index negation along any axis.
pub fn sample_periodic<T: Scalar>(spec: &KernelSpec<T>, grid: &Grid<T>) -> Result<KernelGrid<T>> {
    if spec.dim() != grid.dim() {
        return Err(invalid(
            "dim",
            format!("kernel is {}-D but grid is {}-D", spec.dim(), grid.dim()),
        ));
    }
    let dim = grid.dim();
    let two_delta = spec.delta() + spec.delta();
    for a in 0..dim {
        let width = grid.extents()[a] + grid.extents()[a];
        if width < two_delta {
            log::warn!(
                "axis {a}: domain width {width} is below 2 delta = {two_delta}; \
                 the periodized kernel overlaps itself strongly"
            );
        }
    }

    let displacement: Vec<Vec<T>> = (0..dim)
        .map(|a| {
            let n = grid.counts()[a];
            let h = grid.spacings()[a];
            (0..n)
                .map(|i| {
                    let j = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
                    T::lit(j as f64) * h
                })
                .collect()
        })
        .collect();
    let periods: Vec<T> = grid.extents().iter().map(|&x| x + x).collect();
    let amp = spec.amplitude();
    let inv_d2 = T::one() / (spec.delta() * spec.delta());

    let mut values = vec![T::zero(); grid.len()];
    for (flat, out) in values.iter_mut().enumerate() {
        let idx = grid.multi_index(flat);
        let z: Vec<T> = (0..dim).map(|a| displacement[a][idx[a]]).collect();
        let mut depth = 1;
        let mut total = image_sum(&z, &periods, depth, amp, inv_d2);
        while depth < MAX_IMAGE_DEPTH {
            let next = image_sum(&z, &periods, depth + 1, amp, inv_d2);
            let change = (next - total).abs();
            total = next;
            depth += 1;
            if change <= T::lit(IMAGE_SUM_REL_TOL) * total {
                break;
            }
        }
        *out = total;
    }

    let field = Field::from_vec(grid, values)?;
    let mut kg = KernelGrid::from_samples(field);
    let analytic = spec.c_gamma();
    let rel = ((kg.c_gamma_n - analytic) / analytic).abs();
    if rel > T::lit(COARSE_GRID_REL_TOL) {
        kg.coarse = true;
        log::warn!(
            "grid too coarse for the kernel: c_gamma^N = {} vs 4 eps^2/delta^2 = {} ({:.2}% off)",
            kg.c_gamma_n,
            analytic,
            rel.to_f64_lossy() * 100.0
        );
    }
    Ok(kg)
}

/// Nested symmetric sum of the kernel over shifts `s in {-depth..depth}^n`.
fn image_sum<T: Scalar>(z: &[T], periods: &[T], depth: usize, amp: T, inv_d2: T) -> T {
    fn level<T: Scalar>(
        z: &[T],
        periods: &[T],
        axis: usize,
        depth: usize,
        r2: T,
        amp: T,
        inv_d2: T,
    ) -> T {
        if axis == z.len() {
            return amp * (-r2 * inv_d2).exp();
        }
        let at = |s: i64| {
            let c = z[axis] + T::lit(s as f64) * periods[axis];
            level(z, periods, axis + 1, depth, r2 + c * c, amp, inv_d2)
        };
        let mut acc = at(0);
        for s in 1..=depth as i64 {
            acc += at(s) + at(-s);
        }
        acc
    }
    level(z, periods, 0, depth, T::zero(), amp, inv_d2)
}

fn is_even<T: Scalar>(values: &Field<T>) -> bool {
    let grid = values.grid();
    let dim = grid.dim();
    let data = values.data();
    (0..data.len()).all(|flat| {
        let idx = grid.multi_index(flat);
        let mut mirror = [0usize; MAX_DIM];
        for a in 0..dim {
            let n = grid.counts()[a];
            mirror[a] = (n - idx[a]) % n;
        }
        data[grid.flat_index(&mirror[..dim])] == data[flat]
    })
}
