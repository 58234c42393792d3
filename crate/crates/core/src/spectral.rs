//! Uniform periodic collocation grids, grid functions, the discrete Fourier
//! transform pair and FFT-based circular convolution.
//!
//! Nodes along axis `a` sit at `x_i = -X_a + i h_a`, `i = 0..N_a`, with the
//! right endpoint excluded. Spectra are stored in standard FFT order; index
//! `k` along an axis stands for the logical frequency `l = k` for
//! `k <= N/2` and `l = k - N` otherwise, so the logical set is
//! `{-N/2+1, ..., N/2}` with the Nyquist mode kept on the positive side.
//!
//! Because the grid starts at `-X` rather than `0`, the transform
//! `u_hat_l = sum_i u_i exp(-i pi l x_i / X)` differs from a plain FFT by the
//! factor `(-1)^l` per axis. [`dft_forward`] and [`dft_inverse`] apply it;
//! convolution symbols are phase-free, so the convolution path skips it.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::kernel::KernelGrid;
use crate::scalar::Scalar;

pub const MAX_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    counts: [usize; MAX_DIM],
    extents: [T; MAX_DIM],
    spacings: [T; MAX_DIM],
}

impl<T: Scalar> Grid<T> {
    /// `extents[a]` is the half-width `X_a`; `counts[a]` must be even and at
    /// least 4.
    pub fn new(extents: &[T], counts: &[usize]) -> Result<Self> {
        let dim = counts.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid("dim", format!("must be 1, 2 or 3, got {dim}")));
        }
        if extents.len() != dim {
            return Err(invalid(
                "extents",
                format!("expected {dim} half-widths, got {}", extents.len()),
            ));
        }
        let mut c = [1usize; MAX_DIM];
        let mut x = [T::one(); MAX_DIM];
        let mut h = [T::one(); MAX_DIM];
        for a in 0..dim {
            if counts[a] < 4 || !counts[a].is_multiple_of(2) {
                return Err(invalid(
                    "counts",
                    format!("axis {a}: point count must be even and >= 4, got {}", counts[a]),
                ));
            }
            if !(extents[a] > T::zero()) || !extents[a].is_finite() {
                return Err(invalid(
                    "extents",
                    format!("axis {a}: half-width must be positive, got {}", extents[a]),
                ));
            }
            c[a] = counts[a];
            x[a] = extents[a];
            h[a] = (extents[a] + extents[a]) / T::from_count(counts[a]);
        }
        Ok(Self {
            dim,
            counts: c,
            extents: x,
            spacings: h,
        })
    }

    /// `(-extent, extent)^dim` with `count` points per axis.
    pub fn cube(dim: usize, extent: T, count: usize) -> Result<Self> {
        Self::new(&vec![extent; dim], &vec![count; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub fn extents(&self) -> &[T] {
        &self.extents[..self.dim]
    }

    pub fn spacings(&self) -> &[T] {
        &self.spacings[..self.dim]
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.counts().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h_1 ... h_n`.
    pub fn cell_volume(&self) -> T {
        self.spacings().iter().fold(T::one(), |acc, &h| acc * h)
    }

    /// `|Omega| = prod 2 X_a`.
    pub fn volume(&self) -> T {
        self.extents().iter().fold(T::one(), |acc, &x| acc * (x + x))
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> T {
        -self.extents[axis] + T::from_count(i) * self.spacings[axis]
    }

    /// Row-major multi-index of a flat node index (unused axes are 0).
    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.counts[a];
            rem /= self.counts[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(self.counts())
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Coordinates of a node (unused axes are 0).
    pub fn node(&self, flat: usize) -> [T; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut x = [T::zero(); MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.coordinate(a, idx[a]);
        }
        x
    }

    /// Logical frequency of FFT-order index `k` along `axis`.
    pub fn logical_frequency(&self, axis: usize, k: usize) -> i64 {
        let n = self.counts[axis];
        if k <= n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// FFT-order index of logical frequency `l` along `axis`.
    pub fn storage_index(&self, axis: usize, l: i64) -> Option<usize> {
        let n = self.counts[axis] as i64;
        if l <= -n / 2 || l > n / 2 {
            return None;
        }
        Some(if l >= 0 { l as usize } else { (l + n) as usize })
    }

    pub(crate) fn check_same(&self, other: &Grid<T>) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "counts {:?} / extents {:?} vs counts {:?} / extents {:?}",
                self.counts(),
                self.extents(),
                other.counts(),
                other.extents()
            )))
        }
    }
}

/// A real grid function, row-major over the node index set.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Grid<T>,
    data: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &Grid<T>, value: T) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: &Grid<T>, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            data,
        })
    }

    /// Nodal interpolant of `f`; `f` receives the node coordinates
    /// (`grid.dim()` entries).
    pub fn from_fn(grid: &Grid<T>, f: impl Fn(&[T]) -> T) -> Self {
        let dim = grid.dim();
        let data = (0..grid.len())
            .map(|flat| {
                let x = grid.node(flat);
                f(&x[..dim])
            })
            .collect();
        Self {
            grid: grid.clone(),
            data,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::from_count(self.len())
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: T, other: &Field<T>, beta: T) -> Result<Field<T>> {
        self.grid.check_same(&other.grid)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| alpha * a + beta * b)
            .collect();
        Ok(Field {
            grid: self.grid.clone(),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Complex coefficients over the frequency index set, FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    grid: Grid<T>,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn from_vec(grid: &Grid<T>, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "spectrum has {} coefficients, grid has {} nodes",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            data,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    /// Coefficient at a logical frequency multi-index, `None` outside the
    /// frequency set.
    pub fn get(&self, freq: &[i64]) -> Option<Complex<T>> {
        if freq.len() != self.grid.dim() {
            return None;
        }
        let mut idx = [0usize; MAX_DIM];
        for (a, &l) in freq.iter().enumerate() {
            idx[a] = self.grid.storage_index(a, l)?;
        }
        Some(self.data[self.grid.flat_index(&idx[..self.grid.dim()])])
    }

    /// Largest deviation from `c_{-l} = conj(c_l)` over all coefficients
    /// whose mirrored frequency is in the index set (the Nyquist planes are
    /// their own mirror modulo N).
    pub fn hermitian_defect(&self) -> T {
        let grid = &self.grid;
        let dim = grid.dim();
        let mut worst = T::zero();
        for (flat, c) in self.data.iter().enumerate() {
            let idx = grid.multi_index(flat);
            let mut mirror = [0usize; MAX_DIM];
            for a in 0..dim {
                let n = grid.counts()[a];
                mirror[a] = (n - idx[a]) % n;
            }
            let m = self.data[grid.flat_index(&mirror[..dim])];
            worst = worst.max((*c - m.conj()).norm());
        }
        worst
    }
}

struct AxisPlan<T: Scalar> {
    len: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

/// Owns FFT plans and scratch space for one grid. Not shareable between
/// threads while in use; build one per run.
pub struct SpectralContext<T: Scalar> {
    grid: Grid<T>,
    axes: Vec<AxisPlan<T>>,
    buffer: Vec<Complex<T>>,
    work: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    real: RealPath<T>,
}

/// Real-input transforms: r2c along the contiguous last axis, complex FFTs
/// along the others on the half spectrum of `N_last/2 + 1` columns.
struct RealPath<T: Scalar> {
    half_counts: Vec<usize>,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    half: Vec<Complex<T>>,
    row: Vec<T>,
    scratch: Vec<Complex<T>>,
}

impl<T: Scalar> SpectralContext<T> {
    pub fn new(grid: &Grid<T>) -> Self {
        let mut planner = FftPlanner::new();
        let axes: Vec<AxisPlan<T>> = grid
            .counts()
            .iter()
            .map(|&n| AxisPlan {
                len: n,
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
            .collect();
        let scratch_len = axes
            .iter()
            .map(|p| {
                p.forward
                    .get_inplace_scratch_len()
                    .max(p.inverse.get_inplace_scratch_len())
            })
            .max()
            .unwrap_or(0);
        let zero = Complex::new(T::zero(), T::zero());
        let dim = grid.dim();
        let last = grid.counts()[dim - 1];
        let mut half_counts = grid.counts().to_vec();
        half_counts[dim - 1] = last / 2 + 1;
        let mut real_planner = RealFftPlanner::new();
        let r2c = real_planner.plan_fft_forward(last);
        let c2r = real_planner.plan_fft_inverse(last);
        let real_scratch = r2c.get_scratch_len().max(c2r.get_scratch_len());
        let half_len: usize = half_counts.iter().product();
        let real = RealPath {
            half_counts,
            r2c,
            c2r,
            half: vec![zero; half_len],
            row: vec![T::zero(); last],
            scratch: vec![zero; real_scratch],
        };
        Self {
            grid: grid.clone(),
            axes,
            buffer: vec![zero; grid.len()],
            work: vec![zero; grid.len()],
            scratch: vec![zero; scratch_len],
            real,
        }
    }

    /// `out = F^{-1}[m * F[u]]` for real `u`, with `m` given on the half
    /// spectrum (see [`half_spectrum`]). `m` must come from a Hermitian
    /// symbol for the result to be real.
    pub(crate) fn real_filter(&mut self, u: &[T], out: &mut [T], m: &[Complex<T>]) {
        debug_assert_eq!(m.len(), self.real.half.len());
        let dim = self.grid.dim();
        let last = self.grid.counts()[dim - 1];
        let rp = &mut self.real;
        let cols = rp.half_counts[dim - 1];
        let rows = u.len() / last;
        for r in 0..rows {
            rp.row.copy_from_slice(&u[r * last..(r + 1) * last]);
            rp.r2c
                .process_with_scratch(
                    &mut rp.row,
                    &mut rp.half[r * cols..(r + 1) * cols],
                    &mut rp.scratch,
                )
                .expect("buffer lengths fixed at plan time");
        }
        let work = &mut self.work[..rp.half.len()];
        fft_nd(
            &self.axes[..dim - 1],
            &rp.half_counts,
            &mut rp.half,
            work,
            &mut self.scratch,
            false,
        );
        for (c, &f) in rp.half.iter_mut().zip(m) {
            *c = *c * f;
        }
        fft_nd(
            &self.axes[..dim - 1],
            &rp.half_counts,
            &mut rp.half,
            work,
            &mut self.scratch,
            true,
        );
        let scale = T::one() / T::from_count(self.grid.len());
        let nyquist = cols - 1;
        for r in 0..rows {
            let line = &mut rp.half[r * cols..(r + 1) * cols];
            // DC and Nyquist bins of a real row are real; drop round-off.
            line[0].im = T::zero();
            line[nyquist].im = T::zero();
            let dst = &mut out[r * last..(r + 1) * last];
            rp.c2r
                .process_with_scratch(line, dst, &mut rp.scratch)
                .expect("buffer lengths fixed at plan time");
            for v in dst.iter_mut() {
                *v *= scale;
            }
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    fn transform(&mut self, inverse: bool) {
        fft_nd(
            &self.axes,
            self.grid.counts(),
            &mut self.buffer,
            &mut self.work,
            &mut self.scratch,
            inverse,
        );
    }

    /// Plain unnormalized FFT (no phase factor, no `1/N`) of a buffer laid
    /// out on this context's grid.
    pub fn fft_in_place(&mut self, data: &mut [Complex<T>]) {
        assert_eq!(data.len(), self.grid.len(), "buffer does not match grid");
        fft_nd(
            &self.axes,
            self.grid.counts(),
            data,
            &mut self.work,
            &mut self.scratch,
            false,
        );
    }

    /// Forward transform with the grid's `(-1)^l` phase convention.
    pub fn dft_forward(&mut self, u: &Field<T>) -> Result<Spectrum<T>> {
        self.grid.check_same(u.grid())?;
        for (b, &v) in self.buffer.iter_mut().zip(u.data()) {
            *b = Complex::new(v, T::zero());
        }
        self.transform(false);
        let mut data = self.buffer.clone();
        apply_alternating_sign(&self.grid, &mut data);
        Ok(Spectrum {
            grid: self.grid.clone(),
            data,
        })
    }

    /// Inverse transform including the `1/prod N_a` factor. Fails if the
    /// reconstruction carries an imaginary residue above
    /// `1e-12 * max |coefficient|`.
    pub fn dft_inverse(&mut self, s: &Spectrum<T>) -> Result<Field<T>> {
        self.grid.check_same(s.grid())?;
        self.buffer.copy_from_slice(s.data());
        apply_alternating_sign(&self.grid, &mut self.buffer);
        self.transform(true);
        let scale = T::one() / T::from_count(self.grid.len());
        let max_coeff = s.data().iter().fold(T::zero(), |m, c| m.max(c.norm()));
        let tolerance = max_coeff * T::lit(1e-12).max(T::lit(64.0) * T::epsilon());
        let residue = self
            .buffer
            .iter()
            .fold(T::zero(), |m, c| m.max((c.im * scale).abs()));
        if residue > tolerance {
            return Err(Error::NonHermitian {
                residue: residue.to_f64_lossy(),
                tolerance: tolerance.to_f64_lossy(),
            });
        }
        let data = self.buffer.iter().map(|c| c.re * scale).collect();
        Ok(Field {
            grid: self.grid.clone(),
            data,
        })
    }

    /// `out = gamma_N (*) u`, the `h`-weighted periodic convolution.
    pub fn convolve_into(&mut self, u: &[T], kernel: &KernelGrid<T>, out: &mut [T]) -> Result<()> {
        self.grid.check_same(kernel.grid())?;
        if u.len() != self.grid.len() || out.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "convolution operands have {} / {} values, grid has {} nodes",
                u.len(),
                out.len(),
                self.grid.len()
            )));
        }
        self.real_filter(u, out, kernel.half_hat());
        Ok(())
    }

    pub fn convolve(&mut self, u: &Field<T>, kernel: &KernelGrid<T>) -> Result<Field<T>> {
        self.grid.check_same(u.grid())?;
        let mut out = Field::zeros(&self.grid);
        self.convolve_into(u.data(), kernel, out.data_mut())?;
        Ok(out)
    }

    /// `L_N u = c_gamma^N u - gamma_N (*) u`.
    pub fn nonlocal_apply(&mut self, u: &Field<T>, kernel: &KernelGrid<T>) -> Result<Field<T>> {
        let mut out = self.convolve(u, kernel)?;
        let c = kernel.c_gamma_n();
        for (o, &v) in out.data_mut().iter_mut().zip(u.data()) {
            *o = c * v - *o;
        }
        Ok(out)
    }

    /// Applies a real Fourier multiplier (FFT order) to a real field:
    /// `out = F^{-1}[m * F[u]]`.
    pub fn apply_multiplier(&mut self, u: &[T], multiplier: &[T], out: &mut [T]) {
        let half: Vec<Complex<T>> = half_spectrum(&self.grid, multiplier)
            .into_iter()
            .map(|m| Complex::new(m, T::zero()))
            .collect();
        self.real_filter(u, out, &half);
    }
}

/// Unnormalized multidimensional FFT in place with plain index phases.
/// Strided axes are gathered into `work` so each axis is one batched call.
fn fft_nd<T: Scalar>(
    axes: &[AxisPlan<T>],
    counts: &[usize],
    data: &mut [Complex<T>],
    work: &mut [Complex<T>],
    scratch: &mut [Complex<T>],
    inverse: bool,
) {
    let total = data.len();
    for (a, plan) in axes.iter().enumerate() {
        let fft = if inverse { &plan.inverse } else { &plan.forward };
        let inner: usize = counts[a + 1..].iter().product();
        if inner == 1 {
            fft.process_with_scratch(data, scratch);
            continue;
        }
        let n = plan.len;
        let outer = total / (n * inner);
        for o in 0..outer {
            let base = o * n * inner;
            for j in 0..inner {
                let line = &mut work[(o * inner + j) * n..(o * inner + j + 1) * n];
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * inner + j];
                }
            }
        }
        fft.process_with_scratch(work, scratch);
        for o in 0..outer {
            let base = o * n * inner;
            for j in 0..inner {
                let line = &work[(o * inner + j) * n..(o * inner + j + 1) * n];
                for (k, &v) in line.iter().enumerate() {
                    data[base + k * inner + j] = v;
                }
            }
        }
    }
}

/// Restricts a full FFT-order array to the half spectrum used by real
/// transforms: the last axis keeps indices `0..=N_last/2`.
pub fn half_spectrum<T: Scalar, V: Copy>(grid: &Grid<T>, full: &[V]) -> Vec<V> {
    let last = grid.counts()[grid.dim() - 1];
    let cols = last / 2 + 1;
    let rows = grid.len() / last;
    (0..rows)
        .flat_map(|r| full[r * last..r * last + cols].iter().copied())
        .collect()
}

fn apply_alternating_sign<T: Scalar>(grid: &Grid<T>, data: &mut [Complex<T>]) {
    for (flat, c) in data.iter_mut().enumerate() {
        let idx = grid.multi_index(flat);
        if idx.iter().sum::<usize>() % 2 == 1 {
            *c = -*c;
        }
    }
}

pub fn dft_forward<T: Scalar>(u: &Field<T>) -> Spectrum<T> {
    SpectralContext::new(u.grid())
        .dft_forward(u)
        .expect("context built on the field's own grid")
}

pub fn dft_inverse<T: Scalar>(s: &Spectrum<T>) -> Result<Field<T>> {
    SpectralContext::new(s.grid()).dft_inverse(s)
}

pub fn circular_convolve<T: Scalar>(u: &Field<T>, kernel: &KernelGrid<T>) -> Result<Field<T>> {
    SpectralContext::new(u.grid()).convolve(u, kernel)
}

pub fn nonlocal_apply<T: Scalar>(u: &Field<T>, kernel: &KernelGrid<T>) -> Result<Field<T>> {
    SpectralContext::new(u.grid()).nonlocal_apply(u, kernel)
}

/// Discrete inner product `(prod h_a) sum u v`.
pub fn inner_h<T: Scalar>(u: &Field<T>, v: &Field<T>) -> Result<T> {
    u.grid().check_same(v.grid())?;
    Ok(inner_h_slices(u.grid(), u.data(), v.data()))
}

pub fn norm_h<T: Scalar>(u: &Field<T>) -> T {
    inner_h_slices(u.grid(), u.data(), u.data()).sqrt()
}

pub(crate) fn inner_h_slices<T: Scalar>(grid: &Grid<T>, u: &[T], v: &[T]) -> T {
    grid.cell_volume() * u.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>()
}

/// `norm_h(u - v)` without allocating.
pub(crate) fn distance_h<T: Scalar>(grid: &Grid<T>, u: &[T], v: &[T]) -> T {
    let s: T = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d
        })
        .sum();
    (grid.cell_volume() * s).sqrt()
}

/// Fourier symbol of the Laplacian in FFT order: `-sum_a (pi l_a / X_a)^2`.
pub fn laplacian_symbol<T: Scalar>(grid: &Grid<T>) -> Vec<T> {
    let dim = grid.dim();
    let per_axis: Vec<Vec<T>> = (0..dim)
        .map(|a| {
            (0..grid.counts()[a])
                .map(|k| {
                    let l = T::lit(grid.logical_frequency(a, k) as f64);
                    let w = T::PI() * l / grid.extents()[a];
                    w * w
                })
                .collect()
        })
        .collect();
    (0..grid.len())
        .map(|flat| {
            let idx = grid.multi_index(flat);
            -(0..dim).map(|a| per_axis[a][idx[a]]).sum::<T>()
        })
        .collect()
}
