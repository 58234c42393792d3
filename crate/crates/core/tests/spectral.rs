use std::f64::consts::PI;

use approx::assert_relative_eq;
use nlac::*;
use num_complex::Complex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: &Grid64, seed: u64) -> Field64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Field64::from_vec(grid, data).unwrap()
}

fn kernel(grid: &Grid64, eps: f64, delta: f64) -> KernelGrid64 {
    sample_periodic(&KernelSpec64::new(eps, delta, grid.dim()).unwrap(), grid).unwrap()
}

/// `h sum_j gamma[(i - j) mod N] u_j`, summed directly.
fn direct_convolution(u: &Field64, k: &KernelGrid64) -> Vec<f64> {
    let grid = u.grid();
    let dim = grid.dim();
    let counts = grid.counts();
    let h = grid.cell_volume();
    (0..grid.len())
        .map(|i| {
            let ii = grid.multi_index(i);
            let mut acc = 0.0;
            for j in 0..grid.len() {
                let jj = grid.multi_index(j);
                let mut d = [0usize; 3];
                for a in 0..dim {
                    d[a] = (ii[a] + counts[a] - jj[a]) % counts[a];
                }
                acc += k.values().data()[grid.flat_index(&d[..dim])] * u.data()[j];
            }
            h * acc
        })
        .collect()
}

#[test]
fn grid_validation() {
    assert!(Grid64::new(&[1.0], &[7]).is_err());
    assert!(Grid64::new(&[1.0], &[2]).is_err());
    assert!(Grid64::new(&[1.0, 1.0], &[8]).is_err());
    assert!(Grid64::new(&[-1.0], &[8]).is_err());
    assert!(Grid64::new(&[1.0; 4], &[4; 4]).is_err());
    let g = Grid64::new(&[1.0, 2.0], &[8, 16]).unwrap();
    assert_eq!(g.len(), 128);
    assert_eq!(g.spacings(), &[0.25, 0.25]);
    assert_eq!(g.coordinate(0, 0), -1.0);
    assert_eq!(g.coordinate(1, 8), 0.0);
    assert_relative_eq!(g.volume(), 8.0);
}

#[test]
fn frequency_layout() {
    let g = Grid64::cube(1, 1.0, 8).unwrap();
    let logical: Vec<i64> = (0..8).map(|k| g.logical_frequency(0, k)).collect();
    assert_eq!(logical, vec![0, 1, 2, 3, 4, -3, -2, -1]);
    assert_eq!(g.storage_index(0, -3), Some(5));
    assert_eq!(g.storage_index(0, -4), None);
}

#[test]
fn cosine_has_two_coefficients() {
    let g = Grid64::cube(1, 1.0, 8).unwrap();
    let u = Field64::from_fn(&g, |x| (PI * x[0]).cos());
    let s = dft_forward(&u);
    for l in -3..=4i64 {
        let c = s.get(&[l]).unwrap();
        let expected = if l.abs() == 1 { 4.0 } else { 0.0 };
        assert!((c - Complex::new(expected, 0.0)).norm() < 1e-12, "l = {l}: {c}");
    }
}

#[test]
fn constant_field_has_only_the_mean_mode() {
    let g = Grid64::cube(2, 1.0, 8).unwrap();
    let s = dft_forward(&Field64::constant(&g, 1.0));
    assert!((s.get(&[0, 0]).unwrap() - Complex::new(64.0, 0.0)).norm() < 1e-12);
    let rest: f64 = s.data()[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(rest < 1e-12);
}

#[test]
fn shifted_grid_phase_convention() {
    // exp(i pi l0 x) has its whole mass at l0 only under the (-1)^l phase
    let g = Grid64::cube(1, 1.0, 16).unwrap();
    let u = Field64::from_fn(&g, |x| (3.0 * PI * x[0]).sin());
    let s = dft_forward(&u);
    assert!((s.get(&[3]).unwrap() - Complex::new(0.0, -8.0)).norm() < 1e-12);
    assert!((s.get(&[-3]).unwrap() - Complex::new(0.0, 8.0)).norm() < 1e-12);
}

#[test]
fn round_trip_in_every_dimension() {
    for (dim, n) in [(1, 32), (2, 16), (3, 8)] {
        let g = Grid64::cube(dim, 1.5, n).unwrap();
        let u = random_field(&g, dim as u64);
        let back = dft_inverse(&dft_forward(&u)).unwrap();
        for (a, b) in u.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn parseval() {
    let g = Grid64::new(&[1.0, 0.5], &[16, 8]).unwrap();
    let u = random_field(&g, 7);
    let s = dft_forward(&u);
    let lhs: f64 = u.data().iter().map(|v| v * v).sum();
    let rhs: f64 = s.data().iter().map(|c| c.norm_sqr()).sum::<f64>() / g.len() as f64;
    assert_relative_eq!(lhs, rhs, max_relative = 1e-13);
    assert!(s.hermitian_defect() < 1e-12);
}

#[test]
fn non_hermitian_spectrum_is_rejected() {
    let g = Grid64::cube(1, 1.0, 8).unwrap();
    let mut s = dft_forward(&Field64::constant(&g, 1.0));
    s.data_mut()[1] = Complex::new(0.0, 3.0);
    assert!(matches!(dft_inverse(&s), Err(Error::NonHermitian { .. })));
}

#[test]
fn laplacian_eigenfunction() {
    let g = Grid64::cube(2, 1.0, 32).unwrap();
    let u = Field64::from_fn(&g, |x| (PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
    let mut ctx = SpectralContext::new(&g);
    let mut out = vec![0.0; g.len()];
    ctx.apply_multiplier(u.data(), &laplacian_symbol(&g), &mut out);
    let eig = -5.0 * PI * PI;
    for (o, v) in out.iter().zip(u.data()) {
        assert!((o - eig * v).abs() < 1e-11);
    }
}

#[test]
fn fft_convolution_matches_direct_sum() {
    for (dim, n, extent) in [(1, 32, 1.0), (1, 4, 0.3), (2, 16, 1.0), (2, 32, 0.7), (3, 8, 1.0)] {
        let g = Grid64::cube(dim, extent, n).unwrap();
        let k = kernel(&g, 0.1, 0.3);
        let u = random_field(&g, n as u64);
        let fast = circular_convolve(&u, &k).unwrap();
        let slow = direct_convolution(&u, &k);
        let scale = u.max_abs();
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-12 * scale, "dim {dim} n {n}: {a} vs {b}");
        }
    }
}

#[test]
fn anisotropic_grid_convolution_matches_direct_sum() {
    let g = Grid64::new(&[1.0, 0.5, 2.0], &[8, 4, 6]).unwrap();
    let k = kernel(&g, 0.1, 0.4);
    let u = random_field(&g, 3);
    let fast = circular_convolve(&u, &k).unwrap();
    let slow = direct_convolution(&u, &k);
    for (a, b) in fast.data().iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-12 * u.max_abs());
    }
}

#[test]
fn convolution_of_one_is_the_kernel_constant() {
    let g = Grid64::cube(2, 1.0, 32).unwrap();
    let k = kernel(&g, 0.1, 0.1);
    let out = circular_convolve(&Field64::constant(&g, 1.0), &k).unwrap();
    for v in out.data() {
        assert_relative_eq!(*v, k.c_gamma_n(), max_relative = 1e-13);
    }
    let l = nonlocal_apply(&Field64::constant(&g, -1.0), &k).unwrap();
    assert!(l.max_abs() < 1e-12);
}

#[test]
fn grid_mismatch_is_an_error() {
    let g = Grid64::cube(1, 1.0, 8).unwrap();
    let other = Grid64::cube(1, 1.0, 16).unwrap();
    let k = kernel(&g, 0.1, 0.1);
    let u = Field64::zeros(&other);
    assert!(matches!(circular_convolve(&u, &k), Err(Error::GridMismatch(_))));
    assert!(inner_h(&Field64::zeros(&g), &u).is_err());
}

#[test]
fn half_spectrum_keeps_nonnegative_last_axis_frequencies() {
    let g = Grid64::new(&[1.0, 1.0], &[4, 8]).unwrap();
    let full: Vec<usize> = (0..32).collect();
    let half = half_spectrum(&g, &full);
    assert_eq!(half.len(), 4 * 5);
    assert_eq!(&half[..5], &[0, 1, 2, 3, 4]);
    assert_eq!(&half[5..10], &[8, 9, 10, 11, 12]);
}

#[test]
fn single_precision_convolution() {
    let g = Grid32::cube(2, 1.0, 16).unwrap();
    let k = sample_periodic(&KernelSpec::<f32>::new(0.1, 0.3, 2).unwrap(), &g).unwrap();
    let out = circular_convolve(&Field32::constant(&g, 1.0), &k).unwrap();
    for v in out.data() {
        assert!((v - k.c_gamma_n()).abs() < 1e-5 * k.c_gamma_n());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convolution_is_self_adjoint(seed in any::<u64>(), n in prop::sample::select(vec![8usize, 16])) {
        let g = Grid64::cube(2, 1.0, n).unwrap();
        let k = kernel(&g, 0.1, 0.25);
        let u = random_field(&g, seed);
        let v = random_field(&g, seed.wrapping_add(1));
        let ku = circular_convolve(&u, &k).unwrap();
        let kv = circular_convolve(&v, &k).unwrap();
        let lhs = inner_h(&ku, &v).unwrap();
        let rhs = inner_h(&u, &kv).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn young_bound(seed in any::<u64>(), delta in 0.05f64..0.6) {
        let g = Grid64::cube(1, 1.0, 64).unwrap();
        let k = kernel(&g, 0.1, delta);
        let u = random_field(&g, seed);
        let ku = circular_convolve(&u, &k).unwrap();
        prop_assert!(norm_h(&ku) <= k.c_gamma_n() * norm_h(&u) * (1.0 + 1e-12));
    }

    #[test]
    fn nonlocal_operator_is_positive_semidefinite(seed in any::<u64>(), delta in 0.05f64..0.6) {
        let g = Grid64::cube(2, 1.0, 16).unwrap();
        let k = kernel(&g, 0.1, delta);
        let u = random_field(&g, seed);
        let lu = nonlocal_apply(&u, &k).unwrap();
        let q = inner_h(&lu, &u).unwrap();
        prop_assert!(q >= -1e-12 * k.c_gamma_n() * inner_h(&u, &u).unwrap());
    }

    #[test]
    fn dft_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = Grid64::cube(1, 1.0, 16).unwrap();
        let u = random_field(&g, seed);
        let v = random_field(&g, seed ^ 0x55);
        let lhs = dft_forward(&u.combine(a, &v, b).unwrap());
        let (su, sv) = (dft_forward(&u), dft_forward(&v));
        for ((l, x), y) in lhs.data().iter().zip(su.data()).zip(sv.data()) {
            prop_assert!((l - (x * a + y * b)).norm() < 1e-12 * 16.0 * 6.0);
        }
    }
}
