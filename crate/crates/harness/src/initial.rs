//! Initial-condition library.
//!
//! | name                    | field                                                  | parameters (default)                      |
//! |-------------------------|--------------------------------------------------------|-------------------------------------------|
//! | `cos-product`           | `a prod cos(pi x_i)`                                   | `amplitude` (1)                           |
//! | `sin-two-mode`          | `a (sin(pi x) + sin(2 pi x))`                          | `amplitude` (0.5)                         |
//! | `sin-exp`               | `sin(pi x) exp(-abs(y))`                               |                                           |
//! | `sin-product`           | `a prod sin(pi x_i)`                                   | `amplitude` (0.2)                         |
//! | `tanh-bubbles`          | two tanh balls centred at `x = +-c`                    | `center` (0.35), `radius` (0.6), `width` (epsilon) |
//! | `tanh-star`             | tanh star with angular modulation in the `x`-`z` plane | `radius` (0.7), `modulation` (0.2), `lobes` (6), `width` (epsilon), `branch` ("printed") |
//! | `box`                   | `inside` on `abs(x_i) <= half_width`, else `outside`   | `half_width` (0.9), `inside` (-1), `outside` (1) |
//! | `random-uniform`        | i.i.d. uniform samples                                 | `low` (-0.95), `high` (0.95); seed        |
//! | `gaussian-random-field` | smoothed white noise, zero mean                        | `length` (0.2), `amplitude` (1); seed     |
//! | `constant`              | `value` everywhere                                     | `value`                                   |
//!
//! The `x`-axis is axis 0. For `tanh-star`, `z` is the last axis.

use nlac::{laplacian_symbol, Field64, Grid64, SpectralContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HarnessError, Result};

pub const NAMES: [&str; 10] = [
    "cos-product",
    "sin-two-mode",
    "sin-exp",
    "sin-product",
    "tanh-bubbles",
    "tanh-star",
    "box",
    "random-uniform",
    "gaussian-random-field",
    "constant",
];

pub fn is_random(name: &str) -> bool {
    matches!(name, "random-uniform" | "gaussian-random-field")
}

/// Which angle formula `tanh-star` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarBranch {
    /// `atan(z/x)` when `x > 0.5`, `pi + atan(z/x)` otherwise.
    Printed,
    /// `atan(z/x)` when `x > 0`, `pi + atan(z/x)` otherwise.
    PositiveX,
}

/// Evaluates the named initial condition on `grid`.
///
/// `width` is the default interface width of the tanh profiles (the
/// kernel's epsilon); `seed` is required by the random fields.
pub fn initial_condition(
    name: &str,
    grid: &Grid64,
    params: &toml::Table,
    seed: Option<u64>,
    width: f64,
) -> Result<Field64> {
    let p = Params { name, table: params };
    let dim = grid.dim();
    let field = match name {
        "cos-product" => {
            p.allow(&["amplitude"])?;
            let a = p.float_or("amplitude", 1.0)?;
            Field64::from_fn(grid, |x| a * x.iter().map(|&xi| (std::f64::consts::PI * xi).cos()).product::<f64>())
        }
        "sin-two-mode" => {
            p.allow(&["amplitude"])?;
            let a = p.float_or("amplitude", 0.5)?;
            Field64::from_fn(grid, |x| a * (sin_pi(x[0]) + sin_pi(2.0 * x[0])))
        }
        "sin-exp" => {
            p.allow(&[])?;
            need_dim(name, dim, 2)?;
            Field64::from_fn(grid, |x| sin_pi(x[0]) * (-x[1].abs()).exp())
        }
        "sin-product" => {
            p.allow(&["amplitude"])?;
            let a = p.float_or("amplitude", 0.2)?;
            Field64::from_fn(grid, |x| a * x.iter().map(|&xi| sin_pi(xi)).product::<f64>())
        }
        "tanh-bubbles" => {
            p.allow(&["center", "radius", "width"])?;
            let c = p.float_or("center", 0.35)?;
            let r0 = p.float_or("radius", 0.6)?;
            let w = positive(name, "width", p.float_or("width", width)?)?;
            let scale = std::f64::consts::SQRT_2 * w;
            Field64::from_fn(grid, |x| {
                let ball = |shift: f64| {
                    let d2: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(a, &xi)| if a == 0 { (xi - shift).powi(2) } else { xi * xi })
                        .sum();
                    0.5 * ((r0 - d2.sqrt()) / scale).tanh()
                };
                ball(c) + ball(-c)
            })
        }
        "tanh-star" => {
            p.allow(&["radius", "modulation", "lobes", "width", "branch"])?;
            need_dim(name, dim, 2)?;
            let r0 = p.float_or("radius", 0.7)?;
            let amp = p.float_or("modulation", 0.2)?;
            let lobes = p.float_or("lobes", 6.0)?;
            let w = positive(name, "width", p.float_or("width", width)?)?;
            let branch = match p.string_or("branch", "printed")?.as_str() {
                "printed" => StarBranch::Printed,
                "positive-x" => StarBranch::PositiveX,
                other => {
                    return Err(HarnessError::Initial(format!(
                        "{name}: branch must be `printed` or `positive-x`, got `{other}`"
                    )))
                }
            };
            let scale = std::f64::consts::SQRT_2 * w;
            Field64::from_fn(grid, |x| {
                let eta = star_angle(x[0], x[dim - 1], branch);
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                ((r0 + amp * (lobes * eta).cos() - r) / scale).tanh()
            })
        }
        "box" => {
            p.allow(&["half_width", "inside", "outside"])?;
            let b = p.float_or("half_width", 0.9)?;
            let inside = p.float_or("inside", -1.0)?;
            let outside = p.float_or("outside", 1.0)?;
            Field64::from_fn(grid, |x| if x.iter().all(|v| v.abs() <= b) { inside } else { outside })
        }
        "random-uniform" => {
            p.allow(&["low", "high"])?;
            let low = p.float_or("low", -0.95)?;
            let high = p.float_or("high", 0.95)?;
            if !(low < high) {
                return Err(HarnessError::Initial(format!("{name}: need low < high")));
            }
            let mut rng = seeded(name, seed)?;
            let data = (0..grid.len()).map(|_| rng.random_range(low..high)).collect();
            Field64::from_vec(grid, data)?
        }
        "gaussian-random-field" => {
            p.allow(&["length", "amplitude"])?;
            let ell = positive(name, "length", p.float_or("length", 0.2)?)?;
            let amplitude = positive(name, "amplitude", p.float_or("amplitude", 1.0)?)?;
            let mut rng = seeded(name, seed)?;
            gaussian_random_field(grid, ell, amplitude, &mut rng)
        }
        "constant" => {
            p.allow(&["value"])?;
            Field64::constant(grid, p.float("value")?)
        }
        other => {
            return Err(HarnessError::Initial(format!(
                "unknown initial condition `{other}`; expected one of {}",
                NAMES.join(", ")
            )))
        }
    };
    Ok(field)
}

/// Angle of `(x, z)` as used by the star profile. The origin maps to `pi`.
pub fn star_angle(x: f64, z: f64, branch: StarBranch) -> f64 {
    let ratio = if x == 0.0 && z == 0.0 { 0.0 } else { z / x };
    let base = ratio.atan();
    let principal = match branch {
        StarBranch::Printed => x > 0.5,
        StarBranch::PositiveX => x > 0.0,
    };
    if principal {
        base
    } else {
        std::f64::consts::PI + base
    }
}

/// White noise filtered by `exp(-|kappa|^2 l^2 / 4)`, shifted to zero mean
/// and scaled so that `max |u| = amplitude`.
fn gaussian_random_field(grid: &Grid64, ell: f64, amplitude: f64, rng: &mut ChaCha8Rng) -> Field64 {
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.sample(StandardNormal)).collect();
    let filter: Vec<f64> = laplacian_symbol(grid)
        .into_iter()
        .map(|lap| (0.25 * ell * ell * lap).exp())
        .collect();
    let mut smooth = vec![0.0; grid.len()];
    SpectralContext::new(grid).apply_multiplier(&noise, &filter, &mut smooth);
    let mean = smooth.iter().sum::<f64>() / smooth.len() as f64;
    smooth.iter_mut().for_each(|v| *v -= mean);
    let peak = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        smooth.iter_mut().for_each(|v| *v *= amplitude / peak);
    }
    Field64::from_vec(grid, smooth).expect("length matches grid")
}

fn sin_pi(x: f64) -> f64 {
    (std::f64::consts::PI * x).sin()
}

fn seeded(name: &str, seed: Option<u64>) -> Result<ChaCha8Rng> {
    seed.map(ChaCha8Rng::seed_from_u64)
        .ok_or_else(|| HarnessError::Initial(format!("{name} is random and needs a seed")))
}

fn need_dim(name: &str, dim: usize, min: usize) -> Result<()> {
    if dim < min {
        return Err(HarnessError::Initial(format!("{name} needs at least {min} dimensions")));
    }
    Ok(())
}

fn positive(name: &str, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(HarnessError::Initial(format!("{name}: `{key}` must be positive, got {v}")))
    }
}

struct Params<'a> {
    name: &'a str,
    table: &'a toml::Table,
}

impl Params<'_> {
    fn allow(&self, keys: &[&str]) -> Result<()> {
        match self.table.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(HarnessError::Initial(format!("{}: unknown parameter `{k}`", self.name))),
            None => Ok(()),
        }
    }

    fn float(&self, key: &str) -> Result<f64> {
        self.float_opt(key)?
            .ok_or_else(|| HarnessError::Initial(format!("{}: missing parameter `{key}`", self.name)))
    }

    fn float_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.float_opt(key)?.unwrap_or(default))
    }

    fn float_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(v)) => Ok(Some(*v)),
            Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(other) => Err(HarnessError::Initial(format!(
                "{}: `{key}` must be a number, got {other}",
                self.name
            ))),
        }
    }

    fn string_or(&self, key: &str, default: &str) -> Result<String> {
        match self.table.get(key) {
            None => Ok(default.to_string()),
            Some(toml::Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(HarnessError::Initial(format!(
                "{}: `{key}` must be a string, got {other}",
                self.name
            ))),
        }
    }
}
