//! Double-well potentials `F = f0 + psi` with `f0(u) = (c_F/2)(1 - u^2)`,
//! the convex parts `psi`, their derivatives, and the pointwise proximal
//! operators `prox_{psi/(a*lambda)} = (I + (1/(a*lambda)) d psi)^{-1}`.

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

const NEWTON_MAX_STEPS: usize = 50;
const BISECTION_MAX_STEPS: usize = 200;
const ROOT_RESIDUAL_TOL: f64 = 1e-13;
const ROOT_STEP_TOL: f64 = 1e-15;
const NEWTON_START_MARGIN: f64 = 1e-3;
const OPEN_INTERVAL_MARGIN: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PotentialKind {
    /// Indicator of `[-1, 1]`.
    Obstacle,
    /// Quartic `(c_F/4)(u^4 - 1)`.
    Regular,
    /// Flory-Huggins entropy with temperature `theta_c`.
    Logarithmic,
}

impl PotentialKind {
    pub fn name(self) -> &'static str {
        match self {
            PotentialKind::Obstacle => "obstacle",
            PotentialKind::Regular => "regular",
            PotentialKind::Logarithmic => "logarithmic",
        }
    }

    /// Whether admissible states are confined to `[-1, 1]`.
    pub fn is_bounded(self) -> bool {
        !matches!(self, PotentialKind::Regular)
    }
}

impl std::fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obstacle" | "obs" => Ok(PotentialKind::Obstacle),
            "regular" | "reg" | "quartic" => Ok(PotentialKind::Regular),
            "logarithmic" | "log" | "flory-huggins" => Ok(PotentialKind::Logarithmic),
            other => Err(invalid("potential", format!("unknown potential `{other}`"))),
        }
    }
}

/// A double-well potential together with its constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialSpec<T> {
    kind: PotentialKind,
    c_f: T,
    theta_c: T,
}

impl<T: Scalar> PotentialSpec<T> {
    /// Validating constructor. `theta_c` is required for (and only read by)
    /// the logarithmic potential, where `0 < theta_c < c_F` must hold.
    pub fn new(kind: PotentialKind, c_f: T, theta_c: Option<T>) -> Result<Self> {
        if !(c_f > T::zero()) || !c_f.is_finite() {
            return Err(invalid("c_F", format!("must be positive and finite, got {c_f}")));
        }
        let theta_c = match kind {
            PotentialKind::Logarithmic => {
                let theta = theta_c.ok_or_else(|| {
                    invalid("theta_c", "required for the logarithmic potential")
                })?;
                if !(theta > T::zero() && theta < c_f) {
                    return Err(invalid(
                        "theta_c",
                        format!("must satisfy 0 < theta_c < c_F = {c_f}, got {theta}"),
                    ));
                }
                theta
            }
            _ => T::zero(),
        };
        Ok(Self { kind, c_f, theta_c })
    }

    pub fn obstacle(c_f: T) -> Result<Self> {
        Self::new(PotentialKind::Obstacle, c_f, None)
    }

    pub fn regular(c_f: T) -> Result<Self> {
        Self::new(PotentialKind::Regular, c_f, None)
    }

    pub fn logarithmic(c_f: T, theta_c: T) -> Result<Self> {
        Self::new(PotentialKind::Logarithmic, c_f, Some(theta_c))
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn c_f(&self) -> T {
        self.c_f
    }

    pub fn theta_c(&self) -> Option<T> {
        match self.kind {
            PotentialKind::Logarithmic => Some(self.theta_c),
            _ => None,
        }
    }

    /// `psi(u)`, with `+inf` outside `[-1, 1]` for the obstacle and
    /// logarithmic potentials. At `u = +-1` the logarithmic branch takes its
    /// limit `theta_c ln 2`.
    pub fn psi_value(&self, u: T) -> T {
        let one = T::one();
        match self.kind {
            PotentialKind::Obstacle => {
                if u.abs() <= one {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
            PotentialKind::Regular => self.c_f / T::lit(4.0) * (u.powi(4) - one),
            PotentialKind::Logarithmic => {
                let a = u.abs();
                if a > one || a.is_nan() {
                    T::infinity()
                } else if a == one {
                    self.theta_c * T::LN_2()
                } else {
                    let half = T::lit(0.5);
                    half * self.theta_c * ((one + u) * u.ln_1p() + (one - u) * (-u).ln_1p())
                }
            }
        }
    }

    /// Single-valued derivative `psi'(u)`. The obstacle subdifferential is
    /// set-valued and therefore rejected, as is `|u| >= 1` for the
    /// logarithmic potential.
    pub fn psi_prime(&self, u: T) -> Result<T> {
        match self.kind {
            PotentialKind::Obstacle => Err(Error::Domain(
                "the obstacle subdifferential is set-valued".into(),
            )),
            PotentialKind::Regular => Ok(self.c_f * u * u * u),
            PotentialKind::Logarithmic => {
                if !(u.abs() < T::one()) {
                    return Err(Error::Domain(format!(
                        "logarithmic psi' requires |u| < 1, got {u}"
                    )));
                }
                Ok(self.log_derivative(u))
            }
        }
    }

    /// `psi'` evaluated on the closed admissible set: the obstacle returns
    /// the zero selection and logarithmic arguments are pulled into the open
    /// interval the proximal solver works on.
    pub(crate) fn explicit_derivative(&self, u: T) -> T {
        match self.kind {
            PotentialKind::Obstacle => T::zero(),
            PotentialKind::Regular => self.c_f * u * u * u,
            PotentialKind::Logarithmic => {
                let b = open_bound::<T>();
                self.log_derivative(u.max(-b).min(b))
            }
        }
    }

    fn log_derivative(&self, u: T) -> T {
        T::lit(0.5) * self.theta_c * (u.ln_1p() - (-u).ln_1p())
    }

    /// Local energy density `F(u) = (c_F/2)(1 - u^2) + psi(u)`.
    pub fn potential_energy_density(&self, u: T) -> T {
        T::lit(0.5) * self.c_f * (T::one() - u * u) + self.psi_value(u)
    }

    /// Whether `psi(u) < +inf`.
    pub fn is_admissible(&self, u: T) -> bool {
        match self.kind {
            PotentialKind::Regular => u.is_finite(),
            _ => u.abs() <= T::one(),
        }
    }

    /// `argmin_s psi(s)/(a*lambda) + |s - v|^2 / 2`.
    pub fn prox(&self, w: ProxWeight<T>, v: T) -> T {
        self.prepare_prox(w).apply(v)
    }

    /// The prox for a fixed weight with its constants hoisted, for sweeps
    /// over many nodes.
    pub fn prepare_prox(&self, w: ProxWeight<T>) -> PreparedProx<T> {
        let weight = w.effective();
        match self.kind {
            PotentialKind::Obstacle => PreparedProx::Clamp,
            PotentialKind::Regular => {
                let mu = weight / self.c_f;
                let p = mu / T::lit(3.0);
                PreparedProx::Cardano {
                    half_mu: T::lit(0.5) * mu,
                    p,
                    p_three_halves: p * p.sqrt(),
                }
            }
            PotentialKind::Logarithmic => PreparedProx::Log {
                two_kappa: self.theta_c / weight,
            },
        }
    }
}

/// A proximal map with its weight-dependent constants precomputed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PreparedProx<T> {
    Clamp,
    Cardano { half_mu: T, p: T, p_three_halves: T },
    Log { two_kappa: T },
}

impl<T: Scalar> PreparedProx<T> {
    #[inline]
    pub fn apply(&self, v: T) -> T {
        match *self {
            PreparedProx::Clamp => v.max(-T::one()).min(T::one()),
            PreparedProx::Cardano {
                half_mu,
                p,
                p_three_halves,
            } => cardano_prox(half_mu, p, p_three_halves, v),
            PreparedProx::Log { two_kappa } => log_prox(two_kappa, v),
        }
    }
}

/// Which proximal map a scheme stage needs: `prox_{psi/lambda}` for the
/// first-order scheme, `prox_{psi/(2 lambda)}` for the second-order ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StageDivisor {
    One,
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxWeight<T> {
    lambda: T,
    stage_divisor: StageDivisor,
}

impl<T: Scalar> ProxWeight<T> {
    pub fn new(lambda: T, stage_divisor: StageDivisor) -> Result<Self> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(invalid(
                "lambda",
                format!("prox weight must be positive and finite, got {lambda}"),
            ));
        }
        Ok(Self {
            lambda,
            stage_divisor,
        })
    }

    pub fn first_order(lambda: T) -> Result<Self> {
        Self::new(lambda, StageDivisor::One)
    }

    pub fn second_order(lambda: T) -> Result<Self> {
        Self::new(lambda, StageDivisor::Two)
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn stage_divisor(&self) -> StageDivisor {
        self.stage_divisor
    }

    /// `a * lambda`.
    pub fn effective(&self) -> T {
        match self.stage_divisor {
            StageDivisor::One => self.lambda,
            StageDivisor::Two => self.lambda + self.lambda,
        }
    }
}

/// Real root of `s^3/mu + s = v`, `mu = w/c_F`, via Cardano's formula.
///
/// With `p = mu/3` and `z = mu v/2` the root is `A + B`, where
/// `A = cbrt(z + sqrt(z^2 + p^3))` and `A B = -p`. Both `A + B` and the
/// inner `z - sqrt(..)` cancel catastrophically when `p` or `|z|` is large,
/// so the sum is evaluated through `A^3 + B^3 = 2z`:
/// `A + B = 2z / (A^2 + p + B^2)`, which has no subtractions.
#[inline]
fn cardano_prox<T: Scalar>(half_mu: T, p: T, p_three_halves: T, v: T) -> T {
    let z = half_mu * v.abs();
    // sqrt(z^2 + P^2) without hypot's cost unless squaring could overflow
    let r = if z < T::lit(1e100) && p_three_halves < T::lit(1e100) {
        (z * z + p_three_halves * p_three_halves).sqrt()
    } else {
        z.hypot(p_three_halves)
    };
    let a = (z + r).cbrt();
    let b = p / a;
    let s = (z + z) / (a * a + p + b * b);
    if v < T::zero() {
        -s
    } else {
        s
    }
}

fn open_bound<T: Scalar>() -> T {
    T::one() - T::lit(OPEN_INTERVAL_MARGIN).max(T::epsilon())
}

/// Root of `(theta_c/w) atanh(s) + s = v` in `(-1, 1)`:
/// Newton from a clamped start, falling back to bisection.
fn log_prox<T: Scalar>(two_kappa: T, v: T) -> T {
    let one = T::one();
    let residual = |s: T| two_kappa * s.atanh() + s - v;
    let slope = |s: T| two_kappa / ((one - s) * (one + s)) + one;

    let bound = open_bound::<T>();
    let res_tol = T::lit(ROOT_RESIDUAL_TOL);
    let step_tol = T::lit(ROOT_STEP_TOL).max(T::lit(4.0) * T::epsilon());
    let start = one - T::lit(NEWTON_START_MARGIN);

    let mut s = v.max(-start).min(start);
    for _ in 0..NEWTON_MAX_STEPS {
        let g = residual(s);
        if g.abs() <= res_tol {
            return s;
        }
        let step = g / slope(s);
        let next = s - step;
        if !(next.abs() < bound) {
            break;
        }
        s = next;
        if step.abs() <= step_tol {
            return s;
        }
    }
    bisect_monotone(residual, -bound, bound, res_tol, step_tol)
}

/// Bisection for an increasing `g` on `[lo, hi]`; returns the nearer
/// endpoint when the root lies outside.
fn bisect_monotone<T: Scalar>(g: impl Fn(T) -> T, lo: T, hi: T, res_tol: T, width_tol: T) -> T {
    let (mut lo, mut hi) = (lo, hi);
    if g(lo) >= T::zero() {
        return lo;
    }
    if g(hi) <= T::zero() {
        return hi;
    }
    let half = T::lit(0.5);
    let mut mid = half * (lo + hi);
    for _ in 0..BISECTION_MAX_STEPS {
        mid = half * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm.abs() <= res_tol || hi - lo <= width_tol {
            break;
        }
        if gm < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}
