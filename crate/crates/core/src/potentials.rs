//! Potentials `A(x, y)` on the unit square and their additive perturbations.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math;

/// A potential depending on two consecutive coordinates.
pub trait Potential {
    fn eval(&self, x: f64, y: f64) -> f64;
    /// `dA/dx`
    fn d_x(&self, x: f64, y: f64) -> f64;
    /// `dA/dy`
    fn d_y(&self, x: f64, y: f64) -> f64;
    /// Mixed second derivative, the quantity the twist condition constrains.
    fn d_xy(&self, x: f64, y: f64) -> f64;
    /// Lipschitz constant of `A` on the unit square.
    fn lip(&self) -> f64;
    fn name(&self) -> &str;
}

impl<P: Potential + ?Sized> Potential for &P {
    fn eval(&self, x: f64, y: f64) -> f64 {
        (**self).eval(x, y)
    }
    fn d_x(&self, x: f64, y: f64) -> f64 {
        (**self).d_x(x, y)
    }
    fn d_y(&self, x: f64, y: f64) -> f64 {
        (**self).d_y(x, y)
    }
    fn d_xy(&self, x: f64, y: f64) -> f64 {
        (**self).d_xy(x, y)
    }
    fn lip(&self) -> f64 {
        (**self).lip()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Closed-form potentials. Angles of the XY model are rescaled as `2 pi x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    /// `x y`
    Product,
    /// `-(x - y)^2`
    Quadratic,
    /// `cos(2 pi (x - y))`
    XyCosine,
    /// `cos(2 pi (x - y)) + l cos(2 pi x)`
    XyCosineMagnetic { l: f64 },
    /// `A == c`
    Constant { c: f64 },
}

impl Builtin {
    /// Looks a builtin up by name; `params` must match its arity.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let arity = |k: usize| {
            if params.len() == k {
                Ok(())
            } else {
                Err(Error::InvalidArgument("parameter count does not match potential arity"))
            }
        };
        match name {
            "product" => arity(0).map(|_| Builtin::Product),
            "quadratic" => arity(0).map(|_| Builtin::Quadratic),
            "xy_cosine" => arity(0).map(|_| Builtin::XyCosine),
            "xy_cosine_magnetic" => arity(1).map(|_| Builtin::XyCosineMagnetic { l: params[0] }),
            "constant" => arity(1).map(|_| Builtin::Constant { c: params[0] }),
            _ => Err(Error::InvalidArgument("unknown potential name")),
        }
    }
}

impl Potential for Builtin {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Builtin::Product => x * y,
            Builtin::Quadratic => -(x - y) * (x - y),
            Builtin::XyCosine => math::cos(2.0 * PI * (x - y)),
            Builtin::XyCosineMagnetic { l } => {
                math::cos(2.0 * PI * (x - y)) + l * math::cos(2.0 * PI * x)
            }
            Builtin::Constant { c } => c,
        }
    }

    fn d_x(&self, x: f64, y: f64) -> f64 {
        match *self {
            Builtin::Product => y,
            Builtin::Quadratic => -2.0 * (x - y),
            Builtin::XyCosine => -2.0 * PI * math::sin(2.0 * PI * (x - y)),
            Builtin::XyCosineMagnetic { l } => {
                -2.0 * PI * (math::sin(2.0 * PI * (x - y)) + l * math::sin(2.0 * PI * x))
            }
            Builtin::Constant { .. } => 0.0,
        }
    }

    fn d_y(&self, x: f64, y: f64) -> f64 {
        match *self {
            Builtin::Product => x,
            Builtin::Quadratic => 2.0 * (x - y),
            Builtin::XyCosine | Builtin::XyCosineMagnetic { .. } => {
                2.0 * PI * math::sin(2.0 * PI * (x - y))
            }
            Builtin::Constant { .. } => 0.0,
        }
    }

    fn d_xy(&self, x: f64, y: f64) -> f64 {
        match *self {
            Builtin::Product => 1.0,
            Builtin::Quadratic => 2.0,
            Builtin::XyCosine | Builtin::XyCosineMagnetic { .. } => {
                4.0 * PI * PI * math::cos(2.0 * PI * (x - y))
            }
            Builtin::Constant { .. } => 0.0,
        }
    }

    fn lip(&self) -> f64 {
        match *self {
            Builtin::Product => math::sqrt(2.0),
            Builtin::Quadratic => 2.0 * math::sqrt(2.0),
            Builtin::XyCosine => 2.0 * PI * math::sqrt(2.0),
            // |grad|^2 = (s1 + l s2)^2 + s1^2 with s1, s2 free in [-1, 1]
            Builtin::XyCosineMagnetic { l } => {
                2.0 * PI * math::sqrt((1.0 + l.abs()) * (1.0 + l.abs()) + 1.0)
            }
            Builtin::Constant { .. } => 0.0,
        }
    }

    fn name(&self) -> &str {
        match self {
            Builtin::Product => "product",
            Builtin::Quadratic => "quadratic",
            Builtin::XyCosine => "xy_cosine",
            Builtin::XyCosineMagnetic { .. } => "xy_cosine_magnetic",
            Builtin::Constant { .. } => "constant",
        }
    }
}

/// A one-variable function `f` added to `A` as `A(x, y) + f(x)`.
pub trait Perturbation {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    /// An upper bound for `sup |f'|` on `[0, 1]`.
    fn sup_derivative(&self) -> f64;
}

/// `f(x) = sum_k c_k x^k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

impl Perturbation for Polynomial {
    fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }

    // exact for affine f, a bound otherwise
    fn sup_derivative(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c.abs())
            .sum()
    }
}

/// `A(x, y) + f(x)`.
#[derive(Debug, Clone)]
pub struct Perturbed<P, F> {
    base: P,
    f: F,
    name: String,
}

impl<P: Potential, F: Perturbation> Perturbed<P, F> {
    pub fn base(&self) -> &P {
        &self.base
    }

    pub fn perturbation(&self) -> &F {
        &self.f
    }
}

/// Adds `f(x)` to `base`.
pub fn perturb<P: Potential, F: Perturbation>(base: P, f: F) -> Perturbed<P, F> {
    let name = format!("{}+f(x)", base.name());
    Perturbed { base, f, name }
}

impl<P: Potential, F: Perturbation> Potential for Perturbed<P, F> {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.base.eval(x, y) + self.f.value(x)
    }
    fn d_x(&self, x: f64, y: f64) -> f64 {
        self.base.d_x(x, y) + self.f.derivative(x)
    }
    fn d_y(&self, x: f64, y: f64) -> f64 {
        self.base.d_y(x, y)
    }
    fn d_xy(&self, x: f64, y: f64) -> f64 {
        self.base.d_xy(x, y)
    }
    fn lip(&self) -> f64 {
        self.base.lip() + self.f.sup_derivative()
    }
    fn name(&self) -> &str {
        &self.name
    }
}

/// `A(y, x)`.
#[derive(Debug, Clone)]
pub struct Transposed<P>(pub P);

impl<P: Potential> Potential for Transposed<P> {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.0.eval(y, x)
    }
    fn d_x(&self, x: f64, y: f64) -> f64 {
        self.0.d_y(y, x)
    }
    fn d_y(&self, x: f64, y: f64) -> f64 {
        self.0.d_x(y, x)
    }
    fn d_xy(&self, x: f64, y: f64) -> f64 {
        self.0.d_xy(y, x)
    }
    fn lip(&self) -> f64 {
        self.0.lip()
    }
    fn name(&self) -> &str {
        self.0.name()
    }
}

/// Values `A(x_i, x_j)` on all node pairs, row-major in `i`.
pub fn sample_on_grid<P: Potential + ?Sized>(a: &P, g: &Grid) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len() * g.len());
    for &x in g.nodes() {
        for &y in g.nodes() {
            out.push(a.eval(x, y));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwistSign {
    Positive,
    Negative,
    /// `d_xy` vanishes or changes sign somewhere on the grid.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistReport {
    pub min_dxy: f64,
    pub max_dxy: f64,
    pub is_twist: bool,
    pub sign: TwistSign,
}

/// Range of the mixed derivative over all grid pairs.
pub fn twist_report<P: Potential + ?Sized>(a: &P, g: &Grid) -> TwistReport {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in g.nodes() {
        for &y in g.nodes() {
            let v = a.d_xy(x, y);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let sign = if lo > 0.0 {
        TwistSign::Positive
    } else if hi < 0.0 {
        TwistSign::Negative
    } else {
        TwistSign::None
    };
    TwistReport {
        min_dxy: lo,
        max_dxy: hi,
        is_twist: sign != TwistSign::None,
        sign,
    }
}

/// Which derivative disagreed with its finite difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeMismatch {
    pub which: &'static str,
    pub x: f64,
    pub y: f64,
    pub error: f64,
}

/// Compares analytic derivatives with central differences of step `step` at
/// `samples` seeded random points. Mixed derivative is checked against the
/// difference of `d_x` in `y`.
pub fn check_derivatives<P: Potential + ?Sized>(
    a: &P,
    samples: usize,
    seed: u64,
    step: f64,
    tol: f64,
) -> core::result::Result<(), DerivativeMismatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = unit_f64(&mut rng);
        let y = unit_f64(&mut rng);
        let fd_x = (a.eval(x + step, y) - a.eval(x - step, y)) / (2.0 * step);
        let fd_y = (a.eval(x, y + step) - a.eval(x, y - step)) / (2.0 * step);
        let fd_xy = (a.d_x(x, y + step) - a.d_x(x, y - step)) / (2.0 * step);
        for (which, fd, an) in [
            ("d_x", fd_x, a.d_x(x, y)),
            ("d_y", fd_y, a.d_y(x, y)),
            ("d_xy", fd_xy, a.d_xy(x, y)),
        ] {
            let error = (fd - an).abs();
            if error > tol {
                return Err(DerivativeMismatch { which, x, y, error });
            }
        }
    }
    Ok(())
}

/// Uniform draw in `[0, 1)` with 53 random bits.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
