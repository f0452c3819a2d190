//! Perron operators with kernel `exp(beta A(x, y))` and their leading eigenpairs.
//!
//! The forward operator integrates over the first argument,
//! `(L phi)(y) = int exp(beta A(x, y)) phi(x) dx`; the backward operator over
//! the second, `(Lbar phi)(x) = int exp(beta A(x, y)) phi(y) dy`. Both are the
//! same kernel matrix contracted on different indices, so they share their
//! spectrum exactly on the grid.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math;
use crate::potentials::Potential;

/// Above this exponent the kernel is stored relative to `exp(beta max A)`.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Kernel matrix `exp(beta (A(x_i, x_j) - shift))` on a fixed grid.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    beta: f64,
    shift: f64,
    n: usize,
    weights: Vec<f64>,
    potential: Vec<f64>,
    entries: Vec<f64>,
}

impl TransferOperator {
    pub fn new<P: Potential + ?Sized>(beta: f64, a: &P, g: &Grid) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument("beta must be positive and finite"));
        }
        let n = g.len();
        let mut potential = Vec::with_capacity(n * n);
        for &x in g.nodes() {
            for &y in g.nodes() {
                potential.push(a.eval(x, y));
            }
        }
        let max = potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sup = math::sup_abs(&potential);
        let shift = if beta * sup > LOG_SPACE_THRESHOLD { max } else { 0.0 };
        let entries = potential.iter().map(|&v| math::exp(beta * (v - shift))).collect();
        Ok(TransferOperator {
            beta,
            shift,
            n,
            weights: g.weights().to_vec(),
            potential,
            entries,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `log` of the factor dividing every stored entry.
    pub fn log_scale(&self) -> f64 {
        self.beta * self.shift
    }

    /// `A(x_i, x_j)`.
    pub fn potential_at(&self, i: usize, j: usize) -> f64 {
        self.potential[i * self.n + j]
    }

    /// Scaled kernel entry `exp(beta A(x_i, x_j)) / exp(log_scale)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Forward contraction in scaled units.
    pub fn forward(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, (w, p)) in self.weights.iter().zip(phi).enumerate() {
            let c = w * p;
            let row = &self.entries[i * n..(i + 1) * n];
            for (o, e) in out.iter_mut().zip(row) {
                *o += e * c;
            }
        }
        out
    }

    /// Backward contraction in scaled units.
    pub fn backward(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let wphi: Vec<f64> = self.weights.iter().zip(phi).map(|(w, p)| w * p).collect();
        (0..n)
            .map(|i| {
                let row = &self.entries[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for (e, v) in row.iter().zip(&wphi) {
                    acc += e * v;
                }
                acc
            })
            .collect()
    }

    /// Leading eigenpair of both operators by normalized power iteration.
    pub fn eigenpair(&self, tol: f64, max_iter: usize) -> Result<EigenPair> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive"));
        }
        let fwd = self.power_iteration(tol, max_iter, |v| self.forward(v), "leading_eigenpair (forward)")?;
        let bwd = self.power_iteration(tol, max_iter, |v| self.backward(v), "leading_eigenpair (backward)")?;
        let gap = (fwd.scaled_lambda - bwd.scaled_lambda).abs() / fwd.scaled_lambda;
        if gap > 10.0 * tol {
            return Err(Error::InternalConsistency {
                check: "forward and backward eigenvalues agree",
                residual: gap,
            });
        }
        let log_lambda = math::ln(fwd.scaled_lambda) + self.log_scale();
        let log_lambda_backward = math::ln(bwd.scaled_lambda) + self.log_scale();
        Ok(EigenPair {
            beta: self.beta,
            lambda: math::exp(log_lambda),
            log_lambda,
            log_lambda_backward,
            phi: fwd.vector,
            phi_bar: bwd.vector,
            iterations: fwd.iterations.max(bwd.iterations),
            residual: fwd.residual.max(bwd.residual),
        })
    }

    fn power_iteration(
        &self,
        tol: f64,
        max_iter: usize,
        apply: impl Fn(&[f64]) -> Vec<f64>,
        operation: &'static str,
    ) -> Result<PowerResult> {
        let mut v = vec![1.0; self.n];
        let mut residual = f64::INFINITY;
        for it in 1..=max_iter {
            let mut next = apply(&v);
            let mass = dot(&self.weights, &next);
            for x in next.iter_mut() {
                *x /= mass;
            }
            residual = math::sup_dist(&next, &v) / math::sup_abs(&next).max(1.0);
            v = next;
            if residual < tol {
                // v has unit mass, so the eigenvalue is the mass of its image
                let scaled_lambda = dot(&self.weights, &apply(&v));
                return Ok(PowerResult {
                    vector: v,
                    scaled_lambda,
                    iterations: it,
                    residual,
                });
            }
        }
        Err(Error::NoConvergence {
            operation,
            iterations: max_iter,
            residual,
        })
    }
}

struct PowerResult {
    vector: Vec<f64>,
    scaled_lambda: f64,
    iterations: usize,
    residual: f64,
}

fn dot(w: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in w.iter().zip(v) {
        acc += a * b;
    }
    acc
}

/// Leading eigenvalue and the two positive eigenfunctions, each of unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub beta: f64,
    /// `exp(log_lambda)`; may overflow for very large `beta`, use `log_lambda`.
    pub lambda: f64,
    pub log_lambda: f64,
    /// Eigenvalue found by the backward iteration, kept for the equality check.
    pub log_lambda_backward: f64,
    pub phi: Vec<f64>,
    pub phi_bar: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl EigenPair {
    /// Relative disagreement of the forward and backward eigenvalues.
    pub fn eigenvalue_gap(&self) -> f64 {
        (1.0 - math::exp(self.log_lambda_backward - self.log_lambda)).abs()
    }

    /// Checks `-|A| <= log(lambda) / beta <= |A|` and
    /// `exp(-beta c) <= phi, phi_bar <= exp(beta c)` with `c = 2 |A|`.
    pub fn a_priori_bounds_hold(&self, sup_abs_a: f64) -> bool {
        let rate = self.log_lambda / self.beta;
        let c = 2.0 * sup_abs_a;
        let lo = -self.beta * c;
        let hi = self.beta * c;
        let within = |v: &[f64]| {
            v.iter().all(|&p| {
                let l = math::ln(p);
                p > 0.0 && l >= lo && l <= hi
            })
        };
        rate >= -sup_abs_a && rate <= sup_abs_a && within(&self.phi) && within(&self.phi_bar)
    }
}

/// Forward operator applied to `phi`, in true (unscaled) units.
pub fn apply_forward<P: Potential + ?Sized>(beta: f64, a: &P, g: &Grid, phi: &[f64]) -> Result<Vec<f64>> {
    check_len(g, phi)?;
    let op = TransferOperator::new(beta, a, g)?;
    let scale = math::exp(op.log_scale());
    Ok(op.forward(phi).into_iter().map(|v| v * scale).collect())
}

/// Backward operator applied to `phi`, in true (unscaled) units.
pub fn apply_backward<P: Potential + ?Sized>(beta: f64, a: &P, g: &Grid, phi: &[f64]) -> Result<Vec<f64>> {
    check_len(g, phi)?;
    let op = TransferOperator::new(beta, a, g)?;
    let scale = math::exp(op.log_scale());
    Ok(op.backward(phi).into_iter().map(|v| v * scale).collect())
}

pub fn leading_eigenpair<P: Potential + ?Sized>(
    beta: f64,
    a: &P,
    g: &Grid,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPair> {
    TransferOperator::new(beta, a, g)?.eigenpair(tol, max_iter)
}

fn check_len(g: &Grid, phi: &[f64]) -> Result<()> {
    if phi.len() == g.len() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("grid function length differs from grid size"))
    }
}

/// Birkhoff-contraction bound on the modulus of every subdominant eigenvalue:
/// `lambda (K_sup - K_inf) / (K_sup + K_inf)` with `K = exp(beta A)` over the grid.
pub fn spectral_gap_bound<P: Potential + ?Sized>(ep: &EigenPair, a: &P, g: &Grid) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in g.nodes() {
        for &y in g.nodes() {
            let v = a.eval(x, y);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    // (e^{bM} - e^{bm}) / (e^{bM} + e^{bm}) = tanh(b (M - m) / 2)
    ep.lambda * libm::tanh(0.5 * ep.beta * (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{perturb, Builtin, Polynomial, Transposed};

    fn closed_form(y: f64) -> f64 {
        if y == 0.0 {
            1.0
        } else {
            (math::exp(y) - 1.0) / y
        }
    }

    #[test]
    fn zero_potential_is_identity_on_constants() {
        let g = Grid::new(51).unwrap();
        let zero = Builtin::Constant { c: 0.0 };
        let ones = vec![1.0; 51];
        for out in [
            apply_forward(3.0, &zero, &g, &ones).unwrap(),
            apply_backward(3.0, &zero, &g, &ones).unwrap(),
        ] {
            assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
        // the zero potential built as a scaled-away perturbation of quadratic agrees
        let flat = perturb(Builtin::Constant { c: 0.0 }, Polynomial::default());
        assert_eq!(apply_forward(3.0, &flat, &g, &ones).unwrap(), apply_forward(3.0, &zero, &g, &ones).unwrap());
    }

    #[test]
    fn constant_potential_scales() {
        let g = Grid::new(31).unwrap();
        let out = apply_forward(2.0, &Builtin::Constant { c: 0.4 }, &g, &vec![1.0; 31]).unwrap();
        assert!(out.iter().all(|v| (v - math::exp(0.8)).abs() < 1e-13));
    }

    #[test]
    fn product_matches_closed_form() {
        let g = Grid::new(201).unwrap();
        let ones = vec![1.0; 201];
        let f = apply_forward(1.0, &Builtin::Product, &g, &ones).unwrap();
        let b = apply_backward(1.0, &Builtin::Product, &g, &ones).unwrap();
        for (k, &y) in g.nodes().iter().enumerate() {
            assert!((f[k] - closed_form(y)).abs() < 1e-4);
            assert!((b[k] - closed_form(y)).abs() < 1e-4);
        }
    }

    #[test]
    fn backward_is_forward_of_transpose() {
        let g = Grid::new(41).unwrap();
        let a = perturb(Builtin::Product, Polynomial::new(vec![0.0, 0.3, -0.2]));
        let phi = g.sample(|x| 1.0 + x * x);
        let b = apply_backward(1.5, &a, &g, &phi).unwrap();
        let f = apply_forward(1.5, &Transposed(a.clone()), &g, &phi).unwrap();
        for (x, y) in b.iter().zip(&f) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn length_is_checked() {
        let g = Grid::new(11).unwrap();
        assert!(apply_forward(1.0, &Builtin::Product, &g, &[1.0; 3]).is_err());
    }

    #[test]
    fn trivial_eigenpairs() {
        let g = Grid::new(51).unwrap();
        let ep = leading_eigenpair(4.0, &Builtin::Constant { c: 0.0 }, &g, 1e-12, 1000).unwrap();
        assert!((ep.lambda - 1.0).abs() < 1e-13);
        assert!(ep.phi.iter().chain(&ep.phi_bar).all(|v| (v - 1.0).abs() < 1e-13));
        let ep = leading_eigenpair(4.0, &Builtin::Constant { c: -0.3 }, &g, 1e-12, 1000).unwrap();
        assert!((ep.log_lambda + 1.2).abs() < 1e-13);
    }

    #[test]
    fn no_convergence_reports_residual() {
        let g = Grid::new(51).unwrap();
        match leading_eigenpair(8.0, &Builtin::Quadratic, &g, 1e-12, 3) {
            Err(Error::NoConvergence { iterations: 3, residual, .. }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log_space_matches_direct() {
        // beta * sup|A| = 800 triggers the shifted kernel
        let g = Grid::new(61).unwrap();
        let big = leading_eigenpair(800.0, &Builtin::Constant { c: 1.0 }, &g, 1e-12, 100).unwrap();
        assert!((big.log_lambda - 800.0).abs() < 1e-9);
        assert!(big.lambda.is_infinite());
        let op = TransferOperator::new(800.0, &Builtin::Product, &g).unwrap();
        assert_eq!(op.log_scale(), 800.0);
    }

    #[test]
    fn gap_bound_values() {
        let g = Grid::new(21).unwrap();
        let ep = leading_eigenpair(1.0, &Builtin::Constant { c: 0.5 }, &g, 1e-12, 100).unwrap();
        assert_eq!(spectral_gap_bound(&ep, &Builtin::Constant { c: 0.5 }, &g), 0.0);
        let ep = leading_eigenpair(1.0, &Builtin::Product, &g, 1e-12, 1000).unwrap();
        let e = core::f64::consts::E;
        let expected = ep.lambda * (e - 1.0) / (e + 1.0);
        assert!((spectral_gap_bound(&ep, &Builtin::Product, &g) - expected).abs() < 1e-14);
    }
}
