//! The absolutely continuous stationary Markov measure `nu_beta = theta K`
//! built from a leading eigenpair.
//!
//! `theta = phi phi_bar / pi` and
//! `K(x, y) = exp(beta A(x, y)) phi_bar(y) / (phi_bar(x) lambda)`.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math;
use crate::potentials::{unit_f64, Potential};
use crate::transfer::{EigenPair, TransferOperator};

pub const ROW_SUM_TOL: f64 = 1e-10;
pub const NORMALIZATION_TOL: f64 = 1e-10;
pub const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsChain {
    pub beta: f64,
    /// Stationary density on the nodes.
    pub theta: Vec<f64>,
    /// Transition density, row-major: `kernel[i * n + j] = K(x_i, x_j)`.
    pub kernel: Vec<f64>,
    /// `int phi phi_bar`.
    pub pi: f64,
    n: usize,
    weights: Vec<f64>,
}

/// Worst violations of the chain identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainResiduals {
    /// `max_i |int K(x_i, y) dy - 1|`
    pub row_stochasticity: f64,
    /// `|int int theta K - 1|`
    pub normalization: f64,
    /// `sup_y |int theta(x) K(x, y) dx - theta(y)|`
    pub stationarity: f64,
}

impl GibbsChain {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Quadrature weights of the grid the chain lives on.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.kernel[i * self.n..(i + 1) * self.n]
    }

    pub fn residuals(&self) -> ChainResiduals {
        let n = self.n;
        let w = &self.weights;
        let mut row_stochasticity: f64 = 0.0;
        let mut y_marginal = vec![0.0; n];
        let mut total = 0.0;
        for i in 0..n {
            let row = self.row(i);
            let mut s = 0.0;
            for (wj, k) in w.iter().zip(row) {
                s += wj * k;
            }
            row_stochasticity = row_stochasticity.max((s - 1.0).abs());
            total += w[i] * self.theta[i] * s;
            let c = w[i] * self.theta[i];
            for (m, k) in y_marginal.iter_mut().zip(row) {
                *m += c * k;
            }
        }
        ChainResiduals {
            row_stochasticity,
            normalization: (total - 1.0).abs(),
            stationarity: math::sup_dist(&y_marginal, &self.theta),
        }
    }

    /// Marginal of `nu` in the second coordinate.
    pub fn y_marginal(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let c = self.weights[i] * self.theta[i];
            for (m, k) in out.iter_mut().zip(self.row(i)) {
                *m += c * k;
            }
        }
        out
    }

    /// `int g(x, y) d nu` for a grid function of two arguments.
    pub fn expect(&self, g: impl Fn(usize, usize) -> f64) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let mut inner = 0.0;
            for (j, k) in self.row(i).iter().enumerate() {
                inner += self.weights[j] * k * g(i, j);
            }
            acc += self.weights[i] * self.theta[i] * inner;
        }
        acc
    }
}

/// Assembles the chain from an eigenpair and verifies its identities.
pub fn build_chain<P: Potential + ?Sized>(ep: &EigenPair, a: &P, g: &Grid) -> Result<GibbsChain> {
    let op = TransferOperator::new(ep.beta, a, g)?;
    build_chain_with(ep, &op, g)
}

/// As [`build_chain`] with an already materialized kernel.
pub fn build_chain_with(ep: &EigenPair, op: &TransferOperator, g: &Grid) -> Result<GibbsChain> {
    let n = g.len();
    if ep.phi.len() != n || ep.phi_bar.len() != n || op.len() != n {
        return Err(Error::InvalidArgument("eigenpair does not live on this grid"));
    }
    if ep.phi.iter().chain(&ep.phi_bar).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("eigenfunctions must be positive"));
    }
    let prod: Vec<f64> = ep.phi.iter().zip(&ep.phi_bar).map(|(a, b)| a * b).collect();
    let pi = g.dot(&prod);
    let theta: Vec<f64> = prod.iter().map(|v| v / pi).collect();
    let scaled_lambda = math::exp(ep.log_lambda - op.log_scale());
    let mut kernel = Vec::with_capacity(n * n);
    for i in 0..n {
        let denom = ep.phi_bar[i] * scaled_lambda;
        for j in 0..n {
            kernel.push(op.entry(i, j) * ep.phi_bar[j] / denom);
        }
    }
    let chain = GibbsChain {
        beta: ep.beta,
        theta,
        kernel,
        pi,
        n,
        weights: g.weights().to_vec(),
    };
    let r = chain.residuals();
    let checks = [
        ("row stochasticity", r.row_stochasticity, ROW_SUM_TOL),
        ("joint normalization", r.normalization, NORMALIZATION_TOL),
        ("stationarity", r.stationarity, STATIONARITY_TOL),
    ];
    for (check, residual, tol) in checks {
        if !(residual <= tol) {
            return Err(Error::InternalConsistency { check, residual });
        }
    }
    Ok(chain)
}

/// `S[nu] = - int int theta K log K`.
pub fn entropy_penalized(c: &GibbsChain) -> Result<f64> {
    if c.kernel.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::InvalidArgument("kernel must be strictly positive"));
    }
    Ok(-c.expect(|i, j| math::ln(c.k(i, j))))
}

/// `int A d nu`.
pub fn mean_potential<P: Potential + ?Sized>(c: &GibbsChain, a: &P, g: &Grid) -> f64 {
    let x = g.nodes();
    c.expect(|i, j| a.eval(x[i], x[j]))
}

/// `|log lambda - (beta int A d nu + S[nu])|`.
pub fn variational_residual<P: Potential + ?Sized>(
    c: &GibbsChain,
    ep: &EigenPair,
    a: &P,
    g: &Grid,
) -> Result<f64> {
    let s = entropy_penalized(c)?;
    Ok((ep.log_lambda - (ep.beta * mean_potential(c, a, g) + s)).abs())
}

/// `|int f(x) d nu - int f(y) d nu|` for a grid function `f`.
pub fn holonomy_defect(c: &GibbsChain, f: &[f64]) -> f64 {
    (c.expect(|i, _| f[i]) - c.expect(|_, j| f[j])).abs()
}

/// Measure of a cylinder together with the largest endpoint snap distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderMeasure {
    pub value: f64,
    pub snap_distance: f64,
}

/// Node-index ranges of a cylinder after snapping each endpoint to the
/// nearest node.
pub fn snap_cylinder(g: &Grid, cyl: &[(f64, f64)]) -> Result<(Vec<(usize, usize)>, f64)> {
    if cyl.is_empty() {
        return Err(Error::InvalidArgument("cylinder needs at least one interval"));
    }
    let mut snap: f64 = 0.0;
    let mut ranges = Vec::with_capacity(cyl.len());
    for (t, &(lo, hi)) in cyl.iter().enumerate() {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || !(lo < hi) {
            return Err(Error::InvalidArgument("cylinder intervals must lie in [0, 1] with positive length"));
        }
        let (a, da) = g.nearest(lo);
        let (b, db) = g.nearest(hi);
        if a >= b {
            return Err(Error::DegenerateCylinder { interval: t });
        }
        snap = snap.max(da).max(db);
        ranges.push((a, b));
    }
    Ok((ranges, snap))
}

/// `mu(A_1 ... A_k) = int_{A_1..A_k} K(x_{k-1}, x_k) ... K(x_1, x_2) theta(x_1)`
/// by a forward sweep, each interval integrated with its own trapezoid rule.
pub fn cylinder_measure(c: &GibbsChain, g: &Grid, cyl: &[(f64, f64)]) -> Result<CylinderMeasure> {
    let (ranges, snap_distance) = snap_cylinder(g, cyl)?;
    let n = c.len();
    let mut v = c.theta.clone();
    let mut w = g.sub_weights(ranges[0].0, ranges[0].1);
    for &(lo, hi) in &ranges[1..] {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let coef = w[i] * v[i];
            if coef == 0.0 {
                continue;
            }
            for (o, k) in next.iter_mut().zip(c.row(i)).take(hi + 1).skip(lo) {
                *o += coef * k;
            }
        }
        v = next;
        w = g.sub_weights(lo, hi);
    }
    let mut value = 0.0;
    for (wi, vi) in w.iter().zip(&v) {
        value += wi * vi;
    }
    Ok(CylinderMeasure { value, snap_distance })
}

/// Inverse-CDF sampler over grid cells with a piecewise-constant density in
/// each cell. Rows are selected by the node nearest the current state.
#[derive(Debug, Clone)]
pub struct PathSampler {
    nodes: Vec<f64>,
    h: f64,
    initial: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

fn cell_cdf(f: &[f64], h: f64) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(f.len() - 1);
    let mut acc = 0.0;
    for w in f.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        cdf.push(acc);
    }
    cdf
}

impl PathSampler {
    pub fn new(c: &GibbsChain, g: &Grid) -> Self {
        let h = g.spacing();
        PathSampler {
            nodes: g.nodes().to_vec(),
            h,
            initial: cell_cdf(&c.theta, h),
            rows: (0..c.len()).map(|i| cell_cdf(c.row(i), h)).collect(),
        }
    }

    fn draw(&self, cdf: &[f64], u: f64) -> f64 {
        let total = *cdf.last().unwrap();
        let target = u * total;
        let cell = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
        let below = if cell == 0 { 0.0 } else { cdf[cell - 1] };
        let mass = cdf[cell] - below;
        let frac = if mass > 0.0 { ((target - below) / mass).clamp(0.0, 1.0) } else { 0.5 };
        self.nodes[cell] + frac * self.h
    }

    pub fn sample(&self, len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut x = self.draw(&self.initial, unit_f64(&mut rng));
        out.push(x);
        let last = (self.nodes.len() - 1) as f64;
        for _ in 1..len {
            let row = (math::round(x * last) as usize).min(self.nodes.len() - 1);
            x = self.draw(&self.rows[row], unit_f64(&mut rng));
            out.push(x);
        }
        out
    }
}

/// A trajectory of `len` states started from `theta`. ChaCha8 seeded with `seed`.
pub fn sample_path(c: &GibbsChain, g: &Grid, len: usize, seed: u64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::InvalidArgument("path length must be at least one"));
    }
    Ok(PathSampler::new(c, g).sample(len, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Builtin;
    use crate::transfer::leading_eigenpair;

    fn chain(a: &Builtin, beta: f64, n: usize) -> (Grid, EigenPair, GibbsChain) {
        let g = Grid::new(n).unwrap();
        let ep = leading_eigenpair(beta, a, &g, 1e-12, 100_000).unwrap();
        let c = build_chain(&ep, a, &g).unwrap();
        (g, ep, c)
    }

    #[test]
    fn flat_potentials_give_uniform_chain() {
        for c0 in [0.0, 0.6] {
            let (_, _, c) = chain(&Builtin::Constant { c: c0 }, 3.0, 41);
            assert!(c.theta.iter().all(|t| (t - 1.0).abs() < 1e-12));
            assert!(c.kernel.iter().all(|k| (k - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn flat_entropy_and_residual_vanish() {
        let a = Builtin::Constant { c: 0.0 };
        let (g, ep, c) = chain(&a, 2.0, 41);
        assert!(entropy_penalized(&c).unwrap().abs() < 1e-13);
        assert!(variational_residual(&c, &ep, &a, &g).unwrap() < 1e-13);
        let a = Builtin::Constant { c: 0.4 };
        let (g, ep, c) = chain(&a, 2.0, 41);
        assert!(variational_residual(&c, &ep, &a, &g).unwrap() < 1e-12);
    }

    #[test]
    fn product_chain_stationary() {
        let (_, _, c) = chain(&Builtin::Product, 4.0, 201);
        let r = c.residuals();
        assert!(r.stationarity <= 1e-8);
        assert!(r.row_stochasticity <= 1e-10);
        assert!(c.theta.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn entropy_matches_identity() {
        let a = Builtin::Product;
        let (g, ep, c) = chain(&a, 1.0, 201);
        let s = entropy_penalized(&c).unwrap();
        assert!(s <= 1e-12);
        let other_side = ep.log_lambda - ep.beta * mean_potential(&c, &a, &g);
        assert!((s - other_side).abs() < 1e-8);
    }

    #[test]
    fn nonpositive_kernel_rejected() {
        let (_, _, mut c) = chain(&Builtin::Product, 1.0, 11);
        c.kernel[5] = 0.0;
        assert!(entropy_penalized(&c).is_err());
    }

    #[test]
    fn cylinder_of_uniform_chain() {
        let (g, _, c) = chain(&Builtin::Constant { c: 0.0 }, 1.0, 201);
        let m = cylinder_measure(&c, &g, &[(0.0, 0.5), (0.0, 0.5)]).unwrap();
        assert!((m.value - 0.25).abs() < 1e-12);
        assert_eq!(m.snap_distance, 0.0);
    }

    #[test]
    fn full_cylinder_has_unit_mass() {
        let (g, _, c) = chain(&Builtin::Product, 3.0, 101);
        let m = cylinder_measure(&c, &g, &[(0.0, 1.0)]).unwrap();
        assert!((m.value - 1.0).abs() < 1e-10);
        let m = cylinder_measure(&c, &g, &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!((m.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_cylinder() {
        let (g, _, c) = chain(&Builtin::Product, 1.0, 11);
        assert_eq!(
            cylinder_measure(&c, &g, &[(0.0, 1.0), (0.31, 0.33)]),
            Err(Error::DegenerateCylinder { interval: 1 })
        );
        assert!(cylinder_measure(&c, &g, &[(0.5, 0.2)]).is_err());
        assert!(cylinder_measure(&c, &g, &[]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let (g, _, c) = chain(&Builtin::Product, 2.0, 51);
        let a = sample_path(&c, &g, 500, 42).unwrap();
        let b = sample_path(&c, &g, 500, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_path(&c, &g, 500, 43).unwrap());
        assert!(a.iter().all(|x| (0.0..=1.0).contains(x)));
        assert!(sample_path(&c, &g, 0, 1).is_err());
    }

    #[test]
    fn uniform_chain_mean() {
        let (g, _, c) = chain(&Builtin::Constant { c: 0.0 }, 1.0, 101);
        let len = 100_000;
        let path = sample_path(&c, &g, len, 7).unwrap();
        let mean = path.iter().sum::<f64>() / len as f64;
        let sigma = 1.0 / math::sqrt(12.0 * len as f64);
        assert!((mean - 0.5).abs() < 3.0 * sigma, "mean {mean}");
    }
}
