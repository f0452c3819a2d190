//! Maximizing measures on the grid, the optimal-transition map `Y` under the
//! twist condition, and the checks tying them together.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gibbs::GibbsChain;
use crate::grid::Grid;
use crate::math;
use crate::potentials::{twist_report, Potential, TwistSign};
use crate::tropical::{karp_value, Direction, KarpValue, Subaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureSource {
    KarpCycle,
    ChainLimit,
}

/// A probability on node pairs `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMeasure {
    pub pairs: Vec<(usize, usize, f64)>,
    pub source: MeasureSource,
}

impl SupportMeasure {
    pub fn total_mass(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }

    /// `(first marginal, second marginal)` as mass per node.
    pub fn marginals(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut row = vec![0.0; n];
        let mut col = vec![0.0; n];
        for &(i, j, w) in &self.pairs {
            row[i] += w;
            col[j] += w;
        }
        (row, col)
    }

    /// Sup distance between the two marginals.
    pub fn marginal_defect(&self, n: usize) -> f64 {
        let (row, col) = self.marginals(n);
        math::sup_dist(&row, &col)
    }

    /// `int A d nu`. Uniform weights are applied once after summing, as in a
    /// cycle mean.
    pub fn integral<P: Potential + ?Sized>(&self, a: &P, g: &Grid) -> f64 {
        let x = g.nodes();
        let uniform = self.pairs.windows(2).all(|w| w[0].2 == w[1].2);
        if uniform && !self.pairs.is_empty() {
            let sum: f64 = self.pairs.iter().map(|&(i, j, _)| a.eval(x[i], x[j])).sum();
            sum / self.pairs.len() as f64
        } else {
            self.pairs.iter().map(|&(i, j, w)| w * a.eval(x[i], x[j])).sum()
        }
    }
}

/// Uniform measure on the edges of an optimal cycle.
pub fn cycle_measure(kv: &KarpValue) -> SupportMeasure {
    let len = kv.cycle.len();
    let mass = 1.0 / len as f64;
    let pairs = (0..len)
        .map(|t| (kv.cycle[t], kv.cycle[(t + 1) % len], mass))
        .collect();
    SupportMeasure {
        pairs,
        source: MeasureSource::KarpCycle,
    }
}

pub fn maximizing_measure<P: Potential + ?Sized>(a: &P, g: &Grid) -> Result<SupportMeasure> {
    Ok(cycle_measure(&karp_value(a, g)?))
}

/// Node pairs carrying at least `floor` of the chain's cell mass
/// `w_i w_j theta_i K_ij`, renormalized. At large `beta` this approximates the
/// support of the limit measure.
pub fn chain_support(c: &GibbsChain, floor: f64) -> Result<SupportMeasure> {
    let n = c.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        let wi = c.weights()[i] * c.theta[i];
        for (j, k) in c.row(i).iter().enumerate() {
            let mass = wi * c.weights()[j] * k;
            if mass >= floor {
                pairs.push((i, j, mass));
            }
        }
    }
    let total: f64 = pairs.iter().map(|p| p.2).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("no pair carries the requested mass"));
    }
    for p in pairs.iter_mut() {
        p.2 /= total;
    }
    Ok(SupportMeasure {
        pairs,
        source: MeasureSource::ChainLimit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMap {
    /// `Y(x_i)` as a node index: lowest argmax of `A(x_i, .) + u(.)`.
    pub y: Vec<usize>,
    /// Finite-difference derivative of `u`.
    pub du: Vec<f64>,
    /// Nodes where `dA/dx(x, Y(x))` agrees with `du` within `cross_tol`.
    pub defined: Vec<bool>,
    pub cross_tol: f64,
    pub sign: TwistSign,
}

impl GraphMap {
    pub fn defined_count(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }

    /// `Y` with every excluded node taking the value of the closest defined
    /// node to its left, for reporting only.
    pub fn left_limit(&self) -> Vec<usize> {
        let mut out = self.y.clone();
        let mut last = None;
        for (o, &defined) in out.iter_mut().zip(&self.defined) {
            if defined {
                last = Some(*o);
            } else if let Some(v) = last {
                *o = v;
            }
        }
        out
    }
}

/// Central differences inside, one-sided at the ends.
pub fn finite_difference(u: &[f64], g: &Grid) -> Vec<f64> {
    let n = u.len();
    let h = g.spacing();
    (0..n)
        .map(|i| {
            if i == 0 {
                (u[1] - u[0]) / h
            } else if i == n - 1 {
                (u[n - 1] - u[n - 2]) / h
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

pub fn graph_map<P: Potential + ?Sized>(u: &Subaction, a: &P, g: &Grid) -> Result<GraphMap> {
    if u.direction != Direction::Backward {
        return Err(Error::InvalidArgument("graph map needs a backward subaction"));
    }
    if u.values.len() != g.len() {
        return Err(Error::InvalidArgument("subaction lives on a different grid"));
    }
    let twist = twist_report(a, g);
    if !twist.is_twist {
        return Err(Error::TwistViolated);
    }
    let x = g.nodes();
    let n = g.len();
    let du = finite_difference(&u.values, g);
    let cross_tol = a.lip() * 10.0 / (n - 1) as f64;
    let mut y = Vec::with_capacity(n);
    let mut defined = Vec::with_capacity(n);
    for i in 0..n {
        let (j, _) = math::argmax((0..n).map(|j| a.eval(x[i], x[j]) + u.values[j]));
        y.push(j);
        defined.push((a.d_x(x[i], x[j]) - du[i]).abs() <= cross_tol);
    }
    Ok(GraphMap {
        y,
        du,
        defined,
        cross_tol,
        sign: twist.sign,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonotonicityReport {
    pub ok: bool,
    /// Consecutive defined nodes `(i, k)` where `Y` moves the wrong way by
    /// more than one grid cell.
    pub violations: Vec<(usize, usize)>,
}

/// Nondecreasing for a positive twist, nonincreasing for a negative one.
pub fn monotonicity_check(gm: &GraphMap) -> MonotonicityReport {
    let mut violations = Vec::new();
    let mut prev: Option<usize> = None;
    for i in 0..gm.y.len() {
        if !gm.defined[i] {
            continue;
        }
        if let Some(p) = prev {
            let (a, b) = (gm.y[p], gm.y[i]);
            let bad = match gm.sign {
                TwistSign::Positive => b + 1 < a,
                TwistSign::Negative => a + 1 < b,
                TwistSign::None => false,
            };
            if bad {
                violations.push((p, i));
            }
        }
        prev = Some(i);
    }
    MonotonicityReport {
        ok: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    pub ok: bool,
    pub off_graph_pairs: Vec<(usize, usize)>,
}

/// Every support pair `(i, j)` with `i` defined lies within two cells of
/// `(x_i, Y(x_i))`.
pub fn support_on_graph_check(sm: &SupportMeasure, gm: &GraphMap) -> SupportReport {
    let off: Vec<(usize, usize)> = sm
        .pairs
        .iter()
        .filter(|&&(i, j, _)| gm.defined[i] && j.abs_diff(gm.y[i]) > 2)
        .map(|&(i, j, _)| (i, j))
        .collect();
    SupportReport {
        ok: off.is_empty(),
        off_graph_pairs: off,
    }
}

/// `max |u(x) - A(x, y) - u(y) + m|` over the support pairs.
pub fn cohomology_residual<P: Potential + ?Sized>(
    sm: &SupportMeasure,
    u: &Subaction,
    a: &P,
    g: &Grid,
) -> f64 {
    let x = g.nodes();
    sm.pairs
        .iter()
        .map(|&(i, j, _)| (u.values[i] - a.eval(x[i], x[j]) - u.values[j] + u.m).abs())
        .fold(0.0, f64::max)
}
