//! Zero-temperature objects: the maximizing value `m`, calibrated
//! subactions, the `beta -> infinity` limit of `log(phi_beta) / beta`, and the
//! dual certificate for `m`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math;
use crate::potentials::{sample_on_grid, Potential};
use crate::transfer::EigenPair;

/// Calibration residual below which a subaction is reported as calibrated.
pub const CALIBRATION_TOL: f64 = 1e-7;
/// Slack allowed in the subaction inequality.
pub const SUBACTION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `u(y) >= A(x, y) + u(x) - m`
    Forward,
    /// `u(x) >= A(x, y) + u(y) - m`
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubactionKind {
    Calibrated,
    Separating,
    Plain,
}

/// A grid function satisfying a subaction inequality for the value `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subaction {
    pub values: Vec<f64>,
    pub direction: Direction,
    pub kind: SubactionKind,
    pub m: f64,
    /// Node at which the function is pinned to zero.
    pub normalization: usize,
    /// `max_y |max_x [A(x, y) + u(x) - m] - u(y)|` (transposed for backward).
    pub residual: f64,
    pub iterations: usize,
}

/// Maximum cycle mean of the complete digraph with edge weights `A(x_i, x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KarpValue {
    /// Mean of `cycle`, summed then divided once.
    pub m: f64,
    /// Karp's min-max formula value, equal to `m` up to rounding.
    pub karp_formula: f64,
    /// Nodes of one optimal cycle in traversal order, starting at its lowest index.
    pub cycle: Vec<usize>,
}

/// Karp's dynamic program for the maximum mean cycle on the grid.
pub fn karp_value<P: Potential + ?Sized>(a: &P, g: &Grid) -> Result<KarpValue> {
    let n = g.len();
    let w = sample_on_grid(a, g);
    // best[k][v]: heaviest k-edge walk ending at v, from any start
    let mut best = vec![0.0f64; (n + 1) * n];
    let mut pred = vec![0u32; (n + 1) * n];
    for k in 1..=n {
        let (prev, cur) = best.split_at_mut(k * n);
        let prev = &prev[(k - 1) * n..];
        let cur = &mut cur[..n];
        let pk = &mut pred[k * n..(k + 1) * n];
        for v in 0..n {
            let mut bv = f64::NEG_INFINITY;
            let mut bu = 0;
            for u in 0..n {
                let cand = prev[u] + w[u * n + v];
                if cand > bv {
                    bv = cand;
                    bu = u;
                }
            }
            cur[v] = bv;
            pk[v] = bu as u32;
        }
    }
    let last = &best[n * n..(n + 1) * n];
    let mut karp_formula = f64::NEG_INFINITY;
    let mut end = 0;
    for v in 0..n {
        let worst = (0..n)
            .map(|k| (last[v] - best[k * n + v]) / (n - k) as f64)
            .fold(f64::INFINITY, f64::min);
        if worst > karp_formula {
            karp_formula = worst;
            end = v;
        }
    }
    // walk the optimal n-edge walk backwards until a node repeats
    let mut seen = vec![usize::MAX; n];
    let mut walk = Vec::with_capacity(n + 1);
    let mut v = end;
    let mut k = n;
    let cycle = loop {
        if seen[v] != usize::MAX {
            let first = seen[v];
            // levels increase from the current position back to `first`
            let mut c = vec![v];
            c.extend(walk[first + 1..].iter().rev());
            break c;
        }
        seen[v] = walk.len();
        walk.push(v);
        if k == 0 {
            return Err(Error::InternalConsistency {
                check: "optimal walk contains a cycle",
                residual: f64::NAN,
            });
        }
        v = pred[k * n + v] as usize;
        k -= 1;
    };
    let cycle = rotate_to_min(cycle);
    let m = cycle_mean(&w, n, &cycle);
    if !((m - karp_formula).abs() <= 1e-9) {
        return Err(Error::InternalConsistency {
            check: "extracted cycle attains the maximum cycle mean",
            residual: (m - karp_formula).abs(),
        });
    }
    Ok(KarpValue { m, karp_formula, cycle })
}

fn rotate_to_min(mut c: Vec<usize>) -> Vec<usize> {
    if let Some(pos) = c.iter().enumerate().min_by_key(|(_, &v)| v).map(|(i, _)| i) {
        c.rotate_left(pos);
    }
    c
}

pub(crate) fn cycle_mean(w: &[f64], n: usize, cycle: &[usize]) -> f64 {
    let len = cycle.len();
    let mut sum = 0.0;
    for t in 0..len {
        sum += w[cycle[t] * n + cycle[(t + 1) % len]];
    }
    sum / len as f64
}

/// One application of the max-plus Lax-Oleinik map minus `m`.
fn lax_oleinik(w: &[f64], n: usize, u: &[f64], m: f64, direction: Direction) -> Vec<f64> {
    (0..n)
        .map(|y| {
            let mut best = f64::NEG_INFINITY;
            for x in 0..n {
                let edge = match direction {
                    Direction::Forward => w[x * n + y],
                    Direction::Backward => w[y * n + x],
                };
                let v = edge + u[x];
                if v > best {
                    best = v;
                }
            }
            best - m
        })
        .collect()
}

/// `max |T u - u|` for the calibration map `T`.
pub fn calibration_residual<P: Potential + ?Sized>(
    values: &[f64],
    direction: Direction,
    a: &P,
    g: &Grid,
    m: f64,
) -> f64 {
    let w = sample_on_grid(a, g);
    let t = lax_oleinik(&w, g.len(), values, m, direction);
    math::sup_dist(&t, values)
}

/// Largest violation of the subaction inequality over all grid pairs;
/// nonpositive for a subaction.
pub fn subaction_violation<P: Potential + ?Sized>(
    values: &[f64],
    direction: Direction,
    a: &P,
    g: &Grid,
    m: f64,
) -> f64 {
    let w = sample_on_grid(a, g);
    let t = lax_oleinik(&w, g.len(), values, m, direction);
    t.iter()
        .zip(values)
        .map(|(t, u)| t - u)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Value iteration for a calibrated subaction, pinned to zero at node 0.
///
/// Returns the last iterate with `kind = Plain` when `max_iter` runs out, which
/// happens when the critical graph is periodic.
pub fn calibrated_subaction<P: Potential + ?Sized>(
    a: &P,
    g: &Grid,
    m: f64,
    direction: Direction,
    tol: f64,
    max_iter: usize,
) -> Result<Subaction> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive"));
    }
    let n = g.len();
    let w = sample_on_grid(a, g);
    let mut u = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        let mut next = lax_oleinik(&w, n, &u, m, direction);
        let pin = next[0];
        for v in next.iter_mut() {
            *v -= pin;
        }
        let change = math::sup_dist(&next, &u);
        u = next;
        iterations = it;
        if change < tol {
            converged = true;
            break;
        }
    }
    let t = lax_oleinik(&w, n, &u, m, direction);
    let residual = math::sup_dist(&t, &u);
    let kind = if converged && residual <= CALIBRATION_TOL {
        SubactionKind::Calibrated
    } else {
        SubactionKind::Plain
    };
    Ok(Subaction {
        values: u,
        direction,
        kind,
        m,
        normalization: 0,
        residual,
        iterations,
    })
}

/// Additive eigenvalue recovered from a subaction: `T'u - u` at node 0, where
/// `T'` is the Lax-Oleinik map without the `- m`.
pub fn recovered_shift<P: Potential + ?Sized>(s: &Subaction, a: &P, g: &Grid) -> f64 {
    let w = sample_on_grid(a, g);
    let t = lax_oleinik(&w, g.len(), &s.values, 0.0, s.direction);
    t[0] - s.values[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eigenfunction {
    /// `phi`, whose limit is a forward subaction.
    Forward,
    /// `phi_bar`, whose limit is a backward subaction.
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaLimit {
    /// `log(phi_beta) / beta` at the largest `beta`, pinned at node 0.
    pub limit: Vec<f64>,
    pub betas: Vec<f64>,
    /// `u_beta` for every input, pinned at node 0.
    pub profiles: Vec<Vec<f64>>,
    /// Sup distances between consecutive profiles.
    pub consecutive: Vec<f64>,
    /// Sup distance of each profile to the reference subaction, if one was given.
    pub to_reference: Vec<f64>,
}

/// Normalized `log(phi_beta) / beta`.
pub fn log_profile(ep: &EigenPair, which: Eigenfunction) -> Vec<f64> {
    let phi = match which {
        Eigenfunction::Forward => &ep.phi,
        Eigenfunction::Backward => &ep.phi_bar,
    };
    let base = math::ln(phi[0]);
    phi.iter().map(|&p| (math::ln(p) - base) / ep.beta).collect()
}

/// Zero-temperature limit diagnostics over eigenpairs at increasing `beta`.
pub fn beta_limit(
    eps: &[EigenPair],
    which: Eigenfunction,
    reference: Option<&Subaction>,
) -> Result<BetaLimit> {
    if eps.len() < 2 {
        return Err(Error::InvalidArgument("need at least two eigenpairs"));
    }
    if eps.windows(2).any(|w| !(w[0].beta < w[1].beta)) {
        return Err(Error::InvalidArgument("betas must be strictly increasing"));
    }
    let profiles: Vec<Vec<f64>> = eps.iter().map(|ep| log_profile(ep, which)).collect();
    let consecutive = profiles.windows(2).map(|w| math::sup_dist(&w[0], &w[1])).collect();
    let to_reference = match reference {
        Some(s) => {
            let pin = s.values[0];
            let r: Vec<f64> = s.values.iter().map(|v| v - pin).collect();
            profiles.iter().map(|p| math::sup_dist(p, &r)).collect()
        }
        None => Vec::new(),
    };
    Ok(BetaLimit {
        limit: profiles.last().cloned().unwrap_or_default(),
        betas: eps.iter().map(|e| e.beta).collect(),
        profiles,
        consecutive,
        to_reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityCertificate {
    /// `max_{x,y} A(x, y) + u(y) - u(x)`
    pub dual_value: f64,
    /// `dual_value - m`
    pub gap: f64,
}

/// Evaluates the dual objective at `f = -u` for a backward subaction `u`.
pub fn duality_certificate<P: Potential + ?Sized>(u: &Subaction, a: &P, g: &Grid) -> Result<DualityCertificate> {
    if u.direction != Direction::Backward {
        return Err(Error::InvalidArgument("duality certificate needs a backward subaction"));
    }
    let n = g.len();
    let w = sample_on_grid(a, g);
    let mut dual_value = f64::NEG_INFINITY;
    for x in 0..n {
        for y in 0..n {
            dual_value = dual_value.max(w[x * n + y] + u.values[y] - u.values[x]);
        }
    }
    Ok(DualityCertificate {
        dual_value,
        gap: dual_value - u.m,
    })
}
