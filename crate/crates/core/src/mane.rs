//! Path costs on the grid: the Mane potential `S`, the Peierls barrier `h`,
//! the non-wandering set, and subactions built from them.
//!
//! Edge `i -> j` costs `m - A(x_i, x_j)`. `S` is the cheapest path of at
//! least one edge; `h` is approximated by the cheapest path whose length lies
//! in a window `[K/2, K]`, with `K` doubled until the window minimum settles.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::{sample_on_grid, unit_f64, Potential};
use crate::tropical::{calibration_residual, Direction, Subaction, SubactionKind, CALIBRATION_TOL};

/// Negative cycles shallower than this are attributed to rounding.
const NEGATIVE_CYCLE_SLACK: f64 = 1e-9;
/// Allowed gap `m - max_y[...]` on the non-wandering set.
pub const OMEGA_MARGIN_TOL: f64 = 1e-6;

/// Dense `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    fn filled(n: usize, v: f64) -> Self {
        CostMatrix { n, data: vec![v; n * n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `(self ⊗ other)[i][j] = min_k self[i][k] + other[k][j]`.
    pub fn min_plus(&self, other: &CostMatrix) -> CostMatrix {
        let n = self.n;
        let mut out = CostMatrix::filled(n, f64::INFINITY);
        for i in 0..n {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == f64::INFINITY {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    let c = a + b;
                    if c < *o {
                        *o = c;
                    }
                }
            }
        }
        out
    }

    fn sup_dist(&self, other: &CostMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrices {
    pub m: f64,
    /// Mane potential.
    pub s: CostMatrix,
    /// Peierls barrier approximation.
    pub h: CostMatrix,
    /// Largest path length `K` used for `h`.
    pub k_used: usize,
    pub h_converged: bool,
}

/// Edge costs `m - A(x_i, x_j)`.
pub fn edge_costs<P: Potential + ?Sized>(a: &P, g: &Grid, m: f64) -> CostMatrix {
    CostMatrix {
        n: g.len(),
        data: sample_on_grid(a, g).into_iter().map(|v| m - v).collect(),
    }
}

/// Floyd-Warshall over paths with at least one edge.
pub fn mane_potential(w: &CostMatrix) -> Result<CostMatrix> {
    let n = w.n;
    let mut d = w.data.clone();
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            for j in 0..n {
                let c = dik + d[k * n + j];
                if c < d[i * n + j] {
                    d[i * n + j] = c;
                }
            }
        }
    }
    for i in 0..n {
        let dii = d[i * n + i];
        if dii < -NEGATIVE_CYCLE_SLACK {
            return Err(Error::InconsistentM { node: i, excess: -dii });
        }
    }
    Ok(CostMatrix { n, data: d })
}

/// `S` by Floyd-Warshall and `h` by windowed min-plus powers.
pub fn cost_matrices<P: Potential + ?Sized>(
    a: &P,
    g: &Grid,
    m: f64,
    k_max: usize,
    tol: f64,
) -> Result<CostMatrices> {
    if k_max < 3 {
        return Err(Error::InvalidArgument("k_max must be at least 3"));
    }
    let w = edge_costs(a, g, m);
    let s = mane_potential(&w)?;
    let n = w.n;
    // exact: paths of exactly 2^p edges; upto: paths of 0..=2^p edges
    let mut exact = w.clone();
    let mut upto = w.clone();
    for i in 0..n {
        let d = &mut upto.data[i * n + i];
        *d = d.min(0.0);
    }
    let mut k = 2;
    let mut h = exact.min_plus(&upto);
    let mut converged = false;
    while 2 * k <= k_max {
        exact = exact.min_plus(&exact);
        upto = upto.min_plus(&upto);
        let next = exact.min_plus(&upto);
        let change = next.sup_dist(&h);
        h = next;
        k *= 2;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(CostMatrices {
        m,
        s,
        h,
        k_used: k,
        h_converged: converged,
    })
}

/// Largest `S(i, k) - S(i, j) - S(j, k)` over `samples` random triples.
pub fn max_triangle_violation(s: &CostMatrix, samples: usize, seed: u64) -> f64 {
    let n = s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = || ((unit_f64(&mut rng) * n as f64) as usize).min(n - 1);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let (i, j, k) = (pick(), pick(), pick());
        worst = worst.max(s.get(i, k) - s.get(i, j) - s.get(j, k));
    }
    worst
}

/// Default tolerance for the non-wandering test, `1e-6 lip(A) / (n - 1)`,
/// floored at a rounding level.
pub fn default_omega_tol(lip: f64, n: usize) -> f64 {
    (1e-6 * lip / (n - 1) as f64).max(1e-12)
}

/// Nodes whose cheapest loop is free: `S(x, x) <= tol`.
pub fn omega_set(cm: &CostMatrices, tol: f64) -> Result<Vec<usize>> {
    let set: Vec<usize> = (0..cm.s.len()).filter(|&i| cm.s.get(i, i) <= tol).collect();
    if set.is_empty() {
        Err(Error::EmptyOmega)
    } else {
        Ok(set)
    }
}

/// A separating backward subaction with its verification data.
#[derive(Debug, Clone, PartialEq)]
pub struct Separating {
    pub subaction: Subaction,
    /// `m - max_y [u(y) - u(x) + A(x, y)]` for every node.
    pub margins: Vec<f64>,
    /// Weight given to each node outside the non-wandering set.
    pub weights: Vec<(usize, f64)>,
}

/// `m - max_y [u(y) - u(x) + A(x, y)]` at every node.
pub fn backward_margins<P: Potential + ?Sized>(u: &[f64], a: &P, g: &Grid, m: f64) -> Vec<f64> {
    let n = g.len();
    let w = sample_on_grid(a, g);
    (0..n)
        .map(|x| {
            let best = (0..n)
                .map(|y| u[y] - u[x] + w[x * n + y])
                .fold(f64::NEG_INFINITY, f64::max);
            m - best
        })
        .collect()
}

/// `u(z) = sum_j c_j (S(x_j, z) - S(x_j, 0))` over the nodes `x_1 < x_2 < ...`
/// outside `omega`, with `c_j = 2^-j` and the last weight doubled so the
/// weights sum to one.
///
/// Fails when some node outside `omega` has margin `<= floor` or a node in
/// `omega` has margin above [`OMEGA_MARGIN_TOL`].
pub fn separating_subaction<P: Potential + ?Sized>(
    cm: &CostMatrices,
    omega: &[usize],
    a: &P,
    g: &Grid,
    floor: f64,
) -> Result<Separating> {
    let n = g.len();
    if cm.s.len() != n {
        return Err(Error::InvalidArgument("cost matrices do not live on this grid"));
    }
    let mut inside = vec![false; n];
    for &i in omega {
        if i >= n {
            return Err(Error::InvalidArgument("omega node out of range"));
        }
        inside[i] = true;
    }
    let outside: Vec<usize> = (0..n).filter(|&i| !inside[i]).collect();
    let mut weights: Vec<(usize, f64)> = Vec::with_capacity(outside.len());
    let mut c = 0.5;
    for &x in &outside {
        weights.push((x, c));
        c *= 0.5;
    }
    if let Some(last) = weights.last_mut() {
        last.1 *= 2.0;
    }
    let mut u = vec![0.0; n];
    for &(x, c) in &weights {
        let row = cm.s.row(x);
        let pin = row[0];
        for (uz, s) in u.iter_mut().zip(row) {
            *uz += c * (s - pin);
        }
    }
    let margins = backward_margins(&u, a, g, cm.m);
    for (x, &margin) in margins.iter().enumerate() {
        let ok = if inside[x] {
            margin <= OMEGA_MARGIN_TOL
        } else {
            margin > floor
        };
        if !ok {
            return Err(Error::ConstructionFailure { node: x, margin });
        }
    }
    let residual = calibration_residual(&u, Direction::Backward, a, g, cm.m);
    Ok(Separating {
        subaction: Subaction {
            values: u,
            direction: Direction::Backward,
            kind: SubactionKind::Separating,
            m: cm.m,
            normalization: 0,
            residual,
            iterations: 0,
        },
        margins,
        weights,
    })
}

/// `u(x) = max_{p in omega} f(p) - h(x, p)` for boundary data `f` on `omega`.
///
/// The result is reported as calibrated only when `h` converged and the
/// calibration residual is within [`CALIBRATION_TOL`].
pub fn subaction_from_boundary<P: Potential + ?Sized>(
    f: &[f64],
    omega: &[usize],
    cm: &CostMatrices,
    a: &P,
    g: &Grid,
) -> Result<Subaction> {
    if f.len() != omega.len() {
        return Err(Error::InvalidArgument("boundary data must have one value per omega node"));
    }
    if omega.is_empty() {
        return Err(Error::EmptyOmega);
    }
    let n = g.len();
    for (a_idx, &x) in omega.iter().enumerate() {
        for (b_idx, &y) in omega.iter().enumerate() {
            let excess = f[b_idx] - f[a_idx] - cm.h.get(x, y);
            if excess > 1e-9 {
                return Err(Error::IncompatibleBoundaryData { from: x, to: y, excess });
            }
        }
    }
    let values: Vec<f64> = (0..n)
        .map(|x| {
            omega
                .iter()
                .zip(f)
                .map(|(&p, &fp)| fp - cm.h.get(x, p))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let residual = calibration_residual(&values, Direction::Backward, a, g, cm.m);
    let kind = if cm.h_converged && residual <= CALIBRATION_TOL {
        SubactionKind::Calibrated
    } else {
        SubactionKind::Plain
    };
    Ok(Subaction {
        values,
        direction: Direction::Backward,
        kind,
        m: cm.m,
        normalization: omega[0],
        residual,
        iterations: 0,
    })
}
