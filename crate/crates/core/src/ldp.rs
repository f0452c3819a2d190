//! Rate functional on finite path prefixes and the comparison of
//! `(1/beta) log mu_beta(D)` against `-inf_D I` on cylinders.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gibbs::{build_chain, cylinder_measure, snap_cylinder, GibbsChain};
use crate::grid::Grid;
use crate::math;
use crate::potentials::{sample_on_grid, Potential};
use crate::transfer::{leading_eigenpair, DEFAULT_MAX_ITER};
use crate::tropical::{calibrated_subaction, karp_value, Direction, Subaction};

/// Summands of the rate below this are treated as rounding.
pub const RATE_TERM_SLACK: f64 = 1e-9;
/// Summands below this mean the supplied function is not a subaction.
pub const RATE_TERM_FAIL: f64 = 1e-6;

fn check_pair(v: &Subaction, vbar: &Subaction) -> Result<()> {
    if v.direction != Direction::Forward || vbar.direction != Direction::Backward {
        return Err(Error::InvalidArgument("need a forward and a backward subaction"));
    }
    if v.values.len() != vbar.values.len() {
        return Err(Error::InvalidArgument("subactions live on different grids"));
    }
    if v.m != vbar.m {
        return Err(Error::InvalidArgument("subactions were computed for different values of m"));
    }
    Ok(())
}

fn check_path(path: &[usize], n: usize) -> Result<()> {
    if path.len() < 2 {
        return Err(Error::InvalidArgument("path needs at least two points"));
    }
    if path.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument("path node out of range"));
    }
    Ok(())
}

fn max_sum(v: &Subaction, vbar: &Subaction) -> f64 {
    v.values
        .iter()
        .zip(&vbar.values)
        .map(|(a, b)| a + b)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `F_k(x_1..x_k) = max(V + Vbar) - V(x_1) - Vbar(x_k) - sum (A - m)(x_i, x_{i+1})`
/// for a path given by node indices.
pub fn f_k<P: Potential + ?Sized>(
    path: &[usize],
    v: &Subaction,
    vbar: &Subaction,
    a: &P,
    g: &Grid,
) -> Result<f64> {
    check_pair(v, vbar)?;
    check_path(path, g.len())?;
    let x = g.nodes();
    let m = v.m;
    let mut total = v.values[path[0]];
    for e in path.windows(2) {
        total += a.eval(x[e[0]], x[e[1]]) - m;
    }
    total += vbar.values[path[path.len() - 1]];
    Ok(max_sum(v, vbar) - total)
}

/// `sum V(x_{i+1}) - V(x_i) - (A - m)(x_i, x_{i+1})` for a forward subaction `V`.
///
/// Every summand is nonnegative for a genuine subaction; one below
/// `-RATE_TERM_FAIL` is reported as an error.
pub fn rate_prefix<P: Potential + ?Sized>(path: &[usize], v: &Subaction, a: &P, g: &Grid) -> Result<f64> {
    if v.direction != Direction::Forward {
        return Err(Error::InvalidArgument("rate needs a forward subaction"));
    }
    check_path(path, g.len())?;
    let x = g.nodes();
    let mut sum = 0.0;
    for (step, e) in path.windows(2).enumerate() {
        let (i, j) = (e[0], e[1]);
        let term = v.values[j] - v.values[i] - (a.eval(x[i], x[j]) - v.m);
        if term < -RATE_TERM_FAIL {
            return Err(Error::InvalidSubaction { step, term });
        }
        sum += term;
    }
    Ok(sum)
}

/// Minimum of `F_k` over the grid points of a cylinder.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderInf {
    pub value: f64,
    /// A minimizing path, lowest indices on ties.
    pub argmin: Vec<usize>,
    pub ranges: Vec<(usize, usize)>,
}

/// Exact minimum of `F_k` over the grid restriction of `cyl` by a max-plus
/// sweep through the intervals; `O(k n^2)` instead of `n^k`.
pub fn inf_rate_over_cylinder<P: Potential + ?Sized>(
    cyl: &[(f64, f64)],
    v: &Subaction,
    vbar: &Subaction,
    a: &P,
    g: &Grid,
) -> Result<CylinderInf> {
    check_pair(v, vbar)?;
    if v.values.len() != g.len() {
        return Err(Error::InvalidArgument("subactions live on a different grid"));
    }
    let (ranges, _) = snap_cylinder(g, cyl)?;
    if ranges.len() < 2 {
        return Err(Error::InvalidArgument("cylinder needs at least two intervals"));
    }
    let n = g.len();
    let w = sample_on_grid(a, g);
    let m = v.m;
    let (lo0, hi0) = ranges[0];
    // best[i]: largest V(x_1) + sum (A - m) over prefixes ending at node i
    let mut best: Vec<f64> = (lo0..=hi0).map(|i| v.values[i]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(ranges.len() - 1);
    for t in 1..ranges.len() {
        let (plo, _) = ranges[t - 1];
        let (lo, hi) = ranges[t];
        let mut next = vec![f64::NEG_INFINITY; hi - lo + 1];
        let mut arg = vec![0; hi - lo + 1];
        for (jj, j) in (lo..=hi).enumerate() {
            for (ii, &b) in best.iter().enumerate() {
                let c = b + (w[(plo + ii) * n + j] - m);
                if c > next[jj] {
                    next[jj] = c;
                    arg[jj] = plo + ii;
                }
            }
        }
        best = next;
        back.push(arg);
    }
    let (lo, _) = ranges[ranges.len() - 1];
    let (jj, top) = math::argmax(best.iter().enumerate().map(|(jj, b)| b + vbar.values[lo + jj]));
    let mut argmin = vec![lo + jj];
    for t in (1..ranges.len()).rev() {
        let cur = argmin[argmin.len() - 1] - ranges[t].0;
        argmin.push(back[t - 1][cur]);
    }
    argmin.reverse();
    let value = max_sum(v, vbar) - top;
    if value < -RATE_TERM_SLACK {
        return Err(Error::InvalidSubaction { step: 0, term: value });
    }
    Ok(CylinderInf { value, argmin, ranges })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub beta: f64,
    /// `(1/beta) log mu_beta(D)`
    pub log_measure_over_beta: f64,
    /// `|(1/beta) log mu_beta(D) + inf_D I|`
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub cylinder: Vec<(f64, f64)>,
    /// `-inf_D I`
    pub f_inf: f64,
    pub argmin: Vec<usize>,
    pub rows: Vec<RateRow>,
    /// Errors non-increasing over the last two doublings.
    pub converged: bool,
}

/// One row of the table from an already built chain.
pub fn rate_row(c: &GibbsChain, g: &Grid, cyl: &[(f64, f64)], inf_rate: f64) -> Result<RateRow> {
    let mu = cylinder_measure(c, g, cyl)?.value;
    let log_measure_over_beta = math::ln(mu) / c.beta;
    Ok(RateRow {
        beta: c.beta,
        log_measure_over_beta,
        error: (log_measure_over_beta + inf_rate).abs(),
    })
}

/// Sorts rows by `beta` and evaluates the convergence flag.
pub fn assemble_report(cyl: &[(f64, f64)], inf: &CylinderInf, mut rows: Vec<RateRow>) -> RateReport {
    rows.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let k = rows.len();
    let converged = k >= 3 && rows[k - 1].error <= rows[k - 2].error && rows[k - 2].error <= rows[k - 3].error;
    RateReport {
        cylinder: cyl.to_vec(),
        f_inf: 0.0 - inf.value,
        argmin: inf.argmin.clone(),
        rows,
        converged,
    }
}

/// Builds subactions, eigenpairs and chains from scratch and tabulates the
/// cylinder log-measure against the rate.
pub fn ldp_table<P: Potential + ?Sized>(
    a: &P,
    g: &Grid,
    cyl: &[(f64, f64)],
    betas: &[f64],
    eigen_tol: f64,
) -> Result<RateReport> {
    if betas.len() < 3 {
        return Err(Error::InvalidArgument("need at least three values of beta"));
    }
    if betas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("betas must be strictly increasing"));
    }
    let m = karp_value(a, g)?.m;
    let v = calibrated_subaction(a, g, m, Direction::Forward, 1e-13, 100_000)?;
    let vbar = calibrated_subaction(a, g, m, Direction::Backward, 1e-13, 100_000)?;
    let inf = inf_rate_over_cylinder(cyl, &v, &vbar, a, g)?;
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let ep = leading_eigenpair(beta, a, g, eigen_tol, DEFAULT_MAX_ITER)?;
        let c = build_chain(&ep, a, g)?;
        rows.push(rate_row(&c, g, cyl, inf.value)?);
    }
    Ok(assemble_report(cyl, &inf, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Builtin;
    use crate::tropical::SubactionKind;

    fn zero(n: usize, direction: Direction) -> Subaction {
        Subaction {
            values: vec![0.0; n],
            direction,
            kind: SubactionKind::Calibrated,
            m: 0.0,
            normalization: 0,
            residual: 0.0,
            iterations: 0,
        }
    }

    #[test]
    fn quadratic_f2() {
        let g = Grid::new(11).unwrap();
        let (v, vb) = (zero(11, Direction::Forward), zero(11, Direction::Backward));
        assert_eq!(f_k(&[3, 3], &v, &vb, &Builtin::Quadratic, &g).unwrap(), 0.0);
        assert_eq!(f_k(&[0, 10], &v, &vb, &Builtin::Quadratic, &g).unwrap(), 1.0);
        assert!(f_k(&[0], &v, &vb, &Builtin::Quadratic, &g).is_err());
        assert!(f_k(&[0, 1], &vb, &v, &Builtin::Quadratic, &g).is_err());
    }

    #[test]
    fn quadratic_prefix() {
        let g = Grid::new(11).unwrap();
        let v = zero(11, Direction::Forward);
        let r = rate_prefix(&[0, 5, 10, 10], &v, &Builtin::Quadratic, &g).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert_eq!(rate_prefix(&[4, 4, 4], &v, &Builtin::Quadratic, &g).unwrap(), 0.0);
    }

    #[test]
    fn product_prefix() {
        let g = Grid::new(11).unwrap();
        let mut v = zero(11, Direction::Forward);
        v.m = 1.0;
        v.values = g.nodes().to_vec();
        let r = rate_prefix(&[5, 10, 10], &v, &Builtin::Product, &g).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        // V = 2x is not a forward subaction for the product
        v.values = g.nodes().iter().map(|x| 2.0 * x).collect();
        assert!(matches!(
            rate_prefix(&[10, 0], &v, &Builtin::Product, &g),
            Err(Error::InvalidSubaction { step: 0, .. })
        ));
    }

    #[test]
    fn quadratic_cylinders() {
        let g = Grid::new(201).unwrap();
        let (v, vb) = (zero(201, Direction::Forward), zero(201, Direction::Backward));
        let inf = inf_rate_over_cylinder(&[(0.4, 0.6), (0.4, 0.6)], &v, &vb, &Builtin::Quadratic, &g).unwrap();
        assert_eq!(inf.value, 0.0);
        let inf = inf_rate_over_cylinder(&[(0.0, 0.2), (0.8, 1.0)], &v, &vb, &Builtin::Quadratic, &g).unwrap();
        assert!((inf.value - 0.36).abs() < 1e-9);
        assert_eq!(inf.argmin, vec![40, 160]);
    }

    #[test]
    fn constant_potential_table() {
        let g = Grid::new(41).unwrap();
        let cyl = [(0.0, 0.5), (0.0, 0.5)];
        let rep = ldp_table(&Builtin::Constant { c: 0.0 }, &g, &cyl, &[1.0, 2.0, 4.0], 1e-13).unwrap();
        assert_eq!(rep.f_inf, 0.0);
        for row in &rep.rows {
            assert!((row.log_measure_over_beta - math::ln(0.25) / row.beta).abs() < 1e-10);
        }
    }

    #[test]
    fn table_needs_three_betas() {
        let g = Grid::new(11).unwrap();
        let cyl = [(0.0, 0.5), (0.0, 0.5)];
        assert!(ldp_table(&Builtin::Product, &g, &cyl, &[1.0, 2.0], 1e-12).is_err());
        assert!(ldp_table(&Builtin::Product, &g, &cyl, &[1.0, 3.0, 2.0], 1e-12).is_err());
    }
}
