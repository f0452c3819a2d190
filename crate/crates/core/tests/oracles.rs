//! Cross-checks against independent reference computations.

use nalgebra::{DMatrix, SymmetricEigen};
use zerotemp_core::gibbs::{build_chain, cylinder_measure};
use zerotemp_core::ldp::{f_k, inf_rate_over_cylinder};
use zerotemp_core::mane::{cost_matrices, edge_costs};
use zerotemp_core::potentials::perturb;
use zerotemp_core::transfer::{leading_eigenpair, spectral_gap_bound};
use zerotemp_core::tropical::{calibrated_subaction, karp_value, Direction};
use zerotemp_core::{Builtin, Grid, Polynomial, Potential};

/// Potential read off a table indexed by node, for random graphs.
struct Table {
    n: usize,
    a: Vec<f64>,
}

impl Table {
    fn random(n: usize, seed: u64) -> Self {
        // small LCG; the values only need to be generic
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let a = (0..n * n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        Table { n, a }
    }

    fn idx(&self, x: f64) -> usize {
        (x * (self.n - 1) as f64).round() as usize
    }
}

impl Potential for Table {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.a[self.idx(x) * self.n + self.idx(y)]
    }
    fn d_x(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_y(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_xy(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn lip(&self) -> f64 {
        1.0
    }
    fn name(&self) -> &str {
        "table"
    }
}

/// Symmetrized `W^1/2 E W^1/2`, similar to the forward operator when `A` is
/// symmetric.
fn symmetric_operator<P: Potential>(a: &P, g: &Grid, beta: f64) -> DMatrix<f64> {
    let n = g.len();
    let x = g.nodes();
    let w = g.weights();
    DMatrix::from_fn(n, n, |i, j| (w[i] * w[j]).sqrt() * (beta * a.eval(x[i], x[j])).exp())
}

#[test]
fn leading_eigenvalue_matches_dense_solver() {
    let g = Grid::new(201).unwrap();
    for a in [Builtin::Product, Builtin::Quadratic, Builtin::XyCosine] {
        for beta in [4.0, 8.0, 16.0, 32.0] {
            let ep = leading_eigenpair(beta, &a, &g, 1e-13, 100_000).unwrap();
            let eig = SymmetricEigen::new(symmetric_operator(&a, &g, beta));
            let top = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(
                ((ep.lambda - top) / top).abs() < 1e-10,
                "{} beta {beta}: {} vs {top}",
                a.name(),
                ep.lambda
            );
        }
    }
}

#[test]
fn second_eigenvalue_below_gap_bound() {
    let g = Grid::new(101).unwrap();
    for a in [Builtin::Product, Builtin::Quadratic, Builtin::XyCosine] {
        for beta in [1.0, 4.0] {
            let ep = leading_eigenpair(beta, &a, &g, 1e-13, 100_000).unwrap();
            let eig = SymmetricEigen::new(symmetric_operator(&a, &g, beta));
            let mut mags: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
            mags.sort_by(|p, q| q.total_cmp(p));
            let bound = spectral_gap_bound(&ep, &a, &g);
            assert!(mags[1] <= bound * (1.0 + 1e-12), "{}: {} > {bound}", a.name(), mags[1]);
        }
    }
}

#[test]
fn nonsymmetric_eigenvalue_matches_dense_solver() {
    let a = perturb(Builtin::Quadratic, Polynomial::new(vec![0.0, 0.3, -0.2]));
    let g = Grid::new(41).unwrap();
    let n = g.len();
    let x = g.nodes();
    let w = g.weights();
    for beta in [2.0, 8.0] {
        let ep = leading_eigenpair(beta, &a, &g, 1e-13, 100_000).unwrap();
        let m = DMatrix::from_fn(n, n, |y, i| w[i] * (beta * a.eval(x[i], x[y])).exp());
        let top = m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(((ep.lambda - top) / top).abs() < 1e-9);
    }
}

/// Best mean over all simple cycles by enumeration.
fn brute_max_cycle_mean(w: &[f64], n: usize) -> f64 {
    fn extend(w: &[f64], n: usize, path: &mut Vec<usize>, used: &mut [bool], best: &mut f64) {
        let start = path[0];
        let last = path[path.len() - 1];
        let sum: f64 = path.windows(2).map(|e| w[e[0] * n + e[1]]).sum::<f64>() + w[last * n + start];
        *best = best.max(sum / path.len() as f64);
        for next in start + 1..n {
            if !used[next] {
                used[next] = true;
                path.push(next);
                extend(w, n, path, used, best);
                path.pop();
                used[next] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    for s in 0..n {
        let mut used = vec![false; n];
        used[s] = true;
        extend(w, n, &mut vec![s], &mut used, &mut best);
    }
    best
}

#[test]
fn karp_matches_cycle_enumeration() {
    for seed in 0..20 {
        let n = 6;
        let t = Table::random(n, seed);
        let g = Grid::new(n).unwrap();
        let kv = karp_value(&t, &g).unwrap();
        let brute = brute_max_cycle_mean(&t.a, n);
        assert!((kv.m - brute).abs() < 1e-12, "seed {seed}: {} vs {brute}", kv.m);
        assert!((kv.m - kv.karp_formula).abs() < 1e-9);
    }
}

fn min_plus(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                c[i * n + j] = c[i * n + j].min(a[i * n + k] + b[k * n + j]);
            }
        }
    }
    c
}

#[test]
fn path_costs_match_explicit_powers() {
    for seed in 0..10 {
        let n = 7;
        let t = Table::random(n, 100 + seed);
        let g = Grid::new(n).unwrap();
        let m = karp_value(&t, &g).unwrap().m;
        let cm = cost_matrices(&t, &g, m, 64, 1e-12).unwrap();
        let w = edge_costs(&t, &g, m);
        let w = w.as_slice();
        // powers[k] = w^(k+1)
        let mut powers = vec![w.to_vec()];
        for _ in 1..cm.k_used {
            let next = min_plus(powers.last().unwrap(), w, n);
            powers.push(next);
        }
        for i in 0..n {
            for j in 0..n {
                let s = (0..n).map(|k| powers[k][i * n + j]).fold(f64::INFINITY, f64::min);
                assert!((cm.s.get(i, j) - s).abs() < 1e-12);
                let h = (cm.k_used / 2 - 1..cm.k_used)
                    .map(|k| powers[k][i * n + j])
                    .fold(f64::INFINITY, f64::min);
                assert!((cm.h.get(i, j) - h).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn product_shortest_paths_into_one() {
    let g = Grid::new(201).unwrap();
    let cm = cost_matrices(&Builtin::Product, &g, 1.0, 800, 1e-12).unwrap();
    for (i, x) in g.nodes().iter().enumerate() {
        // the single edge x -> 1
        assert!((cm.s.get(i, 200) - (1.0 - x)).abs() < 1e-9);
    }
}

#[test]
fn cylinder_inf_matches_enumeration() {
    let g = Grid::new(21).unwrap();
    let a = perturb(Builtin::Quadratic, Polynomial::new(vec![0.0, 0.1]));
    let m = karp_value(&a, &g).unwrap().m;
    let v = calibrated_subaction(&a, &g, m, Direction::Forward, 1e-13, 100_000).unwrap();
    let vb = calibrated_subaction(&a, &g, m, Direction::Backward, 1e-13, 100_000).unwrap();
    let cyl = [(0.1, 0.4), (0.5, 0.9), (0.0, 0.3)];
    let inf = inf_rate_over_cylinder(&cyl, &v, &vb, &a, &g).unwrap();
    let mut best = f64::INFINITY;
    for i in 2..=8 {
        for j in 10..=18 {
            for k in 0..=6 {
                best = best.min(f_k(&[i, j, k], &v, &vb, &a, &g).unwrap());
            }
        }
    }
    assert!((inf.value - best).abs() < 1e-12, "{} vs {best}", inf.value);
    assert!((f_k(&inf.argmin, &v, &vb, &a, &g).unwrap() - best).abs() < 1e-12);
}

#[test]
fn cylinder_measure_matches_double_sum() {
    let g = Grid::new(41).unwrap();
    let a = Builtin::Product;
    let ep = leading_eigenpair(3.0, &a, &g, 1e-13, 100_000).unwrap();
    let c = build_chain(&ep, &a, &g).unwrap();
    let mu = cylinder_measure(&c, &g, &[(0.25, 0.5), (0.5, 1.0)]).unwrap().value;
    // trapezoid rule on each interval separately
    let h = g.spacing();
    let trap = |lo: usize, hi: usize, i: usize| if i == lo || i == hi { h / 2.0 } else { h };
    let mut sum = 0.0;
    for i in 10..=20 {
        for j in 20..=40 {
            sum += trap(10, 20, i) * trap(20, 40, j) * c.theta[i] * c.k(i, j);
        }
    }
    assert!((mu - sum).abs() < 1e-14);
}
