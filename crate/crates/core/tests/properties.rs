use proptest::prelude::*;
use zerotemp_core::gibbs::{build_chain, entropy_penalized, holonomy_defect, variational_residual};
use zerotemp_core::ldp::{f_k, rate_prefix};
use zerotemp_core::mane::{cost_matrices, max_triangle_violation, CostMatrices};
use zerotemp_core::potentials::{perturb, Perturbed};
use zerotemp_core::transfer::leading_eigenpair;
use zerotemp_core::tropical::{calibrated_subaction, karp_value, subaction_violation, Direction, Subaction};
use zerotemp_core::{Builtin, Grid, Polynomial, Potential};

const N: usize = 31;

fn potential(base: u8, c1: f64, c2: f64) -> Perturbed<Builtin, Polynomial> {
    let base = match base % 3 {
        0 => Builtin::Product,
        1 => Builtin::Quadratic,
        _ => Builtin::XyCosine,
    };
    perturb(base, Polynomial::new(vec![0.0, c1, c2]))
}

struct Solved {
    g: Grid,
    cm: CostMatrices,
    v: Subaction,
    vb: Subaction,
}

fn solve<P: Potential>(a: &P) -> Solved {
    let g = Grid::new(N).unwrap();
    let m = karp_value(a, &g).unwrap().m;
    let cm = cost_matrices(a, &g, m, 4 * N, 1e-12).unwrap();
    let v = calibrated_subaction(a, &g, m, Direction::Forward, 1e-13, 100_000).unwrap();
    let vb = calibrated_subaction(a, &g, m, Direction::Backward, 1e-13, 100_000).unwrap();
    Solved { g, cm, v, vb }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn integration_is_linear(f in prop::collection::vec(-10.0f64..10.0, 17),
                             h in prop::collection::vec(-10.0f64..10.0, 17),
                             s in -3.0f64..3.0) {
        let g = Grid::new(17).unwrap();
        let combo: Vec<f64> = f.iter().zip(&h).map(|(a, b)| s * a + b).collect();
        let lhs = g.integrate(&combo).unwrap();
        let rhs = s * g.integrate(&f).unwrap() + g.integrate(&h).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn chains_are_holonomic(base in 0u8..3, c1 in -0.5f64..0.5, c2 in -0.5f64..0.5,
                            beta in 0.5f64..12.0, f in prop::collection::vec(-1.0f64..1.0, N)) {
        let a = potential(base, c1, c2);
        let g = Grid::new(N).unwrap();
        let ep = leading_eigenpair(beta, &a, &g, 1e-13, 100_000).unwrap();
        let c = build_chain(&ep, &a, &g).unwrap();
        prop_assert!(holonomy_defect(&c, &f).abs() < 1e-10);
        prop_assert!(entropy_penalized(&c).unwrap() <= 1e-12);
        prop_assert!(variational_residual(&c, &ep, &a, &g).unwrap() < 1e-8);
    }

    #[test]
    fn mane_potential_is_a_metric_like_cost(base in 0u8..3, c1 in -0.5f64..0.5, c2 in -0.5f64..0.5, seed in any::<u64>()) {
        let a = potential(base, c1, c2);
        let s = solve(&a);
        prop_assert!(max_triangle_violation(&s.cm.s, 2000, seed) <= 1e-9);
        let x = s.g.nodes();
        for i in 0..N {
            for j in 0..N {
                prop_assert!(s.cm.s.get(i, j) <= s.cm.h.get(i, j) + 1e-9);
                if j + 1 < N {
                    let d = (s.cm.s.get(i, j + 1) - s.cm.s.get(i, j)).abs();
                    prop_assert!(d <= a.lip() * (x[j + 1] - x[j]) + 1e-9);
                }
            }
        }
        // S(., y) is a forward subaction and S(x, .) a backward one
        let m = s.cm.m;
        let col: Vec<f64> = (0..N).map(|i| s.cm.s.get(i, 3)).collect();
        prop_assert!(subaction_violation(&col, Direction::Forward, &a, &s.g, m) <= 1e-9);
        let row: Vec<f64> = (0..N).map(|j| s.cm.s.get(3, j)).collect();
        prop_assert!(subaction_violation(&row, Direction::Backward, &a, &s.g, m) <= 1e-9);
    }

    #[test]
    fn rate_is_nonnegative_and_telescopes(base in 0u8..3, c1 in -0.5f64..0.5,
                                          path in prop::collection::vec(0usize..N, 2..8)) {
        let a = potential(base, c1, 0.0);
        let s = solve(&a);
        prop_assert!(f_k(&path, &s.v, &s.vb, &a, &s.g).unwrap() >= -1e-9);
        prop_assert!(rate_prefix(&path, &s.v, &a, &s.g).unwrap() >= -1e-9);
        // V(x_1) + sum (A - m) + Vbar(x_k) does not grow as the path extends
        let x = s.g.nodes();
        let m = s.v.m;
        let mut sum = 0.0;
        let mut prev = s.v.values[path[0]] + s.vb.values[path[0]];
        for e in path.windows(2) {
            sum += a.eval(x[e[0]], x[e[1]]) - m;
            let cur = s.v.values[path[0]] + sum + s.vb.values[e[1]];
            prop_assert!(cur <= prev + 1e-9);
            prev = cur;
        }
    }
}
