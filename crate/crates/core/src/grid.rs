//! Uniform nodes on `[0, 1]` with composite trapezoid weights.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Uniform discretization of the unit interval.
///
/// Every integral in the crate is a weighted sum over these nodes, taken in
/// increasing node order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds a grid of `n >= 2` equally spaced nodes `i / (n - 1)`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("grid needs at least two nodes"));
        }
        let last = (n - 1) as f64;
        let nodes = (0..n)
            .map(|i| if i == n - 1 { 1.0 } else { i as f64 / last })
            .collect();
        let h = 1.0 / last;
        let weights = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        Ok(Grid { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Node spacing `1 / (n - 1)`.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    /// Index of the node nearest to `x` (clamped to `[0, 1]`), together with
    /// the snap distance.
    pub fn nearest(&self, x: f64) -> (usize, f64) {
        let x = x.clamp(0.0, 1.0);
        let i = math::round(x * (self.len() - 1) as f64) as usize;
        let i = i.min(self.len() - 1);
        (i, (self.nodes[i] - x).abs())
    }

    /// Quadrature of a grid function.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(Error::InvalidArgument("grid function length differs from grid size"));
        }
        Ok(self.dot(f))
    }

    /// Unchecked weighted sum; callers guarantee matching lengths.
    pub(crate) fn dot(&self, f: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, v) in self.weights.iter().zip(f) {
            acc += w * v;
        }
        acc
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Trapezoid weights of the sub-interval spanned by nodes `lo..=hi`,
    /// returned as a full-length vector that vanishes outside the range.
    pub fn sub_weights(&self, lo: usize, hi: usize) -> Vec<f64> {
        let h = self.spacing();
        let mut w = alloc::vec![0.0; self.len()];
        if lo < hi {
            for (i, wi) in w.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *wi = if i == lo || i == hi { 0.5 * h } else { h };
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_single_node() {
        assert!(Grid::new(1).is_err());
        assert!(Grid::new(0).is_err());
    }

    #[test]
    fn small_grids() {
        let g = Grid::new(2).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0]);
        assert_eq!(g.weights(), &[0.5, 0.5]);
        let g = Grid::new(3).unwrap();
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn weights_sum_to_one() {
        let g = Grid::new(101).unwrap();
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let ones = alloc::vec![1.0; 101];
        assert!((g.integrate(&ones).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nodes_strictly_increasing() {
        let g = Grid::new(401).unwrap();
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(400), 1.0);
    }

    #[test]
    fn exact_on_linear_functions() {
        for n in [2, 3, 17, 201] {
            let g = Grid::new(n).unwrap();
            let f = g.sample(|x| x);
            assert!((g.integrate(&f).unwrap() - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_within_trapezoid_bound() {
        let g = Grid::new(101).unwrap();
        let f = g.sample(|x| x * x);
        // h^2/12 * max|f''| = 1e-4 / 6
        assert!((g.integrate(&f).unwrap() - 1.0 / 3.0).abs() < 2e-5);
    }

    #[test]
    fn length_mismatch() {
        let g = Grid::new(5).unwrap();
        assert_eq!(
            g.integrate(&[1.0; 4]),
            Err(Error::InvalidArgument("grid function length differs from grid size"))
        );
    }

    #[test]
    fn second_order_refinement() {
        let f = |x: f64| math::exp(x) * math::sin(3.0 * x);
        let exact = {
            // antiderivative of e^x sin 3x is e^x (sin 3x - 3 cos 3x) / 10
            let antiderivative = |x: f64| math::exp(x) * (math::sin(3.0 * x) - 3.0 * math::cos(3.0 * x)) / 10.0;
            antiderivative(1.0) - antiderivative(0.0)
        };
        let err = |n: usize| {
            let g = Grid::new(n).unwrap();
            (g.integrate(&g.sample(f)).unwrap() - exact).abs()
        };
        let ratio = err(51) / err(101);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn sub_weights_cover_interval() {
        let g = Grid::new(201).unwrap();
        let w = g.sub_weights(0, 100);
        assert!((w.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        assert!(g.sub_weights(7, 7).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nearest_snaps() {
        let g = Grid::new(11).unwrap();
        let (i, d) = g.nearest(0.33);
        assert_eq!(i, 3);
        assert!((d - 0.03).abs() < 1e-12);
        assert_eq!(g.nearest(1.5).0, 10);
    }
}
