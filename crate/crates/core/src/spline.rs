//! Uniform-knot B-spline bases evaluated with the Cox-de Boor recursion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::Scalar;

/// Uniform grid on `[lo, hi]` with `grid_size` intervals, extended by
/// `order` knots on each side. `order` is the polynomial degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplineGrid<T> {
    lo: T,
    hi: T,
    grid_size: usize,
    order: usize,
}

impl<T: Scalar> SplineGrid<T> {
    pub fn new(lo: T, hi: T, grid_size: usize, order: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Config("spline grid needs finite lo < hi".into()));
        }
        if grid_size == 0 || order == 0 {
            return Err(Error::Config("spline grid_size and order must be positive".into()));
        }
        Ok(Self { lo, hi, grid_size, order })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn step(&self) -> T {
        (self.hi - self.lo) / T::from_count(self.grid_size)
    }

    /// Number of basis functions, `grid_size + order`.
    pub fn n_basis(&self) -> usize {
        self.grid_size + self.order
    }

    /// Extended knot vector of length `grid_size + 2 * order + 1`.
    pub fn knots(&self) -> Vec<T> {
        let g = T::from_count(self.grid_size);
        (0..=self.grid_size + 2 * self.order)
            .map(|j| {
                let offset = T::from_count(j) - T::from_count(self.order);
                self.lo + (self.hi - self.lo) * offset / g
            })
            .collect()
    }

    pub fn clamp(&self, x: T) -> T {
        x.max(self.lo).min(self.hi)
    }

    /// True when `x` lies strictly inside the grid, where the clamp is inactive.
    pub fn is_interior(&self, x: T) -> bool {
        x > self.lo && x < self.hi
    }
}

/// All `knots.len() - 1 - degree` B-splines of the given degree at `x`,
/// using half-open knot intervals `[t_j, t_{j+1})`.
pub fn cox_de_boor<T: Scalar>(x: T, knots: &[T], degree: usize) -> Vec<T> {
    assert!(knots.len() >= degree + 2, "need at least degree + 2 knots");
    let mut b: Vec<T> = knots
        .windows(2)
        .map(|w| if w[0] <= x && x < w[1] { T::one() } else { T::zero() })
        .collect();
    for p in 1..=degree {
        raise_degree(x, knots, &mut b, p);
    }
    b.truncate(knots.len() - 1 - degree);
    b
}

/// Raises degree-(p-1) values in `b` to degree p in place; the last
/// `p` entries become stale.
fn raise_degree<T: Scalar>(x: T, knots: &[T], b: &mut [T], p: usize) {
    let count = knots.len() - 1 - p;
    for j in 0..count {
        let left_den = knots[j + p] - knots[j];
        let right_den = knots[j + p + 1] - knots[j + 1];
        let left = if left_den > T::zero() { (x - knots[j]) / left_den * b[j] } else { T::zero() };
        let right = if right_den > T::zero() {
            (knots[j + p + 1] - x) / right_den * b[j + 1]
        } else {
            T::zero()
        };
        b[j] = left + right;
    }
}

/// Basis vector of length `grid_size + order` at `x`, clamped to `[lo, hi]`.
pub fn bspline_basis<T: Scalar>(x: T, grid: &SplineGrid<T>) -> Vec<T> {
    cox_de_boor(grid.clamp(x), &grid.knots(), grid.order)
}

/// Reusable evaluator holding the knot vector and scratch space.
#[derive(Debug, Clone)]
pub struct BasisEvaluator<T> {
    grid: SplineGrid<T>,
    knots: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Scalar> BasisEvaluator<T> {
    pub fn new(grid: SplineGrid<T>) -> Self {
        let knots = grid.knots();
        let scratch = vec![T::zero(); knots.len() - 1];
        Self { grid, knots, scratch }
    }

    pub fn grid(&self) -> &SplineGrid<T> {
        &self.grid
    }

    fn fill_indicators(&mut self, x: T) {
        for (j, s) in self.scratch.iter_mut().enumerate() {
            *s = if self.knots[j] <= x && x < self.knots[j + 1] { T::one() } else { T::zero() };
        }
    }

    /// Writes basis values at `clamp(x)` into `out`.
    pub fn eval(&mut self, x: T, out: &mut [T]) {
        let x = self.grid.clamp(x);
        self.fill_indicators(x);
        for p in 1..=self.grid.order {
            raise_degree(x, &self.knots, &mut self.scratch, p);
        }
        out.copy_from_slice(&self.scratch[..self.grid.n_basis()]);
    }

    /// Basis values and their derivatives with respect to the unclamped
    /// input. Derivatives are zero where the clamp is active.
    pub fn eval_with_derivative(&mut self, x: T, out: &mut [T], deriv: &mut [T]) {
        let interior = self.grid.is_interior(x);
        let x = self.grid.clamp(x);
        let k = self.grid.order;
        let nb = self.grid.n_basis();
        self.fill_indicators(x);
        for p in 1..k {
            raise_degree(x, &self.knots, &mut self.scratch, p);
        }
        // scratch now holds degree k-1 values (nb + 1 of them)
        if interior {
            let kk = T::from_count(k);
            for i in 0..nb {
                let d_left = self.knots[i + k] - self.knots[i];
                let d_right = self.knots[i + k + 1] - self.knots[i + 1];
                deriv[i] = kk * (self.scratch[i] / d_left - self.scratch[i + 1] / d_right);
            }
        } else {
            deriv[..nb].iter_mut().for_each(|d| *d = T::zero());
        }
        raise_degree(x, &self.knots, &mut self.scratch, k);
        out.copy_from_slice(&self.scratch[..nb]);
    }
}
