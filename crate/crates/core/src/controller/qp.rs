//! Primal active-set solver for small dense box-constrained convex QPs:
//!
//! ```text
//! minimize 0.5 x' H x + g' x   subject to   lo <= x <= hi
//! ```
//!
//! `H` only needs to be positive semidefinite; a tiny diagonal shift keeps the
//! free-variable subproblems solvable and selects the minimum-norm optimum
//! among ties.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::{clamp, lit, max, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("infeasible bounds on variable {0}")]
    Infeasible(usize),
    #[error("dimension mismatch")]
    Dimension,
    #[error("no convergence after {0} iterations")]
    MaxIterations(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxQpSolution<T: Real> {
    pub x: DVector<T>,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Free,
    Lower,
    Upper,
    Fixed,
}

pub fn solve_box_qp<T: Real>(
    h: &DMatrix<T>,
    g: &DVector<T>,
    lo: &DVector<T>,
    hi: &DVector<T>,
) -> Result<BoxQpSolution<T>, QpError> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n || lo.len() != n || hi.len() != n {
        return Err(QpError::Dimension);
    }
    if let Some(j) = (0..n).find(|&j| !(lo[j] <= hi[j])) {
        return Err(QpError::Infeasible(j));
    }

    let scale = (0..n).fold(T::zero(), |m, i| max(m, h[(i, i)].abs()));
    let shift = max(scale, T::one()) * T::default_epsilon().sqrt() * lit(1e-2);
    let mut hr = h.clone();
    for i in 0..n {
        hr[(i, i)] += shift;
    }

    let mut status: Vec<Status> = (0..n)
        .map(|j| if lo[j] == hi[j] { Status::Fixed } else { Status::Free })
        .collect();
    // Feasible start: zero projected onto the box.
    let mut x = DVector::from_fn(n, |j, _| clamp(T::zero(), lo[j], hi[j]));
    for j in 0..n {
        if status[j] == Status::Free {
            if x[j] == lo[j] {
                status[j] = Status::Lower;
            } else if x[j] == hi[j] {
                status[j] = Status::Upper;
            }
        }
    }

    let max_iter = 50 * (n + 1);
    for iter in 0..max_iter {
        let free: Vec<usize> = (0..n).filter(|&j| status[j] == Status::Free).collect();

        // Minimizer over the free variables with the others held fixed.
        let mut target = x.clone();
        if !free.is_empty() {
            let m = free.len();
            let hff = DMatrix::from_fn(m, m, |a, b| hr[(free[a], free[b])]);
            let hx = &hr * &x;
            let rhs = DVector::from_fn(m, |a, _| {
                let j = free[a];
                let fixed_part = hx[j] - (0..m).fold(T::zero(), |s, b| s + hr[(j, free[b])] * x[free[b]]);
                -(g[j] + fixed_part)
            });
            let sol = hff
                .cholesky()
                .map(|c| c.solve(&rhs))
                .expect("shifted PSD matrix is positive definite");
            for (a, &j) in free.iter().enumerate() {
                target[j] = sol[a];
            }
        }
        let step = &target - &x;

        // Longest feasible fraction of the step.
        let mut alpha = T::one();
        let mut blocking: Option<(usize, Status)> = None;
        for &j in &free {
            if step[j] < T::zero() {
                let a = (lo[j] - x[j]) / step[j];
                if a < alpha {
                    alpha = a;
                    blocking = Some((j, Status::Lower));
                }
            } else if step[j] > T::zero() {
                let a = (hi[j] - x[j]) / step[j];
                if a < alpha {
                    alpha = a;
                    blocking = Some((j, Status::Upper));
                }
            }
        }
        if let Some((j, s)) = blocking {
            x += &step * max(alpha, T::zero());
            x[j] = if s == Status::Lower { lo[j] } else { hi[j] };
            status[j] = s;
            for &k in &free {
                x[k] = clamp(x[k], lo[k], hi[k]);
            }
            continue;
        }

        // At the minimizer of the current face: release the bound whose
        // multiplier has the wrong sign, or stop.
        x = target;
        let grad = &hr * &x + g;
        let tol = lit::<T>(1e-12) * max(grad.amax(), max(scale, T::one()));
        let mut worst: Option<(usize, T)> = None;
        for j in 0..n {
            let violation = match status[j] {
                Status::Lower => -grad[j],
                Status::Upper => grad[j],
                _ => continue,
            };
            if violation > tol && worst.is_none_or(|(_, w)| violation > w) {
                worst = Some((j, violation));
            }
        }
        match worst {
            Some((j, _)) => status[j] = Status::Free,
            None => {
                for j in 0..n {
                    x[j] = clamp(x[j], lo[j], hi[j]);
                }
                return Ok(BoxQpSolution {
                    x,
                    iterations: iter + 1,
                });
            }
        }
    }
    Err(QpError::MaxIterations(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_interior() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let g = DVector::from_vec(vec![-2.0, -4.0]);
        let lo = DVector::from_element(2, -10.0);
        let hi = DVector::from_element(2, 10.0);
        let sol = solve_box_qp(&h, &g, &lo, &hi).unwrap();
        assert_relative_eq!(sol.x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-9);
    }

    #[test]
    fn clipped_diagonal() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 6.0]);
        let g = DVector::from_vec(vec![-2.0, -5.0, -3.0]);
        let lo = DVector::from_vec(vec![0.0, -1.0, 0.0]);
        let hi = DVector::from_vec(vec![0.5, 2.0, 4.0]);
        let sol = solve_box_qp(&h, &g, &lo, &hi).unwrap();
        assert_relative_eq!(sol.x, DVector::from_vec(vec![0.5, 1.25, 0.5]), epsilon = 1e-9);
    }

    #[test]
    fn singular_hessian_picks_small_norm() {
        // 0.5 (x0 + x1 - 1)^2: any point on the line is optimal.
        let h = DMatrix::from_element(2, 2, 1.0);
        let g = DVector::from_vec(vec![-1.0, -1.0]);
        let lo = DVector::from_element(2, -5.0);
        let hi = DVector::from_element(2, 5.0);
        let sol = solve_box_qp(&h, &g, &lo, &hi).unwrap();
        assert_relative_eq!(sol.x, DVector::from_vec(vec![0.5, 0.5]), epsilon = 1e-6);
    }

    #[test]
    fn fixed_and_infeasible() {
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-3.0, 1.0]);
        let lo = DVector::from_vec(vec![0.2, -1.0]);
        let hi = DVector::from_vec(vec![0.2, 1.0]);
        let sol = solve_box_qp(&h, &g, &lo, &hi).unwrap();
        assert_eq!(sol.x[0], 0.2);
        assert_relative_eq!(sol.x[1], -1.0, epsilon = 1e-9);

        let hi = DVector::from_vec(vec![0.1, 1.0]);
        assert_eq!(solve_box_qp(&h, &g, &lo, &hi), Err(QpError::Infeasible(0)));
    }
}
