//! Dense box-constrained convex QP:
//!
//! ```text
//! minimize ½ xᵀHx + gᵀx   subject to  lb ≤ x ≤ ub
//! ```
//!
//! Primal active-set method over the bound constraints. Each iteration
//! solves the equality-constrained subproblem on the free coordinates,
//! steps to the first blocking bound if the Newton point is infeasible,
//! and otherwise releases the bound with the most negative multiplier.
//! Sized for the IK problems in this crate (n ≲ 20).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Diagonal shift applied when the free block of H is not positive definite.
pub const REGULARIZATION: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("infeasible bounds at coordinate {index}: lb {lb} > ub {ub}")]
    InfeasibleBounds { index: usize, lb: f64, ub: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite problem data")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// False only if the iteration cap was hit (degenerate cycling).
    pub optimal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
    Fixed,
}

pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> Result<BoxQpSolution, QpError> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n || lb.len() != n || ub.len() != n {
        return Err(QpError::Dimension(format!(
            "H {}x{}, g {}, lb {}, ub {}",
            h.nrows(),
            h.ncols(),
            n,
            lb.len(),
            ub.len()
        )));
    }
    for i in 0..n {
        if lb[i] > ub[i] {
            return Err(QpError::InfeasibleBounds {
                index: i,
                lb: lb[i],
                ub: ub[i],
            });
        }
    }
    if h.iter().chain(g.iter()).any(|v| !v.is_finite()) || lb.iter().chain(ub.iter()).any(|v| v.is_nan()) {
        return Err(QpError::NonFinite);
    }

    let mut state: Vec<Bound> = Vec::with_capacity(n);
    let mut x = DVector::zeros(n);
    for i in 0..n {
        let (s, v) = if lb[i] == ub[i] {
            (Bound::Fixed, lb[i])
        } else if 0.0 <= lb[i] {
            (Bound::Lower, lb[i])
        } else if 0.0 >= ub[i] {
            (Bound::Upper, ub[i])
        } else {
            (Bound::Free, 0.0)
        };
        state.push(s);
        x[i] = v;
    }

    let scale = 1.0 + g.amax() + h.amax();
    let release_tol = 1e-14 * scale;
    let max_iters = 50 + 10 * n * n;

    for iter in 0..max_iters {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        let target = if free.is_empty() {
            None
        } else {
            Some(solve_free(h, g, &x, &free))
        };

        let mut feasible = true;
        if let Some(xf) = &target {
            // Longest step along (xf - x_F) that keeps every free coordinate
            // in its box; remember which bound blocks first.
            let mut alpha = 1.0;
            let mut blocking = None;
            for (k, &i) in free.iter().enumerate() {
                let p = xf[k] - x[i];
                if xf[k] < lb[i] && p < 0.0 {
                    let a = (lb[i] - x[i]) / p;
                    if a < alpha {
                        alpha = a;
                        blocking = Some((i, Bound::Lower));
                    }
                } else if xf[k] > ub[i] && p > 0.0 {
                    let a = (ub[i] - x[i]) / p;
                    if a < alpha {
                        alpha = a;
                        blocking = Some((i, Bound::Upper));
                    }
                }
            }
            match blocking {
                Some((bi, side)) => {
                    feasible = false;
                    let alpha = alpha.max(0.0);
                    for (k, &i) in free.iter().enumerate() {
                        x[i] = (x[i] + alpha * (xf[k] - x[i])).clamp(lb[i], ub[i]);
                    }
                    state[bi] = side;
                    x[bi] = if side == Bound::Lower { lb[bi] } else { ub[bi] };
                }
                None => {
                    for (k, &i) in free.iter().enumerate() {
                        x[i] = xf[k].clamp(lb[i], ub[i]);
                    }
                }
            }
        }
        if !feasible {
            continue;
        }

        // Optimal on the current working set; check bound multipliers.
        let grad = h * &x + g;
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let mult = match state[i] {
                Bound::Lower => grad[i],
                Bound::Upper => -grad[i],
                _ => continue,
            };
            if mult < -release_tol && worst.map_or(true, |(_, m)| mult < m) {
                worst = Some((i, mult));
            }
        }
        match worst {
            Some((i, _)) => state[i] = Bound::Free,
            None => {
                return Ok(BoxQpSolution {
                    x,
                    iterations: iter + 1,
                    optimal: true,
                })
            }
        }
    }
    log::warn!("box QP hit the iteration cap ({max_iters}) with n = {n}");
    Ok(BoxQpSolution {
        x,
        iterations: max_iters,
        optimal: false,
    })
}

/// Minimizer of the QP over the free coordinates with the rest held at `x`.
fn solve_free(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>, free: &[usize]) -> DVector<f64> {
    let m = free.len();
    let n = g.len();
    let hff = DMatrix::from_fn(m, m, |r, c| h[(free[r], free[c])]);
    let mut rhs = DVector::from_fn(m, |r, _| -g[free[r]]);
    for j in 0..n {
        if free.contains(&j) || x[j] == 0.0 {
            continue;
        }
        for (r, &i) in free.iter().enumerate() {
            rhs[r] -= h[(i, j)] * x[j];
        }
    }
    if let Some(ch) = hff.clone().cholesky() {
        return refine(&hff, ch.solve(&rhs), &rhs, |r| ch.solve(r));
    }
    let mut shift = REGULARIZATION;
    loop {
        let reg = &hff + DMatrix::identity(m, m) * shift;
        if let Some(ch) = reg.clone().cholesky() {
            return ch.solve(&rhs);
        }
        shift *= 10.0;
    }
}

// One step of iterative refinement against the unshifted matrix.
fn refine(
    a: &DMatrix<f64>,
    x: DVector<f64>,
    b: &DVector<f64>,
    solve: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> DVector<f64> {
    let r = b - a * &x;
    x + solve(&r)
}

/// Largest violation of the box-QP optimality conditions at `x`:
/// gradient on free coordinates, wrong-signed gradient at active bounds,
/// and bound infeasibility.
pub fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    x: &DVector<f64>,
) -> f64 {
    let grad = h * x + g;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let infeas = (lb[i] - x[i]).max(x[i] - ub[i]).max(0.0);
        worst = worst.max(infeas);
        let at_lb = (x[i] - lb[i]).abs() <= 1e-12 * (1.0 + lb[i].abs());
        let at_ub = (x[i] - ub[i]).abs() <= 1e-12 * (1.0 + ub[i].abs());
        let r = match (at_lb, at_ub) {
            (true, true) => 0.0,
            (true, false) => (-grad[i]).max(0.0),
            (false, true) => grad[i].max(0.0),
            (false, false) => grad[i].abs(),
        };
        worst = worst.max(r);
    }
    worst
}
