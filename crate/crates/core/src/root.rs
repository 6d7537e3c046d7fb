//! Safeguarded Newton iteration for monotone scalar equations.
//!
//! Both the load-train equilibrium and the wrinkle-branch return mapping
//! reduce to a single residual that is nonincreasing in the unknown. The
//! solver keeps a sign bracket, takes Newton steps while they stay inside it
//! and keep shrinking the residual, and drops to pure bisection after three
//! non-contracting iterations.

use crate::error::{Error, Result};

/// Iteration cap shared by every equilibrium solve.
pub const MAX_ITERATIONS: usize = 100;

const NON_CONTRACTING_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds `x` in `[lo, hi]` with `|r(x)| <= tol` for a residual that is
/// nonincreasing in `x`, given `r(lo) >= 0 >= r(hi)`.
///
/// `eval` returns `(r(x), dr/dx)`. Newton starts from `x0` (clamped into the
/// bracket).
pub fn solve_nonincreasing<F>(mut eval: F, mut lo: f64, mut hi: f64, x0: f64, tol: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut x = x0.clamp(lo, hi);
    let (mut r, mut dr) = eval(x)?;
    let mut non_contracting = 0;
    let mut bisect_only = false;

    for iteration in 0..=max_iter {
        if !r.is_finite() {
            return Err(Error::Solver {
                iterations: iteration,
                residual: r,
            });
        }
        if r.abs() <= tol {
            return Ok(Root {
                x,
                residual: r,
                iterations: iteration,
            });
        }
        if iteration == max_iter {
            break;
        }
        if r > 0.0 {
            lo = x;
        } else {
            hi = x;
        }

        let newton = if !bisect_only && dr < 0.0 && dr.is_finite() {
            x - r / dr
        } else {
            f64::NAN
        };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };

        let (r_next, dr_next) = eval(next)?;
        if r_next.abs() >= r.abs() {
            non_contracting += 1;
            if non_contracting >= NON_CONTRACTING_LIMIT {
                bisect_only = true;
            }
        }
        x = next;
        r = r_next;
        dr = dr_next;
    }

    Err(Error::Solver {
        iterations: max_iter,
        residual: r,
    })
}
