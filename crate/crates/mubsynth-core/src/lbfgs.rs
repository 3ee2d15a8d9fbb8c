//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Tailored to the phase-search problem: the objective is smooth, bounded
//! below by zero, and 2π-periodic in every coordinate. The search value being
//! descended may differ from the value reported to the caller's stopping
//! tolerance.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
// f64 math through libm when built without std; in graphs where std is
// present the inherent methods shadow the trait and this import goes unused.
#[allow(unused_imports)]
use num_traits::Float;

/// One objective evaluation: the value descended on and the value reported
/// to the caller's tolerance check.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Eval {
    pub search: f64,
    pub report: f64,
}

pub(crate) trait SearchProblem {
    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Eval;
}

pub(crate) struct MinimizeOptions {
    pub max_iterations: u64,
    /// Stop as soon as the report value is at or below this.
    pub report_tolerance: f64,
    /// Stop when the infinity norm of the gradient falls below this.
    pub grad_tolerance: f64,
}

pub(crate) struct MinimizeResult {
    pub x: Vec<f64>,
    pub iterations: u64,
    /// True when a stopping criterion fired (tolerance or flat gradient),
    /// false when the iteration budget ran out or the line search stalled
    /// at numerical precision.
    pub converged: bool,
}

const HISTORY: usize = 30;
const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_EXPANSIONS: u32 = 12;
const MAX_ZOOM: u32 = 24;
/// Iterations allowed without a meaningful decrease before declaring the
/// point a (local) minimum.
const STALL_LIMIT: u32 = 300;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Two-loop recursion producing `-H g` with an initial scaling of
/// `s.y / y.y` from the most recent pair.
fn descent_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alpha - beta) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

struct Probe {
    alpha: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
    eval: Eval,
    /// Directional derivative along the search direction.
    slope: f64,
}

struct LineSearch<'a, P: SearchProblem> {
    problem: &'a mut P,
    x0: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
}

impl<P: SearchProblem> LineSearch<'_, P> {
    fn probe(&mut self, alpha: f64) -> Probe {
        let x: Vec<f64> = self
            .x0
            .iter()
            .zip(self.dir)
            .map(|(xi, di)| xi + alpha * di)
            .collect();
        let mut grad = vec![0.0; x.len()];
        let eval = self.problem.value_grad(&x, &mut grad);
        let slope = dot(&grad, self.dir);
        Probe {
            alpha,
            x,
            grad,
            eval,
            slope,
        }
    }

    fn sufficient_decrease(&self, probe: &Probe) -> bool {
        probe.eval.search <= self.f0 + WOLFE_C1 * probe.alpha * self.slope0
    }

    fn curvature_ok(&self, probe: &Probe) -> bool {
        probe.slope.abs() <= -WOLFE_C2 * self.slope0
    }

    /// Strong-Wolfe search (bracket and zoom). Returns a point satisfying
    /// both conditions, or the best decreasing point found, or None when no
    /// decrease is achievable at any scale.
    fn run(&mut self, first_alpha: f64) -> Option<Probe> {
        let mut prev: Option<Probe> = None;
        let mut alpha = first_alpha;
        for round in 0..MAX_EXPANSIONS {
            let probe = self.probe(alpha);
            let prev_f = prev.as_ref().map_or(self.f0, |p| p.eval.search);
            if !self.sufficient_decrease(&probe) || (round > 0 && probe.eval.search >= prev_f) {
                let lo = prev.unwrap_or_else(|| Probe {
                    alpha: 0.0,
                    x: self.x0.to_vec(),
                    grad: Vec::new(),
                    eval: Eval {
                        search: self.f0,
                        report: f64::NAN,
                    },
                    slope: self.slope0,
                });
                return self.zoom(lo, probe);
            }
            if self.curvature_ok(&probe) {
                return Some(probe);
            }
            if probe.slope >= 0.0 {
                let lo = prev.unwrap_or_else(|| Probe {
                    alpha: 0.0,
                    x: self.x0.to_vec(),
                    grad: Vec::new(),
                    eval: Eval {
                        search: self.f0,
                        report: f64::NAN,
                    },
                    slope: self.slope0,
                });
                return self.zoom(probe, lo);
            }
            alpha *= 2.0;
            prev = Some(probe);
        }
        // Ran out of expansions while the slope stayed negative: take the
        // last (largest, decreasing) point.
        prev.filter(|p| p.eval.search < self.f0)
    }

    /// `lo` satisfies sufficient decrease (or is the origin); `hi` brackets a
    /// Wolfe point from the other side.
    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        for _ in 0..MAX_ZOOM {
            let width = (hi.alpha - lo.alpha).abs();
            if width < 1e-16 * (1.0 + lo.alpha.abs()) {
                break;
            }
            // Quadratic interpolation from (lo.f, lo.slope, hi.f), guarded
            // into the middle 80% of the bracket; bisect when degenerate.
            let delta = hi.alpha - lo.alpha;
            let denom = 2.0 * (hi.eval.search - lo.eval.search - lo.slope * delta);
            let mut alpha = if denom.abs() > 1e-300 {
                lo.alpha - lo.slope * delta * delta / denom
            } else {
                lo.alpha + 0.5 * delta
            };
            let lower = lo.alpha.min(hi.alpha) + 0.1 * width;
            let upper = lo.alpha.max(hi.alpha) - 0.1 * width;
            if !(alpha >= lower && alpha <= upper) {
                alpha = lo.alpha + 0.5 * delta;
            }
            let probe = self.probe(alpha);
            if !self.sufficient_decrease(&probe) || probe.eval.search >= lo.eval.search {
                hi = probe;
            } else {
                if self.curvature_ok(&probe) {
                    return Some(probe);
                }
                if probe.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = Probe {
                        alpha: lo.alpha,
                        x: core::mem::take(&mut lo.x),
                        grad: core::mem::take(&mut lo.grad),
                        eval: lo.eval,
                        slope: lo.slope,
                    };
                }
                lo = probe;
            }
        }
        // Settle for the best decreasing point seen.
        if !lo.x.is_empty() && lo.alpha > 0.0 && lo.eval.search < self.f0 {
            Some(lo)
        } else {
            None
        }
    }
}

pub(crate) fn minimize(
    problem: &mut impl SearchProblem,
    x0: Vec<f64>,
    options: &MinimizeOptions,
) -> MinimizeResult {
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut eval = problem.value_grad(&x, &mut grad);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0u64;
    let mut converged = false;
    let mut stall_count = 0u32;

    while iterations < options.max_iterations {
        if eval.report <= options.report_tolerance || inf_norm(&grad) <= options.grad_tolerance {
            converged = true;
            break;
        }

        let mut dir = descent_direction(&grad, &history);
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            // Rounding spoiled the curvature pairs; fall back to steepest descent.
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&dir, &grad);
            if !(slope < 0.0) {
                converged = true;
                break;
            }
        }

        // Unit step is the right first guess once curvature information
        // exists; keep the very first move conservative.
        let first_alpha = if history.is_empty() {
            (1.0 / inf_norm(&dir).max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let mut search = LineSearch {
            problem,
            x0: &x,
            dir: &dir,
            f0: eval.search,
            slope0: slope,
        };
        let Some(accepted) = search.run(first_alpha) else {
            // No decrease at any scale: numerical precision reached.
            break;
        };

        let decrease = eval.search - accepted.eval.search;
        if decrease <= 1e-15 * (1.0 + eval.search.abs()) {
            stall_count += 1;
            if stall_count >= STALL_LIMIT {
                iterations += 1;
                break;
            }
        } else {
            stall_count = 0;
        }

        let s: Vec<f64> = accepted.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = accepted
            .grad
            .iter()
            .zip(&grad)
            .map(|(a, b)| a - b)
            .collect();
        let sy = dot(&s, &y);
        let guard = 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if sy > guard {
            if history.len() == HISTORY {
                history.pop_front();
            }
            let rho = 1.0 / sy;
            history.push_back((s, y, rho));
        }

        x = accepted.x;
        grad = accepted.grad;
        eval = accepted.eval;
        iterations += 1;
    }

    if !converged
        && (eval.report <= options.report_tolerance || inf_norm(&grad) <= options.grad_tolerance)
    {
        converged = true;
    }

    MinimizeResult {
        x,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter()
                .enumerate()
                .map(|(i, v)| (i + 1) as f64 * v * v)
                .sum()
        }
    }

    impl SearchProblem for Quadratic {
        fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Eval {
            for (i, (g, v)) in grad.iter_mut().zip(x).enumerate() {
                *g = 2.0 * (i + 1) as f64 * v;
            }
            let f = self.value(x);
            Eval {
                search: f,
                report: f,
            }
        }
    }

    /// Rosenbrock in two dimensions: curved valley, classic line-search test.
    struct Rosenbrock;

    impl Rosenbrock {
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]) * (1.0 - x[0]) + 100.0 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0])
        }
    }

    impl SearchProblem for Rosenbrock {
        fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Eval {
            grad[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            grad[1] = 200.0 * (x[1] - x[0] * x[0]);
            let f = self.value(x);
            Eval {
                search: f,
                report: f,
            }
        }
    }

    #[test]
    fn minimizes_convex_quadratic() {
        let result = minimize(
            &mut Quadratic,
            vec![3.0, -2.0, 1.5, 0.7],
            &MinimizeOptions {
                max_iterations: 200,
                report_tolerance: 0.0,
                grad_tolerance: 1e-10,
            },
        );
        assert!(result.converged);
        let f = Quadratic.value(&result.x);
        assert!(f < 1e-18, "f = {f}");
    }

    #[test]
    fn minimizes_rosenbrock() {
        let result = minimize(
            &mut Rosenbrock,
            vec![-1.2, 1.0],
            &MinimizeOptions {
                max_iterations: 400,
                report_tolerance: 0.0,
                grad_tolerance: 1e-10,
            },
        );
        let f = Rosenbrock.value(&result.x);
        assert!(f < 1e-15, "f = {f} at {:?}", result.x);
        assert!((result.x[0] - 1.0).abs() < 1e-6);
        assert!((result.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tolerance_stops_before_first_step() {
        let result = minimize(
            &mut Quadratic,
            vec![3.0, -2.0],
            &MinimizeOptions {
                max_iterations: 200,
                report_tolerance: 1e9,
                grad_tolerance: 0.0,
            },
        );
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
        assert_eq!(result.x, vec![3.0, -2.0]);
    }
}
