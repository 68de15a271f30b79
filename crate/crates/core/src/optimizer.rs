//! Analytic L2-loss models of the estimators and the privacy-budget optimizer
//! for the double-source estimator.
//!
//! The double-source loss is
//!
//! ```text
//! F(e1, a) = a^2 A(e1) + (1 - a)^2 B(e1)
//! ```
//!
//! where `A` and `B` are the single-source losses of the `u`-side and `w`-side
//! estimators at randomized-response budget `e1` and Laplace budget
//! `e2 = eps - eps0 - e1`. For fixed `e1` the best weight is `a* = B/(A+B)`
//! and the reduced objective is `g(e1) = AB/(A+B)`, which is minimized over
//! `e1` by a coarse grid followed by finite-difference Newton steps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::flip_probability_of;

/// Number of coarse grid points scanned before Newton refinement.
pub const GRID_POINTS: usize = 256;
/// The search box for `eps1`, as fractions of `eps - eps0`.
pub const BOX: (f64, f64) = (0.01, 0.99);
const FD_STEP: f64 = 1e-5;
const MAX_NEWTON_ITERS: usize = 20;
const NEWTON_TOL: f64 = 1e-8;

/// Budget split of the double-source algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetPlan {
    pub eps0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub alpha: f64,
}

impl BudgetPlan {
    pub fn total(&self) -> f64 {
        self.eps0 + self.eps1 + self.eps2
    }

    /// Checks the plan against a configured total budget.
    pub fn validate(&self, eps: f64) -> Result<()> {
        let ok = self.eps0 >= 0.0
            && self.eps1 > 0.0
            && self.eps2 > 0.0
            && (0.0..=1.0).contains(&self.alpha)
            && (self.total() - eps).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "budget plan {self:?} is inconsistent with eps = {eps}"
            )))
        }
    }
}

fn flip(e1: f64) -> f64 {
    let e = (-e1).exp();
    e / (1.0 + e)
}

fn ss_loss_raw(d: f64, eps1: f64, eps2: f64) -> f64 {
    let p = flip(eps1);
    let c2 = (1.0 - 2.0 * p).powi(2);
    p * (1.0 - p) * d / c2 + 2.0 * (1.0 - p).powi(2) / (c2 * eps2 * eps2)
}

/// Expected L2 loss (variance) of the single-source estimator built from the
/// neighbors of a degree-`d` vertex.
pub fn ss_loss(d: f64, eps1: f64, eps2: f64) -> Result<f64> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::validation(format!(
            "degree must be finite and >= 0, got {d}"
        )));
    }
    flip_probability_of(eps1)?;
    flip_probability_of(eps2)?;
    Ok(ss_loss_raw(d, eps1, eps2))
}

/// Minimizer of `a^2 A + (1-a)^2 B` over `a`.
pub fn optimal_alpha(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::validation(format!(
            "branch losses must be finite and > 0, got {a}, {b}"
        )));
    }
    Ok(b / (a + b))
}

/// The double-source loss surface for one query pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    d_u: f64,
    d_w: f64,
    eps: f64,
    eps0: f64,
}

impl LossModel {
    pub fn new(d_u: f64, d_w: f64, eps: f64, eps0: f64) -> Result<Self> {
        if !(d_u >= 1.0 && d_w >= 1.0 && d_u.is_finite() && d_w.is_finite()) {
            return Err(Error::validation(format!(
                "working degrees must be finite and >= 1, got {d_u}, {d_w}"
            )));
        }
        if !(eps.is_finite() && eps0 >= 0.0 && eps0 < eps) {
            return Err(Error::validation(format!(
                "need 0 <= eps0 < eps, got eps0 = {eps0}, eps = {eps}"
            )));
        }
        Ok(Self {
            d_u,
            d_w,
            eps,
            eps0,
        })
    }

    /// Budget left for randomized response plus Laplace noise.
    pub fn split_budget(&self) -> f64 {
        self.eps - self.eps0
    }

    fn check_eps1(&self, eps1: f64) -> Result<()> {
        if eps1 > 0.0 && eps1 < self.split_budget() {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "eps1 = {eps1} outside (0, {})",
                self.split_budget()
            )))
        }
    }

    /// `(A, B)`: single-source losses of the `u` and `w` sides.
    pub fn branch_losses(&self, eps1: f64) -> Result<(f64, f64)> {
        self.check_eps1(eps1)?;
        Ok(self.branches_raw(eps1))
    }

    fn branches_raw(&self, eps1: f64) -> (f64, f64) {
        let eps2 = self.split_budget() - eps1;
        (
            ss_loss_raw(self.d_u, eps1, eps2),
            ss_loss_raw(self.d_w, eps1, eps2),
        )
    }

    /// `F(eps1, alpha)`.
    pub fn ds_loss(&self, eps1: f64, alpha: f64) -> Result<f64> {
        self.check_eps1(eps1)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::validation(format!("alpha = {alpha} outside [0, 1]")));
        }
        let (a, b) = self.branches_raw(eps1);
        Ok(alpha * alpha * a + (1.0 - alpha) * (1.0 - alpha) * b)
    }

    /// `min_alpha F(eps1, alpha) = AB/(A+B)`.
    pub fn reduced_loss(&self, eps1: f64) -> Result<f64> {
        self.check_eps1(eps1)?;
        Ok(self.reduced_raw(eps1))
    }

    fn reduced_raw(&self, eps1: f64) -> f64 {
        let (a, b) = self.branches_raw(eps1);
        a * b / (a + b)
    }

    fn plan_at(&self, eps1: f64) -> BudgetPlan {
        let (a, b) = self.branches_raw(eps1);
        BudgetPlan {
            eps0: self.eps0,
            eps1,
            eps2: self.split_budget() - eps1,
            alpha: b / (a + b),
        }
    }
}

/// Outcome of [`optimize_plan_detailed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanSearch {
    pub plan: BudgetPlan,
    pub loss: f64,
    /// Whether Newton refinement converged inside the box and improved on the grid.
    pub refined: bool,
}

/// Finds `(eps1, alpha)` minimizing the double-source loss for working degrees
/// `d_u`, `d_w` with `eps0` already spent.
pub fn optimize_plan(d_u: f64, d_w: f64, eps: f64, eps0: f64) -> Result<BudgetPlan> {
    optimize_plan_detailed(d_u, d_w, eps, eps0).map(|s| s.plan)
}

pub fn optimize_plan_detailed(d_u: f64, d_w: f64, eps: f64, eps0: f64) -> Result<PlanSearch> {
    let model = LossModel::new(d_u, d_w, eps, eps0)?;
    let budget = model.split_budget();
    let (lo, hi) = (BOX.0 * budget, BOX.1 * budget);
    let g = |x: f64| model.reduced_raw(x);

    let (mut best_x, mut best_g) = (lo, f64::INFINITY);
    for i in 0..GRID_POINTS {
        let x = lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
        let v = g(x);
        if v < best_g {
            best_x = x;
            best_g = v;
        }
    }
    if !best_g.is_finite() {
        return Err(Error::validation(
            "loss is not finite anywhere on the search grid",
        ));
    }

    let refined = newton_refine(&g, best_x, lo, hi).filter(|&x| g(x) <= best_g);
    let x = refined.unwrap_or(best_x);
    let plan = model.plan_at(x);
    plan.validate(eps)?;
    Ok(PlanSearch {
        plan,
        loss: g(x),
        refined: refined.is_some(),
    })
}

fn newton_refine(g: &impl Fn(f64) -> f64, start: f64, lo: f64, hi: f64) -> Option<f64> {
    let h = FD_STEP;
    let mut x = start;
    for _ in 0..MAX_NEWTON_ITERS {
        let (gm, g0, gp) = (g(x - h), g(x), g(x + h));
        let d1 = (gp - gm) / (2.0 * h);
        let d2 = (gp - 2.0 * g0 + gm) / (h * h);
        if d2.is_nan() || d2 <= 0.0 {
            return None;
        }
        let step = d1 / d2;
        let next = x - step;
        if !(next - h >= lo && next + h <= hi) {
            return None;
        }
        x = next;
        if step.abs() < NEWTON_TOL {
            return Some(x);
        }
    }
    None
}

/// Loss of a realized plan at true (possibly zero) degrees:
/// `alpha^2 A + (1 - alpha)^2 B` with the plan's `eps1`, `eps2`.
pub fn plan_loss(d_u: f64, d_w: f64, plan: &BudgetPlan) -> Result<f64> {
    let a = ss_loss(d_u, plan.eps1, plan.eps2)?;
    let b = ss_loss(d_w, plan.eps1, plan.eps2)?;
    let al = plan.alpha;
    Ok(al * al * a + (1.0 - al) * (1.0 - al) * b)
}

/// Variance of the OneR estimator.
pub fn oner_loss(d_u: f64, d_w: f64, n1: f64, eps: f64) -> Result<f64> {
    let p = flip_probability_of(eps)?.p();
    let c2 = (1.0 - 2.0 * p).powi(2);
    Ok(p * p * (1.0 - p) * (1.0 - p) * n1 / (c2 * c2) + p * (1.0 - p) * (d_u + d_w) / c2)
}

/// Per-candidate success probabilities of the Naive count, grouped as
/// (probability, multiplicity).
fn naive_terms(c: f64, d_u: f64, d_w: f64, n1: f64, p: f64) -> [(f64, f64); 3] {
    let q = 1.0 - p;
    [
        (q * q, c),
        (p * q, d_u + d_w - 2.0 * c),
        (p * p, n1 - d_u - d_w + c),
    ]
}

/// `E[f1]` of the Naive noisy-graph count, where `c` is the true count.
pub fn naive_mean(c: f64, d_u: f64, d_w: f64, n1: f64, eps: f64) -> Result<f64> {
    let p = flip_probability_of(eps)?.p();
    Ok(naive_terms(c, d_u, d_w, n1, p)
        .iter()
        .map(|(pr, k)| pr * k)
        .sum())
}

/// Variance of the Naive count (a sum of independent Bernoulli products).
pub fn naive_variance(c: f64, d_u: f64, d_w: f64, n1: f64, eps: f64) -> Result<f64> {
    let p = flip_probability_of(eps)?.p();
    Ok(naive_terms(c, d_u, d_w, n1, p)
        .iter()
        .map(|(pr, k)| pr * (1.0 - pr) * k)
        .sum())
}

/// Mean squared error of the Naive count: variance plus squared bias.
pub fn naive_loss(c: f64, d_u: f64, d_w: f64, n1: f64, eps: f64) -> Result<f64> {
    let bias = naive_mean(c, d_u, d_w, n1, eps)? - c;
    Ok(naive_variance(c, d_u, d_w, n1, eps)? + bias * bias)
}

/// Variance of the central-model baseline, `Lap(1/eps)`.
pub fn central_loss(eps: f64) -> Result<f64> {
    flip_probability_of(eps)?;
    Ok(2.0 / (eps * eps))
}
