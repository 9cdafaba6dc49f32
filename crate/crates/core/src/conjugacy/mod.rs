//! Pointwise evaluation of the conjugacy `h` with `h ∘ Tᵖ = (S_{p−1} ∘ ⋯ ∘ S₀) ∘ h`
//! and of its inverse, with certified error budgets.
//!
//! `h(x) = x + u₀(x)` where `U = (u_j)` solves
//! `u_{j+1}(Tx) = T u_j(x) + L_j(x + u_j(x))`, and `h⁻¹(x) = x + v₀(x)` where
//! `V = (v_j)` solves `v_{j+1}(S_j x) = T v_j(x) − L_j(x)`.

pub mod budget;
pub mod forward;
pub mod inverse;
pub mod series;

pub use budget::{BudgetLimits, ErrorBudget};
pub use forward::ForwardSolution;
pub use inverse::InverseSolution;

use crate::error::{Error, Result};
use crate::operators::{epsilon_threshold, franks_constant, HyperbolicityCertificate, SplitOperator};
use crate::perturbations::{Mode, PerturbationTuple};
use crate::scalar::Scalar;
use crate::vectorspace::Vector;

/// An operator, its certificate and an admissible perturbation tuple.
#[derive(Debug, Clone)]
pub struct System<T> {
    pub op: SplitOperator<T>,
    pub cert: HyperbolicityCertificate<T>,
    pub tuple: PerturbationTuple<T>,
    pub delta: T,
    pub eps: T,
    pub mode: Mode,
    pub limits: BudgetLimits,
}

impl<T: Scalar> System<T> {
    /// Checks admissibility of `tuple` against `ε(δ)` in the given mode.
    pub fn new(
        op: SplitOperator<T>,
        cert: HyperbolicityCertificate<T>,
        tuple: PerturbationTuple<T>,
        delta: T,
        mode: Mode,
    ) -> Result<Self> {
        if tuple.family() != op.family() {
            return Err(Error::Incompatible(format!(
                "perturbations act on {}, operator on {}",
                tuple.family(),
                op.family()
            )));
        }
        let eps = epsilon_threshold(&cert, delta)?;
        tuple.check_admissible(eps, mode)?;
        Ok(Self {
            op,
            cert,
            tuple,
            delta,
            eps,
            mode,
            limits: BudgetLimits::default(),
        })
    }

    pub fn with_limits(mut self, limits: BudgetLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn p(&self) -> usize {
        self.tuple.p()
    }

    pub fn franks_constant(&self) -> T {
        franks_constant(&self.cert)
    }

    /// `C · max_j Lip(L_j)`, the contraction factor of `Ψ₁⁻¹ ∘ Φ₁`.
    pub fn contraction(&self) -> T {
        self.franks_constant() * self.tuple.max_lip()
    }

    /// `C · max_j ‖L_j‖∞`, bounding both `|U|∞` and `|V|∞`.
    pub fn defect_bound(&self) -> T {
        self.franks_constant() * self.tuple.max_sup()
    }

    pub fn forward_budget(&self, tau: T) -> Result<ErrorBudget<T>> {
        ErrorBudget::plan_forward(&self.cert, self.contraction(), self.tuple.max_sup(), tau, self.limits)
    }

    pub fn inverse_budget(&self, tau: T) -> Result<ErrorBudget<T>> {
        ErrorBudget::plan_inverse(&self.cert, self.tuple.max_lip(), self.tuple.max_sup(), tau, self.limits)
    }

    /// `u_j(x)` from `budget.m` iterations with `budget.k`-term series.
    pub fn solve_forward_defect(&self, x: &Vector<T>, j: usize, budget: &ErrorBudget<T>) -> Result<ForwardSolution<T>> {
        self.check_point(x)?;
        forward::solve_lattice(self, x, j % self.p(), budget.k, budget.m, false)
    }

    /// Like [`Self::solve_forward_defect`], but every level applies exactly
    /// `budget.k`-term series at every lattice point, so successive iterates
    /// come from one fixed map. About `K` times slower.
    pub fn solve_forward_uniform(&self, x: &Vector<T>, j: usize, budget: &ErrorBudget<T>) -> Result<ForwardSolution<T>> {
        self.check_point(x)?;
        forward::solve_lattice(self, x, j % self.p(), budget.k, budget.m, true)
    }

    /// `v_j(x)` from one `budget.k`-term series along `S`-orbits.
    pub fn solve_inverse_defect(&self, x: &Vector<T>, j: usize, budget: &ErrorBudget<T>) -> Result<InverseSolution<T>> {
        self.check_point(x)?;
        inverse::solve(self, x, j % self.p(), budget)
    }

    /// `h(x) = x + u₀(x)` to within `tau`.
    pub fn conjugacy_h(&self, x: &Vector<T>, tau: T) -> Result<Vector<T>> {
        let budget = self.forward_budget(tau)?;
        let sol = self.solve_forward_defect(x, 0, &budget)?;
        if sol.certified_error > tau {
            return Err(Error::BudgetInfeasible(format!(
                "certified error {} exceeds τ = {tau} at this point",
                sol.certified_error
            )));
        }
        Ok(x + &sol.u)
    }

    /// `h⁻¹(x) = x + v₀(x)` to within `tau`.
    pub fn conjugacy_h_inverse(&self, x: &Vector<T>, tau: T) -> Result<Vector<T>> {
        let budget = self.inverse_budget(tau)?;
        let sol = self.solve_inverse_defect(x, 0, &budget)?;
        if sol.certified_error > tau {
            return Err(Error::BudgetInfeasible(format!(
                "certified error {} exceeds τ = {tau} at this point",
                sol.certified_error
            )));
        }
        Ok(x + &sol.v)
    }

    fn check_point(&self, x: &Vector<T>) -> Result<()> {
        if x.family() != self.op.family() {
            return Err(Error::Incompatible(format!("{} vs {}", x.family(), self.op.family())));
        }
        if !x.is_finite() {
            return Err(crate::error::invalid("x", "must be finite"));
        }
        Ok(())
    }
}
