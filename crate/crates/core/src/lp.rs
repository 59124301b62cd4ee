//! LP relaxations of [`Model`]s by a bounded-variable dual simplex.
//!
//! Rows become `A x - r = 0` with one bounded activity variable `r_i` per
//! row. Its bounds are the row sense intersected with the activity range
//! implied by the column bounds, so every variable is boxed and any basis can
//! be made dual feasible by putting nonbasic variables on the right bound.
//! The basis inverse is kept in product form and rebuilt every
//! [`REFACTOR_EVERY`] pivots. Re-solves after bound changes start from the
//! previous basis.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};
use thiserror::Error;

use crate::instance::CustomerId;
use crate::model::{Model, Sense};

mod factor;

use factor::Factor;

pub const REFACTOR_EVERY: usize = 100;
const BLAND_AFTER: usize = 50;
const NONBASIC: usize = usize::MAX;

/// Number types the simplex runs over.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Primal feasibility tolerance.
    fn primal_tol() -> Self;
    /// Dual feasibility tolerance.
    fn dual_tol() -> Self;
    /// Smallest pivot accepted in the ratio test.
    fn pivot_tol() -> Self;
    /// Values this close to a bound are reported on the bound.
    fn snap_tol() -> Self;
    /// Factor entries below this are dropped.
    fn drop_tol() -> Self;

    /// Relative size of the cost perturbation against dual degeneracy;
    /// `None` keeps costs exact and relies on Bland's rule.
    fn perturbation() -> Option<f64> {
        None
    }

    fn int(v: i64) -> Self {
        Self::from_i64(v).expect("integer fits the scalar type")
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn perturbation() -> Option<f64> {
        Some(1e-6)
    }
    fn primal_tol() -> Self {
        1e-7
    }
    fn dual_tol() -> Self {
        1e-7
    }
    fn pivot_tol() -> Self {
        1e-9
    }
    fn snap_tol() -> Self {
        1e-9
    }
    fn drop_tol() -> Self {
        1e-14
    }
}

impl Scalar for f32 {
    fn perturbation() -> Option<f64> {
        Some(1e-3)
    }
    fn primal_tol() -> Self {
        1e-4
    }
    fn dual_tol() -> Self {
        1e-4
    }
    fn pivot_tol() -> Self {
        1e-5
    }
    fn snap_tol() -> Self {
        1e-5
    }
    fn drop_tol() -> Self {
        1e-7
    }
}

impl Scalar for BigRational {
    fn primal_tol() -> Self {
        BigRational::from_integer(0.into())
    }
    fn dual_tol() -> Self {
        Self::primal_tol()
    }
    fn pivot_tol() -> Self {
        Self::primal_tol()
    }
    fn snap_tol() -> Self {
        Self::primal_tol()
    }
    fn drop_tol() -> Self {
        Self::primal_tol()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Optimal value; on an iteration limit, the objective of the last dual
    /// feasible basis, which bounds the optimum from above.
    pub objective: T,
    /// Column values in model order.
    pub x: Vec<T>,
    /// Pivots performed by this solve.
    pub iterations: usize,
}

impl<T: Scalar> LpSolution<T> {
    /// Values of the customer columns in customer order.
    pub fn customer_values(&self, model: &Model) -> Vec<T> {
        model.customer_columns.iter().map(|&j| self.x[j].clone()).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("column `{0}` has an infinite bound")]
    UnboundedColumn(String),
    #[error("customer {0} is not in the model")]
    UnknownCustomer(CustomerId),
    #[error("column {0} out of range")]
    UnknownColumn(usize),
    #[error("bounds [{lower}, {upper}] are empty")]
    EmptyBounds { lower: String, upper: String },
}

/// A basis snapshot: the basic variable of each row position and which
/// nonbasic variables sit at their upper bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    head: Vec<usize>,
    at_upper: Vec<bool>,
}

/// A reusable dual simplex context for one model.
#[derive(Clone, Debug)]
pub struct Simplex<T: Scalar> {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<T>,
    row_start: Vec<usize>,
    row_col: Vec<usize>,
    row_val: Vec<T>,
    /// Minimization costs of structural and activity variables.
    cost: Vec<T>,
    /// Unperturbed costs while a perturbation is active.
    saved_cost: Option<Vec<T>>,
    lower: Vec<T>,
    upper: Vec<T>,
    base_lower: Vec<T>,
    base_upper: Vec<T>,
    x: Vec<T>,
    d: Vec<T>,
    head: Vec<usize>,
    pos: Vec<usize>,
    at_upper: Vec<bool>,
    factor: Factor<T>,
    customer_columns: Vec<usize>,
    iteration_limit: usize,
    deadline: Option<Instant>,
    total_iterations: usize,
    refactor_due: bool,
    alpha: Vec<T>,
    touched: Vec<usize>,
    in_touched: Vec<bool>,
    /// Dual steepest-edge weights by position.
    weights: Vec<f64>,
}

impl<T: Scalar> Simplex<T> {
    pub fn new(model: &Model) -> Result<Self, LpError> {
        let n = model.columns.len();
        let m = model.rows.len();
        for c in &model.columns {
            if c.upper == i64::MAX || c.lower == i64::MIN {
                return Err(LpError::UnboundedColumn(c.name.clone()));
            }
        }
        let mut per_col: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
        let (mut row_start, mut row_col, mut row_val) = (vec![0], Vec::new(), Vec::new());
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        let mut cost = Vec::with_capacity(n + m);
        for c in &model.columns {
            lower.push(T::int(c.lower));
            upper.push(T::int(c.upper));
            cost.push(T::int(-c.objective));
        }
        let mut row_bounds = Vec::with_capacity(m);
        for (i, r) in model.rows.iter().enumerate() {
            let (mut lo, mut hi) = (0i128, 0i128);
            for &(j, a) in &r.coeffs {
                per_col[j].push((i, a));
                row_col.push(j);
                row_val.push(T::int(a));
                let c = &model.columns[j];
                let (p, q) = (a as i128 * c.lower as i128, a as i128 * c.upper as i128);
                lo += p.min(q);
                hi += p.max(q);
            }
            row_start.push(row_col.len());
            let b = r.rhs as i128;
            let (lo, hi) = match r.sense {
                Sense::Eq => (b, b),
                Sense::Le => (lo.min(b), b),
                Sense::Ge => (b, hi.max(b)),
            };
            row_bounds.push((lo, hi));
        }
        for &(lo, hi) in &row_bounds {
            lower.push(T::from_i128(lo).expect("row bound fits"));
            upper.push(T::from_i128(hi).expect("row bound fits"));
            cost.push(T::zero());
        }
        let (mut col_start, mut col_row, mut col_val) = (vec![0], Vec::new(), Vec::new());
        for entries in per_col {
            for (i, a) in entries {
                col_row.push(i);
                col_val.push(T::int(a));
            }
            col_start.push(col_row.len());
        }
        let total = n + m;
        let mut lp = Simplex {
            n,
            m,
            col_start,
            col_row,
            col_val,
            row_start,
            row_col,
            row_val,
            cost,
            saved_cost: None,
            base_lower: lower.clone(),
            base_upper: upper.clone(),
            lower,
            upper,
            x: vec![T::zero(); total],
            d: vec![T::zero(); total],
            head: (n..total).collect(),
            pos: (0..total).map(|j| if j >= n { j - n } else { NONBASIC }).collect(),
            at_upper: vec![false; total],
            factor: Factor::new(),
            customer_columns: model.customer_columns.clone(),
            iteration_limit: 50 * (total + 10),
            deadline: None,
            total_iterations: 0,
            refactor_due: true,
            alpha: vec![T::zero(); total],
            touched: Vec::new(),
            in_touched: vec![false; total],
            weights: vec![1.0; m],
        };
        for j in 0..n {
            lp.at_upper[j] = lp.cost[j].is_negative();
        }
        Ok(lp)
    }

    pub fn columns(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    /// Pivots over the life of this context.
    pub fn total_iterations(&self) -> usize {
        self.total_iterations
    }

    pub fn set_iteration_limit(&mut self, limit: usize) {
        self.iteration_limit = limit;
    }

    /// Solves stop with [`LpStatus::IterationLimit`] once `deadline` passes.
    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    pub fn bounds(&self, col: usize) -> (T, T) {
        (self.lower[col].clone(), self.upper[col].clone())
    }

    /// Replaces the bounds of a structural column.
    pub fn set_bounds(&mut self, col: usize, lower: T, upper: T) -> Result<(), LpError> {
        if col >= self.n {
            return Err(LpError::UnknownColumn(col));
        }
        if lower > upper {
            return Err(LpError::EmptyBounds {
                lower: format!("{lower:?}"),
                upper: format!("{upper:?}"),
            });
        }
        self.lower[col] = lower;
        self.upper[col] = upper;
        Ok(())
    }

    /// Restores the model bounds of a structural column.
    pub fn reset_bounds(&mut self, col: usize) {
        self.lower[col] = self.base_lower[col].clone();
        self.upper[col] = self.base_upper[col].clone();
    }

    pub fn reset_all_bounds(&mut self) {
        self.lower[..self.n].clone_from_slice(&self.base_lower[..self.n]);
        self.upper[..self.n].clone_from_slice(&self.base_upper[..self.n]);
    }

    /// Fixes customer `c`'s column to 0 or 1, or frees it with `None`.
    pub fn fix_customer(&mut self, c: CustomerId, value: Option<bool>) -> Result<(), LpError> {
        let col = *c
            .checked_sub(1)
            .and_then(|k| self.customer_columns.get(k))
            .ok_or(LpError::UnknownCustomer(c))?;
        match value {
            None => {
                self.reset_bounds(col);
                Ok(())
            }
            Some(v) => {
                let v = T::int(i64::from(v));
                let (lo, hi) = (self.base_lower[col].clone(), self.base_upper[col].clone());
                if v < lo || v > hi {
                    return Err(LpError::EmptyBounds {
                        lower: format!("{v:?}"),
                        upper: format!("{v:?}"),
                    });
                }
                self.set_bounds(col, v.clone(), v)
            }
        }
    }

    pub fn basis(&self) -> Basis {
        Basis {
            head: self.head.clone(),
            at_upper: self.at_upper.clone(),
        }
    }

    /// Installs a basis taken from a context over the same model.
    pub fn set_basis(&mut self, basis: &Basis) {
        assert_eq!(basis.head.len(), self.m, "basis from another model");
        self.head.clone_from(&basis.head);
        self.at_upper.clone_from(&basis.at_upper);
        self.pos.iter_mut().for_each(|p| *p = NONBASIC);
        for (p, &j) in self.head.iter().enumerate() {
            self.pos[j] = p;
        }
        self.weights.iter_mut().for_each(|w| *w = 1.0);
        self.refactor_due = true;
    }

    /// Row duals of the current basis (minimization sign convention).
    pub fn duals(&self) -> Vec<T> {
        let mut y: Vec<T> = self.head.iter().map(|&j| self.cost[j].clone()).collect();
        self.factor.btran(&mut y);
        y
    }

    /// Reduced costs of the structural columns at the current basis.
    pub fn reduced_costs(&self) -> Vec<T> {
        self.d[..self.n].to_vec()
    }

    /// Bounds of the row activity variables.
    pub fn row_bounds(&self) -> Vec<(T, T)> {
        (self.n..self.n + self.m)
            .map(|j| (self.lower[j].clone(), self.upper[j].clone()))
            .collect()
    }

    /// Nonzeros currently held by the basis factor.
    pub fn factor_size(&self) -> usize {
        self.factor.nonzeros()
    }

    fn column_scatter(&self, j: usize, out: &mut [T]) {
        if j >= self.n {
            out[j - self.n] = -T::one();
        } else {
            for e in self.col_start[j]..self.col_start[j + 1] {
                out[self.col_row[e]] = self.col_val[e].clone();
            }
        }
    }

    fn factor_stale(&self) -> bool {
        self.factor.updates() >= REFACTOR_EVERY
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    fn nonbasic_value(&self, j: usize) -> T {
        if self.at_upper[j] {
            self.upper[j].clone()
        } else {
            self.lower[j].clone()
        }
    }

    /// Rebuilds the factor from the current basic set, swapping in
    /// activity variables for dependent columns, then recomputes duals and
    /// values.
    fn reinvert(&mut self) {
        loop {
            let cols: Vec<Vec<(usize, T)>> = self.head.iter().map(|&j| self.column_entries(j)).collect();
            match self.factor.factorize(self.m, &cols) {
                Ok(()) => break,
                Err(singular) => {
                    for (&p, &i) in singular.positions.iter().zip(&singular.rows) {
                        let out = self.head[p];
                        self.pos[out] = NONBASIC;
                        self.at_upper[out] = false;
                        let slack = self.n + i;
                        self.head[p] = slack;
                        self.pos[slack] = p;
                        self.weights[p] = 1.0;
                    }
                }
            }
        }
        self.refactor_due = false;
        self.compute_duals();
        self.make_dual_feasible();
        self.compute_primal();
    }

    fn column_entries(&self, j: usize) -> Vec<(usize, T)> {
        if j >= self.n {
            vec![(j - self.n, -T::one())]
        } else {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|e| (self.col_row[e], self.col_val[e].clone()))
                .collect()
        }
    }

    fn compute_duals(&mut self) {
        let y = self.duals();
        for j in 0..self.n {
            if self.pos[j] != NONBASIC {
                self.d[j] = T::zero();
                continue;
            }
            let mut s = self.cost[j].clone();
            for e in self.col_start[j]..self.col_start[j + 1] {
                s = s - self.col_val[e].clone() * y[self.col_row[e]].clone();
            }
            self.d[j] = s;
        }
        for (i, yi) in y.iter().enumerate().take(self.m) {
            let j = self.n + i;
            self.d[j] = if self.pos[j] == NONBASIC { yi.clone() } else { T::zero() };
        }
    }

    /// Moves nonbasic variables whose reduced cost has the wrong sign to the
    /// other bound. Returns whether anything moved.
    fn make_dual_feasible(&mut self) -> bool {
        let tol = T::dual_tol();
        let mut moved = false;
        for j in 0..self.n + self.m {
            if self.pos[j] != NONBASIC || self.is_fixed(j) {
                continue;
            }
            if self.at_upper[j] && self.d[j] > tol {
                self.at_upper[j] = false;
                moved = true;
            } else if !self.at_upper[j] && self.d[j] < -tol.clone() {
                self.at_upper[j] = true;
                moved = true;
            }
        }
        moved
    }

    fn compute_primal(&mut self) {
        let mut rhs = vec![T::zero(); self.m];
        for j in 0..self.n + self.m {
            if self.pos[j] != NONBASIC {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v.is_zero() {
                self.x[j] = v;
                continue;
            }
            if j >= self.n {
                let i = j - self.n;
                rhs[i] = rhs[i].clone() + v.clone();
            } else {
                for e in self.col_start[j]..self.col_start[j + 1] {
                    let i = self.col_row[e];
                    rhs[i] = rhs[i].clone() - self.col_val[e].clone() * v.clone();
                }
            }
            self.x[j] = v;
        }
        self.factor.ftran(&mut rhs);
        for (p, v) in rhs.into_iter().enumerate() {
            self.x[self.head[p]] = v;
        }
    }

    fn infeasibility(&self, j: usize) -> Option<T> {
        let tol = T::primal_tol();
        let x = &self.x[j];
        if *x < self.lower[j].clone() - tol.clone() {
            Some(x.clone() - self.lower[j].clone())
        } else if *x > self.upper[j].clone() + tol {
            Some(x.clone() - self.upper[j].clone())
        } else {
            None
        }
    }

    /// Leaving position by dual steepest edge (`delta^2 / w`), or the
    /// smallest infeasible variable index in Bland mode.
    fn choose_row(&self, bland: bool) -> Option<(usize, T)> {
        let mut best: Option<(usize, T, f64)> = None;
        for p in 0..self.m {
            let j = self.head[p];
            let Some(delta) = self.infeasibility(j) else { continue };
            let score = {
                let v = delta.approx();
                v * v / self.weights[p]
            };
            let better = match &best {
                None => true,
                Some((q, _, bs)) => {
                    if bland {
                        j < self.head[*q]
                    } else {
                        score > *bs
                    }
                }
            };
            if better {
                best = Some((p, delta, score));
            }
        }
        best.map(|(p, d, _)| (p, d))
    }

    /// Pivot row `e_r^T B^-1 A` over nonbasic variables, left in `alpha`
    /// with its support in `touched`.
    fn pivot_row(&mut self, r: usize) -> Vec<T> {
        let mut rho = vec![T::zero(); self.m];
        rho[r] = T::one();
        self.factor.btran(&mut rho);
        for (i, ri) in rho.iter().enumerate() {
            if ri.abs() <= T::drop_tol() {
                continue;
            }
            let slack = self.n + i;
            if self.pos[slack] == NONBASIC {
                self.touch(slack);
                self.alpha[slack] = self.alpha[slack].clone() - ri.clone();
            }
            for e in self.row_start[i]..self.row_start[i + 1] {
                let j = self.row_col[e];
                if self.pos[j] != NONBASIC {
                    continue;
                }
                self.touch(j);
                self.alpha[j] = self.alpha[j].clone() + ri.clone() * self.row_val[e].clone();
            }
        }
        rho
    }

    fn touch(&mut self, j: usize) {
        if !self.in_touched[j] {
            self.in_touched[j] = true;
            self.touched.push(j);
        }
    }

    fn clear_row(&mut self) {
        for &j in &self.touched {
            self.alpha[j] = T::zero();
            self.in_touched[j] = false;
        }
        self.touched.clear();
    }

    /// Bound-flipping ratio test with a Harris pass at the last
    /// breakpoint; in Bland mode the smallest index among the minimum
    /// ratios. Returns the entering variable, the dual step and the boxed
    /// variables to flip.
    fn ratio_test(&self, up: bool, slope: T, bland: bool) -> Option<(usize, T, Vec<usize>)> {
        let piv = T::pivot_tol();
        let tol = T::dual_tol();
        let mut cands: Vec<(usize, T, T)> = Vec::new(); // (j, |abar|, |d|^+)
        for &j in &self.touched {
            if self.is_fixed(j) {
                continue;
            }
            let a = if up { self.alpha[j].clone() } else { -self.alpha[j].clone() };
            let eligible = if self.at_upper[j] { a < -piv.clone() } else { a > piv.clone() };
            if !eligible {
                continue;
            }
            let dj = if self.at_upper[j] { -self.d[j].clone() } else { self.d[j].clone() };
            let dj = if dj.is_negative() { T::zero() } else { dj };
            cands.push((j, a.abs(), dj));
        }
        if cands.is_empty() {
            return None;
        }
        if bland {
            let mut best: Option<(usize, T)> = None;
            for (j, a, dj) in &cands {
                let t = dj.clone() / a.clone();
                match &best {
                    Some((bj, bt)) if t > *bt || (t == *bt && j > bj) => {}
                    _ => best = Some((*j, t)),
                }
            }
            return best.map(|(j, t)| (j, t, Vec::new()));
        }
        // pass breakpoints while the dual objective keeps improving
        let mut order: Vec<(T, usize)> = cands
            .iter()
            .enumerate()
            .map(|(k, (_, a, dj))| (dj.clone() / a.clone(), k))
            .collect();
        order.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));
        let mut slope = slope.abs();
        let mut flips = Vec::new();
        let mut start = 0;
        while start + 1 < order.len() {
            let (j, a, _) = &cands[order[start].1];
            let range = self.upper[*j].clone() - self.lower[*j].clone();
            let drop = a.clone() * range;
            if drop > slope {
                break;
            }
            slope = slope - drop;
            flips.push(*j);
            start += 1;
        }
        // Harris among the remaining breakpoints
        let rest = &order[start..];
        let mut bound: Option<T> = None;
        for (_, k) in rest {
            let (_, a, dj) = &cands[*k];
            let t = (dj.clone() + tol.clone()) / a.clone();
            if bound.as_ref().is_none_or(|b| t < *b) {
                bound = Some(t);
            }
        }
        let bound = bound.expect("nonempty");
        let mut best: Option<(usize, T, T)> = None;
        for (t, k) in rest {
            if *t > bound {
                break;
            }
            let (j, a, _) = &cands[*k];
            match &best {
                Some((bj, ba, _)) if a < ba || (a == ba && j > bj) => {}
                _ => best = Some((*j, a.clone(), t.clone())),
            }
        }
        let (q, _, t) = best.expect("nonempty");
        // breakpoints below the chosen ratio that Harris skipped stay put
        Some((q, t, flips))
    }

    /// Moves the given nonbasic variables to their opposite bound and
    /// updates the basic values.
    fn flip(&mut self, flips: &[usize]) {
        if flips.is_empty() {
            return;
        }
        let mut delta = vec![T::zero(); self.m];
        for &j in flips {
            let old = self.nonbasic_value(j);
            self.at_upper[j] = !self.at_upper[j];
            let new = self.nonbasic_value(j);
            let dx = new.clone() - old;
            self.x[j] = new;
            if j >= self.n {
                let i = j - self.n;
                delta[i] = delta[i].clone() - dx;
            } else {
                for e in self.col_start[j]..self.col_start[j + 1] {
                    let i = self.col_row[e];
                    delta[i] = delta[i].clone() + self.col_val[e].clone() * dx.clone();
                }
            }
        }
        self.factor.ftran(&mut delta);
        for (p, v) in delta.into_iter().enumerate() {
            if !v.is_zero() {
                let j = self.head[p];
                self.x[j] = self.x[j].clone() - v;
            }
        }
    }

    fn update_weights(&mut self, r: usize, col: &[T], rho: &[T]) {
        let wr: f64 = rho.iter().map(|v| v.approx() * v.approx()).sum();
        let mut tau = rho.to_vec();
        self.factor.ftran(&mut tau);
        let ar = col[r].approx();
        for (p, cp) in col.iter().enumerate() {
            if p == r || cp.is_zero() {
                continue;
            }
            let ratio = cp.approx() / ar;
            let w = self.weights[p] - 2.0 * ratio * tau[p].approx() + ratio * ratio * wr;
            self.weights[p] = w.max(ratio * ratio).max(1e-8);
        }
        self.weights[r] = (wr / (ar * ar)).max(1e-8);
    }

    /// Shifts nonbasic structural costs away from zero reduced cost in the
    /// direction that keeps the current basis dual feasible.
    fn perturb(&mut self) {
        let Some(scale) = T::perturbation() else { return };
        let saved = self.cost.clone();
        for j in 0..self.n {
            if self.pos[j] != NONBASIC {
                continue;
            }
            let mut h = (j as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            h ^= h >> 31;
            let u = (h % 1024) as f64 / 1024.0;
            let eps = scale * (1.0 + self.cost[j].approx().abs()) * (1.0 + u);
            let eps = T::from_f64(eps).expect("finite perturbation");
            self.cost[j] = if self.at_upper[j] {
                self.cost[j].clone() - eps
            } else {
                self.cost[j].clone() + eps
            };
        }
        self.saved_cost = Some(saved);
    }

    /// Drops the perturbation; returns whether the basis lost dual
    /// feasibility and had to flip bounds.
    fn unperturb(&mut self) -> bool {
        let Some(saved) = self.saved_cost.take() else { return false };
        self.cost = saved;
        self.compute_duals();
        if self.make_dual_feasible() {
            self.compute_primal();
            return true;
        }
        false
    }

    /// Runs the dual simplex from the current basis.
    pub fn solve(&mut self) -> LpSolution<T> {
        if self.refactor_due {
            self.reinvert();
        }
        self.perturb();
        self.compute_duals();
        self.make_dual_feasible();
        self.compute_primal();
        let mut iterations = 0;
        let mut degenerate = 0;
        let mut bland = false;
        let mut fresh = true;
        let status = loop {
            if self.factor_stale() {
                self.reinvert();
                fresh = true;
            }
            let late = iterations % 64 == 63 && self.deadline.is_some_and(|d| Instant::now() >= d);
            if iterations >= self.iteration_limit || late {
                break LpStatus::IterationLimit;
            }
            let Some((r, delta)) = self.choose_row(bland) else {
                if self.make_dual_feasible() {
                    self.compute_primal();
                    continue;
                }
                if self.unperturb() {
                    continue;
                }
                break LpStatus::Optimal;
            };
            let up = delta.is_positive();
            let rho = self.pivot_row(r);
            let Some((q, step, flips)) = self.ratio_test(up, delta.clone(), bland) else {
                self.clear_row();
                if fresh {
                    break LpStatus::Infeasible;
                }
                self.reinvert();
                fresh = true;
                continue;
            };
            let alpha_rq = self.alpha[q].clone();
            let mut col = vec![T::zero(); self.m];
            self.column_scatter(q, &mut col);
            self.factor.ftran(&mut col);
            let mismatch = (col[r].clone() - alpha_rq.clone()).abs();
            let scale = T::one() + alpha_rq.abs();
            if mismatch > T::pivot_tol() * scale * T::int(1000) && !fresh {
                self.clear_row();
                self.reinvert();
                fresh = true;
                continue;
            }
            self.update_weights(r, &col, &rho);
            // duals
            let signed_step = if up { step.clone() } else { -step.clone() };
            for k in 0..self.touched.len() {
                let j = self.touched[k];
                self.d[j] = self.d[j].clone() - signed_step.clone() * self.alpha[j].clone();
            }
            let leaving = self.head[r];
            self.d[leaving] = -signed_step;
            self.d[q] = T::zero();
            self.clear_row();
            // primal
            self.flip(&flips);
            let target = if up { self.upper[leaving].clone() } else { self.lower[leaving].clone() };
            let theta = (self.x[leaving].clone() - target.clone()) / col[r].clone();
            for (p, cp) in col.iter().enumerate() {
                if !cp.is_zero() {
                    let j = self.head[p];
                    self.x[j] = self.x[j].clone() - theta.clone() * cp.clone();
                }
            }
            self.x[q] = self.x[q].clone() + theta;
            self.x[leaving] = target;
            self.at_upper[leaving] = up;
            self.pos[leaving] = NONBASIC;
            self.pos[q] = r;
            self.head[r] = q;
            self.factor.update(r, &col);
            iterations += 1;
            fresh = false;
            if step.is_zero() {
                degenerate += 1;
                if degenerate >= BLAND_AFTER {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        };
        if self.saved_cost.is_some() {
            self.unperturb();
        }
        self.total_iterations += iterations;
        let x = self.structural_values(status == LpStatus::Optimal);
        let mut objective = T::zero();
        if status == LpStatus::IterationLimit {
            objective = self.dual_bound();
        } else {
            for (j, v) in x.iter().enumerate() {
                if !self.cost[j].is_zero() {
                    objective = objective - self.cost[j].clone() * v.clone();
                }
            }
        }
        LpSolution {
            status,
            objective,
            x,
            iterations,
        }
    }

    /// Upper bound on the maximization objective from the current row
    /// duals, valid whether or not the basis is dual feasible.
    pub fn dual_bound(&self) -> T {
        let y = self.duals();
        let mut bound = T::zero();
        let mut term = |d: T, lo: &T, hi: &T| {
            // min over [lo, hi] of d * x, in minimization sign
            let v = if d.is_negative() { d * hi.clone() } else { d * lo.clone() };
            bound = bound.clone() + v;
        };
        for j in 0..self.n {
            let mut d = self.cost[j].clone();
            for e in self.col_start[j]..self.col_start[j + 1] {
                d = d - self.col_val[e].clone() * y[self.col_row[e]].clone();
            }
            term(d, &self.lower[j], &self.upper[j]);
        }
        for (i, yi) in y.iter().enumerate() {
            let j = self.n + i;
            term(yi.clone(), &self.lower[j], &self.upper[j]);
        }
        -bound
    }

    fn structural_values(&self, snap: bool) -> Vec<T> {
        let tol = T::snap_tol();
        (0..self.n)
            .map(|j| {
                let v = self.x[j].clone();
                if !snap {
                    return v;
                }
                if (v.clone() - self.lower[j].clone()).abs() <= tol {
                    self.lower[j].clone()
                } else if (v.clone() - self.upper[j].clone()).abs() <= tol {
                    self.upper[j].clone()
                } else {
                    v
                }
            })
            .collect()
    }
}

/// Solves the relaxation of `model` with the given customer fixings.
pub fn solve_relaxation<T: Scalar>(
    model: &Model,
    fixings: &BTreeMap<CustomerId, bool>,
) -> Result<LpSolution<T>, LpError> {
    let mut lp = Simplex::<T>::new(model)?;
    for (&c, &v) in fixings {
        lp.fix_customer(c, Some(v))?;
    }
    Ok(lp.solve())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{fixtures, micro_corpus, Customer, Instance, Station};
    use crate::model::{build_cs1, Formulation, Problem};
    use crate::network::Network;
    use crate::oracle::brute_force_optimum;

    type Q = BigRational;

    fn q(v: i64) -> Q {
        Q::from_integer(v.into())
    }

    fn corpus(count: usize) -> Vec<Problem> {
        micro_corpus(count, 11)
            .into_iter()
            .map(|inst| Problem::new(inst, Formulation::Cs2, true).unwrap())
            .collect()
    }

    /// Exact feasibility plus a matching Lagrangian bound, computed from
    /// the model alone.
    fn certify(model: &Model, x: &[Q], y: &[Q], objective: &Q) {
        for (c, v) in model.columns.iter().zip(x) {
            assert!(*v >= q(c.lower) && *v <= q(c.upper), "bound on {}", c.name);
        }
        let mut bound = q(0);
        let mut reduced: Vec<Q> = model.columns.iter().map(|c| q(c.objective)).collect();
        for (r, yi) in model.rows.iter().zip(y) {
            let lhs: Q = r.coeffs.iter().map(|&(j, a)| q(a) * x[j].clone()).sum();
            match r.sense {
                Sense::Eq => assert_eq!(lhs, q(r.rhs), "row {}", r.name),
                Sense::Le => assert!(lhs <= q(r.rhs), "row {}", r.name),
                Sense::Ge => assert!(lhs >= q(r.rhs), "row {}", r.name),
            }
            // maximization duals: u = -y, sign-restricted by row sense
            let u = -yi.clone();
            match r.sense {
                Sense::Le => assert!(u >= q(0), "dual sign on {}", r.name),
                Sense::Ge => assert!(u <= q(0), "dual sign on {}", r.name),
                Sense::Eq => {}
            }
            bound += u.clone() * q(r.rhs);
            for &(j, a) in &r.coeffs {
                reduced[j] -= u.clone() * q(a);
            }
        }
        for (c, d) in model.columns.iter().zip(reduced) {
            bound += if d.is_positive() { d * q(c.upper) } else { d * q(c.lower) };
        }
        let value: Q = model.columns.iter().zip(x).map(|(c, v)| q(c.objective) * v.clone()).sum();
        assert_eq!(&value, objective);
        assert_eq!(bound, value, "duality gap");
    }

    #[test]
    fn single_customer() {
        let inst = Instance::new(vec![Customer::new(1, Station::A, (0, 10), (20, 30))], 1, 1);
        let model = build_cs1(&Network::build(&inst).unwrap());
        let s = solve_relaxation::<f64>(&model, &BTreeMap::new()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, 1.0);
    }

    #[test]
    fn all_or_nothing_relaxation_is_four() {
        let model = build_cs1(&Network::build(&fixtures::all_or_nothing()).unwrap());
        assert_eq!(solve_relaxation::<f64>(&model, &BTreeMap::new()).unwrap().objective, 4.0);
        assert_eq!(solve_relaxation::<Q>(&model, &BTreeMap::new()).unwrap().objective, q(4));
    }

    #[test]
    fn empty_model() {
        let p = Problem::new(Instance::empty(1, 1), Formulation::Cs1, false).unwrap();
        let s = solve_relaxation::<f64>(&p.model, &BTreeMap::new()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn exact_certificates() {
        for p in corpus(40) {
            let mut lp = Simplex::<Q>::new(&p.model).unwrap();
            let s = lp.solve();
            assert_eq!(s.status, LpStatus::Optimal);
            certify(&p.model, &s.x, &lp.duals(), &s.objective);
        }
    }

    #[test]
    fn bounds_the_integer_optimum() {
        for p in corpus(60) {
            let opt = brute_force_optimum(&p.instance).unwrap().0 as f64;
            let cs2 = solve_relaxation::<f64>(&p.model, &BTreeMap::new()).unwrap();
            let cs1_model = build_cs1(&p.network);
            let cs1 = solve_relaxation::<f64>(&cs1_model, &BTreeMap::new()).unwrap();
            assert!(cs2.objective >= opt - 1e-9);
            assert!(cs1.objective >= cs2.objective - 1e-9);
        }
    }

    #[test]
    fn float_types_agree_with_exact() {
        for p in corpus(40) {
            let exact = solve_relaxation::<Q>(&p.model, &BTreeMap::new()).unwrap().objective.approx();
            let f64v = solve_relaxation::<f64>(&p.model, &BTreeMap::new()).unwrap();
            let f32v = solve_relaxation::<f32>(&p.model, &BTreeMap::new()).unwrap();
            assert!((f64v.objective - exact).abs() <= 1e-6);
            assert!((f64::from(f32v.objective) - exact).abs() <= 1e-2);
            assert!(p.model.max_violation(&f64v.x) <= 1e-7);
            for (c, v) in p.model.columns.iter().zip(&f64v.x) {
                assert!(*v >= c.lower as f64 - 1e-9 && *v <= c.upper as f64 + 1e-9);
            }
        }
    }

    #[test]
    fn warm_starts_match_cold_solves() {
        for (k, p) in corpus(30).into_iter().enumerate() {
            let n = p.model.customers();
            let mut warm = Simplex::<f64>::new(&p.model).unwrap();
            let mut last = warm.solve().objective;
            let mut fixings = BTreeMap::new();
            for step in 0..n.min(5) {
                let c = (k * 7 + step * 3) % n + 1;
                let v = step % 3 == 2;
                fixings.insert(c, v);
                warm.fix_customer(c, Some(v)).unwrap();
                let w = warm.solve();
                let cold = solve_relaxation::<f64>(&p.model, &fixings).unwrap();
                assert_eq!(w.status, cold.status);
                if w.status == LpStatus::Optimal {
                    assert!((w.objective - cold.objective).abs() <= 1e-6);
                    assert!(p.model.max_violation(&w.x) <= 1e-7);
                    if !v {
                        // zero fixings keep x = 0 feasible and only cut
                        assert!(w.objective <= last + 1e-9);
                    }
                    last = w.objective;
                } else {
                    break;
                }
            }
        }
    }

    #[test]
    fn zero_fixings_are_always_feasible() {
        for p in corpus(20) {
            let fixings: BTreeMap<_, _> = (1..=p.model.customers()).map(|c| (c, false)).collect();
            let s = solve_relaxation::<f64>(&p.model, &fixings).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert_eq!(s.objective, 0.0);
        }
    }

    #[test]
    fn infeasible_fixings_are_reported() {
        // one car at A, two overlapping A-customers both forced in
        let inst = Instance::new(
            vec![
                Customer::new(1, Station::A, (0, 10), (20, 30)),
                Customer::new(2, Station::A, (5, 15), (25, 35)),
            ],
            1,
            0,
        );
        let model = build_cs1(&Network::build(&inst).unwrap());
        let fixings = BTreeMap::from([(1, true), (2, true)]);
        assert_eq!(solve_relaxation::<f64>(&model, &fixings).unwrap().status, LpStatus::Infeasible);
        assert_eq!(solve_relaxation::<Q>(&model, &fixings).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn iteration_limit_keeps_a_valid_bound() {
        for p in corpus(20) {
            let exact = solve_relaxation::<f64>(&p.model, &BTreeMap::new()).unwrap().objective;
            let mut lp = Simplex::<f64>::new(&p.model).unwrap();
            lp.set_iteration_limit(2);
            let s = lp.solve();
            if s.status == LpStatus::IterationLimit {
                assert!(s.objective >= exact - 1e-9);
            }
        }
    }

    #[test]
    fn basis_snapshots_restore() {
        let p = &corpus(5)[4];
        let mut lp = Simplex::<f64>::new(&p.model).unwrap();
        let first = lp.solve();
        let basis = lp.basis();
        lp.fix_customer(1, Some(false)).unwrap();
        lp.solve();
        lp.fix_customer(1, None).unwrap();
        lp.set_basis(&basis);
        let again = lp.solve();
        assert_eq!(again.iterations, 0);
        assert!((again.objective - first.objective).abs() <= 1e-9);
    }

    #[test]
    fn rejects_bad_fixings() {
        let model = build_cs1(&Network::build(&fixtures::all_or_nothing()).unwrap());
        let mut lp = Simplex::<f64>::new(&model).unwrap();
        assert_eq!(lp.fix_customer(9, Some(true)), Err(LpError::UnknownCustomer(9)));
        assert_eq!(lp.fix_customer(0, Some(true)), Err(LpError::UnknownCustomer(0)));
    }
}
