//! Exact rational arithmetic and a dense two-phase simplex.
//!
//! Problems have the shape `min c·x  s.t.  A x ≥ b, x ≥ 0`. Pivoting follows
//! Bland's rule, so results are deterministic. Alongside the primal optimum the
//! solver returns dual values `y ≥ 0` with `Aᵀy ≤ c` and `b·y = c·x`, which
//! [`check_certificate`] re-verifies from scratch.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::analysis::{AuxReport, Triple};
use crate::model::{Instance, UserSet};

/// Exact rational number, always reduced with a positive denominator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Rational(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_integer(n: i64) -> Self {
        Rational(BigRational::from_integer(n.into()))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    /// Denominator as `u64`; panics if it does not fit.
    pub fn denom_u64(&self) -> u64 {
        self.0.denom().to_u64().expect("denominator exceeds u64")
    }

    /// Exact value as `u64` if it is a nonnegative integer that fits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.is_integer() {
            self.0.numer().to_u64()
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn min(self, other: Rational) -> Rational {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Rational) -> Rational {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Parses `a` or `a/b`.
    pub fn parse(text: &str) -> Option<Rational> {
        let text = text.trim();
        match text.split_once('/') {
            Some((n, d)) => {
                let n: BigInt = n.trim().parse().ok()?;
                let d: BigInt = d.trim().parse().ok()?;
                (!d.is_zero()).then(|| Rational(BigRational::new(n, d)))
            }
            None => Some(Rational(BigRational::from_integer(text.parse().ok()?))),
        }
    }
}

/// Least common multiple of the denominators.
pub fn lcm_denominators<'a, I: IntoIterator<Item = &'a Rational>>(values: I) -> u64 {
    values
        .into_iter()
        .fold(1u64, |acc, r| acc.lcm(&r.denom_u64()))
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl From<usize> for Rational {
    fn from(n: usize) -> Self {
        Rational(BigRational::from_integer(n.into()))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational(self.0.$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl std::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |a, b| a + b)
    }
}

/// Sparse linear form: `(variable index, coefficient)` pairs.
pub type LinearForm = Vec<(usize, Rational)>;

/// One `form ≥ rhs` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub form: LinearForm,
    pub rhs: Rational,
    pub label: String,
}

/// `min objective·x  s.t.  rows, x ≥ 0`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LpProblem {
    pub variables: Vec<String>,
    pub objective: LinearForm,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: Rational,
    /// Primal values, indexed like [`LpProblem::variables`].
    pub assignment: Vec<Rational>,
    /// Dual values, one per constraint.
    pub duals: Vec<Rational>,
}

impl LpSolution {
    pub fn value_of(&self, lp: &LpProblem, name: &str) -> Option<&Rational> {
        lp.variables
            .iter()
            .position(|v| v == name)
            .map(|i| &self.assignment[i])
    }
}

impl LpProblem {
    pub fn add_variable(&mut self, name: impl Into<String>) -> usize {
        self.variables.push(name.into());
        self.variables.len() - 1
    }

    /// Appends a row unless an identical one is already present.
    pub fn add_constraint(
        &mut self,
        mut form: LinearForm,
        rhs: Rational,
        label: impl Into<String>,
    ) {
        form.sort_by_key(|(i, _)| *i);
        let duplicate = self
            .constraints
            .iter()
            .any(|c| c.form == form && c.rhs == rhs);
        if !duplicate {
            self.constraints.push(Constraint {
                form,
                rhs,
                label: label.into(),
            });
        }
    }

    pub fn evaluate(form: &LinearForm, x: &[Rational]) -> Rational {
        form.iter().map(|(i, c)| c * &x[*i]).sum()
    }

    /// Dense constraint matrix.
    pub fn dense_rows(&self) -> Vec<Vec<Rational>> {
        self.constraints
            .iter()
            .map(|c| {
                let mut row = vec![Rational::zero(); self.variables.len()];
                for (i, v) in &c.form {
                    row[*i] = &row[*i] + v;
                }
                row
            })
            .collect()
    }

    pub fn dense_objective(&self) -> Vec<Rational> {
        let mut c = vec![Rational::zero(); self.variables.len()];
        for (i, v) in &self.objective {
            c[*i] = &c[*i] + v;
        }
        c
    }

    fn render_form(&self, form: &LinearForm) -> String {
        if form.is_empty() {
            return "0".to_string();
        }
        form.iter()
            .map(|(i, c)| {
                if *c == Rational::one() {
                    self.variables[*i].clone()
                } else {
                    format!("{}*{}", c, self.variables[*i])
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Debug text form: objective, variables, one line per row.
impl fmt::Display for LpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "minimize: {}", self.render_form(&self.objective))?;
        writeln!(f, "variables: [{}]", self.variables.join(", "))?;
        for (k, c) in self.constraints.iter().enumerate() {
            writeln!(
                f,
                "row {}: {} >= {}  # {}",
                k + 1,
                self.render_form(&c.form),
                c.rhs,
                c.label
            )?;
        }
        Ok(())
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v = &*v / &p;
        }
        self.rhs[r] = &self.rhs[r] / &p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let factor = self.rows[i][c].clone();
            for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v = &*v - &(&factor * pv);
                }
            }
            self.rhs[i] = &self.rhs[i] - &(&factor * &pivot_rhs);
        }
        self.basis[r] = c;
    }

    fn reduced_costs(&self, cost: &[Rational]) -> Vec<Rational> {
        (0..cost.len())
            .map(|j| {
                let z: Rational = self
                    .basis
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| &cost[b] * &self.rows[i][j])
                    .sum();
                &cost[j] - &z
            })
            .collect()
    }

    /// Bland's rule; `allowed` masks columns that may enter.
    fn optimize(&mut self, cost: &[Rational], allowed: &[bool]) -> bool {
        loop {
            let d = self.reduced_costs(cost);
            let Some(enter) = (0..cost.len()).find(|&j| allowed[j] && d[j].is_negative()) else {
                return true;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][enter];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / a;
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return false,
            }
        }
    }
}

/// Solves the problem exactly.
pub fn solve(lp: &LpProblem) -> LpSolution {
    let n = lp.variables.len();
    let m = lp.constraints.len();
    let a = lp.dense_rows();
    let c = lp.dense_objective();
    // columns: x (n), surplus (m), artificial (m)
    let width = n + 2 * m;
    let mut sign = vec![Rational::one(); m];
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![Rational::zero(); width];
        let mut b = lp.constraints[i].rhs.clone();
        let flip = b.is_negative();
        if flip {
            sign[i] = -Rational::one();
            b = -b;
        }
        for j in 0..n {
            row[j] = if flip {
                -a[i][j].clone()
            } else {
                a[i][j].clone()
            };
        }
        row[n + i] = if flip {
            Rational::one()
        } else {
            -Rational::one()
        };
        row[n + m + i] = Rational::one();
        rows.push(row);
        rhs.push(b);
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis: (n + m..n + 2 * m).collect(),
    };

    let phase1_cost: Vec<Rational> = (0..width)
        .map(|j| {
            if j >= n + m {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .collect();
    let everything = vec![true; width];
    t.optimize(&phase1_cost, &everything);
    let infeasibility: Rational = t
        .basis
        .iter()
        .zip(&t.rhs)
        .filter(|(b, _)| **b >= n + m)
        .map(|(_, v)| v.clone())
        .sum();
    if infeasibility.is_positive() {
        return LpSolution {
            status: LpStatus::Infeasible,
            objective_value: Rational::zero(),
            assignment: vec![Rational::zero(); n],
            duals: vec![Rational::zero(); m],
        };
    }
    // drive zero-level artificials out of the basis where possible
    for r in 0..m {
        if t.basis[r] >= n + m {
            if let Some(j) = (0..n + m).find(|&j| !t.rows[r][j].is_zero()) {
                t.pivot(r, j);
            }
        }
    }

    let mut cost = vec![Rational::zero(); width];
    cost[..n].clone_from_slice(&c);
    let allowed: Vec<bool> = (0..width).map(|j| j < n + m).collect();
    if !t.optimize(&cost, &allowed) {
        return LpSolution {
            status: LpStatus::Unbounded,
            objective_value: Rational::zero(),
            assignment: vec![Rational::zero(); n],
            duals: vec![Rational::zero(); m],
        };
    }
    let mut x = vec![Rational::zero(); n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs[i].clone();
        }
    }
    // y' = c_B B^{-1}, read off the artificial columns, then undo row flips
    let d = t.reduced_costs(&cost);
    let duals: Vec<Rational> = (0..m)
        .map(|i| &sign[i] * &(-d[n + m + i].clone()))
        .collect();
    let objective_value = LpProblem::evaluate(&lp.objective, &x);
    LpSolution {
        status: LpStatus::Optimal,
        objective_value,
        assignment: x,
        duals,
    }
}

/// Outcome of an independent optimality check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub primal_feasible: bool,
    pub dual_feasible: bool,
    pub primal_objective: Rational,
    pub dual_objective: Rational,
}

impl Certificate {
    pub fn is_valid(&self) -> bool {
        self.primal_feasible && self.dual_feasible && self.primal_objective == self.dual_objective
    }
}

/// Checks primal feasibility, dual feasibility and equal objectives.
pub fn check_certificate(lp: &LpProblem, sol: &LpSolution) -> Certificate {
    let a = lp.dense_rows();
    let c = lp.dense_objective();
    let x = &sol.assignment;
    let y = &sol.duals;
    let primal_feasible = x.iter().all(|v| !v.is_negative())
        && lp
            .constraints
            .iter()
            .all(|row| LpProblem::evaluate(&row.form, x) >= row.rhs);
    let dual_feasible = y.iter().all(|v| !v.is_negative())
        && (0..lp.variables.len()).all(|j| {
            let s: Rational = (0..a.len()).map(|i| &a[i][j] * &y[i]).sum();
            s <= c[j]
        });
    Certificate {
        primal_feasible,
        dual_feasible,
        primal_objective: LpProblem::evaluate(&lp.objective, x),
        dual_objective: lp
            .constraints
            .iter()
            .zip(y)
            .map(|(row, yi)| &row.rhs * yi)
            .sum(),
    }
}

/// Variables for the users outside `S̄`, in global index order.
fn outside_variables(
    lp: &mut LpProblem,
    inst: &Instance,
    sbar: UserSet,
    prefix: &str,
) -> Vec<Option<usize>> {
    let topo = inst.topology();
    (0..inst.num_users())
        .map(|i| {
            (!sbar.contains(i)).then(|| {
                let id = topo.user(i);
                lp.add_variable(format!("{prefix}_{{{},{}}}", id.u, id.v))
            })
        })
        .collect()
}

fn sum_over(vars: &[Option<usize>], set: UserSet) -> LinearForm {
    set.iter()
        .filter_map(|i| vars[i].map(|v| (v, Rational::one())))
        .collect()
}

/// Saturating triples that protect something: `S_m ∩ K_u ≠ ∅`.
pub fn protecting_triples<'a>(
    inst: &'a Instance,
    report: &'a AuxReport,
) -> impl Iterator<Item = &'a Triple> + 'a {
    report.a_saturating.iter().filter(move |t| {
        let s = inst.security_sets()[t.m - 1];
        !s.is_disjoint(inst.topology().cluster(t.u - 1))
    })
}

/// Covering rows over `K \ ((S_m ∩ K_u) ∪ T_n)` for every protecting saturating triple.
fn add_relay_rows(lp: &mut LpProblem, inst: &Instance, report: &AuxReport, vars: &[Option<usize>]) {
    let all = inst.topology().all_users();
    for t in protecting_triples(inst, report) {
        let view = crate::analysis::relay_view(inst, *t);
        lp.add_constraint(
            sum_over(vars, all.difference(view)),
            Rational::one(),
            format!("relay {t}"),
        );
    }
}

/// The min-max program for `b*`, in epigraph form with variable `t` last.
pub fn build_minmax_lp(inst: &Instance, report: &AuxReport) -> LpProblem {
    let mut lp = LpProblem::default();
    let vars = outside_variables(&mut lp, inst, report.s_total, "b");
    add_relay_rows(&mut lp, inst, report, &vars);
    let t = lp.add_variable("t");
    lp.objective = vec![(t, Rational::one())];
    let mut seen = BTreeSet::new();
    for tr in protecting_triples(inst, report) {
        if !seen.insert(tr.n) {
            continue;
        }
        let tn = inst.collusion_sets()[tr.n - 1];
        let mut form: LinearForm = sum_over(&vars, tn.difference(report.s_total))
            .into_iter()
            .map(|(i, c)| (i, -c))
            .collect();
        if form.is_empty() {
            continue;
        }
        form.push((t, Rational::one()));
        lp.add_constraint(form, Rational::zero(), format!("epigraph n={}", tr.n));
    }
    lp
}

/// The min-sum program for `l*`.
pub fn build_minsum_lp(inst: &Instance, report: &AuxReport) -> LpProblem {
    let mut lp = LpProblem::default();
    let vars = outside_variables(&mut lp, inst, report.s_total, "l");
    add_relay_rows(&mut lp, inst, report, &vars);
    let all = inst.topology().all_users();
    for p in &report.e_saturating {
        let info = report.pair(*p);
        if info.relays.is_empty() || info.full {
            continue;
        }
        lp.add_constraint(
            sum_over(&vars, all.difference(info.covered)),
            Rational::one(),
            format!("server {p}"),
        );
    }
    lp.objective = (0..lp.variables.len())
        .map(|i| (i, Rational::one()))
        .collect();
    lp
}
