//! Optimal total key rate (or bounds) and per-user key-rate profiles.

use std::fmt;

use crate::analysis::{self, AuxReport, ConditionClass};
use crate::model::{Instance, UserId, UserSet};
use crate::ratlp::{self, LpProblem, LpSolution, LpStatus, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RateKind {
    Infeasible,
    Exact(Rational),
    Bounds { lower: Rational, upper: Rational },
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateKind::Infeasible => f.write_str("infeasible"),
            RateKind::Exact(r) => write!(f, "{r} (exact)"),
            RateKind::Bounds { lower, upper } => write!(f, "[{lower}, {upper}] (bounds)"),
        }
    }
}

/// Result of the rate computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateResult {
    pub kind: RateKind,
    pub class: ConditionClass,
    pub a_star: usize,
    /// The `d` term used in the formulas (`d_adj`, which equals `d*` outside `C1Case2`).
    pub d_used: usize,
    /// `b*` under C2, `l*` under C3.
    pub fractional: Option<Rational>,
    /// The program solved for `b*` or `l*`, with its solution.
    pub lp: Option<(LpProblem, LpSolution)>,
    /// Key rate per user, indexed by global user index.
    pub per_user_rates: Vec<Rational>,
}

impl RateResult {
    pub fn is_feasible(&self) -> bool {
        self.kind != RateKind::Infeasible
    }

    /// Rate a scheme should reach: the exact rate, or the upper bound.
    pub fn target(&self) -> Option<Rational> {
        match &self.kind {
            RateKind::Infeasible => None,
            RateKind::Exact(r) => Some(r.clone()),
            RateKind::Bounds { upper, .. } => Some(upper.clone()),
        }
    }

    pub fn lower(&self) -> Option<Rational> {
        match &self.kind {
            RateKind::Infeasible => None,
            RateKind::Exact(r) => Some(r.clone()),
            RateKind::Bounds { lower, .. } => Some(lower.clone()),
        }
    }

    /// True iff `rate` is the exact rate or lies within the bounds.
    pub fn admits(&self, rate: &Rational) -> bool {
        match &self.kind {
            RateKind::Infeasible => false,
            RateKind::Exact(r) => r == rate,
            RateKind::Bounds { lower, upper } => lower <= rate && rate <= upper,
        }
    }
}

/// Full pipeline from instance to rate.
pub fn optimal_rate(inst: &Instance) -> RateResult {
    let report = analysis::quantities(inst);
    let class = analysis::classify(&report, inst);
    rate_from_report(inst, &report, class)
}

/// Rate computation from an existing report.
pub fn rate_from_report(inst: &Instance, report: &AuxReport, class: ConditionClass) -> RateResult {
    let k = inst.num_users();
    let a = report.a_star;
    let d = report.d_adj;
    let base = Rational::from(a.max(d));
    let mut result = RateResult {
        kind: RateKind::Infeasible,
        class,
        a_star: a,
        d_used: d,
        fractional: None,
        lp: None,
        per_user_rates: vec![Rational::zero(); k],
    };
    match class {
        ConditionClass::Infeasible => return result,
        ConditionClass::C1Case2 | ConditionClass::C1Case3 | ConditionClass::C1Case4 => {
            result.kind = RateKind::Exact(base);
        }
        ConditionClass::C2 | ConditionClass::C3 => {
            let lp = if class == ConditionClass::C2 {
                ratlp::build_minmax_lp(inst, report)
            } else {
                ratlp::build_minsum_lp(inst, report)
            };
            let sol = ratlp::solve(&lp);
            assert_eq!(
                sol.status,
                LpStatus::Optimal,
                "rate program must be solvable:\n{lp}"
            );
            let frac = sol.objective_value.clone();
            result.kind = if class == ConditionClass::C2 {
                RateKind::Exact(&base + &frac)
            } else {
                RateKind::Bounds {
                    lower: base.clone(),
                    upper: &base + &frac,
                }
            };
            result.fractional = Some(frac);
            result.lp = Some((lp, sol));
        }
    }
    result.per_user_rates = profile(inst, report, &result);
    result
}

/// Per-user rates keyed by user id.
pub fn per_user_key_profile(inst: &Instance, result: &RateResult) -> Vec<(UserId, Rational)> {
    let topo = inst.topology();
    result
        .per_user_rates
        .iter()
        .enumerate()
        .map(|(i, r)| (topo.user(i), r.clone()))
        .collect()
}

/// Communication rates `(R_X, R_Y)` achieved by every scheme built here.
pub fn communication_rates(_inst: &Instance) -> (Rational, Rational) {
    (Rational::one(), Rational::one())
}

/// Users in `S̄` get a full key. Under C2/C3 users outside `S̄` get their LP
/// value, capped at 1. Under the `C1*` classes one extra user outside `Q ∪ S̄` gets a
/// full key when the rate equals `|S̄|` or some saturating row that is not fully
/// covered protects an input; otherwise users outside `S̄` get nothing.
fn profile(inst: &Instance, report: &AuxReport, result: &RateResult) -> Vec<Rational> {
    let k = inst.num_users();
    let sbar = report.s_total;
    let mut rates: Vec<Rational> = (0..k)
        .map(|i| {
            if sbar.contains(i) {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .collect();
    match result.class {
        ConditionClass::Infeasible => return vec![Rational::zero(); k],
        ConditionClass::C2 | ConditionClass::C3 => {
            let (_, sol) = result.lp.as_ref().expect("program solved");
            let mut var = 0;
            for (i, rate) in rates.iter_mut().enumerate() {
                if !sbar.contains(i) {
                    *rate = sol.assignment[var].clone().min(Rational::one());
                    var += 1;
                }
            }
        }
        _ => {
            let target = result.target().expect("feasible");
            let protecting_row = ratlp::protecting_triples(inst, report).next().is_some()
                || report.e_saturating.iter().any(|p| {
                    let info = report.pair(*p);
                    !info.relays.is_empty() && !info.full
                });
            let needs_extra =
                protecting_row || (target == Rational::from(sbar.len()) && !sbar.is_empty());
            if needs_extra {
                let outside = inst.topology().all_users().difference(sbar);
                let preferred = outside.difference(report.q);
                let pick = preferred.iter().next().or_else(|| outside.iter().next());
                if let Some(w) = pick {
                    rates[w] = Rational::one();
                }
            }
        }
    }
    rates
}

/// Users with a nonzero rate.
pub fn key_holders(result: &RateResult) -> UserSet {
    UserSet::from_indices(
        result
            .per_user_rates
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_zero())
            .map(|(i, _)| i),
    )
}

/// `key: value` lines for the rate section of a report.
pub fn render(result: &RateResult, inst: &Instance) -> String {
    let mut out = String::new();
    out.push_str(&format!("optimal_total_key_rate: {}\n", result.kind));
    if result.is_feasible() {
        out.push_str(&format!("a_star: {}\n", result.a_star));
        out.push_str(&format!("d_used: {}\n", result.d_used));
        if let Some(f) = &result.fractional {
            let name = if result.class == ConditionClass::C2 {
                "b_star"
            } else {
                "l_star"
            };
            out.push_str(&format!("{name}: {f}\n"));
        }
        let (rx, ry) = communication_rates(inst);
        out.push_str(&format!("rx: {rx}\nry: {ry}\n"));
        let profile: Vec<String> = per_user_key_profile(inst, result)
            .iter()
            .map(|(id, r)| format!("{id}={r}"))
            .collect();
        out.push_str(&format!("per_user_rates: [{}]\n", profile.join(", ")));
        if let Some((lp, sol)) = &result.lp {
            out.push_str("program:\n");
            for line in lp.to_string().lines() {
                out.push_str("  ");
                out.push_str(line);
                out.push('\n');
            }
            let values: Vec<String> = lp
                .variables
                .iter()
                .zip(&sol.assignment)
                .map(|(v, x)| format!("{v}={x}"))
                .collect();
            out.push_str(&format!("program_solution: [{}]\n", values.join(", ")));
        }
    }
    out
}
