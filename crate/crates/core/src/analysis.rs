//! Derived set quantities of an instance and its condition classification.
//!
//! Everything here is exact set arithmetic over [`UserSet`] bitmasks. Pairs
//! `(m, n)` with `S_m ∩ T_n ≠ ∅` are kept in [`AuxReport::pairs`] for display
//! but skipped by every maximum, argmax list and implicit-set union: the
//! converse bounds those quantities come from only apply to disjoint pairs,
//! and monotone families always contain the disjoint sub-pair `(S_m \ T_n, T_n)`.
//!
//! All public identifiers `u`, `m`, `n` are 1-based.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::model::{Instance, RelaySet, UserSet};

/// A relay/security/collusion triple `(u, m, n)`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Triple {
    pub u: usize,
    pub m: usize,
    pub n: usize,
}

/// A security/collusion pair `(m, n)`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Pair {
    pub m: usize,
    pub n: usize,
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(u={},m={},n={})", self.u, self.m, self.n)
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(m={},n={})", self.m, self.n)
    }
}

/// Per-pair data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairInfo {
    pub pair: Pair,
    /// `S_m ∩ T_n = ∅`.
    pub disjoint: bool,
    /// `U^(m,n)`.
    pub relays: RelaySet,
    /// `K_{U^(m,n)} ∪ T_n`.
    pub covered: UserSet,
    /// `|K_{U^(m,n)} ∪ T_n| = K`.
    pub full: bool,
    /// `E_{m,n}`.
    pub e_set: UserSet,
    /// `|U^(m,n)| + |T_n ∩ S̄|`.
    pub d_value: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConditionClass {
    Infeasible,
    C1Case2,
    C1Case3,
    C1Case4,
    C2,
    C3,
}

impl fmt::Display for ConditionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConditionClass::Infeasible => "Infeasible",
            ConditionClass::C1Case2 => "C1Case2",
            ConditionClass::C1Case3 => "C1Case3",
            ConditionClass::C1Case4 => "C1Case4",
            ConditionClass::C2 => "C2",
            ConditionClass::C3 => "C3",
        };
        f.write_str(s)
    }
}

/// All auxiliary quantities of an instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxReport {
    pub num_users: usize,
    pub num_collusion_sets: usize,
    /// One entry per `(m, n)`, in `m`-major order.
    pub pairs: Vec<PairInfo>,
    /// `S_I1`.
    pub s_implicit_relay: UserSet,
    /// `S_I2`.
    pub s_implicit_server: UserSet,
    /// `S_I`.
    pub s_implicit: UserSet,
    /// `S̄`.
    pub s_total: UserSet,
    pub a_star: usize,
    /// Maximum `|E_{m,n}|` over all disjoint pairs.
    pub e_star: usize,
    /// Maximum `|E_{m,n}|` over disjoint pairs with `|U^(m,n)| ≥ 2`; used by
    /// the classifier (for a single relay `E_{m,n}` is an `A` set).
    pub e_star_server: usize,
    pub d_star: usize,
    /// `max (|U^(m,n)| + |T_n ∩ S̄| − 1{full coverage})`.
    pub d_adj: usize,
    pub q1: UserSet,
    pub q2: UserSet,
    pub q3: UserSet,
    pub q: UserSet,
    /// Triples with `|A_{u,m,n}| = |S̄|`.
    pub a_saturating: Vec<Triple>,
    /// Pairs with `|E_{m,n}| = |S̄|`.
    pub e_saturating: Vec<Pair>,
    /// Pairs attaining `d*`.
    pub d_argmax: Vec<Pair>,
    /// Pairs whose `d` value equals `max(a*, d*)`.
    pub q3_pairs: Vec<Pair>,
}

impl AuxReport {
    pub fn pair(&self, p: Pair) -> &PairInfo {
        &self.pairs[(p.m - 1) * self.num_collusion_sets + (p.n - 1)]
    }

    /// True iff every pair attaining `d*` is fully covered.
    pub fn d_star_only_full(&self) -> bool {
        !self.d_argmax.is_empty() && self.d_argmax.iter().all(|p| self.pair(*p).full)
    }
}

/// `U^(m,n)`, with `m` and `n` 1-based.
pub fn security_relay_set(inst: &Instance, m: usize, n: usize) -> RelaySet {
    relay_set_of(
        inst,
        inst.security_sets()[m - 1],
        inst.collusion_sets()[n - 1],
    )
}

fn relay_set_of(inst: &Instance, s: UserSet, t: UserSet) -> RelaySet {
    let topo = inst.topology();
    let covered = s.union(t);
    let mut relays = RelaySet::default();
    for c in 0..topo.num_clusters() {
        let kc = topo.cluster(c);
        if !s.is_disjoint(kc) && kc.is_subset(covered) {
            relays.insert(c);
        }
    }
    relays
}

/// `A_{u,m,n}` before intersecting with `S̄`: `(S_m ∩ K_u) ∪ T_n`.
pub fn relay_view(inst: &Instance, t: Triple) -> UserSet {
    let s = inst.security_sets()[t.m - 1];
    let tn = inst.collusion_sets()[t.n - 1];
    s.intersection(inst.topology().cluster(t.u - 1)).union(tn)
}

/// `(S_I1, S_I2, S_I, S̄)`.
///
/// Only disjoint pairs contribute, and only when something is protected:
/// a relay triple needs `S_m ∩ K_u ≠ ∅`, a server pair needs `U^(m,n) ≠ ∅`.
pub fn total_security_set(inst: &Instance) -> (UserSet, UserSet, UserSet, UserSet) {
    let topo = inst.topology();
    let k = inst.num_users();
    let all = topo.all_users();
    let explicit = inst.explicit_security_union();
    let mut s_i1 = UserSet::EMPTY;
    let mut s_i2 = UserSet::EMPTY;
    for &s in inst.security_sets() {
        for &t in inst.collusion_sets() {
            if !s.is_disjoint(t) {
                continue;
            }
            for c in 0..topo.num_clusters() {
                let sk = s.intersection(topo.cluster(c));
                let view = sk.union(t);
                if !sk.is_empty() && view.len() + 1 == k {
                    s_i1 = s_i1.union(all.difference(view));
                }
            }
            let relays = relay_set_of(inst, s, t);
            let covered = topo.clusters(relays).union(t);
            if !relays.is_empty() && covered.len() + 1 == k {
                s_i2 = s_i2.union(all.difference(covered));
            }
        }
    }
    let s_i1 = s_i1.difference(explicit);
    let s_i2 = s_i2.difference(explicit);
    let s_i = s_i1.union(s_i2);
    (s_i1, s_i2, s_i, explicit.union(s_i))
}

/// Pairs for one `S_m`, plus `(triple, |A|, view)` for its disjoint triples.
type PerSecuritySet = (Vec<PairInfo>, Vec<(Triple, usize, UserSet)>);

/// Computes every auxiliary quantity.
pub fn quantities(inst: &Instance) -> AuxReport {
    let topo = inst.topology();
    let k = inst.num_users();
    let (s_i1, s_i2, s_i, s_total) = total_security_set(inst);
    let sbar = s_total.len();
    let security = inst.security_sets();
    let collusion = inst.collusion_sets();

    let per_m: Vec<PerSecuritySet> = security
        .par_iter()
        .enumerate()
        .map(|(mi, &s)| {
            let mut pairs = Vec::with_capacity(collusion.len());
            let mut triples = Vec::new();
            for (ni, &t) in collusion.iter().enumerate() {
                let relays = relay_set_of(inst, s, t);
                let covered = topo.clusters(relays).union(t);
                let disjoint = s.is_disjoint(t);
                pairs.push(PairInfo {
                    pair: Pair {
                        m: mi + 1,
                        n: ni + 1,
                    },
                    disjoint,
                    relays,
                    covered,
                    full: covered.len() == k,
                    e_set: covered.intersection(s_total),
                    d_value: relays.len() + t.intersection(s_total).len(),
                });
                if disjoint {
                    for c in 0..topo.num_clusters() {
                        let view = s.intersection(topo.cluster(c)).union(t);
                        let a = view.intersection(s_total).len();
                        let id = Triple {
                            u: c + 1,
                            m: mi + 1,
                            n: ni + 1,
                        };
                        triples.push((id, a, view));
                    }
                }
            }
            (pairs, triples)
        })
        .collect();

    let mut pairs = Vec::with_capacity(security.len() * collusion.len());
    let mut triples = Vec::new();
    for (p, t) in per_m {
        pairs.extend(p);
        triples.extend(t);
    }
    let disjoint = || pairs.iter().filter(|p| p.disjoint);

    let a_star = triples.iter().map(|t| t.1).max().unwrap_or(0);
    let e_star = disjoint().map(|p| p.e_set.len()).max().unwrap_or(0);
    let e_star_server = disjoint()
        .filter(|p| p.relays.len() >= 2)
        .map(|p| p.e_set.len())
        .max()
        .unwrap_or(0);
    let d_star = disjoint().map(|p| p.d_value).max().unwrap_or(0);
    let d_adj = disjoint()
        .map(|p| p.d_value.saturating_sub(usize::from(p.full)))
        .max()
        .unwrap_or(0);

    let mut q1 = UserSet::EMPTY;
    let mut a_saturating = Vec::new();
    for (id, a, view) in &triples {
        if *a == sbar {
            q1 = q1.union(*view);
            a_saturating.push(*id);
        }
    }
    let mut q2 = UserSet::EMPTY;
    let mut e_saturating = Vec::new();
    let mut q3 = UserSet::EMPTY;
    let mut q3_pairs = Vec::new();
    let mut d_argmax = Vec::new();
    let top = a_star.max(d_star);
    for p in disjoint() {
        if p.e_set.len() == sbar {
            q2 = q2.union(p.covered);
            e_saturating.push(p.pair);
        }
        if p.d_value == top {
            q3 = q3.union(p.covered);
            q3_pairs.push(p.pair);
        }
        if p.d_value == d_star {
            d_argmax.push(p.pair);
        }
    }
    a_saturating.sort();

    AuxReport {
        num_users: k,
        num_collusion_sets: collusion.len(),
        s_implicit_relay: s_i1,
        s_implicit_server: s_i2,
        s_implicit: s_i,
        s_total,
        a_star,
        e_star,
        e_star_server,
        d_star,
        d_adj,
        q1,
        q2,
        q3,
        q: q1.union(q2).union(q3),
        a_saturating,
        e_saturating,
        d_argmax,
        q3_pairs,
        pairs,
    }
}

/// Condition classification.
///
/// `C1Case2` applies when `d* > a*` and every pair attaining `d*` is fully
/// covered, so the rate is governed by the adjusted maximum `d_adj = d* − 1`.
/// When `d* ≤ a*` the adjustment cannot change `max(a*, ·)` and the remaining
/// conditions decide.
pub fn classify(report: &AuxReport, _inst: &Instance) -> ConditionClass {
    let k = report.num_users;
    let sbar = report.s_total.len();
    let a = report.a_star;
    let e = report.e_star_server;
    if a == k {
        return ConditionClass::Infeasible;
    }
    if report.d_star > a && report.d_star_only_full() {
        return ConditionClass::C1Case2;
    }
    if a.max(e) < sbar {
        return ConditionClass::C1Case3;
    }
    if report.q.len() < k {
        return ConditionClass::C1Case4;
    }
    if e < a {
        ConditionClass::C2
    } else {
        ConditionClass::C3
    }
}

/// Renders the report as `key: value` lines.
pub fn render(report: &AuxReport, inst: &Instance, class: ConditionClass) -> String {
    let topo = inst.topology();
    let show = |s: UserSet| s.display(topo);
    let list = |v: Vec<String>| {
        if v.is_empty() {
            "[]".to_string()
        } else {
            format!("[{}]", v.join(", "))
        }
    };
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(&v);
        out.push('\n');
    };
    line("num_users", report.num_users.to_string());
    line("num_security_sets", inst.security_sets().len().to_string());
    line(
        "num_collusion_sets",
        inst.collusion_sets().len().to_string(),
    );
    line("s_implicit_relay", show(report.s_implicit_relay));
    line("s_implicit_server", show(report.s_implicit_server));
    line("s_implicit", show(report.s_implicit));
    line("s_total", show(report.s_total));
    line("s_total_size", report.s_total.len().to_string());
    line("a_star", report.a_star.to_string());
    line("e_star", report.e_star.to_string());
    line("e_star_server", report.e_star_server.to_string());
    line("d_star", report.d_star.to_string());
    line("d_adj", report.d_adj.to_string());
    line("q1", show(report.q1));
    line("q2", show(report.q2));
    line("q3", show(report.q3));
    line("q", show(report.q));
    line("q_size", report.q.len().to_string());
    line(
        "a_saturating",
        list(report.a_saturating.iter().map(|t| t.to_string()).collect()),
    );
    line(
        "e_saturating",
        list(report.e_saturating.iter().map(|p| p.to_string()).collect()),
    );
    line(
        "d_argmax",
        list(
            report
                .d_argmax
                .iter()
                .map(|p| {
                    let info = report.pair(*p);
                    format!("{}{}", p, if info.full { "*" } else { "" })
                })
                .collect(),
        ),
    );
    line("class", class.to_string());
    out
}
