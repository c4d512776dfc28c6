//! Exact security verification for linear schemes.
//!
//! Every observable is a matrix whose rows are linear combinations of the
//! global source vector: the `K·L` input symbols (user-major) followed by the
//! `Lz` source key symbols. With all of them uniform and independent, the
//! entropy of an observable in units of `log q` is its rank, so conditional
//! mutual information reduces to four ranks. The exhaustive oracle recomputes
//! the same quantities from joint histograms as an independent check.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{self, AuxReport, Pair, Triple};
use crate::gf::{Field, Matrix};
use crate::model::{Instance, UserSet};
use crate::scheme::{LinearScheme, SchemeError};

/// Default joint-state budget for [`exhaustive_mi`].
pub const DEFAULT_STATE_BUDGET: u64 = 1 << 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SecurityError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("enumeration needs {states} states, budget is {budget}")]
    BudgetExceeded { states: u128, budget: u64 },
    #[error("observables have {0} and {1} columns")]
    ColumnMismatch(usize, usize),
}

/// Observables of one scheme, built as rows over the global source vector.
pub struct Views<'a> {
    scheme: &'a LinearScheme,
    k: usize,
    clusters: Vec<UserSet>,
}

impl<'a> Views<'a> {
    pub fn new(inst: &Instance, scheme: &'a LinearScheme) -> Result<Self, SchemeError> {
        scheme.check_matches(inst)?;
        let topo = inst.topology();
        Ok(Views {
            scheme,
            k: inst.num_users(),
            clusters: (0..topo.num_clusters()).map(|c| topo.cluster(c)).collect(),
        })
    }

    pub fn field(&self) -> Field {
        self.scheme.field()
    }

    /// `K·L + Lz`.
    pub fn width(&self) -> usize {
        self.k * self.scheme.l() + self.scheme.lz()
    }

    pub fn empty(&self) -> Matrix {
        Matrix::zeros(self.field(), 0, self.width())
    }

    /// Rows of `W_i`.
    pub fn w(&self, i: usize) -> Matrix {
        let l = self.scheme.l();
        Matrix::identity(self.field(), l).embed_columns(self.width(), i * l)
    }

    /// Rows of `Z_i`.
    pub fn z(&self, i: usize) -> Matrix {
        self.scheme
            .key_map(i)
            .embed_columns(self.width(), self.k * self.scheme.l())
    }

    /// Rows of `X_i = W_i + Z_i`.
    pub fn x(&self, i: usize) -> Matrix {
        self.w(i).add(&self.z(i)).expect("same shape")
    }

    /// Rows of `Y_u`, `u` 0-based.
    pub fn y(&self, u: usize) -> Matrix {
        let mut acc = Matrix::zeros(self.field(), self.scheme.l(), self.width());
        for i in self.clusters[u].iter() {
            acc = acc.add(&self.x(i)).expect("same shape");
        }
        acc
    }

    /// Rows of `Σ_i W_i`.
    pub fn sum_w(&self) -> Matrix {
        let mut acc = Matrix::zeros(self.field(), self.scheme.l(), self.width());
        for i in 0..self.k {
            acc = acc.add(&self.w(i)).expect("same shape");
        }
        acc
    }

    fn stack(&self, f: impl Fn(usize) -> Matrix, set: UserSet) -> Matrix {
        let mut m = self.empty();
        for i in set.iter() {
            m.push_rows(&f(i));
        }
        m
    }

    pub fn w_set(&self, set: UserSet) -> Matrix {
        self.stack(|i| self.w(i), set)
    }

    pub fn z_set(&self, set: UserSet) -> Matrix {
        self.stack(|i| self.z(i), set)
    }

    pub fn x_set(&self, set: UserSet) -> Matrix {
        self.stack(|i| self.x(i), set)
    }

    /// `(W, Z)` of every member.
    pub fn wz_set(&self, set: UserSet) -> Matrix {
        let mut m = self.w_set(set);
        m.push_rows(&self.z_set(set));
        m
    }

    /// All relay messages.
    pub fn y_all(&self) -> Matrix {
        let mut m = self.empty();
        for u in 0..self.clusters.len() {
            m.push_rows(&self.y(u));
        }
        m
    }
}

/// `H(obs)` in symbols.
pub fn rank_entropy(obs: &Matrix) -> usize {
    obs.rank()
}

fn stacked(parts: &[&Matrix]) -> Matrix {
    let first = parts[0];
    Matrix::vstack(first.field(), first.cols(), parts).expect("matching columns")
}

/// `I(A; B | C)` in symbols for jointly linear uniform sources.
pub fn conditional_mi(a: &Matrix, b: &Matrix, c: &Matrix) -> usize {
    let ac = stacked(&[a, c]).rank();
    let bc = stacked(&[b, c]).rank();
    let abc = stacked(&[a, b, c]).rank();
    let cr = c.rank();
    ac + bc - abc - cr
}

/// Conditional entropy `H(A | C)` in symbols.
pub fn conditional_entropy(a: &Matrix, c: &Matrix) -> usize {
    stacked(&[a, c]).rank() - c.rank()
}

/// One relay-security constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayCheck {
    pub triple: Triple,
    pub cmi: usize,
}

/// One server-security constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerCheck {
    pub pair: Pair,
    pub cmi: usize,
}

/// Outcome of [`verify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityReport {
    pub relay: Vec<RelayCheck>,
    pub server: Vec<ServerCheck>,
    /// `Σ_u Y_u − Σ W` is the zero map.
    pub correct: bool,
    /// `H(Z_K)` in symbols.
    pub key_entropy: usize,
    pub l: usize,
    /// Pairs skipped because `S_m ⊆ T_n`.
    pub skipped_pairs: usize,
    pub all_pass: bool,
}

impl SecurityReport {
    pub fn violations(&self) -> usize {
        self.relay.iter().filter(|c| c.cmi > 0).count()
            + self.server.iter().filter(|c| c.cmi > 0).count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("correctness: {}\n", pass(self.correct)));
        out.push_str(&format!("relay_constraints: {}\n", self.relay.len()));
        out.push_str(&format!("server_constraints: {}\n", self.server.len()));
        out.push_str(&format!("skipped_pairs: {}\n", self.skipped_pairs));
        out.push_str(&format!("violations: {}\n", self.violations()));
        for c in &self.relay {
            out.push_str(&format!(
                "relay {}: cmi={} {}\n",
                c.triple,
                c.cmi,
                pass(c.cmi == 0)
            ));
        }
        for c in &self.server {
            out.push_str(&format!(
                "server {}: cmi={} {}\n",
                c.pair,
                c.cmi,
                pass(c.cmi == 0)
            ));
        }
        out.push_str(&format!("security: {}\n", pass(self.all_pass)));
        out
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Evaluates correctness and every relay and server security constraint.
pub fn verify(inst: &Instance, scheme: &LinearScheme) -> Result<SecurityReport, SchemeError> {
    let views = Views::new(inst, scheme)?;
    let num_clusters = inst.num_clusters();
    let y_all = views.y_all();
    let sum_w = views.sum_w();

    let mut y_total = Matrix::zeros(views.field(), scheme.l(), views.width());
    for u in 0..num_clusters {
        y_total = y_total.add(&views.y(u)).expect("same shape");
    }
    let correct = y_total.sub(&sum_w).expect("same shape").is_zero();

    let x_clusters: Vec<Matrix> = (0..num_clusters)
        .map(|u| views.x_set(inst.topology().cluster(u)))
        .collect();
    let colluders: Vec<Matrix> = inst
        .collusion_sets()
        .iter()
        .map(|t| views.wz_set(*t))
        .collect();

    let per_m: Vec<(Vec<RelayCheck>, Vec<ServerCheck>, usize)> = inst
        .security_sets()
        .par_iter()
        .enumerate()
        .map(|(mi, &s)| {
            let b = views.w_set(s);
            let mut relay = Vec::new();
            let mut server = Vec::new();
            let mut skipped = 0;
            for (ni, &t) in inst.collusion_sets().iter().enumerate() {
                if s.is_subset(t) {
                    skipped += 1;
                    continue;
                }
                let c = &colluders[ni];
                for (u, a) in x_clusters.iter().enumerate() {
                    relay.push(RelayCheck {
                        triple: Triple {
                            u: u + 1,
                            m: mi + 1,
                            n: ni + 1,
                        },
                        cmi: conditional_mi(a, &b, c),
                    });
                }
                let server_c = stacked(&[&sum_w, c]);
                server.push(ServerCheck {
                    pair: Pair {
                        m: mi + 1,
                        n: ni + 1,
                    },
                    cmi: conditional_mi(&y_all, &b, &server_c),
                });
            }
            (relay, server, skipped)
        })
        .collect();

    let mut relay = Vec::new();
    let mut server = Vec::new();
    let mut skipped_pairs = 0;
    for (r, s, k) in per_m {
        relay.extend(r);
        server.extend(s);
        skipped_pairs += k;
    }
    let all_pass = correct && relay.iter().all(|c| c.cmi == 0) && server.iter().all(|c| c.cmi == 0);
    Ok(SecurityReport {
        relay,
        server,
        correct,
        key_entropy: scheme.total_key_rank(),
        l: scheme.l(),
        skipped_pairs,
        all_pass,
    })
}

/// Shannon conditional mutual information from exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExhaustiveMi {
    /// Value in units of `log q`.
    pub value: f64,
    pub states: u64,
}

impl ExhaustiveMi {
    /// The value rounded to an integer, if it is one to within `1e-9`.
    pub fn as_integer(&self) -> Option<usize> {
        let r = self.value.round();
        ((self.value - r).abs() < 1e-9 && r >= 0.0).then_some(r as usize)
    }
}

/// Computes `I(A; B | C)` by enumerating every realization of the source
/// vector and tallying the joint histograms.
pub fn exhaustive_mi(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    budget: u64,
) -> Result<ExhaustiveMi, SecurityError> {
    let width = a.cols();
    for m in [b, c] {
        if m.cols() != width {
            return Err(SecurityError::ColumnMismatch(width, m.cols()));
        }
    }
    let q = a.field().modulus();
    let states = (q as u128).checked_pow(width as u32).unwrap_or(u128::MAX);
    if states > budget as u128 {
        return Err(SecurityError::BudgetExceeded { states, budget });
    }
    let states = states as u64;
    type Counts<K> = HashMap<K, u64>;
    let mut h_ac: Counts<(Vec<u64>, Vec<u64>)> = HashMap::new();
    let mut h_bc: Counts<(Vec<u64>, Vec<u64>)> = HashMap::new();
    let mut h_abc: Counts<(Vec<u64>, Vec<u64>, Vec<u64>)> = HashMap::new();
    let mut h_c: Counts<Vec<u64>> = HashMap::new();
    let mut x = vec![0u64; width];
    for _ in 0..states {
        let va = a.apply(&x);
        let vb = b.apply(&x);
        let vc = c.apply(&x);
        *h_ac.entry((va.clone(), vc.clone())).or_default() += 1;
        *h_bc.entry((vb.clone(), vc.clone())).or_default() += 1;
        *h_abc.entry((va, vb, vc.clone())).or_default() += 1;
        *h_c.entry(vc).or_default() += 1;
        for digit in x.iter_mut() {
            *digit += 1;
            if *digit < q {
                break;
            }
            *digit = 0;
        }
    }
    let total = states as f64;
    let entropy = |counts: &mut dyn Iterator<Item = u64>| -> f64 {
        counts
            .map(|n| {
                let p = n as f64 / total;
                -p * p.ln()
            })
            .sum::<f64>()
            / (q as f64).ln()
    };
    let value = entropy(&mut h_ac.values().copied()) + entropy(&mut h_bc.values().copied())
        - entropy(&mut h_abc.values().copied())
        - entropy(&mut h_c.values().copied());
    Ok(ExhaustiveMi { value, states })
}

/// Which inequality an audit entry checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lemma {
    /// `H(X_{u,v} | (W,Z) of everyone else) ≥ L`.
    MessageX,
    /// `H(Y_u | (W,Z) of everyone but (u,v)) ≥ L`.
    MessageY,
    /// `H(Z outside (S_m ∩ K_u) ∪ T_n | Z_{T_n}) ≥ L`.
    RemainderX,
    /// `H(Z outside K_{U^(m,n)} ∪ T_n | Z_{T_n}) ≥ L`.
    RemainderY,
    /// The single leftover user of a `K − 1` relay view holds `L` fresh symbols.
    LeftoverX,
    /// The single leftover user of a `K − 1` server view holds `L` fresh symbols.
    LeftoverY,
    /// `H(Z_{S_m ∩ K_u} | Z_{T_n}) ≥ |S_m ∩ K_u| L`.
    ExplicitX,
    /// `H(Z_{K_{U^(m,n)}} | Z_{T_n}) ≥ (|U^(m,n)| − 1{full}) L`.
    ExplicitY,
    /// `H(Z_{A_{u,m,n}} | Z_{T_n \ S̄}) ≥ |A_{u,m,n}| L`.
    TotalX,
    /// `H(Z_{E_{m,n}} | Z_{T_n \ S̄}) ≥ |T_n ∩ S̄| L + (|U^(m,n)| − 1{full}) L`.
    TotalY,
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Lemma::MessageX => "message_x",
            Lemma::MessageY => "message_y",
            Lemma::RemainderX => "remainder_x",
            Lemma::RemainderY => "remainder_y",
            Lemma::LeftoverX => "leftover_x",
            Lemma::LeftoverY => "leftover_y",
            Lemma::ExplicitX => "explicit_x",
            Lemma::ExplicitY => "explicit_y",
            Lemma::TotalX => "total_x",
            Lemma::TotalY => "total_y",
        };
        f.write_str(s)
    }
}

/// One audited inequality `lhs ≥ bound`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaCheck {
    pub lemma: Lemma,
    pub context: String,
    pub lhs: usize,
    pub bound: usize,
}

impl LemmaCheck {
    pub fn slack(&self) -> i64 {
        self.lhs as i64 - self.bound as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LemmaAudit {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaAudit {
    pub fn violations(&self) -> Vec<&LemmaCheck> {
        self.checks.iter().filter(|c| c.slack() < 0).collect()
    }

    pub fn count(&self, lemma: Lemma) -> usize {
        self.checks.iter().filter(|c| c.lemma == lemma).count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("lemma_checks: {}\n", self.checks.len()));
        out.push_str(&format!("lemma_violations: {}\n", self.violations().len()));
        for c in &self.checks {
            out.push_str(&format!(
                "{} {}: lhs={} bound={} slack={} {}\n",
                c.lemma,
                c.context,
                c.lhs,
                c.bound,
                c.slack(),
                pass(c.slack() >= 0)
            ));
        }
        out
    }
}

/// Evaluates every applicable converse inequality on a scheme.
pub fn audit_lemmas(inst: &Instance, scheme: &LinearScheme) -> Result<LemmaAudit, SchemeError> {
    let report = analysis::quantities(inst);
    audit_lemmas_with(inst, &report, scheme)
}

/// [`audit_lemmas`] with a precomputed report.
pub fn audit_lemmas_with(
    inst: &Instance,
    report: &AuxReport,
    scheme: &LinearScheme,
) -> Result<LemmaAudit, SchemeError> {
    let views = Views::new(inst, scheme)?;
    let topo = inst.topology();
    let k = inst.num_users();
    let l = scheme.l();
    let all = topo.all_users();
    let sbar = report.s_total;
    let mut checks = Vec::new();

    for i in 0..k {
        let others = views.wz_set(all.difference(UserSet::singleton(i)));
        let id = topo.user(i);
        checks.push(LemmaCheck {
            lemma: Lemma::MessageX,
            context: format!("user={id}"),
            lhs: conditional_entropy(&views.x(i), &others),
            bound: l,
        });
        checks.push(LemmaCheck {
            lemma: Lemma::MessageY,
            context: format!("user={id}"),
            lhs: conditional_entropy(&views.y(topo.cluster_of(i)), &others),
            bound: l,
        });
    }

    let h = |a: UserSet, c: UserSet| conditional_entropy(&views.z_set(a), &views.z_set(c));
    let pair_checks: Vec<Vec<LemmaCheck>> = report
        .pairs
        .par_iter()
        .filter(|p| p.disjoint)
        .map(|p| {
            let mut out = Vec::new();
            let s = inst.security_sets()[p.pair.m - 1];
            let t = inst.collusion_sets()[p.pair.n - 1];
            let small = s.union(t).len() < k;
            for c in 0..topo.num_clusters() {
                let sk = s.intersection(topo.cluster(c));
                let view = sk.union(t);
                let ctx = Triple {
                    u: c + 1,
                    m: p.pair.m,
                    n: p.pair.n,
                }
                .to_string();
                if view.len() < k {
                    if !sk.is_empty() {
                        out.push(LemmaCheck {
                            lemma: Lemma::RemainderX,
                            context: ctx.clone(),
                            lhs: h(all.difference(view), t),
                            bound: l,
                        });
                        if view.len() + 1 == k {
                            out.push(LemmaCheck {
                                lemma: Lemma::LeftoverX,
                                context: ctx.clone(),
                                lhs: h(all.difference(view), t),
                                bound: l,
                            });
                        }
                    }
                    out.push(LemmaCheck {
                        lemma: Lemma::ExplicitX,
                        context: ctx.clone(),
                        lhs: h(sk, t),
                        bound: sk.len() * l,
                    });
                }
                if small {
                    let a = view.intersection(sbar);
                    out.push(LemmaCheck {
                        lemma: Lemma::TotalX,
                        context: ctx,
                        lhs: h(a, t.difference(sbar)),
                        bound: a.len() * l,
                    });
                }
            }
            let ctx = p.pair.to_string();
            let relays = p.relays.len();
            let server_share = relays.saturating_sub(usize::from(p.full));
            if !p.relays.is_empty() && !p.full {
                out.push(LemmaCheck {
                    lemma: Lemma::RemainderY,
                    context: ctx.clone(),
                    lhs: h(all.difference(p.covered), t),
                    bound: l,
                });
                if p.covered.len() + 1 == k {
                    out.push(LemmaCheck {
                        lemma: Lemma::LeftoverY,
                        context: ctx.clone(),
                        lhs: h(all.difference(p.covered), t),
                        bound: l,
                    });
                }
            }
            out.push(LemmaCheck {
                lemma: Lemma::ExplicitY,
                context: ctx.clone(),
                lhs: h(topo.clusters(p.relays), t),
                bound: server_share * l,
            });
            if small {
                out.push(LemmaCheck {
                    lemma: Lemma::TotalY,
                    context: ctx,
                    lhs: h(p.e_set, t.difference(sbar)),
                    bound: (t.intersection(sbar).len() + server_share) * l,
                });
            }
            out
        })
        .collect();
    checks.extend(pair_checks.into_iter().flatten());
    Ok(LemmaAudit { checks })
}
