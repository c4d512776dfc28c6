#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wshsa::analysis::{self, ConditionClass};
use wshsa::gf::{Field, Matrix};
use wshsa::ratlp::{LpProblem, LpSolution};
use wshsa::scheme::LinearScheme;
use wshsa::security::Views;
use wshsa::{fixtures, Instance, Rational};

/// Solves the square system `m·x = rhs`, or `None` when singular.
fn solve_square(mut m: Vec<Vec<Rational>>, mut rhs: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                let pivot_row = m[col].clone();
                for (x, p) in m[r].iter_mut().zip(&pivot_row).skip(col) {
                    *x = &*x - &(&f * p);
                }
                let d = &f * &rhs[col];
                rhs[r] = &rhs[r] - &d;
            }
        }
    }
    Some((0..n).map(|i| &rhs[i] / &m[i][i]).collect())
}

fn choose(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum of `c·x` over `{A x ≥ b, x ≥ 0}` by enumerating every basic
/// feasible point. The region is pointed, so a finite optimum sits on a vertex.
pub fn vertex_enumeration(lp: &LpProblem) -> Option<Rational> {
    let n = lp.variables.len();
    let c = lp.dense_objective();
    let mut rows = lp.dense_rows();
    let mut rhs: Vec<Rational> = lp.constraints.iter().map(|r| r.rhs.clone()).collect();
    for j in 0..n {
        let mut e = vec![Rational::zero(); n];
        e[j] = Rational::one();
        rows.push(e);
        rhs.push(Rational::zero());
    }
    let dot =
        |a: &[Rational], x: &[Rational]| -> Rational { a.iter().zip(x).map(|(p, q)| p * q).sum() };
    let mut best: Option<Rational> = None;
    for basis in choose(rows.len(), n) {
        let m = basis.iter().map(|&i| rows[i].clone()).collect();
        let b = basis.iter().map(|&i| rhs[i].clone()).collect();
        let Some(x) = solve_square(m, b) else {
            continue;
        };
        if rows.iter().zip(&rhs).all(|(r, b)| &dot(r, &x) >= b) {
            let v = dot(&c, &x);
            if best.as_ref().is_none_or(|b| &v < b) {
                best = Some(v);
            }
        }
    }
    best
}

/// Checks `y ≥ 0`, `Aᵀy ≤ c` and `bᵀy = c·x` directly.
pub fn dual_matches(lp: &LpProblem, sol: &LpSolution) -> bool {
    let a = lp.dense_rows();
    let c = lp.dense_objective();
    let y = &sol.duals;
    if y.len() != a.len() || y.iter().any(Rational::is_negative) {
        return false;
    }
    let feasible = (0..c.len()).all(|j| {
        let s: Rational = a.iter().zip(y).map(|(row, yi)| &row[j] * yi).sum();
        s <= c[j]
    });
    let dual: Rational = lp
        .constraints
        .iter()
        .zip(y)
        .map(|(r, yi)| &r.rhs * yi)
        .sum();
    let primal: Rational = c.iter().zip(&sol.assignment).map(|(p, q)| p * q).sum();
    feasible && dual == primal && primal == sol.objective_value
}

/// A uniformly random zero-sum linear scheme; it need not be secure.
pub fn random_scheme(inst: &Instance, q: u64, l: usize, lz: usize, seed: u64) -> LinearScheme {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = Field::new(q).unwrap();
    let k = inst.num_users();
    let mut maps: Vec<Matrix> = (0..k - 1)
        .map(|_| {
            let rows: Vec<Vec<u64>> = (0..l)
                .map(|_| (0..lz).map(|_| rng.gen_range(0..q)).collect())
                .collect();
            Matrix::from_rows(field, lz, &rows).unwrap()
        })
        .collect();
    let mut last = Matrix::zeros(field, l, lz);
    for g in &maps {
        last = last.sub(g).unwrap();
    }
    maps.push(last);
    LinearScheme::new(field, l, lz, inst.topology().users().collect(), maps).unwrap()
}

/// One relay or server constraint as `(label, A, B, C)` for `I(A; B | C)`.
pub fn constraint_observables(
    inst: &Instance,
    scheme: &LinearScheme,
) -> Vec<(String, Matrix, Matrix, Matrix)> {
    let v = Views::new(inst, scheme).unwrap();
    let mut out = Vec::new();
    for (mi, &s) in inst.security_sets().iter().enumerate() {
        for (ni, &t) in inst.collusion_sets().iter().enumerate() {
            let b = v.w_set(s);
            let c = v.wz_set(t);
            for u in 0..inst.num_clusters() {
                let a = v.x_set(inst.topology().cluster(u));
                out.push((
                    format!("relay u={} m={} n={}", u + 1, mi + 1, ni + 1),
                    a,
                    b.clone(),
                    c.clone(),
                ));
            }
            let mut server_c = v.sum_w();
            server_c.push_rows(&c);
            out.push((
                format!("server m={} n={}", mi + 1, ni + 1),
                v.y_all(),
                b,
                server_c,
            ));
        }
    }
    out
}

/// Seeded random instances with `U ≤ 3` and `K ≤ 6`, split by class.
pub struct Corpus {
    pub exact: Vec<(u64, Instance)>,
    pub bounded: Vec<(u64, Instance)>,
    pub infeasible: usize,
}

pub fn corpus(min_exact: usize, max_bounded: usize) -> Corpus {
    let mut c = Corpus {
        exact: Vec::new(),
        bounded: Vec::new(),
        infeasible: 0,
    };
    let mut seed = 0;
    while c.exact.len() < min_exact {
        let inst = fixtures::random_instance(seed, 3, 6);
        let report = analysis::quantities(&inst);
        match analysis::classify(&report, &inst) {
            ConditionClass::Infeasible => c.infeasible += 1,
            ConditionClass::C3 => {
                if c.bounded.len() < max_bounded {
                    c.bounded.push((seed, inst));
                }
            }
            _ => c.exact.push((seed, inst)),
        }
        seed += 1;
    }
    c
}
