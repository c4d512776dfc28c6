//! Linear key schemes: synthesis, import/export and protocol execution.
//!
//! A scheme over `F_q` assigns user `i` an `L x Lz` key map `G_i`, so its key
//! is `Z_i = G_i N` for a uniform source key `N ∈ F_q^{Lz}`. Users send
//! `X_i = W_i + Z_i`, relay `u` forwards `Y_u = Σ_{v} X_{u,v}` and the server
//! adds the relay messages. Keys always sum to zero, so the server recovers
//! `Σ W` exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{self, Field, GfError, Matrix};
use crate::model::{Instance, UserId};
use crate::rates::{RateKind, RateResult};
use crate::ratlp::{lcm_denominators, Rational};
use crate::security;

/// Largest modulus picked automatically.
pub const MAX_DEFAULT_Q: u64 = (1 << 31) - 1;

/// Default number of random attempts per field size.
pub const DEFAULT_RETRY_BUDGET: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemeError {
    #[error("malformed scheme document: {0}")]
    Malformed(String),
    #[error(transparent)]
    Field(#[from] GfError),
    #[error("keys do not sum to zero")]
    ZeroSumViolated,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("synthesis failed after {attempts} attempts (last q = {q}): {reason}")]
    SynthesisFailed {
        attempts: usize,
        q: u64,
        reason: String,
    },
    #[error("instance is infeasible; no scheme exists")]
    Infeasible,
}

/// Per-user key maps over a prime field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearScheme {
    field: Field,
    l: usize,
    lz: usize,
    users: Vec<UserId>,
    key_maps: Vec<Matrix>,
}

impl LinearScheme {
    /// Validates dimensions and the zero-sum property.
    pub fn new(
        field: Field,
        l: usize,
        lz: usize,
        users: Vec<UserId>,
        key_maps: Vec<Matrix>,
    ) -> Result<Self, SchemeError> {
        if l == 0 {
            return Err(SchemeError::Dimension("L must be positive".into()));
        }
        if users.len() != key_maps.len() {
            return Err(SchemeError::Dimension(format!(
                "{} users but {} key maps",
                users.len(),
                key_maps.len()
            )));
        }
        for (id, g) in users.iter().zip(&key_maps) {
            if g.rows() != l || g.cols() != lz || g.field() != field {
                return Err(SchemeError::Dimension(format!(
                    "key map of {id} is {}x{}, expected {l}x{lz}",
                    g.rows(),
                    g.cols()
                )));
            }
        }
        let mut sum = Matrix::zeros(field, l, lz);
        for g in &key_maps {
            sum = sum.add(g)?;
        }
        if !sum.is_zero() {
            return Err(SchemeError::ZeroSumViolated);
        }
        Ok(LinearScheme {
            field,
            l,
            lz,
            users,
            key_maps,
        })
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn q(&self) -> u64 {
        self.field.modulus()
    }

    /// Subpacketization `L`.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Source key length `Lz`.
    pub fn lz(&self) -> usize {
        self.lz
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn key_maps(&self) -> &[Matrix] {
        &self.key_maps
    }

    pub fn key_map(&self, index: usize) -> &Matrix {
        &self.key_maps[index]
    }

    /// `H(Z_i)` in symbols.
    pub fn user_key_rank(&self, index: usize) -> usize {
        self.key_maps[index].rank()
    }

    /// `H(Z_K)` in symbols: rank of all key maps stacked.
    pub fn total_key_rank(&self) -> usize {
        let parts: Vec<&Matrix> = self.key_maps.iter().collect();
        Matrix::vstack(self.field, self.lz, &parts)
            .expect("validated dimensions")
            .rank()
    }

    /// Achieved total key rate `H(Z_K) / L`.
    pub fn achieved_rate(&self) -> Rational {
        Rational::new(self.total_key_rank() as i64, self.l as i64)
    }

    /// Nominal total key rate `Lz / L`.
    pub fn nominal_rate(&self) -> Rational {
        Rational::new(self.lz as i64, self.l as i64)
    }

    /// Achieved per-user rates `rank(G_i) / L`.
    pub fn per_user_rates(&self) -> Vec<Rational> {
        (0..self.users.len())
            .map(|i| Rational::new(self.user_key_rank(i) as i64, self.l as i64))
            .collect()
    }

    /// Checks that the scheme's users are exactly the instance's users, in order.
    pub fn check_matches(&self, inst: &Instance) -> Result<(), SchemeError> {
        let expected: Vec<UserId> = inst.topology().users().collect();
        if expected != self.users {
            return Err(SchemeError::Dimension(format!(
                "scheme covers {} users, instance has {}",
                self.users.len(),
                expected.len()
            )));
        }
        Ok(())
    }

    /// Lossless structured-text form.
    pub fn export(&self) -> String {
        let doc = SchemeDoc {
            q: self.q(),
            l: self.l,
            lz: self.lz,
            keys: self
                .users
                .iter()
                .zip(&self.key_maps)
                .map(|(id, g)| KeyDoc {
                    user: [id.u, id.v],
                    rows: g
                        .row_vecs()
                        .into_iter()
                        .map(|r| r.into_iter().map(|x| x as i64).collect())
                        .collect(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
        text.push('\n');
        text
    }

    /// Parses a scheme document. Entries may be negative; they are reduced mod q.
    pub fn import(text: &str) -> Result<Self, SchemeError> {
        let doc: SchemeDoc =
            serde_json::from_str(text).map_err(|e| SchemeError::Malformed(e.to_string()))?;
        let field = Field::new(doc.q)?;
        let mut users = Vec::with_capacity(doc.keys.len());
        let mut maps = Vec::with_capacity(doc.keys.len());
        for key in doc.keys {
            let id = UserId::new(key.user[0], key.user[1]);
            if users.contains(&id) {
                return Err(SchemeError::Malformed(format!("user {id} listed twice")));
            }
            if key.rows.len() != doc.l {
                return Err(SchemeError::Malformed(format!(
                    "key of {id} has {} rows, expected L = {}",
                    key.rows.len(),
                    doc.l
                )));
            }
            let g = Matrix::from_signed_rows(field, doc.lz, &key.rows)
                .map_err(|e| SchemeError::Malformed(format!("key of {id}: {e}")))?;
            users.push(id);
            maps.push(g);
        }
        let mut order: Vec<usize> = (0..users.len()).collect();
        order.sort_by_key(|&i| users[i]);
        let users = order.iter().map(|&i| users[i]).collect();
        let maps = order.iter().map(|&i| maps[i].clone()).collect();
        LinearScheme::new(field, doc.l, doc.lz, users, maps)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeDoc {
    q: u64,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "Lz")]
    lz: usize,
    keys: Vec<KeyDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyDoc {
    user: [usize; 2],
    rows: Vec<Vec<i64>>,
}

/// Synthesis parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisOptions {
    /// Field override; defaults to [`default_modulus`].
    pub q: Option<u64>,
    pub seed: u64,
    /// Random attempts per field size.
    pub budget: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            q: None,
            seed: 0,
            budget: DEFAULT_RETRY_BUDGET,
        }
    }
}

/// How a synthesized scheme was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synthesis {
    pub scheme: LinearScheme,
    /// True when the deterministic Vandermonde construction verified.
    pub deterministic: bool,
    /// Total candidates tried, including the deterministic one(s).
    pub attempts: usize,
    /// True when the field was enlarged after the first round.
    pub escalated: bool,
    /// The security report of the accepted scheme.
    pub report: security::SecurityReport,
}

/// Smallest prime above `max(K·Lz, Lz·C(K·L, Lz))`, capped at [`MAX_DEFAULT_Q`].
pub fn default_modulus(k: usize, l: usize, lz: usize) -> u64 {
    let binom = binomial((k * l) as u64, lz as u64);
    let bound = ((k * lz) as u128).max(lz as u128 * binom);
    if bound >= MAX_DEFAULT_Q as u128 {
        MAX_DEFAULT_Q
    } else {
        gf::next_prime(bound as u64).min(MAX_DEFAULT_Q)
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX as u128;
        }
    }
    acc
}

/// Synthesizes a scheme for a rate result: exact rate, or within the bounds.
pub fn synthesize_for(
    inst: &Instance,
    result: &RateResult,
    opts: &SynthesisOptions,
) -> Result<Synthesis, SchemeError> {
    match &result.kind {
        RateKind::Infeasible => Err(SchemeError::Infeasible),
        RateKind::Exact(r) => synthesize_range(inst, &result.per_user_rates, r, r, opts),
        RateKind::Bounds { lower, upper } => {
            synthesize_range(inst, &result.per_user_rates, lower, upper, opts)
        }
    }
}

/// Synthesizes a scheme with per-user rates `profile` and total rate `target`.
pub fn synthesize(
    inst: &Instance,
    profile: &[Rational],
    target: &Rational,
    opts: &SynthesisOptions,
) -> Result<Synthesis, SchemeError> {
    synthesize_range(inst, profile, target, target, opts)
}

struct Plan {
    l: usize,
    lz: usize,
    /// `rate × L` per user.
    ranks: Vec<usize>,
    absorber: Option<usize>,
}

fn plan(
    inst: &Instance,
    profile: &[Rational],
    lower: &Rational,
    upper: &Rational,
) -> Result<Plan, String> {
    let k = inst.num_users();
    if profile.len() != k {
        return Err(format!(
            "profile has {} entries for {k} users",
            profile.len()
        ));
    }
    if profile
        .iter()
        .any(|r| r.is_negative() || *r > Rational::one())
    {
        return Err("per-user rates must lie in [0, 1]".into());
    }
    let l = lcm_denominators(profile.iter().chain([lower, upper])) as usize;
    let scale = |r: &Rational| -> usize {
        (r * &Rational::from(l))
            .to_u64()
            .expect("integral after scaling") as usize
    };
    let ranks: Vec<usize> = profile.iter().map(scale).collect();
    let absorber = (0..k)
        .find(|&i| ranks[i] == l)
        .or_else(|| (0..k).find(|&i| ranks[i] > 0));
    let available: usize = (0..k)
        .filter(|&i| Some(i) != absorber)
        .map(|i| ranks[i])
        .sum();
    let (lo, hi) = (scale(lower), scale(upper));
    let lz = hi.min(available);
    if lz < lo {
        return Err(format!(
            "profile supplies {available} independent key symbols per {l} input symbols, {lo} needed"
        ));
    }
    Ok(Plan {
        l,
        lz,
        ranks,
        absorber,
    })
}

/// Synthesizes a scheme whose rate lies in `[lower, upper]`, preferring `upper`.
pub fn synthesize_range(
    inst: &Instance,
    profile: &[Rational],
    lower: &Rational,
    upper: &Rational,
    opts: &SynthesisOptions,
) -> Result<Synthesis, SchemeError> {
    let k = inst.num_users();
    let plan =
        plan(inst, profile, lower, upper).map_err(|reason| SchemeError::SynthesisFailed {
            attempts: 0,
            q: opts.q.unwrap_or(0),
            reason,
        })?;
    let min_q = gf::next_prime(plan.ranks.iter().sum::<usize>().max(k) as u64);
    let q0 = match opts.q {
        Some(q) => q,
        None => default_modulus(k, plan.l, plan.lz).max(min_q),
    };
    let mut attempts = 0;
    let mut q = q0;
    let mut last_q = q0;
    for round in 0..2 {
        last_q = q;
        let field = Field::new(q)?;
        if let Some(s) = deterministic_candidate(inst, &plan, field) {
            attempts += 1;
            if let Some(report) = accept(inst, &plan, &s) {
                return Ok(Synthesis {
                    scheme: s,
                    deterministic: true,
                    attempts,
                    escalated: round > 0,
                    report,
                });
            }
        }
        let found = (0..opts.budget).into_par_iter().find_map_first(|a| {
            let s = random_candidate(
                inst,
                &plan,
                field,
                opts.seed,
                (round * opts.budget + a) as u64,
            )?;
            accept(inst, &plan, &s).map(|report| (a, s, report))
        });
        match found {
            Some((a, scheme, report)) => {
                return Ok(Synthesis {
                    scheme,
                    deterministic: false,
                    attempts: attempts + a + 1,
                    escalated: round > 0,
                    report,
                })
            }
            None => attempts += opts.budget,
        }
        q = gf::next_prime(2 * q - 1);
    }
    Err(SchemeError::SynthesisFailed {
        attempts,
        q: last_q,
        reason: "no candidate passed verification".into(),
    })
}

fn accept(inst: &Instance, plan: &Plan, s: &LinearScheme) -> Option<security::SecurityReport> {
    if s.total_key_rank() != plan.lz {
        return None;
    }
    if (0..s.users.len()).any(|i| s.user_key_rank(i) != plan.ranks[i]) {
        return None;
    }
    let report = security::verify(inst, s).ok()?;
    report.all_pass.then_some(report)
}

fn assemble(
    inst: &Instance,
    plan: &Plan,
    field: Field,
    mut maps: Vec<Matrix>,
) -> Option<LinearScheme> {
    if let Some(a) = plan.absorber {
        let mut sum = Matrix::zeros(field, plan.l, plan.lz);
        for (i, g) in maps.iter().enumerate() {
            if i != a {
                sum = sum.add(g).ok()?;
            }
        }
        maps[a] = sum.neg();
    }
    LinearScheme::new(
        field,
        plan.l,
        plan.lz,
        inst.topology().users().collect(),
        maps,
    )
    .ok()
}

/// Full-rate users take `L` base rows directly; a user with rank `r < L` gets
/// an `L x r` Vandermonde block (fresh points per user) times `r` base rows.
/// Base rows are fresh unit vectors when they exactly fill `Lz`, otherwise
/// rows of a transposed Vandermonde matrix so that any `Lz` are independent.
fn deterministic_candidate(inst: &Instance, plan: &Plan, field: Field) -> Option<LinearScheme> {
    let k = inst.num_users();
    let available: usize = (0..k)
        .filter(|&i| Some(i) != plan.absorber)
        .map(|i| plan.ranks[i])
        .sum();
    let base = if available == plan.lz {
        Matrix::identity(field, plan.lz)
    } else {
        let points: Vec<u64> = (1..=available as u64).collect();
        gf::vandermonde(field, &points, plan.lz).ok()?.transpose()
    };
    let mut next_row = 0;
    let mut next_point = 1u64;
    let mut maps = Vec::with_capacity(k);
    for i in 0..k {
        let r = plan.ranks[i];
        if Some(i) == plan.absorber || r == 0 {
            maps.push(Matrix::zeros(field, plan.l, plan.lz));
            continue;
        }
        let rows: Vec<Vec<u64>> = (next_row..next_row + r)
            .map(|t| base.row(t).to_vec())
            .collect();
        next_row += r;
        let b = Matrix::from_rows(field, plan.lz, &rows).ok()?;
        if r == plan.l {
            maps.push(b);
        } else {
            let points: Vec<u64> = (next_point..next_point + r as u64).collect();
            next_point += r as u64;
            let c = gf::vandermonde(field, &points, plan.l).ok()?;
            maps.push(c.mul(&b).ok()?);
        }
    }
    assemble(inst, plan, field, maps)
}

fn random_candidate(
    inst: &Instance,
    plan: &Plan,
    field: Field,
    seed: u64,
    attempt: u64,
) -> Option<LinearScheme> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt);
    let q = field.modulus();
    let mut random = |rows: usize, cols: usize| -> Matrix {
        let data: Vec<Vec<u64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen_range(0..q)).collect())
            .collect();
        Matrix::from_rows(field, cols, &data).expect("shape")
    };
    let mut maps = Vec::with_capacity(inst.num_users());
    for i in 0..inst.num_users() {
        let r = plan.ranks[i];
        if Some(i) == plan.absorber || r == 0 {
            maps.push(Matrix::zeros(field, plan.l, plan.lz));
            continue;
        }
        let b = random(r, plan.lz);
        let c = random(plan.l, r);
        maps.push(c.mul(&b).ok()?);
    }
    assemble(inst, plan, field, maps)
}

/// One protocol execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolTrace {
    /// Seed that generated the realization, if sampled.
    pub seed: Option<u64>,
    pub inputs: Vec<Vec<u64>>,
    pub source_key: Vec<u64>,
    pub keys: Vec<Vec<u64>>,
    pub messages: Vec<Vec<u64>>,
    pub relay_messages: Vec<Vec<u64>>,
    pub recovered: Vec<u64>,
    pub true_sum: Vec<u64>,
}

impl ProtocolTrace {
    pub fn is_correct(&self) -> bool {
        self.recovered == self.true_sum
    }

    pub fn render(&self, users: &[UserId]) -> String {
        let vec = |v: &[u64]| {
            format!(
                "[{}]",
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            )
        };
        let mut out = String::new();
        if let Some(s) = self.seed {
            out.push_str(&format!("seed: {s}\n"));
        }
        out.push_str(&format!("source_key: {}\n", vec(&self.source_key)));
        for (i, id) in users.iter().enumerate() {
            out.push_str(&format!(
                "user {id}: W={} Z={} X={}\n",
                vec(&self.inputs[i]),
                vec(&self.keys[i]),
                vec(&self.messages[i])
            ));
        }
        for (u, y) in self.relay_messages.iter().enumerate() {
            out.push_str(&format!("relay {}: Y={}\n", u + 1, vec(y)));
        }
        out.push_str(&format!("recovered_sum: {}\n", vec(&self.recovered)));
        out.push_str(&format!("true_sum: {}\n", vec(&self.true_sum)));
        out
    }
}

/// Executes one round with the given inputs and source key.
pub fn run_round(
    scheme: &LinearScheme,
    inputs: &[Vec<u64>],
    source_key: &[u64],
) -> Result<ProtocolTrace, SchemeError> {
    let f = scheme.field;
    let k = scheme.users.len();
    if inputs.len() != k || inputs.iter().any(|w| w.len() != scheme.l) {
        return Err(SchemeError::Dimension(format!(
            "expected {k} inputs of {} symbols",
            scheme.l
        )));
    }
    if source_key.len() != scheme.lz {
        return Err(SchemeError::Dimension(format!(
            "expected a source key of {} symbols, got {}",
            scheme.lz,
            source_key.len()
        )));
    }
    let reduce = |v: &[u64]| v.iter().map(|&x| x % f.modulus()).collect::<Vec<u64>>();
    let inputs: Vec<Vec<u64>> = inputs.iter().map(|w| reduce(w)).collect();
    let source_key = reduce(source_key);
    let add = |a: &[u64], b: &[u64]| {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| f.add(x, y))
            .collect::<Vec<u64>>()
    };
    let keys: Vec<Vec<u64>> = scheme
        .key_maps
        .iter()
        .map(|g| g.apply(&source_key))
        .collect();
    let messages: Vec<Vec<u64>> = inputs.iter().zip(&keys).map(|(w, z)| add(w, z)).collect();
    let clusters = scheme.users.iter().map(|id| id.u).max().unwrap_or(0);
    let mut relay_messages = vec![vec![0; scheme.l]; clusters];
    for (id, x) in scheme.users.iter().zip(&messages) {
        relay_messages[id.u - 1] = add(&relay_messages[id.u - 1], x);
    }
    let recovered = relay_messages
        .iter()
        .fold(vec![0; scheme.l], |acc, y| add(&acc, y));
    let true_sum = inputs.iter().fold(vec![0; scheme.l], |acc, w| add(&acc, w));
    Ok(ProtocolTrace {
        seed: None,
        inputs,
        source_key,
        keys,
        messages,
        relay_messages,
        recovered,
        true_sum,
    })
}

/// Samples uniform inputs and source key from a seeded generator.
pub fn random_round(scheme: &LinearScheme, seed: u64, round: u64) -> ProtocolTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    let q = scheme.q();
    let inputs: Vec<Vec<u64>> = (0..scheme.users.len())
        .map(|_| (0..scheme.l).map(|_| rng.gen_range(0..q)).collect())
        .collect();
    let key: Vec<u64> = (0..scheme.lz).map(|_| rng.gen_range(0..q)).collect();
    let mut trace = run_round(scheme, &inputs, &key).expect("dimensions match by construction");
    trace.seed = Some(seed);
    trace
}

/// Runs `rounds` sampled rounds and counts correct sums.
pub fn simulate(scheme: &LinearScheme, seed: u64, rounds: u64) -> u64 {
    (0..rounds)
        .into_par_iter()
        .filter(|&r| random_round(scheme, seed, r).is_correct())
        .count() as u64
}
