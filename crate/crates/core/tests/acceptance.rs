//! One PASS/FAIL line per acceptance criterion.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use wshsa::analysis::{self, ConditionClass};
use wshsa::model::{RelaySet, UserId};
use wshsa::rates::{self, RateKind};
use wshsa::ratlp::{self, LpStatus};
use wshsa::scheme::{self, SchemeError, SynthesisOptions};
use wshsa::security::{self, DEFAULT_STATE_BUDGET};
use wshsa::{fixtures, Instance, Rational, UserSet};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn users(inst: &Instance, ids: &[(usize, usize)]) -> UserSet {
    UserSet::from_indices(
        ids.iter()
            .map(|&(u, v)| inst.topology().index_of(UserId::new(u, v)).unwrap()),
    )
}

fn example_one_analysis() -> Outcome {
    let inst = fixtures::example_one();
    let rep = analysis::quantities(&inst);
    let mut relays = RelaySet::default();
    relays.insert(0);
    relays.insert(1);
    ensure(analysis::security_relay_set(&inst, 6, 8) == relays, || {
        "U^(6,8) differs".into()
    })?;
    ensure(rep.s_implicit == users(&inst, &[(3, 2)]), || {
        format!("S_I = {}", rep.s_implicit.display(inst.topology()))
    })?;
    ensure(rep.s_total.len() == 5, || {
        format!("|S_total| = {}", rep.s_total.len())
    })?;
    ensure((rep.a_star, rep.d_star) == (3, 4), || {
        format!("a*={} d*={}", rep.a_star, rep.d_star)
    })?;
    let q3 = users(&inst, &[(1, 1), (1, 2), (2, 1), (2, 2), (3, 1)]);
    ensure(rep.q == rep.q3 && rep.q3 == q3, || {
        "Q differs from Q3".into()
    })?;
    let class = analysis::classify(&rep, &inst);
    ensure(class == ConditionClass::C1Case3, || {
        format!("class {class}")
    })?;
    let rate = rates::rate_from_report(&inst, &rep, class);
    ensure(
        rate.kind == RateKind::Exact(Rational::from_integer(4)),
        || format!("rate {}", rate.kind),
    )?;
    Ok("a*=3 d*=4 |S_total|=5 |Q|=5 C1Case3 rate 4".into())
}

fn example_two_analysis() -> Outcome {
    let inst = fixtures::example_two();
    let res = rates::optimal_rate(&inst);
    ensure(res.a_star == 2, || format!("a*={}", res.a_star))?;
    ensure(res.class == ConditionClass::C2, || {
        format!("class {}", res.class)
    })?;
    let half = Rational::new(1, 2);
    ensure(res.fractional == Some(half.clone()), || {
        format!("b* = {:?}", res.fractional)
    })?;
    let (lp, sol) = res.lp.as_ref().ok_or("no program")?;
    for name in ["b_{2,1}", "b_{2,2}", "b_{2,3}"] {
        ensure(sol.value_of(lp, name) == Some(&half), || {
            format!("{name} = {:?}", sol.value_of(lp, name))
        })?;
    }
    ensure(res.kind == RateKind::Exact(Rational::new(5, 2)), || {
        format!("rate {}", res.kind)
    })?;
    Ok("a*=2 C2 b*=1/2 at (1/2,1/2,1/2) rate 5/2".into())
}

fn reference_schemes() -> Outcome {
    let cases = [
        (
            fixtures::example_one(),
            fixtures::example_one_scheme(),
            Rational::from_integer(4),
        ),
        (
            fixtures::example_two(),
            fixtures::example_two_scheme(7),
            Rational::new(5, 2),
        ),
        (
            fixtures::example_two(),
            fixtures::example_two_scheme(11),
            Rational::new(5, 2),
        ),
    ];
    let mut constraints = 0;
    for (inst, s, rate) in cases {
        let rep = security::verify(&inst, &s).map_err(|e| e.to_string())?;
        ensure(rep.all_pass, || rep.render())?;
        ensure(
            rep.relay.iter().all(|c| c.cmi == 0) && rep.server.iter().all(|c| c.cmi == 0),
            || "nonzero CMI".into(),
        )?;
        constraints += rep.relay.len() + rep.server.len();
        ensure(s.achieved_rate() == rate, || {
            format!("achieved {}", s.achieved_rate())
        })?;
        let (rx, ry) = rates::communication_rates(&inst);
        ensure(rx == Rational::one() && ry == Rational::one(), || {
            "Rx or Ry is not 1".into()
        })?;
        let trace = scheme::random_round(&s, 1, 0);
        ensure(trace.is_correct(), || "round incorrect".into())?;
        let sizes_ok = trace
            .messages
            .iter()
            .chain(&trace.relay_messages)
            .all(|m| m.len() == s.l());
        ensure(sizes_ok, || "message length differs from L".into())?;
    }
    Ok(format!(
        "{constraints} constraints, all CMI 0, rates 4 and 5/2, Rx=Ry=1"
    ))
}

fn strong_security() -> Outcome {
    let res = rates::optimal_rate(&fixtures::strong_security());
    ensure(
        res.kind == RateKind::Exact(Rational::from_integer(5)),
        || format!("rate {}", res.kind),
    )?;
    Ok("rate 5".into())
}

fn oracle_equivalence() -> Outcome {
    let mut instances = 0;
    let mut checked = 0;
    let mut nonzero = 0;
    let mut seed = 1000;
    while instances < 24 {
        seed += 1;
        let inst = fixtures::random_instance(seed, 3, 5);
        let k = inst.num_users();
        let lz = (seed % 4) as usize;
        let (q, l) = if k + lz <= 7 { (3, 1) } else { (2, 1) };
        let s = common::random_scheme(&inst, q, l, lz, seed);
        let states = (q as u128).pow((k * l + lz) as u32);
        if states > 1 << 20 {
            continue;
        }
        instances += 1;
        for (label, a, b, c) in common::constraint_observables(&inst, &s) {
            let rank = security::conditional_mi(&a, &b, &c);
            let ex = security::exhaustive_mi(&a, &b, &c, DEFAULT_STATE_BUDGET)
                .map_err(|e| e.to_string())?;
            ensure(ex.as_integer() == Some(rank), || {
                format!("seed {seed} {label}: rank {rank}, exhaustive {}", ex.value)
            })?;
            checked += 1;
            nonzero += usize::from(rank > 0);
        }
    }
    let inst = fixtures::example_one();
    let doc = fixtures::EXAMPLE_ONE_SCHEME.replace("\"q\": 5", "\"q\": 2");
    let s = scheme::LinearScheme::import(&doc).map_err(|e| e.to_string())?;
    for (label, a, b, c) in common::constraint_observables(&inst, &s) {
        let rank = security::conditional_mi(&a, &b, &c);
        let ex =
            security::exhaustive_mi(&a, &b, &c, DEFAULT_STATE_BUDGET).map_err(|e| e.to_string())?;
        ensure(ex.as_integer() == Some(rank), || {
            format!("example one {label}: rank {rank}, exhaustive {}", ex.value)
        })?;
        checked += 1;
    }
    Ok(format!("{instances} random instances plus example one over F_2, {checked} constraints ({nonzero} nonzero), 0 discrepancies"))
}

struct Synthesized {
    inst: Instance,
    scheme: scheme::LinearScheme,
}

fn synthesis_round_trip(corpus: &common::Corpus, out: &mut Vec<Synthesized>) -> Outcome {
    let mut exact = 0;
    let mut bounded = 0;
    let mut escalated = 0;
    for (seed, inst) in corpus.exact.iter().chain(&corpus.bounded) {
        let res = rates::optimal_rate(inst);
        let opts = SynthesisOptions {
            seed: *seed,
            ..Default::default()
        };
        let syn = scheme::synthesize_for(inst, &res, &opts)
            .map_err(|e| format!("seed {seed} ({}): {e}", res.class))?;
        escalated += usize::from(syn.escalated);
        let rep = security::verify(inst, &syn.scheme).map_err(|e| e.to_string())?;
        ensure(rep.all_pass, || {
            format!("seed {seed}: verify failed\n{}", rep.render())
        })?;
        let achieved = syn.scheme.achieved_rate();
        match &res.kind {
            RateKind::Exact(r) => {
                ensure(&achieved == r, || {
                    format!("seed {seed}: achieved {achieved}, expected {r}")
                })?;
                ensure(syn.scheme.per_user_rates() == res.per_user_rates, || {
                    format!("seed {seed}: per-user rates differ")
                })?;
                exact += 1;
            }
            RateKind::Bounds { .. } => {
                ensure(res.admits(&achieved), || {
                    format!("seed {seed}: achieved {achieved} outside {}", res.kind)
                })?;
                bounded += 1;
            }
            RateKind::Infeasible => return Err(format!("seed {seed}: infeasible in corpus")),
        }
        out.push(Synthesized {
            inst: inst.clone(),
            scheme: syn.scheme,
        });
    }
    Ok(format!(
        "{exact} C1/C2 exact, {bounded} C3 within bounds, {escalated} escalated, 0 failures"
    ))
}

fn lemma_audit(schemes: &[Synthesized]) -> Outcome {
    let mut checks = 0;
    let mut all: Vec<(Instance, scheme::LinearScheme)> = schemes
        .iter()
        .map(|s| (s.inst.clone(), s.scheme.clone()))
        .collect();
    all.push((fixtures::example_one(), fixtures::example_one_scheme()));
    all.push((fixtures::example_two(), fixtures::example_two_scheme(7)));
    for (inst, s) in &all {
        let audit = security::audit_lemmas(inst, s).map_err(|e| e.to_string())?;
        ensure(audit.violations().is_empty(), || audit.render())?;
        checks += audit.checks.len();
    }
    Ok(format!(
        "{} schemes, {checks} inequalities, 0 violations",
        all.len()
    ))
}

fn infeasibility() -> Outcome {
    let inst = fixtures::infeasible_pair();
    let rep = analysis::quantities(&inst);
    ensure(rep.a_star == inst.num_users(), || {
        format!("a*={}", rep.a_star)
    })?;
    let res = rates::optimal_rate(&inst);
    ensure(res.class == ConditionClass::Infeasible, || {
        format!("class {}", res.class)
    })?;
    let syn = scheme::synthesize_for(&inst, &res, &SynthesisOptions::default());
    ensure(syn.as_ref().err() == Some(&SchemeError::Infeasible), || {
        "synthesis was attempted".into()
    })?;
    Ok("a*=K=2, Infeasible, synthesis refused".into())
}

fn lp_suite() -> Outcome {
    let mut programs = vec![];
    let generated = (0..1500).map(|seed| fixtures::random_instance(seed, 3, 6));
    for inst in generated.chain([fixtures::example_two()]) {
        let rep = analysis::quantities(&inst);
        if rep.a_star == inst.num_users() {
            continue;
        }
        let inst = &inst;
        for lp in [
            ratlp::build_minmax_lp(inst, &rep),
            ratlp::build_minsum_lp(inst, &rep),
        ] {
            if lp.variables.len() <= 5 && !lp.constraints.is_empty() {
                programs.push(lp);
            }
        }
    }
    let mut optimal = 0;
    for lp in &programs {
        let sol = ratlp::solve(lp);
        let brute = common::vertex_enumeration(lp);
        match sol.status {
            LpStatus::Optimal => {
                ensure(brute.as_ref() == Some(&sol.objective_value), || {
                    format!(
                        "simplex {} vs vertices {brute:?}\n{lp}",
                        sol.objective_value
                    )
                })?;
                ensure(common::dual_matches(lp, &sol), || {
                    format!("dual certificate rejected\n{lp}")
                })?;
                optimal += 1;
            }
            LpStatus::Infeasible => ensure(brute.is_none(), || {
                format!("simplex infeasible, vertices found {brute:?}\n{lp}")
            })?,
            LpStatus::Unbounded => return Err(format!("unbounded program\n{lp}")),
        }
    }
    ensure(optimal > 0, || "no programs in corpus".into())?;
    Ok(format!(
        "{} programs, {optimal} optimal, all match vertex enumeration and duals",
        programs.len()
    ))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let corpus = common::corpus(60, 25);
    let mut synthesized = Vec::new();
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "example one analysis", example_one_analysis()),
        (2, "example two analysis", example_two_analysis()),
        (3, "reference schemes verify", reference_schemes()),
        (4, "strong security rate", strong_security()),
        (5, "oracle equivalence", oracle_equivalence()),
        (
            6,
            "synthesis round trip",
            synthesis_round_trip(&corpus, &mut synthesized),
        ),
        (7, "lemma audit", lemma_audit(&synthesized)),
        (8, "infeasibility", infeasibility()),
        (9, "lp solver suite", lp_suite()),
    ];
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
