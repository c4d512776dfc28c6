use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use wshsa::analysis::{self, AuxReport, ConditionClass};
use wshsa::rates::{self, RateKind, RateResult};
use wshsa::scheme::{self, LinearScheme, SchemeError, SynthesisOptions};
use wshsa::security::{self, SecurityError};
use wshsa::Instance;

const EXIT_CHECK: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_SYNTHESIS: u8 = 3;
const EXIT_BUDGET: u8 = 4;
const EXIT_DIMENSION: u8 = 5;

/// Key-rate analysis, key synthesis and security verification for weakly-secure
/// hierarchical secure aggregation.
#[derive(Parser)]
#[command(name = "wshsa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Auxiliary quantities, condition class and rate.
    Analyze(Common),
    /// Optimal total key rate and per-user profile.
    Rate(Common),
    /// Build a linear scheme at the optimal rate.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
        /// Also run the security verifier on the result.
        #[arg(long)]
        verify: bool,
    },
    /// Check correctness and every security constraint of a scheme.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: SchemeSource,
        /// Cross-check every constraint by exhaustive enumeration.
        #[arg(long)]
        exhaustive: bool,
        /// Joint-state limit for --exhaustive.
        #[arg(long, default_value_t = security::DEFAULT_STATE_BUDGET)]
        state_budget: u64,
    },
    /// Run protocol rounds on random inputs and keys.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: SchemeSource,
        #[arg(long, default_value_t = 100)]
        rounds: u64,
        /// Write the first round's trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate the converse entropy inequalities on a scheme.
    Audit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: SchemeSource,
    },
    /// Run the full pipeline over every instance file in a directory.
    Sweep {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

#[derive(Args)]
struct Common {
    instance: PathBuf,
    /// Report destination instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reject non-monotone families instead of closing them.
    #[arg(long)]
    no_closure: bool,
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prime field size; defaults to the size derived from the plan.
    #[arg(long)]
    q: Option<u64>,
    /// Random candidates per field size.
    #[arg(long, env = "WSHSA_BUDGET", default_value_t = 64)]
    budget: usize,
    /// Write the synthesized scheme here.
    #[arg(long)]
    scheme_out: Option<PathBuf>,
}

impl SynthArgs {
    fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            q: self.q,
            seed: self.seed,
            budget: self.budget,
        }
    }
}

#[derive(Args)]
struct SchemeSource {
    /// Scheme file to load.
    #[arg(long, conflicts_with = "synthesize")]
    scheme: Option<PathBuf>,
    /// Synthesize a scheme instead of loading one.
    #[arg(long)]
    synthesize: bool,
    #[command(flatten)]
    synth: SynthArgs,
}

/// A stage that could not run.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            error,
        }
    }
}

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        let code = match e {
            SchemeError::SynthesisFailed { .. } | SchemeError::Infeasible => EXIT_SYNTHESIS,
            SchemeError::Dimension(_) => EXIT_DIMENSION,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<SecurityError> for Failure {
    fn from(e: SecurityError) -> Self {
        match e {
            SecurityError::Scheme(inner) => inner.into(),
            SecurityError::BudgetExceeded { .. } => Failure {
                code: EXIT_BUDGET,
                error: e.into(),
            },
            SecurityError::ColumnMismatch(..) => Failure {
                code: EXIT_DIMENSION,
                error: e.into(),
            },
        }
    }
}

/// Report under construction plus whether every executed check passed.
struct Report {
    text: String,
    ok: bool,
}

impl Report {
    fn new() -> Self {
        Report {
            text: String::new(),
            ok: true,
        }
    }

    fn section(&mut self, name: &str, body: &str) {
        self.text.push_str(&format!("[{name}]\n"));
        self.text.push_str(body);
    }

    fn check(&mut self, ok: bool) {
        self.ok &= ok;
    }
}

fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn load_instance(path: &Path, no_closure: bool) -> Result<Instance, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)?;
    let override_closure = no_closure.then_some(false);
    Instance::from_json_with(&text, override_closure)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::input)
}

fn load_scheme(path: &Path) -> Result<LinearScheme, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)?;
    LinearScheme::import(&text)
        .map_err(|e| Failure::input(anyhow!(e).context(format!("parsing {}", path.display()))))
}

fn instance_section(report: &mut Report, inst: &Instance) {
    let body = format!(
        "instance_digest: {}\nclusters: {:?}\nnum_users: {}\n",
        digest(&inst.to_json()),
        inst.topology().cluster_sizes(),
        inst.num_users()
    );
    report.section("instance", &body);
}

fn analyze(inst: &Instance) -> (AuxReport, ConditionClass, RateResult) {
    let aux = analysis::quantities(inst);
    let class = analysis::classify(&aux, inst);
    let rate = rates::rate_from_report(inst, &aux, class);
    (aux, class, rate)
}

fn scheme_body(s: &LinearScheme) -> String {
    format!(
        "scheme_digest: {}\nq: {}\nL: {}\nLz: {}\nachieved_rate: {}\nper_user_key_ranks: {:?}\n",
        digest(&s.export()),
        s.q(),
        s.l(),
        s.lz(),
        s.achieved_rate(),
        (0..s.users().len())
            .map(|i| s.user_key_rank(i))
            .collect::<Vec<_>>()
    )
}

fn synthesize_into(
    report: &mut Report,
    inst: &Instance,
    rate: &RateResult,
    args: &SynthArgs,
) -> Result<LinearScheme, Failure> {
    let syn = scheme::synthesize_for(inst, rate, &args.options())?;
    let mut body = scheme_body(&syn.scheme);
    body.push_str(&format!(
        "deterministic: {}\nattempts: {}\nescalated: {}\n",
        syn.deterministic, syn.attempts, syn.escalated
    ));
    let matches = rate.admits(&syn.scheme.achieved_rate());
    body.push_str(&format!("rate_matches: {matches}\n"));
    report.check(matches);
    report.section("scheme", &body);
    if let Some(path) = &args.scheme_out {
        fs::write(path, syn.scheme.export())
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::input)?;
    }
    Ok(syn.scheme)
}

fn obtain_scheme(
    report: &mut Report,
    inst: &Instance,
    source: &SchemeSource,
) -> Result<LinearScheme, Failure> {
    if let Some(path) = &source.scheme {
        let s = load_scheme(path)?;
        s.check_matches(inst)?;
        report.section("scheme", &scheme_body(&s));
        return Ok(s);
    }
    if !source.synthesize {
        return Err(Failure::input(anyhow!(
            "pass --scheme <file> or --synthesize"
        )));
    }
    let (_, _, rate) = analyze(inst);
    synthesize_into(report, inst, &rate, &source.synth)
}

fn verify_into(report: &mut Report, inst: &Instance, s: &LinearScheme) -> Result<(), Failure> {
    let sec = security::verify(inst, s)?;
    report.check(sec.all_pass);
    report.section("security", &sec.render());
    Ok(())
}

fn exhaustive_into(
    report: &mut Report,
    inst: &Instance,
    s: &LinearScheme,
    budget: u64,
) -> Result<(), Failure> {
    let views = security::Views::new(inst, s)?;
    let mut rows = Vec::new();
    let mut mismatches = 0;
    for (mi, &sm) in inst.security_sets().iter().enumerate() {
        for (ni, &tn) in inst.collusion_sets().iter().enumerate() {
            let b = views.w_set(sm);
            let c = views.wz_set(tn);
            let mut cases: Vec<(String, _, _)> = (0..inst.num_clusters())
                .map(|u| {
                    let a = views.x_set(inst.topology().cluster(u));
                    (
                        format!("relay (u={},m={},n={})", u + 1, mi + 1, ni + 1),
                        a,
                        c.clone(),
                    )
                })
                .collect();
            let mut server_c = views.sum_w();
            server_c.push_rows(&c);
            cases.push((
                format!("server (m={},n={})", mi + 1, ni + 1),
                views.y_all(),
                server_c,
            ));
            for (label, a, c) in cases {
                let rank = security::conditional_mi(&a, &b, &c);
                let ex = security::exhaustive_mi(&a, &b, &c, budget)?;
                let agree = ex.as_integer() == Some(rank);
                mismatches += usize::from(!agree);
                rows.push(format!(
                    "{label}: rank={rank} exhaustive={:.6} {}\n",
                    ex.value,
                    if agree { "agree" } else { "DISAGREE" }
                ));
            }
        }
    }
    let mut body = format!("constraints: {}\nmismatches: {mismatches}\n", rows.len());
    body.extend(rows);
    report.check(mismatches == 0);
    report.section("exhaustive", &body);
    Ok(())
}

fn run(cmd: &Command) -> Result<(Report, Option<&Path>), Failure> {
    let mut report = Report::new();
    let out = match cmd {
        Command::Analyze(c) => {
            let inst = load_instance(&c.instance, c.no_closure)?;
            instance_section(&mut report, &inst);
            let (aux, class, rate) = analyze(&inst);
            report.section("analysis", &analysis::render(&aux, &inst, class));
            report.section("rate", &rates::render(&rate, &inst));
            c.out.as_deref()
        }
        Command::Rate(c) => {
            let inst = load_instance(&c.instance, c.no_closure)?;
            instance_section(&mut report, &inst);
            let (_, class, rate) = analyze(&inst);
            report.section(
                "rate",
                &format!("class: {class}\n{}", rates::render(&rate, &inst)),
            );
            c.out.as_deref()
        }
        Command::Synthesize {
            common,
            synth,
            verify,
        } => {
            let inst = load_instance(&common.instance, common.no_closure)?;
            instance_section(&mut report, &inst);
            let (_, class, rate) = analyze(&inst);
            report.section(
                "rate",
                &format!("class: {class}\n{}", rates::render(&rate, &inst)),
            );
            let s = synthesize_into(&mut report, &inst, &rate, synth)?;
            if *verify {
                verify_into(&mut report, &inst, &s)?;
            }
            common.out.as_deref()
        }
        Command::Verify {
            common,
            source,
            exhaustive,
            state_budget,
        } => {
            let inst = load_instance(&common.instance, common.no_closure)?;
            instance_section(&mut report, &inst);
            let s = obtain_scheme(&mut report, &inst, source)?;
            verify_into(&mut report, &inst, &s)?;
            if *exhaustive {
                exhaustive_into(&mut report, &inst, &s, *state_budget)?;
            }
            common.out.as_deref()
        }
        Command::Simulate {
            common,
            source,
            rounds,
            trace,
        } => {
            let inst = load_instance(&common.instance, common.no_closure)?;
            instance_section(&mut report, &inst);
            let s = obtain_scheme(&mut report, &inst, source)?;
            let seed = source.synth.seed;
            let correct = scheme::simulate(&s, seed, *rounds);
            report.check(correct == *rounds);
            report.section(
                "simulation",
                &format!("seed: {seed}\nrounds: {rounds}\ncorrect: {correct}\nsummary: {correct}/{rounds} correct sums\n"),
            );
            if let Some(path) = trace {
                let t = scheme::random_round(&s, seed, 0);
                fs::write(path, t.render(s.users()))
                    .with_context(|| format!("writing {}", path.display()))
                    .map_err(Failure::input)?;
            }
            common.out.as_deref()
        }
        Command::Audit { common, source } => {
            let inst = load_instance(&common.instance, common.no_closure)?;
            instance_section(&mut report, &inst);
            let s = obtain_scheme(&mut report, &inst, source)?;
            verify_into(&mut report, &inst, &s)?;
            let audit = security::audit_lemmas(&inst, &s)?;
            report.check(audit.violations().is_empty());
            report.section("audit", &audit.render());
            common.out.as_deref()
        }
        Command::Sweep { dir, out, synth } => {
            let (text, ok) = sweep(dir, synth).map_err(Failure::input)?;
            report.text = text;
            report.ok = ok;
            out.as_deref()
        }
    };
    Ok((report, out))
}

/// One sweep row and whether it is consistent.
fn sweep_row(path: &Path, synth: &SynthArgs) -> (String, bool) {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let inst = match load_instance(path, false) {
        Ok(i) => i,
        Err(f) => return (format!("{name}\terror\t-\t-\t-\t-\t{:#}", f.error), true),
    };
    let (_, class, rate) = analyze(&inst);
    if class == ConditionClass::Infeasible {
        return (
            format!("{name}\t{class}\t{}\tskipped\t-\t-\t-", rate.kind),
            true,
        );
    }
    let kind = match &rate.kind {
        RateKind::Exact(r) => r.to_string(),
        RateKind::Bounds { lower, upper } => format!("[{lower},{upper}]"),
        RateKind::Infeasible => unreachable!(),
    };
    let syn = match scheme::synthesize_for(&inst, &rate, &synth.options()) {
        Ok(s) => s,
        Err(e) => return (format!("{name}\t{class}\t{kind}\tfailed\t-\t-\t{e}"), false),
    };
    let verified = security::verify(&inst, &syn.scheme)
        .map(|r| r.all_pass)
        .unwrap_or(false);
    let achieved = syn.scheme.achieved_rate();
    let consistent = verified && rate.admits(&achieved);
    let verdict = if verified { "pass" } else { "fail" };
    (
        format!("{name}\t{class}\t{kind}\tok\t{verdict}\t{achieved}\t-"),
        consistent,
    )
}

fn sweep(dir: &Path, synth: &SynthArgs) -> anyhow::Result<(String, bool)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    let rows: Vec<(String, bool)> = files.par_iter().map(|p| sweep_row(p, synth)).collect();
    let mut text = String::from("file\tclass\trate\tsynthesis\tverification\tachieved\tnote\n");
    let mut ok = true;
    for (row, consistent) in rows {
        text.push_str(&row);
        text.push('\n');
        ok &= consistent;
    }
    Ok((text, ok))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(&cli.command) {
        Ok((report, out)) => {
            let written = match out {
                Some(path) => fs::write(path, &report.text)
                    .with_context(|| format!("writing {}", path.display())),
                None => {
                    print!("{}", report.text);
                    Ok(())
                }
            };
            eprintln!("elapsed_ms: {}", start.elapsed().as_millis());
            if let Err(e) = written {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_INPUT);
            }
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK)
            }
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
