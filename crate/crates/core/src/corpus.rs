//! Parameterised benchmark programs, their expected verdicts and a
//! regression driver.
//!
//! Sources live under `corpus/<benchmark>/` as templates; `{{NAME}}`
//! placeholders are substituted on instantiation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::explorer::{explore, summarize, ExploreOptions, Stats, Verdict};
use crate::model::{lower_sources, RootSpec};
use crate::semantics::ErrorClass;

struct Template {
    file: &'static str,
    text: &'static str,
}

macro_rules! templates {
    ($dir:literal: $($file:literal),* $(,)?) => {
        &[$(Template { file: $file, text: include_str!(concat!("../corpus/", $dir, "/", $file)) }),*]
    };
}

const DP: &[Template] = templates!("dp": "application.e", "philosopher.e", "fork.e");
const DS: &[Template] = templates!("ds": "application.e", "pot.e", "cook.e", "savage.e");
const CS: &[Template] = templates!("cs": "application.e", "dealer.e", "ingredient_pair.e", "client.e");
const SEPC: &[Template] = templates!("sepc": "application.e", "buffer.e", "producer.e", "consumer.e");
const COUNTER: &[Template] = templates!("counter": "application.e", "counter.e");
const BS: &[Template] = templates!("bs": "application.e", "shop.e", "barber.e", "customer.e");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DpVariant {
    Eat,
    BadEat,
}

/// Seeded faults for the philosophers program.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DpMutation {
    #[default]
    None,
    /// First philosopher is created with id 0.
    ZeroId,
    /// `make` stores `philosopher + 1` as the id.
    BrokenPostcondition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DsVariant {
    Good,
    Bad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "name")]
pub enum Benchmark {
    #[serde(rename = "DP")]
    Dp { philosophers: u32, rounds: u32, variant: DpVariant, mutation: DpMutation },
    #[serde(rename = "DS")]
    Ds { pot_size: u32, savages: u32, hunger: u32, variant: DsVariant },
    #[serde(rename = "CS")]
    Cs { rounds: u32 },
    #[serde(rename = "SEPC")]
    Sepc { rounds: u32 },
    Counter { counters: u32, counts: u32 },
    #[serde(rename = "BS")]
    Bs { customers: u32, chairs: u32, haircuts: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BenchmarkError {
    #[error("parameters must be positive in {0}")]
    NonPositive(String),
    #[error("cannot parse benchmark `{0}`")]
    Syntax(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Expectation {
    pub errors: BTreeSet<ErrorClass>,
    /// Full exploration finishes in seconds on a desktop.
    pub desk_scale: bool,
    pub notes: &'static str,
}

impl Benchmark {
    pub fn dp(philosophers: u32, rounds: u32, variant: DpVariant) -> Self {
        Benchmark::Dp { philosophers, rounds, variant, mutation: DpMutation::None }
    }

    pub fn ds(pot_size: u32, savages: u32, hunger: u32, variant: DsVariant) -> Self {
        Benchmark::Ds { pot_size, savages, hunger, variant }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Dp { .. } => "DP",
            Benchmark::Ds { .. } => "DS",
            Benchmark::Cs { .. } => "CS",
            Benchmark::Sepc { .. } => "SEPC",
            Benchmark::Counter { .. } => "Counter",
            Benchmark::Bs { .. } => "BS",
        }
    }

    fn params(&self) -> Vec<u32> {
        match *self {
            Benchmark::Dp { philosophers, rounds, .. } => vec![philosophers, rounds],
            Benchmark::Ds { pot_size, savages, hunger, .. } => vec![pot_size, savages, hunger],
            Benchmark::Cs { rounds } | Benchmark::Sepc { rounds } => vec![rounds],
            Benchmark::Counter { counters, counts } => vec![counters, counts],
            Benchmark::Bs { customers, chairs, haircuts } => vec![customers, chairs, haircuts],
        }
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if self.params().contains(&0) {
            return Err(BenchmarkError::NonPositive(self.to_string()));
        }
        Ok(())
    }

    pub fn root(&self) -> RootSpec {
        RootSpec::new("APPLICATION", "make")
    }

    /// Source files with parameters substituted.
    pub fn instantiate(&self) -> Vec<(String, String)> {
        let (templates, subst): (&[Template], Vec<(&str, String)>) = match *self {
            Benchmark::Dp { philosophers, rounds, variant, mutation } => {
                let eat = match variant {
                    DpVariant::Eat => "eat (left_fork, right_fork)",
                    DpVariant::BadEat => "bad_eat",
                };
                let id = if mutation == DpMutation::ZeroId { "i - 1" } else { "i" };
                let id_value =
                    if mutation == DpMutation::BrokenPostcondition { "philosopher + 1" } else { "philosopher" };
                let subst = vec![
                    ("PHILOSOPHERS", philosophers.to_string()),
                    ("ROUNDS", rounds.to_string()),
                    ("EAT", eat.into()),
                    ("ID", id.into()),
                    ("ID_VALUE", id_value.into()),
                ];
                (DP, subst)
            }
            Benchmark::Ds { pot_size, savages, hunger, variant } => {
                let (formals, pot, call) = match variant {
                    DsVariant::Good => (" (a_pot: separate POT)", "a_pot", "step (pot)"),
                    DsVariant::Bad => ("", "pot", "step"),
                };
                let subst = vec![
                    ("POT_SIZE", pot_size.to_string()),
                    ("SAVAGES", savages.to_string()),
                    ("HUNGER", hunger.to_string()),
                    ("STEP_FORMALS", formals.into()),
                    ("POT", pot.into()),
                    ("STEP_CALL", call.into()),
                ];
                (DS, subst)
            }
            Benchmark::Cs { rounds } => (CS, vec![("ROUNDS", rounds.to_string())]),
            Benchmark::Sepc { rounds } => (SEPC, vec![("ROUNDS", rounds.to_string())]),
            Benchmark::Counter { counters, counts } => {
                (COUNTER, vec![("COUNTERS", counters.to_string()), ("COUNTS", counts.to_string())])
            }
            Benchmark::Bs { customers, chairs, haircuts } => {
                let subst = vec![
                    ("CUSTOMERS", customers.to_string()),
                    ("CHAIRS", chairs.to_string()),
                    ("HAIRCUTS", haircuts.to_string()),
                ];
                (BS, subst)
            }
        };
        templates
            .iter()
            .map(|t| {
                let mut text = t.text.to_string();
                for (k, v) in &subst {
                    text = text.replace(&format!("{{{{{k}}}}}"), v);
                }
                debug_assert!(!text.contains("{{"), "unfilled placeholder in {}", t.file);
                (format!("{}/{}", self.name().to_lowercase(), t.file), text)
            })
            .collect()
    }

    pub fn expected(&self) -> Expectation {
        let none = BTreeSet::new();
        let only = |c: ErrorClass| BTreeSet::from([c]);
        match *self {
            Benchmark::Dp { philosophers, rounds, variant, mutation } => {
                let desk_scale = philosophers <= 3 || (philosophers == 4 && rounds == 1);
                let errors = match mutation {
                    DpMutation::ZeroId => only(ErrorClass::PreconditionFail),
                    DpMutation::BrokenPostcondition => only(ErrorClass::PostconditionFail),
                    DpMutation::None if variant == DpVariant::BadEat && philosophers >= 2 => {
                        only(ErrorClass::Deadlock)
                    }
                    DpMutation::None => none,
                };
                let notes = match mutation {
                    DpMutation::None => "",
                    _ => "seeded fault",
                };
                Expectation { errors, desk_scale, notes }
            }
            Benchmark::Ds { savages, variant, .. } => Expectation {
                errors: none,
                desk_scale: savages <= 3,
                notes: match variant {
                    DsVariant::Good => "",
                    DsVariant::Bad => "livelock undetected by design",
                },
            },
            Benchmark::Cs { rounds } => Expectation { errors: none, desk_scale: rounds <= 1, notes: "" },
            Benchmark::Sepc { rounds } => Expectation { errors: none, desk_scale: rounds <= 20, notes: "" },
            Benchmark::Counter { counters, .. } => {
                Expectation { errors: none, desk_scale: counters <= 4, notes: "reconstructed" }
            }
            Benchmark::Bs { customers, .. } => {
                Expectation { errors: none, desk_scale: customers <= 2, notes: "reconstructed" }
            }
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.params().iter().map(u32::to_string).collect();
        let mut parts = params;
        match self {
            Benchmark::Dp { variant, mutation, .. } => {
                parts.push(match variant {
                    DpVariant::Eat => "eat".into(),
                    DpVariant::BadEat => "bad_eat".into(),
                });
                match mutation {
                    DpMutation::None => {}
                    DpMutation::ZeroId => parts.push("zero_id".into()),
                    DpMutation::BrokenPostcondition => parts.push("broken_post".into()),
                }
            }
            Benchmark::Ds { variant, .. } => parts.push(match variant {
                DsVariant::Good => "good".into(),
                DsVariant::Bad => "bad".into(),
            }),
            _ => {}
        }
        write!(f, "{}({})", self.name(), parts.join(","))
    }
}

impl FromStr for Benchmark {
    type Err = BenchmarkError;

    /// Parses the display form, e.g. `DP(2,1,bad_eat)` or `SEPC(5)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BenchmarkError::Syntax(s.to_string());
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (name, rest) = compact.split_once('(').ok_or_else(bad)?;
        let args: Vec<&str> = rest.strip_suffix(')').ok_or_else(bad)?.split(',').collect();
        let num = |i: usize| args.get(i).and_then(|a| a.parse::<u32>().ok()).ok_or_else(bad);
        let word = |i: usize| args.get(i).copied();
        let b = match (name.to_ascii_uppercase().as_str(), args.len()) {
            ("DP", 3 | 4) => {
                let variant = match word(2) {
                    Some("eat") => DpVariant::Eat,
                    Some("bad_eat") => DpVariant::BadEat,
                    _ => return Err(bad()),
                };
                let mutation = match word(3) {
                    None => DpMutation::None,
                    Some("zero_id") => DpMutation::ZeroId,
                    Some("broken_post") => DpMutation::BrokenPostcondition,
                    _ => return Err(bad()),
                };
                Benchmark::Dp { philosophers: num(0)?, rounds: num(1)?, variant, mutation }
            }
            ("DS", 4) => {
                let variant = match word(3) {
                    Some("good") => DsVariant::Good,
                    Some("bad") => DsVariant::Bad,
                    _ => return Err(bad()),
                };
                Benchmark::ds(num(0)?, num(1)?, num(2)?, variant)
            }
            ("CS", 1) => Benchmark::Cs { rounds: num(0)? },
            ("SEPC", 1) => Benchmark::Sepc { rounds: num(0)? },
            ("COUNTER", 2) => Benchmark::Counter { counters: num(0)?, counts: num(1)? },
            ("BS", 3) => Benchmark::Bs { customers: num(0)?, chairs: num(1)?, haircuts: num(2)? },
            _ => return Err(bad()),
        };
        b.validate()?;
        Ok(b)
    }
}

/// Desk-scale instances exercised by the regression suite.
pub fn default_selection() -> Vec<Benchmark> {
    use DpVariant::*;
    use DsVariant::*;
    vec![
        Benchmark::dp(1, 1, Eat),
        Benchmark::dp(2, 1, Eat),
        Benchmark::dp(3, 1, Eat),
        Benchmark::dp(2, 1, BadEat),
        Benchmark::dp(3, 1, BadEat),
        Benchmark::ds(1, 2, 1, Good),
        Benchmark::ds(1, 2, 1, Bad),
        Benchmark::ds(2, 2, 2, Good),
        Benchmark::ds(2, 2, 2, Bad),
        Benchmark::Cs { rounds: 1 },
        Benchmark::Sepc { rounds: 5 },
        Benchmark::Counter { counters: 2, counts: 3 },
        Benchmark::Bs { customers: 2, chairs: 1, haircuts: 1 },
    ]
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub explore: ExploreOptions,
    pub check_determinism: bool,
    pub check_token_soundness: bool,
    /// Repeat and token comparisons are skipped above this many states.
    pub comparison_limit: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            explore: ExploreOptions::default(),
            check_determinism: false,
            check_token_soundness: false,
            comparison_limit: 50_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub benchmark: String,
    pub expected: BTreeSet<ErrorClass>,
    pub found: BTreeSet<ErrorClass>,
    pub stats: Stats,
    pub failures: Vec<String>,
}

impl BenchResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteReport {
    pub results: Vec<BenchResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(BenchResult::passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let status = if r.passed() { "PASS" } else { "FAIL" };
            let found: Vec<&str> = r.found.iter().map(|c| c.as_str()).collect();
            out.push_str(&format!(
                "{status} {:<22} states {:>8} errors {{{}}}\n",
                r.benchmark,
                r.stats.states,
                found.join(", ")
            ));
            for f in &r.failures {
                out.push_str(&format!("     {f}\n"));
            }
        }
        out
    }
}

/// Verdict kinds of terminal states: error classes plus ok/stuck markers.
fn terminal_kinds(e: &crate::explorer::Exploration) -> BTreeSet<String> {
    e.terminals()
        .map(|s| match &s.verdict {
            Verdict::Error { error } => error.class.as_str().to_string(),
            Verdict::OkIdle => "ok_idle".into(),
            Verdict::Stuck => "stuck".into(),
            Verdict::Nonterminal => unreachable!(),
        })
        .collect()
}

pub fn run_benchmark(b: &Benchmark, options: &SuiteOptions) -> BenchResult {
    let expectation = b.expected();
    let mut result = BenchResult {
        benchmark: b.to_string(),
        expected: expectation.errors.clone(),
        found: BTreeSet::new(),
        stats: Stats::default(),
        failures: Vec::new(),
    };
    let program = match lower_sources(&b.instantiate(), &b.root()) {
        Ok(p) => p,
        Err(e) => {
            result.failures.push(format!("front end: {e}"));
            return result;
        }
    };
    for w in &program.warnings {
        result.failures.push(format!("diagnostic: {w}"));
    }
    let first = explore(&program, &options.explore);
    result.found = first.error_classes().into_iter().collect();
    result.stats = first.stats.clone();
    if first.stats.bounded {
        result.failures.push(format!("bounded at {} states", first.stats.states));
    }
    if result.found != result.expected {
        result.failures.push(format!("expected {:?}, found {:?}", result.expected, result.found));
    }
    for v in first.violations.iter().take(5) {
        result.failures.push(format!("invariant: {v}"));
    }
    let small = first.stats.states <= options.comparison_limit;
    if options.check_determinism && small {
        let second = explore(&program, &options.explore);
        if !first.stats.same_counts(&second.stats)
            || summarize(&program, &first).to_json() != summarize(&program, &second).to_json()
        {
            result.failures.push("second run differs".into());
        }
    }
    if options.check_token_soundness && small {
        let mut flipped = options.explore.clone();
        flipped.engine.token = !flipped.engine.token;
        let other = explore(&program, &flipped);
        if terminal_kinds(&first) != terminal_kinds(&other) {
            result.failures.push(format!(
                "token modes disagree: {:?} vs {:?}",
                terminal_kinds(&first),
                terminal_kinds(&other)
            ));
        }
        let (on, off) = if options.explore.engine.token { (&first, &other) } else { (&other, &first) };
        if !on.stats.bounded && !off.stats.bounded && on.stats.states > off.stats.states {
            result.failures.push(format!(
                "token mode has more states ({} > {})",
                on.stats.states, off.stats.states
            ));
        }
    }
    result
}

/// Runs every selected benchmark; failures are collected, not fatal.
pub fn run_suite(selection: &[Benchmark], options: &SuiteOptions) -> SuiteReport {
    SuiteReport { results: selection.iter().map(|b| run_benchmark(b, options)).collect() }
}
