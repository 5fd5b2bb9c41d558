//! Script builders and an arbitrary-precision reference for the consistency score.
#![allow(dead_code)]

use std::path::PathBuf;

use epcaw::backend::{Purpose, Script, ScriptResponse};
use epcaw::memory::Agent;
use epcaw::tools::{SearchFixtures, ToolRegistry};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_tools() -> ToolRegistry {
    ToolRegistry::fixture(SearchFixtures::load(fixture("search.json")).expect("search fixtures"))
}

pub fn empty_tools() -> ToolRegistry {
    ToolRegistry::fixture(SearchFixtures::default())
}

pub fn plan_block(i: usize) -> String {
    format!("GOAL: recall fact number {i} about the query\nTOOL: base_generator\nARGS: state fact {i}\n")
}

pub fn plans(k: usize) -> String {
    (1..=k).map(plan_block).collect::<Vec<_>>().join("\n")
}

pub fn scores(values: &[u32]) -> String {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| format!("Plan {}: {v}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn supported(evidence: &str) -> String {
    format!("SUPPORTED\nthe outcome states the needed fact\nEVIDENCE: {evidence}")
}

pub const UNSUPPORTED: &str = "UNSUPPORTED\nthe outcome does not establish the goal";
pub const ANSWER: &str = "scripted final answer";

pub fn perspectives() -> impl Iterator<Item = (Agent, Agent)> {
    Agent::ALL
        .into_iter()
        .flat_map(|i| Agent::ALL.into_iter().map(move |j| (i, j)))
}

/// A script that answers every key in every round: `k` base_generator plans,
/// uniform scores, Supported diagnoses with a fixed fact, and INSUFFICIENT stop checks.
/// Round-specific entries added later take precedence.
pub fn base_script(k: usize) -> Script {
    let mut s = Script::new();
    s.always(
        Agent::Planner,
        Purpose::CandidateGeneration,
        None,
        &plans(k),
    );
    let uniform = scores(&vec![3; k]);
    for p in perspectives() {
        s.always(p.0, Purpose::Evaluation, Some(p), &uniform);
    }
    s.always(
        Agent::Executor,
        Purpose::ToolArgumentation,
        None,
        "the recalled fact",
    );
    s.always(
        Agent::Diagnoser,
        Purpose::Diagnosis,
        None,
        &supported("a constant fact"),
    );
    s.always(Agent::Diagnoser, Purpose::StopCheck, None, "INSUFFICIENT");
    s.always(
        Agent::Diagnoser,
        Purpose::ConstraintInduction,
        None,
        "Prefer plans whose evidence can be verified.",
    );
    s.always(Agent::Diagnoser, Purpose::RollbackTarget, None, "ROUND 0");
    s.always(Agent::Planner, Purpose::AnswerGeneration, None, ANSWER);
    s
}

/// Reusable reply for one key in one round.
pub fn in_round(
    s: &mut Script,
    agent: Agent,
    purpose: Purpose,
    perspective: Option<(Agent, Agent)>,
    round: usize,
    text: &str,
) {
    s.push(
        agent,
        purpose,
        perspective,
        Some(round),
        [ScriptResponse::Rule {
            text: text.to_string(),
            when_contains: None,
            repeat: true,
        }],
    );
}

/// Scores that make the planner prefer plan 1 while the consistency score prefers plan 2.
pub fn diverging_scores(s: &mut Script, k: usize, round: usize) {
    let row = |first: u32, second: u32| {
        let mut v = vec![3; k];
        v[0] = first;
        v[1] = second;
        scores(&v)
    };
    for p in perspectives() {
        let text = match p {
            (Agent::Planner, _) => row(5, 3),
            (Agent::Executor, Agent::Executor) => row(3, 4),
            (Agent::Executor, _) => row(3, 2),
            _ => row(3, 3),
        };
        in_round(s, p.0, Purpose::Evaluation, Some(p), round, &text);
    }
}

pub mod oracle {
    //! Fixed-point natural logarithms on big integers, independent of `f64::ln`.

    use std::sync::OnceLock;

    use num_bigint::BigInt;
    use num_traits::float::FloatCore;
    use num_traits::{One, ToPrimitive, Zero};

    const PRECISION: u64 = 160;

    fn one() -> BigInt {
        BigInt::one() << PRECISION
    }

    /// `atanh(z)` for a fixed-point `|z| <= 1/3`.
    fn atanh(z: &BigInt) -> BigInt {
        let zsq = (z * z) >> PRECISION;
        let mut term = z.clone();
        let mut sum = BigInt::zero();
        let mut k = 1u32;
        while !term.is_zero() {
            sum += &term / k;
            term = (term * &zsq) >> PRECISION;
            k += 2;
        }
        sum
    }

    fn ln2() -> &'static BigInt {
        static LN2: OnceLock<BigInt> = OnceLock::new();
        LN2.get_or_init(|| atanh(&(one() / 3)) * 2)
    }

    /// `ln(m * 2^e)` for a positive integer `m`.
    fn ln_scaled(m: &BigInt, e: i64) -> BigInt {
        assert!(m > &BigInt::zero());
        let n = m.bits() as i64 - 1;
        // y = m / 2^n lies in [1, 2)
        let y = (m << PRECISION) >> n as u64;
        let z = ((&y - one()) << PRECISION) / (&y + one());
        atanh(&z) * 2 + ln2() * (n + e)
    }

    fn decompose(x: f64) -> (BigInt, i64) {
        let (mantissa, exponent, sign) = x.integer_decode();
        assert!(sign > 0 && mantissa > 0, "scores must be positive");
        (BigInt::from(mantissa), i64::from(exponent))
    }

    fn ln(x: f64) -> BigInt {
        let (m, e) = decompose(x);
        ln_scaled(&m, e)
    }

    /// `ln((a + b) / 2)`, with the sum formed exactly.
    fn ln_mean(a: f64, b: f64) -> BigInt {
        let (ma, ea) = decompose(a);
        let (mb, eb) = decompose(b);
        let e = ea.min(eb);
        let m = (ma << (ea - e) as u64) + (mb << (eb - e) as u64);
        ln_scaled(&m, e - 1)
    }

    fn to_f64(x: &BigInt) -> f64 {
        x.to_f64().expect("finite") / 2f64.powi(PRECISION as i32)
    }

    /// Plan scores for `scores[evaluator][target][plan]`.
    pub fn plan_scores(scores: &[[Vec<f64>; 3]; 3]) -> Vec<f64> {
        let n = scores[0][0].len();
        (0..n)
            .map(|k| {
                let total: BigInt = (0..3)
                    .map(|i| {
                        let peers: Vec<usize> = (0..3).filter(|&j| j != i).collect();
                        ln(scores[i][i][k])
                            - ln_mean(scores[i][peers[0]][k], scores[i][peers[1]][k])
                    })
                    .sum();
                to_f64(&(total / 3))
            })
            .collect()
    }
}
