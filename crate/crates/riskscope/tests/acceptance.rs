//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Thresholds are pinned below.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use riskscope::profiles::ProfileStore;
use riskscope_core::condexpr::{Answer, AnswerBindings, Expr, Literal, QuestionId, Truth};
use riskscope_core::engine::{self, EngineConfig, PotentialRiskReport, RiskStatus};
use riskscope_core::profile::{self, EntityProfile};
use riskscope_core::questionnaire::{AssessmentSession, QuestionKind};
use riskscope_core::taxonomy::EntityKind;
use riskscope_core::Framework;
use sha2::{Digest, Sha256};

const SCENARIO_MAX: Duration = Duration::from_secs(1);
const LOGIC_MAX: Duration = Duration::from_secs(10);
const LOGIC_CASES: u32 = 1000;
const GATING_SEQUENCES: u32 = 1000;
const REUSE_PROFILES: u32 = 100;
const MONOTONIC_SEQUENCES: u32 = 1000;

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 7] = [
        ("scenario-reproduction", scenario_reproduction),
        ("bundled-data-fidelity", bundled_data_fidelity),
        ("three-valued-logic-oracle", three_valued_logic_oracle),
        ("rule-oracle-equivalence", rule_oracle_equivalence),
        ("gating-partition", gating_partition),
        ("reuse-equivalence", reuse_equivalence),
        ("status-monotonicity", status_monotonicity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn qid(s: &str) -> QuestionId {
    QuestionId::new(s).unwrap()
}

// ---------------------------------------------------------------------------
// Independent three-valued model: no=0, unknown=1, yes=2; and=min, or=max,
// not=2-x. Unbound and the unknown marker both read as unknown.

fn k3(e: &Expr, b: &AnswerBindings) -> u8 {
    match e {
        Expr::Const(v) => 2 * (*v as u8),
        Expr::AnswerEquals(q, lit) => match (b.get(q.as_str()), lit) {
            (None | Some(Answer::Unknown), _) => 1,
            (Some(Answer::Yes), Literal::Yes) | (Some(Answer::No), Literal::No) => 2,
            (Some(Answer::Choice(c)), Literal::Choice(want)) => 2 * (c == want) as u8,
            _ => 0,
        },
        Expr::IsUnknown(q) => 2 * matches!(b.get(q.as_str()), None | Some(Answer::Unknown)) as u8,
        Expr::IsAnswered(q) => 2 * b.contains(q.as_str()) as u8,
        Expr::Not(x) => 2 - k3(x, b),
        Expr::And(l, r) => k3(l, b).min(k3(r, b)),
        Expr::Or(l, r) => k3(l, b).max(k3(r, b)),
    }
}

fn truth_code(t: Truth) -> u8 {
    match t {
        Truth::No => 0,
        Truth::Unknown => 1,
        Truth::Yes => 2,
    }
}

/// Policy mapping written out independently of the engine.
fn expected_status(rule_codes: &[(u8, bool)]) -> RiskStatus {
    if rule_codes.iter().any(|&(c, _)| c == 2) {
        RiskStatus::Flagged
    } else if rule_codes.iter().any(|&(c, flags)| c == 1 && flags) {
        RiskStatus::IndeterminateFlagged
    } else if rule_codes.iter().any(|&(c, _)| c == 1) {
        RiskStatus::IndeterminateUnflagged
    } else {
        RiskStatus::NotFlagged
    }
}

// ---------------------------------------------------------------------------

fn fixture_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tourist-center.session.json")
}

fn scenario_reproduction() -> Result<String, String> {
    let fixture = fixture_path();
    let file: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&fixture).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mut recorded = BTreeMap::new();
    for e in file["history"].as_array().ok_or("fixture has no history")? {
        recorded.insert(
            e["question_id"].as_str().unwrap().to_owned(),
            e["value"].clone(),
        );
    }
    for (q, v) in [
        ("A0", "yes"),
        ("A6", "yes"),
        ("A7", "yes"),
        ("A8", "yes"),
        ("B1", "unknown"),
        ("C1", "yes"),
    ] {
        ensure!(
            recorded.get(q) == Some(&serde_json::json!(v)),
            "fixture {q} is {:?}",
            recorded.get(q)
        );
    }
    for q in ["A1", "A2", "A3", "A4", "A5"] {
        let text = recorded
            .get(q)
            .and_then(|v| v["text"].as_str())
            .unwrap_or("");
        ensure!(!text.trim().is_empty(), "fixture {q} has no scenario text");
    }

    let home = tempfile::tempdir().map_err(|e| e.to_string())?;
    let assess = |flags: &str| -> Result<(PotentialRiskReport, Duration), String> {
        let start = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_riskscope"))
            .args([
                "assess",
                "--format",
                "json",
                "--reproducible",
                "--unknown-flags",
                flags,
                "--session-file",
            ])
            .arg(&fixture)
            .env("RISKSCOPE_HOME", home.path())
            .output()
            .map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ensure!(
            out.status.success(),
            "assess failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        Ok((
            serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?,
            elapsed,
        ))
    };
    let (default, t1) = assess("true")?;
    let (strict, t2) = assess("false")?;
    let expect = [
        ("prompt-injection", RiskStatus::Flagged),
        ("toxic-output", RiskStatus::IndeterminateFlagged),
        ("usage-restrictions", RiskStatus::NotFlagged),
        ("hallucination", RiskStatus::Flagged),
    ];
    for (risk, status) in expect {
        ensure!(
            default.status(risk) == Some(status),
            "{risk}: {:?}",
            default.status(risk)
        );
    }
    let h1 = default
        .risk("hallucination")
        .and_then(|r| r.fired_rules.iter().find(|o| o.rule_id == "H1"))
        .ok_or("H1 missing")?;
    ensure!(h1.truth == Truth::Yes, "H1 evaluated {}", h1.truth);
    ensure!(
        strict.status("toxic-output") == Some(RiskStatus::IndeterminateUnflagged),
        "strict toxic-output: {:?}",
        strict.status("toxic-output")
    );
    for r in &default.risks {
        if r.risk_id != "toxic-output" {
            ensure!(
                strict.status(&r.risk_id) == Some(r.status),
                "{} changed under strict policy",
                r.risk_id
            );
        }
    }
    let slowest = t1.max(t2);
    ensure!(
        slowest < SCENARIO_MAX,
        "slowest run {slowest:?} exceeds {SCENARIO_MAX:?}"
    );
    Ok(format!(
        "statuses match under both policies; slowest run {} ms (limit {} ms)",
        slowest.as_millis(),
        SCENARIO_MAX.as_millis()
    ))
}

// SHA-256 of each prompt and guidance text as printed in the source table.
const GOLDEN: [(&str, &str, Option<&str>); 13] = [
    (
        "A1",
        "b844447c2cb0a2234af610a481b5a7f8e1a2e44b179074f678069d02e678f128",
        None,
    ),
    (
        "A2",
        "7b1793fe6a4c553904ac7c3e77493dfd59bc3dfdb90c1157548c64c99c9534d7",
        Some("337fa4b3b27dbe96254d92c38fdff48072db1e99db7ae0bb145a277ca5be8ba7"),
    ),
    (
        "A3",
        "1f9679b3c0a8a174ba37b1c7632e006c8ddef4cbdbf3388d0c5806182da58a90",
        Some("5432e0526524973f54307384126996c5339b34dda3c5964fec1245821aa45a41"),
    ),
    (
        "A4",
        "e6efeb6ecaa000c790b18b08f79def6df726e4762d88f80293c41d901fb96883",
        Some("04e80a0550b75dd8bd286f3812d0c6c6ccc0253d10a2f82f3ca97331d82e4dd8"),
    ),
    (
        "A5",
        "0abcd08434a6b046ea9bae9e118aec1c8297387bde2b2e5672f5b373243fd885",
        Some("8d3de3b95b2357270dea8624008cef31bb7d9b30fc27d5f163348727a89a014a"),
    ),
    (
        "A6",
        "efb0c2f6cafcdf32bd2ba42f665122d0fb801db2463dc667db014ac15b9f92e4",
        Some("d5fc36421cd55ac89c7d0075ffc0e84b0590c51f5fde4cbc2f4b1e13195a9b09"),
    ),
    (
        "A7",
        "b996f25ffdc4dfd2030aaf98a7d9e6d0a7ab2b1802985b4a426c3d51c3d51e15",
        Some("c429b66bd7439236adc237a14f7d90e28f50e7650cd1d6972bee6d14050628c3"),
    ),
    (
        "A8",
        "7625e37c980bd36fc21d5e8df70b1db7a9aa918ef9c2418b4420bfa02a03ae11",
        Some("458e1c55eaf7ad791c8f85538b5d1bec8dc301fd950d217c7d09c03cf48d97e6"),
    ),
    (
        "B1",
        "1c198632577bd190ed8173f7bb5e530e3e9ac9a55518cae2aa833701099c2a56",
        Some("9861a662ad838d4a23cf0a01081f90b4ec12ac9f72833fb927ad1638a4323aeb"),
    ),
    (
        "B2",
        "a60b039fb73d79cc914eca4aa5022fceb01585fa1cd82d7dc4d8a52790d7bcdc",
        None,
    ),
    (
        "B3",
        "63ed0660d3b263c8da9043d90353a7543d54d56f1f8322d6148b99aeec130652",
        None,
    ),
    (
        "B4",
        "3625f81ec0f54e04b0ee3e4cd1e2306256a90cef99d17705544ba1fd046b5db9",
        None,
    ),
    (
        "C1",
        "0f0baf60c5a04390f81b1a6337ab800e380bd41030ff7eca4457481ed85c9710",
        Some("cd4d7803b263540c6b9e7d64ac3a9471ce14834cfd0ca4e88a7efe86a7847f12"),
    ),
];

fn sha256(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn bundled_data_fidelity() -> Result<String, String> {
    let fw = Framework::bundled();
    let qs = fw.questionnaires();
    let mut guidance = 0;
    for (id, prompt_hash, guidance_hash) in GOLDEN {
        let q = qs.question(id).ok_or_else(|| format!("{id} missing"))?;
        ensure!(
            sha256(&q.prompt) == prompt_hash,
            "{id} prompt differs: {:?}",
            q.prompt
        );
        match (guidance_hash, &q.guidance) {
            (None, None) => {}
            (Some(h), Some(text)) => {
                ensure!(sha256(text) == h, "{id} guidance differs: {text:?}");
                guidance += 1;
            }
            (want, got) => {
                return Err(format!(
                    "{id} guidance presence: expected {}, got {}",
                    want.is_some(),
                    got.is_some()
                ))
            }
        }
    }
    ensure!(
        fw.pack().risks().len() == 5,
        "{} risks",
        fw.pack().risks().len()
    );
    ensure!(
        fw.pack().stages().len() == 3,
        "{} stages",
        fw.pack().stages().len()
    );
    Ok(format!(
        "13 prompts and {guidance} guidance texts match; 5 risks, 3 stages"
    ))
}

// ---------------------------------------------------------------------------

const POOL: [&str; 4] = ["P1", "P2", "P3", "P4"];

fn leaf_strategy(meta: bool) -> BoxedStrategy<Expr> {
    let eq = (0..POOL.len(), any::<bool>()).prop_map(|(i, y)| {
        Expr::AnswerEquals(qid(POOL[i]), if y { Literal::Yes } else { Literal::No })
    });
    if meta {
        prop_oneof![
            5 => eq,
            1 => any::<bool>().prop_map(Expr::Const),
            1 => (0..POOL.len()).prop_map(|i| Expr::IsUnknown(qid(POOL[i]))),
            1 => (0..POOL.len()).prop_map(|i| Expr::IsAnswered(qid(POOL[i]))),
        ]
        .boxed()
    } else {
        prop_oneof![5 => eq, 1 => any::<bool>().prop_map(Expr::Const)].boxed()
    }
}

fn expr_strategy(meta: bool) -> impl Strategy<Value = Expr> {
    leaf_strategy(meta).prop_recursive(5, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::negate),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::and(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Expr::or(l, r)),
        ]
    })
}

fn decode(code: u8) -> Option<Answer> {
    match code {
        0 => None,
        1 => Some(Answer::Yes),
        2 => Some(Answer::No),
        _ => Some(Answer::Unknown),
    }
}

fn bindings_strategy() -> impl Strategy<Value = AnswerBindings> {
    proptest::collection::vec(0u8..4, POOL.len()).prop_map(|codes| {
        codes
            .into_iter()
            .enumerate()
            .filter_map(|(i, c)| decode(c).map(|a| (qid(POOL[i]), a)))
            .collect()
    })
}

/// A leaf over `P<i>` whose value is exactly `t`: bind to yes/no/unknown
/// and compare with yes.
fn truth_leaf(i: usize, t: u8, b: &mut AnswerBindings) -> Expr {
    let q = qid(POOL[i]);
    b.insert(
        q.clone(),
        [Answer::No, Answer::Unknown, Answer::Yes][t as usize].clone(),
    );
    Expr::AnswerEquals(q, Literal::Yes)
}

fn three_valued_logic_oracle() -> Result<String, String> {
    let start = Instant::now();
    let fw_eval = |e: &Expr, b: &AnswerBindings| truth_code(e.evaluate(b).expect("well-typed"));

    // Exhaustive tables: not over 3^1, and/or over 3^2, one mixed
    // three-input connective over 3^3.
    let mut rows = 0;
    for a in 0..3u8 {
        let mut b = AnswerBindings::new();
        let e = Expr::negate(truth_leaf(0, a, &mut b));
        ensure!(fw_eval(&e, &b) == 2 - a, "not {a}");
        rows += 1;
        for c in 0..3u8 {
            let mut b = AnswerBindings::new();
            let (l, r) = (truth_leaf(0, a, &mut b), truth_leaf(1, c, &mut b));
            ensure!(
                fw_eval(&Expr::and(l.clone(), r.clone()), &b) == a.min(c),
                "{a} and {c}"
            );
            ensure!(fw_eval(&Expr::or(l, r), &b) == a.max(c), "{a} or {c}");
            rows += 2;
            for d in 0..3u8 {
                let mut b = AnswerBindings::new();
                let e = Expr::and(
                    truth_leaf(0, a, &mut b),
                    Expr::or(
                        truth_leaf(1, c, &mut b),
                        Expr::negate(truth_leaf(2, d, &mut b)),
                    ),
                );
                ensure!(fw_eval(&e, &b) == k3(&e, &b), "mixed {a} {c} {d}");
                rows += 1;
            }
        }
    }
    // The unbound case must read as unknown too.
    ensure!(
        fw_eval(
            &Expr::equals(qid("P1"), Literal::Yes),
            &AnswerBindings::new()
        ) == 1,
        "unbound leaf"
    );

    run_property(
        LOGIC_CASES,
        (expr_strategy(true), bindings_strategy()),
        |(e, b)| {
            prop_assert_eq!(fw_eval(&e, &b), k3(&e, &b));
            Ok(())
        },
    )?;
    run_property(
        LOGIC_CASES,
        (
            expr_strategy(true),
            expr_strategy(true),
            bindings_strategy(),
        ),
        |(x, y, b)| {
            let lhs = Expr::negate(Expr::and(x.clone(), y.clone()));
            let rhs = Expr::or(Expr::negate(x.clone()), Expr::negate(y.clone()));
            prop_assert_eq!(fw_eval(&lhs, &b), fw_eval(&rhs, &b));
            let lhs = Expr::negate(Expr::or(x.clone(), y.clone()));
            let rhs = Expr::and(Expr::negate(x.clone()), Expr::negate(y));
            prop_assert_eq!(fw_eval(&lhs, &b), fw_eval(&rhs, &b));
            prop_assert_eq!(
                fw_eval(&Expr::negate(Expr::negate(x.clone())), &b),
                fw_eval(&x, &b)
            );
            Ok(())
        },
    )?;
    // Monotonicity holds for answer comparisons; the unknown/answered
    // predicates are excluded because they observe the lack of information.
    run_property(
        LOGIC_CASES,
        (
            expr_strategy(false),
            bindings_strategy(),
            proptest::collection::vec(any::<bool>(), POOL.len()),
        ),
        |(e, b, fill)| {
            let before = fw_eval(&e, &b);
            let mut more = b.clone();
            for (i, yes) in fill.into_iter().enumerate() {
                if !matches!(b.get(POOL[i]), Some(Answer::Yes | Answer::No)) {
                    more.insert(qid(POOL[i]), if yes { Answer::Yes } else { Answer::No });
                }
            }
            let after = fw_eval(&e, &more);
            if before != 1 {
                prop_assert_eq!(after, before);
            }
            Ok(())
        },
    )?;
    let elapsed = start.elapsed();
    ensure!(elapsed < LOGIC_MAX, "took {elapsed:?}, limit {LOGIC_MAX:?}");
    Ok(format!(
        "{rows} table rows; {LOGIC_CASES} cases each for oracle agreement, De Morgan/double negation, monotonicity in {} ms (limit {} s)",
        elapsed.as_millis(),
        LOGIC_MAX.as_secs()
    ))
}

// ---------------------------------------------------------------------------

fn domain(kind: &QuestionKind) -> Vec<Answer> {
    match kind {
        QuestionKind::Boolean => vec![Answer::Yes, Answer::No],
        QuestionKind::TriState => vec![Answer::Yes, Answer::No, Answer::Unknown],
        QuestionKind::SingleChoice(options) => {
            options.iter().cloned().map(Answer::Choice).collect()
        }
        QuestionKind::FreeText => vec![],
    }
}

fn rule_oracle_equivalence() -> Result<String, String> {
    let fw = Framework::bundled();
    let mut assignments = 0usize;
    for risk in fw.pack().risks() {
        let rules: Vec<_> = fw.rules().for_risk(&risk.id).collect();
        let mut questions: Vec<QuestionId> = Vec::new();
        for rule in &rules {
            for q in rule.condition.referenced_questions() {
                if !questions.contains(&q) {
                    questions.push(q);
                }
            }
        }
        let domains: Vec<Vec<Answer>> = questions
            .iter()
            .map(|q| domain(&fw.questionnaires().question(q.as_str()).unwrap().kind))
            .collect();
        let total: usize = domains.iter().map(Vec::len).product();
        ensure!(total <= 243, "{} has {total} assignments", risk.id);
        for n in 0..total {
            let mut rest = n;
            let mut b = AnswerBindings::new();
            for (q, d) in questions.iter().zip(&domains) {
                b.insert(q.clone(), d[rest % d.len()].clone());
                rest /= d.len();
            }
            for flags in [true, false] {
                let config = EngineConfig::with_unknown_flags(flags);
                let assessed =
                    engine::assess_bindings(&fw, &b, &config).map_err(|e| e.to_string())?;
                let got = assessed.iter().find(|r| r.risk_id == risk.id).unwrap();
                let codes: Vec<(u8, bool)> = rules
                    .iter()
                    .map(|r| {
                        let direct = truth_code(r.condition.evaluate(&b).expect("well-typed"));
                        assert_eq!(
                            direct,
                            k3(&r.condition, &b),
                            "rule {} disagrees with oracle",
                            r.id
                        );
                        (direct, r.unknown_flags.unwrap_or(flags))
                    })
                    .collect();
                let want = expected_status(&codes);
                ensure!(
                    got.status == want,
                    "{} under {b:?} (flags={flags}): got {}, want {want}",
                    risk.id,
                    got.status
                );
                for (outcome, (code, _)) in got.fired_rules.iter().zip(&codes) {
                    ensure!(
                        truth_code(outcome.truth) == *code,
                        "rule {} truth",
                        outcome.rule_id
                    );
                }
            }
            assignments += 1;
        }
    }
    Ok(format!(
        "{} rules over {assignments} total assignments, both policies",
        fw.rules().len()
    ))
}

// ---------------------------------------------------------------------------

/// Random steps: (question index, answer choice). Invalid or ineligible
/// steps are part of the test: they must be rejected without effect.
fn steps_strategy(max: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    proptest::collection::vec((0usize..64, 0usize..8), 0..max)
}

fn value_for(kind: &QuestionKind, choice: usize) -> Answer {
    match kind {
        QuestionKind::FreeText => Answer::Text(format!("note {choice}")),
        other => {
            let d = domain(other);
            d[choice % d.len()].clone()
        }
    }
}

fn gate_code(q: &riskscope_core::questionnaire::Question, b: &AnswerBindings) -> u8 {
    q.gate.as_ref().map_or(2, |g| k3(g, b))
}

fn gating_partition() -> Result<String, String> {
    let fw = Framework::bundled();
    let qs = fw.questionnaires();
    let all: Vec<_> = qs.all_questions().collect();
    let counter = std::cell::Cell::new(0usize);
    run_property(GATING_SEQUENCES, steps_strategy(40), |steps| {
        let mut s =
            AssessmentSession::new("g", "u", fw.pack().content_hash(), "2026-01-01T00:00:00Z");
        for (i, choice) in steps {
            let (owner, q) = all[i % all.len()];
            let before = s.clone();
            let gate_open = gate_code(q, s.bindings()) == 2;
            let result = s.record_answer(
                qs,
                q.id.as_str(),
                value_for(&q.kind, choice),
                &owner.role,
                "2026-01-01T00:00:01Z",
            );
            // Re-answering is allowed; only the gate decides.
            prop_assert_eq!(result.is_ok(), gate_open);
            if result.is_err() {
                prop_assert_eq!(&s, &before);
            }
            for qn in qs.questionnaires() {
                let c = s.completeness(qn);
                for q in &qn.questions {
                    let id = &q.id;
                    let answered = s.bindings().contains(id.as_str());
                    let open = gate_code(q, s.bindings()) == 2;
                    let buckets = [
                        c.answered.contains(id),
                        c.eligible_unanswered.contains(id),
                        c.withheld.contains(id),
                    ];
                    prop_assert_eq!(
                        buckets.iter().filter(|&&x| x).count(),
                        1,
                        "{} in several buckets",
                        id
                    );
                    prop_assert_eq!(
                        buckets,
                        [answered, !answered && open, !answered && !open],
                        "{}",
                        id
                    );
                    if answered {
                        prop_assert!(open, "active answer {} behind a closed gate", id);
                    }
                }
                let next: Vec<_> = s.next_questions(qn).iter().map(|q| q.id.clone()).collect();
                prop_assert_eq!(next, c.eligible_unanswered.clone());
            }
            counter.set(counter.get() + 1);
        }
        let file = s.to_file();
        let bytes = serde_json::to_vec(&file).unwrap();
        let replayed =
            AssessmentSession::from_file(serde_json::from_slice(&bytes).unwrap(), qs).unwrap();
        prop_assert_eq!(&replayed, &s);
        prop_assert_eq!(serde_json::to_vec(&replayed.to_file()).unwrap(), bytes);
        Ok(())
    })?;
    Ok(format!(
        "{GATING_SEQUENCES} sequences, {} steps; partition exact and replay identical",
        counter.get()
    ))
}

// ---------------------------------------------------------------------------

/// Report content that must not depend on how answers arrived.
#[derive(Debug, PartialEq)]
struct Comparable {
    risks: Vec<engine::RiskAssessment>,
    explanations: Vec<String>,
    dossier: Vec<(String, String)>,
}

fn comparable(report: &PotentialRiskReport) -> Comparable {
    Comparable {
        risks: report.risks.clone(),
        explanations: report
            .risks
            .iter()
            .map(|r| engine::explain(report, &r.risk_id).unwrap())
            .collect(),
        dossier: report
            .dossier
            .entries
            .iter()
            .map(|e| (e.question_id.to_string(), e.answer.clone()))
            .collect(),
    }
}

/// Answer the questions of `questionnaire_id` in order, each with the given
/// choice or skipped, honoring gates.
fn fill(fw: &Framework, s: &mut AssessmentSession, questionnaire_id: &str, picks: &[usize]) {
    let qn = fw.questionnaires().questionnaire(questionnaire_id).unwrap();
    for (q, &pick) in qn.questions.iter().zip(picks) {
        if pick % 4 == 3 || s.gate_status(q) != Truth::Yes {
            continue;
        }
        s.record_answer(
            fw.questionnaires(),
            q.id.as_str(),
            value_for(&q.kind, pick),
            &qn.role,
            "2026-01-01T00:00:01Z",
        )
        .unwrap();
    }
}

fn reuse_equivalence() -> Result<String, String> {
    let fw = Framework::bundled();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = ProfileStore::new(dir.path());
    let pack_hash = fw.pack().content_hash().to_owned();
    let attached = std::cell::Cell::new(0usize);
    let strategy = (
        proptest::collection::vec(0usize..8, 5),
        proptest::collection::vec(0usize..8, 9),
        proptest::collection::vec(0usize..8, 1),
        any::<bool>(),
    );
    run_property(
        REUSE_PROFILES,
        strategy,
        |(model_picks, use_picks, impl_picks, flags)| {
            let mut onboarding =
                AssessmentSession::new("m", "model onboarding", &pack_hash, "2026-01-01T00:00:00Z");
            fill(&fw, &mut onboarding, "model-onboarding", &model_picks);
            let Ok(p) = EntityProfile::extract(
                &fw,
                &onboarding,
                EntityKind::Model,
                "granite-3.1",
                "data-scientist",
                "2026-01-01T00:00:02Z",
            ) else {
                // All five picks skipped: nothing to reuse, nothing to compare.
                return Ok(());
            };
            store.save(&p).unwrap();
            let p = store
                .resolve(EntityKind::Model, "granite-3.1", Some(&p.profile_hash))
                .unwrap();

            let base = || {
                let mut s =
                    AssessmentSession::new("u", "second use", &pack_hash, "2026-01-01T00:00:00Z");
                fill(&fw, &mut s, "use", &use_picks);
                fill(&fw, &mut s, "use-and-model", &impl_picks);
                s
            };
            let mut reused = base();
            prop_assert!(
                profile::attach_profile(&fw, &mut reused, &p, "2026-01-01T00:00:03Z").unwrap()
            );
            let mut manual = base();
            for (_, q) in fw.questionnaires().all_questions() {
                if let Some(v) = p.answers.get(q.id.as_str()) {
                    manual
                        .record_answer(
                            fw.questionnaires(),
                            q.id.as_str(),
                            v.clone(),
                            "data-scientist",
                            "2026-01-01T00:00:03Z",
                        )
                        .unwrap();
                }
            }
            prop_assert_eq!(reused.bindings(), manual.bindings());
            let config = EngineConfig::with_unknown_flags(flags);
            let a = engine::evaluate_session(&fw, &reused, &config, "t").unwrap();
            let b = engine::evaluate_session(&fw, &manual, &config, "t").unwrap();
            prop_assert_eq!(comparable(&a), comparable(&b));
            for (q, _) in p.answers.iter() {
                let src = reused.answer(q.as_str()).unwrap().source;
                let is_reused = matches!(
                    src,
                    riskscope_core::questionnaire::AnswerSource::Reused { .. }
                );
                prop_assert!(is_reused, "{} should be marked reused", q);
            }
            attached.set(attached.get() + 1);
            Ok(())
        },
    )?;
    let n = attached.get();
    ensure!(
        n * 10 >= REUSE_PROFILES as usize * 9,
        "only {n} of {REUSE_PROFILES} cases produced a profile"
    );
    Ok(format!("{n} of {REUSE_PROFILES} randomized profiles stored, attached and compared (rest had no answers)"))
}

// ---------------------------------------------------------------------------

fn status_monotonicity() -> Result<String, String> {
    let fw = Framework::bundled();
    let qs = fw.questionnaires();
    let transitions = std::cell::Cell::new(0usize);
    run_property(
        MONOTONIC_SEQUENCES,
        (steps_strategy(30), any::<bool>()),
        |(steps, flags)| {
            let config = EngineConfig::with_unknown_flags(flags);
            let mut s =
                AssessmentSession::new("m", "u", fw.pack().content_hash(), "2026-01-01T00:00:00Z");
            let status = |s: &AssessmentSession| -> Vec<RiskStatus> {
                engine::assess_bindings(&fw, s.bindings(), &config)
                    .unwrap()
                    .iter()
                    .map(|r| r.status)
                    .collect()
            };
            let mut prev = status(&s);
            for (i, choice) in steps {
                // Incremental: only ever answer a currently eligible, unanswered question.
                let eligible: Vec<_> = qs
                    .questionnaires()
                    .iter()
                    .flat_map(|qn| s.next_questions(qn).into_iter().map(move |q| (qn, q)))
                    .collect();
                if eligible.is_empty() {
                    break;
                }
                let (qn, q) = eligible[i % eligible.len()];
                s.record_answer(
                    qs,
                    q.id.as_str(),
                    value_for(&q.kind, choice),
                    &qn.role,
                    "2026-01-01T00:00:01Z",
                )
                .unwrap();
                prop_assert!(s.inactive().is_empty());
                let next = status(&s);
                for (a, b) in prev.iter().zip(&next) {
                    let flip = matches!(
                        (a, b),
                        (RiskStatus::Flagged, RiskStatus::NotFlagged)
                            | (RiskStatus::NotFlagged, RiskStatus::Flagged)
                    );
                    prop_assert!(!flip, "{} -> {} after {}", a, b, q.id);
                    if a != b {
                        transitions.set(transitions.get() + 1);
                    }
                }
                prev = next;
            }
            Ok(())
        },
    )?;
    Ok(format!(
        "{MONOTONIC_SEQUENCES} incremental sequences, {} status changes, none between flagged and not-flagged",
        transitions.get()
    ))
}
