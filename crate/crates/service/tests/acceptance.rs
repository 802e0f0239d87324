//! Acceptance suite: one PASS/FAIL line per primary criterion, each checked
//! at run time against its runtime budget. Exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use erd_mentor::{FeedbackService, Store};
use erd_mentor_core::arbitrary::{schema, schema_with_focus};
use erd_mentor_core::eval::{
    f1, labels_to_csv, minimal_counts, synthesize_labels, Counts, MistakeCategory, UNDEFINED,
};
use erd_mentor_core::prompt::{
    build_faq_prompt, build_feedback_prompt, build_matching_prompt, parse_feedback_response,
    parse_matching_response,
};
use erd_mentor_core::{
    check_dot_syntax, format, from_json, load_requirements, parse, prune, to_dot, to_json,
    view_to_dot, ErdSchema,
};
use erd_mentor_llm::{Gateway, HttpBackend, LlmConfig, MemorySink, MockBackend, MockScript};
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use serde_json::Value;

const CASES: u32 = 1000;
const WEAK_ENTITY_CORRECTION: &str = "HealthRecord is a weak entity and should have a partial key";
const WEAK_ENTITY_QUESTION: &str = "Why is HealthRecord considered a weak entity in the ERD?";

type Check = Result<String, String>;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn runner() -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

struct Row {
    category: MistakeCategory,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn reference() -> Vec<Row> {
    let text = fixture("reference_metrics.csv");
    text.lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            Row {
                category: c[0].parse().unwrap(),
                precision: c[1].parse().unwrap(),
                recall: c[2].parse().unwrap(),
                f1: c[3].parse().unwrap(),
            }
        })
        .collect()
}

fn cents(x: f64) -> u64 {
    (x * 100.0).round() as u64
}

fn table_f1() -> Check {
    let rows = reference();
    ensure(rows.len() == 11, || {
        format!("expected 11 reference rows, got {}", rows.len())
    })?;
    let mut worst: (f64, &str) = (0.0, "");
    for row in &rows {
        let got = f1(row.precision, row.recall).map_err(|e| e.to_string())?;
        let diff = (got - row.f1).abs();
        ensure(diff <= 0.02, || {
            format!("{}: F1 {got:.4} vs published {}", row.category, row.f1)
        })?;
        if diff > worst.0 {
            worst = (diff, row.category.ident());
        }
    }
    Ok(format!(
        "11/11 rows within ±0.02; largest gap {:.4} ({})",
        worst.0, worst.1
    ))
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_erd-mentor"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("run erd-mentor");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn metric_realization() -> Check {
    let mut labels = Vec::new();
    let mut shown = Vec::new();
    for row in reference() {
        let counts = minimal_counts(cents(row.precision), cents(row.recall), 200)
            .ok_or_else(|| format!("{}: no realization up to 200 labels", row.category))?;
        shown.push(format!(
            "{}=({},{},{})",
            row.category.ident(),
            counts.tp,
            counts.fp,
            counts.fn_
        ));
        labels.extend(synthesize_labels(
            row.category,
            Counts { tn: 0, ..counts },
            "oracle",
        ));
    }
    let dir = temp_dir("realization");
    let path = dir.join("labels.csv");
    std::fs::write(&path, labels_to_csv(&labels)).unwrap();
    let (code, report, stderr) = run_cli(&["eval", "--labels", path.to_str().unwrap()]);
    std::fs::remove_dir_all(&dir).ok();
    ensure(code == 0, || format!("eval exited {code}: {stderr}"))?;

    let cells: Vec<Vec<String>> = report
        .lines()
        .skip(2)
        .map(|l| {
            l.split('|')
                .map(|c| c.trim().to_string())
                .filter(|c| !c.is_empty())
                .collect()
        })
        .collect();
    for (row, cells) in reference().iter().zip(&cells) {
        ensure(cells[0] == row.category.title(), || {
            format!("row order: {cells:?}")
        })?;
        for (cell, want) in cells[1..].iter().zip([row.precision, row.recall, row.f1]) {
            ensure(cell != UNDEFINED, || {
                format!("{}: undefined cell", row.category)
            })?;
            let got: f64 = cell.parse().map_err(|_| format!("bad cell '{cell}'"))?;
            ensure((got - want).abs() <= 0.01 + 1e-9, || {
                format!("{}: {got} vs published {want}", row.category)
            })?;
        }
    }
    Ok(format!(
        "{} labels; report within ±0.01; {}",
        labels.len(),
        shown.join(" ")
    ))
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect()
}

fn grammar_json_dot() -> Check {
    let hospital = parse(&fixture("hospital.erd"))
        .map_err(|e| format!("{e:?}"))?
        .schema;
    ensure(
        hospital.entities.len() == 2 && hospital.relationships.len() == 1,
        || "hospital fixture shape".into(),
    )?;
    check_dot_syntax(&to_dot(&hospital).unwrap()).map_err(|e| e.to_string())?;

    let staff = parse(&fixture("hospital_staff.erd"))
        .map_err(|e| format!("{e:?}"))?
        .schema;
    let fragment = r#""specializations": [{
      "name": "Hospital_staff",
      "subcategories": [
        {"name": "Nurse"},
        {"name": "Physician"} ],
      "type": ["disjoint"]
    }]"#;
    ensure(squash(&to_json(&staff)).contains(&squash(fragment)), || {
        "specialization fragment differs".into()
    })?;

    let check = |s: ErdSchema| -> Result<(), TestCaseError> {
        let text = format(&s);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e:?}\n{text}")))?;
        if back.schema != s {
            return Err(TestCaseError::fail(format!(
                "parse∘format changed:\n{text}"
            )));
        }
        let json = to_json(&s);
        if from_json(&json).map_err(|e| TestCaseError::fail(e.to_string()))? != s {
            return Err(TestCaseError::fail("from_json∘to_json changed the schema"));
        }
        if let Ok(dot) = to_dot(&s) {
            check_dot_syntax(&dot).map_err(|e| TestCaseError::fail(format!("{e}\n{dot}")))?;
        }
        Ok(())
    };
    runner().run(&schema(), check).map_err(|e| e.to_string())?;
    Ok(format!(
        "fixtures ok; fragment matches; {CASES} random schemas round-trip with valid DOT"
    ))
}

fn element_names(s: &ErdSchema) -> Vec<String> {
    let mut v: Vec<String> = s
        .entities
        .iter()
        .map(|e| format!("entity {}", e.name))
        .collect();
    v.extend(
        s.relationships
            .iter()
            .map(|r| format!("relationship {}", r.name)),
    );
    v.extend(
        s.specializations
            .iter()
            .map(|x| format!("specialization {}", x.name)),
    );
    v.extend(s.unions.iter().map(|u| format!("union {}", u.name)));
    v.sort();
    v
}

fn sorted(items: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = items.iter().map(|s| s.to_string()).collect();
    v.sort();
    v
}

fn pruning() -> Check {
    let hospital = parse(&fixture("hospital.erd")).unwrap().schema;
    let view = prune(&hospital, "HasRecord").map_err(|e| e.to_string())?;
    let want = sorted(&[
        "entity Patient",
        "entity HealthRecord",
        "relationship HasRecord",
    ]);
    ensure(element_names(&view.schema) == want, || {
        format!("HasRecord view {:?}", element_names(&view.schema))
    })?;
    check_dot_syntax(&view_to_dot(&view).unwrap()).map_err(|e| e.to_string())?;

    let shared = parse("entity A { key a }\nentity B { key b }\nrelationship R1 (A 1, B N)\nrelationship R2 (A N, B M)\n")
        .unwrap()
        .schema;
    let view = prune(&shared, "R1").map_err(|e| e.to_string())?;
    let want = sorted(&["entity A", "entity B", "relationship R1", "relationship R2"]);
    ensure(element_names(&view.schema) == want, || {
        format!("shared view {:?}", element_names(&view.schema))
    })?;

    let staff = parse(&fixture("hospital_staff.erd")).unwrap().schema;
    let view = prune(&staff, "Treats").map_err(|e| e.to_string())?;
    let want = sorted(&[
        "relationship Treats",
        "entity Physician",
        "entity Patient",
        "specialization Hospital_staff",
        "entity Hospital_staff",
        "entity Nurse",
    ]);
    ensure(element_names(&view.schema) == want, || {
        format!("specialization view {:?}", element_names(&view.schema))
    })?;

    runner()
        .run(&schema_with_focus(), |(s, focus)| {
            let view = prune(&s, &focus).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let fail = |m: &str| Err(TestCaseError::fail(m.to_string()));
            if !view.schema.entities.iter().all(|e| s.entities.contains(e))
                || !view
                    .schema
                    .relationships
                    .iter()
                    .all(|r| s.relationships.contains(r))
                || !view
                    .schema
                    .specializations
                    .iter()
                    .all(|x| s.specializations.contains(x))
                || !view.schema.unions.iter().all(|u| s.unions.contains(u))
            {
                return fail("view is not a subgraph");
            }
            for r in &view.schema.relationships {
                for p in &r.participants {
                    if s.entity(&p.entity).is_some() && view.schema.entity(&p.entity).is_none() {
                        return fail("participant closure broken");
                    }
                }
            }
            if view.schema.relationship(&focus).is_none() {
                return fail("focus missing");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "3 examples exact; closure and subgraph hold on {CASES} random (schema, focus) pairs"
    ))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "erd-mentor-acceptance-{tag}-{}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn feedback_cli(requirements: &str, erd: &str, mock: &str) -> (i32, String, String) {
    let f = fixtures();
    let path = |n: &str| f.join(n).to_str().unwrap().to_string();
    let (r, e, m) = (path(requirements), path(erd), path(mock));
    run_cli(&[
        "feedback",
        "--requirements",
        &r,
        "--erd",
        &e,
        "--relationship",
        "HasRecord",
        "--mock",
        &m,
        "--json",
    ])
}

fn stored_record(
    requirements: &str,
    mock: &str,
) -> Result<(erd_mentor::records::FeedbackRecord, usize), String> {
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap();
    runtime.block_on(async {
        let sink = Arc::new(MemorySink::default());
        let script = MockScript::from_file(&fixtures().join(mock)).map_err(|e| e.to_string())?;
        let gateway = Gateway::new(Arc::new(MockBackend::new(script)), LlmConfig::default())
            .map_err(|e| e.to_string())?
            .with_sink(sink.clone());
        let store = Store::in_memory().map_err(|e| e.to_string())?;
        let svc = FeedbackService::new(store, Arc::new(gateway));
        let project = svc
            .create_project(&fixture(requirements), vec![])
            .map_err(|e| e.to_string())?;
        let (submission, _) = svc
            .submit_erd(project.id, &fixture("hospital_student.erd"), None)
            .map_err(|e| e.to_string())?;
        let record = svc
            .request_feedback(submission.id, "HasRecord")
            .await
            .map_err(|e| e.to_string())?;
        let stored = svc
            .store()
            .feedback(&record.id)
            .map_err(|e| e.to_string())?;
        ensure(stored.as_ref() == Some(&record), || {
            "stored record differs from returned one".into()
        })?;
        let logged = sink.snapshot();
        ensure(
            record
                .exchanges
                .iter()
                .all(|l| logged.iter().any(|e| e.id == l.exchange_id)),
            || "record links an exchange that was never logged".into(),
        )?;
        Ok((record, logged.len()))
    })
}

fn pipeline_end_to_end() -> Check {
    let (code, first, stderr) = feedback_cli(
        "hospital_requirements.json",
        "hospital_student.erd",
        "mock_hospital.json",
    );
    ensure(code == 0, || format!("feedback exited {code}: {stderr}"))?;
    let report: Value = serde_json::from_str(&first).map_err(|e| e.to_string())?;
    ensure(
        report["feedback"]
            .as_str()
            .unwrap_or("")
            .contains(WEAK_ENTITY_CORRECTION),
        || "feedback lacks the weak-entity correction".into(),
    )?;
    let faq = report["faq"].as_array().cloned().unwrap_or_default();
    ensure(
        faq.iter().any(|e| {
            e["question"] == WEAK_ENTITY_QUESTION
                && e["answer"]
                    .as_str()
                    .unwrap_or("")
                    .contains("partial key, record_id")
        }),
        || "FAQ lacks the weak-entity question and answer".into(),
    )?;
    let exchanges = report["exchanges"].as_array().map_or(0, Vec::len);
    ensure(exchanges == 3, || {
        format!("{exchanges} exchanges, expected 3")
    })?;

    let (_, second, _) = feedback_cli(
        "hospital_requirements.json",
        "hospital_student.erd",
        "mock_hospital.json",
    );
    ensure(first == second, || "rerun output differs".into())?;
    let (text_a, text_b) = {
        let f = fixtures();
        let args = |f: &Path| {
            vec![
                "feedback".to_string(),
                "--requirements".into(),
                f.join("hospital_requirements.json")
                    .to_string_lossy()
                    .into(),
                "--erd".into(),
                f.join("hospital_student.erd").to_string_lossy().into(),
                "--relationship".into(),
                "HasRecord".into(),
                "--mock".into(),
                f.join("mock_hospital.json").to_string_lossy().into(),
            ]
        };
        let a = args(&f);
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        (run_cli(&a).1, run_cli(&a).1)
    };
    ensure(text_a == text_b, || "plain-text rerun differs".into())?;

    let (record, logged) = stored_record("hospital_requirements.json", "mock_hospital.json")?;
    ensure(record.exchanges.len() == 3 && logged == 3, || {
        format!(
            "stored record links {} exchanges ({logged} logged)",
            record.exchanges.len()
        )
    })?;
    ensure(record.feedback.contains(WEAK_ENTITY_CORRECTION), || {
        "stored feedback differs".into()
    })?;
    ensure(
        record
            .faq
            .iter()
            .any(|e| e.question == WEAK_ENTITY_QUESTION),
        || "stored FAQ differs".into(),
    )?;
    Ok(format!(
        "correction and weak-entity QA present; 3 exchanges; rerun byte-identical ({} bytes)",
        first.len()
    ))
}

fn degradation() -> Check {
    let (code, out, stderr) = feedback_cli(
        "hospital_requirements_no_rubrics.json",
        "hospital_student.erd",
        "mock_no_rubrics.json",
    );
    ensure(code == 0, || {
        format!("no-rubric run exited {code}: {stderr}")
    })?;
    let report: Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    ensure(
        report["feedback"]
            .as_str()
            .is_some_and(|f| !f.trim().is_empty()),
        || "empty feedback".into(),
    )?;
    ensure(report["faq_warning"].is_null(), || {
        format!("unexpected warning {}", report["faq_warning"])
    })?;
    let n = report["exchanges"].as_array().map_or(0, Vec::len);
    ensure(n == 3, || format!("no-rubric run made {n} calls"))?;

    let (code, out, stderr) = feedback_cli(
        "hospital_requirements.json",
        "hospital_student.erd",
        "mock_faq_prose.json",
    );
    ensure(code == 0, || {
        format!("FAQ-prose run exited {code}: {stderr}")
    })?;
    let report: Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    ensure(report["faq"] == Value::Array(vec![]), || {
        "FAQ should be empty".into()
    })?;
    ensure(report["faq_warning"].is_string(), || {
        "warning flag missing".into()
    })?;

    let (record, _) = stored_record("hospital_requirements.json", "mock_faq_prose.json")?;
    ensure(
        record.faq.is_empty() && record.faq_warning.is_some(),
        || "stored record is not degraded".into(),
    )?;
    ensure(record.feedback.contains(WEAK_ENTITY_CORRECTION), || {
        "degraded record lost its feedback".into()
    })?;
    Ok(format!(
        "no-rubric run well formed; FAQ failure stored with warning \"{}\"",
        record.faq_warning.unwrap()
    ))
}

/// Template fidelity: the prompts built for the running example equal the
/// blessed goldens byte for byte.
fn template_goldens() -> Result<(), String> {
    let golden = |name: &str| {
        std::fs::read_to_string(
            PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                .join("../core/tests/golden")
                .join(name),
        )
        .map_err(|e| format!("{name}: {e}"))
    };
    let reqs =
        load_requirements(&fixture("hospital_requirements.json")).map_err(|e| e.to_string())?;
    let student = parse(&fixture("hospital_student.erd")).unwrap().schema;
    let view = prune(&student, "HasRecord").unwrap();
    let script: Value = serde_json::from_str(&fixture("mock_hospital.json")).unwrap();
    let reply = |k: &str| script[k][0].as_str().unwrap().to_string();
    let relevant = parse_matching_response(&reply("matching"), &reqs).map_err(|e| e.to_string())?;
    let feedback = parse_feedback_response(&reply("feedback")).map_err(|e| e.to_string())?;
    for (name, body) in [
        (
            "prompt_matching.json",
            build_matching_prompt(&reqs, &view).body,
        ),
        (
            "prompt_feedback.json",
            build_feedback_prompt(&relevant, &view).body,
        ),
        (
            "prompt_faq.json",
            build_faq_prompt(&feedback, &relevant, &view).body,
        ),
    ] {
        ensure(golden(name)?.trim_end() == body.trim_end(), || {
            format!("{name} drifted")
        })?;
    }
    Ok(())
}

fn live_smoke() -> Result<String, String> {
    let Ok(endpoint) = std::env::var("ERD_MENTOR_LIVE_ENDPOINT") else {
        return Ok("live smoke skipped (ERD_MENTOR_LIVE_ENDPOINT unset)".into());
    };
    let config = LlmConfig {
        endpoint,
        ..LlmConfig::from_env().map_err(|e| e.to_string())?
    };
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap();
    runtime.block_on(async {
        let backend = HttpBackend::new(&config).map_err(|e| e.to_string())?;
        let gateway = Gateway::new(Arc::new(backend), config).map_err(|e| e.to_string())?;
        let reqs = load_requirements(&fixture("hospital_requirements.json")).unwrap();
        let student = parse(&fixture("hospital_student.erd")).unwrap().schema;
        let view = prune(&student, "HasRecord").unwrap();
        let prompt = build_matching_prompt(&reqs, &view);
        gateway
            .complete_structured(&prompt, |t| parse_matching_response(t, &reqs))
            .await
            .map_err(|e| format!("live endpoint: {e}"))?;
        Ok("live smoke passed (transport and structured parse)".into())
    })
}

fn substitution(mock_suite_passed: bool, invariants_passed: bool) -> Check {
    ensure(mock_suite_passed, || {
        "mock-driven end-to-end suite did not pass".into()
    })?;
    ensure(invariants_passed, || "invariant suites did not pass".into())?;
    template_goldens()?;
    let live = live_smoke()?;
    Ok(format!(
        "human outcomes and live-model correctness not asserted; substitutes hold: mock end-to-end, template goldens, invariant suites; {live}"
    ))
}

fn run(name: &str, budget: Duration, check: impl FnOnce() -> Check) -> bool {
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(msg)
    });
    let elapsed = started.elapsed();
    let result = match result {
        Ok(_) if elapsed > budget => Err(format!("took {elapsed:.2?}, budget {budget:?}")),
        other => other,
    };
    match &result {
        Ok(detail) => println!("PASS {name} [{elapsed:.2?} < {budget:?}]: {detail}"),
        Err(reason) => println!("FAIL {name} [{elapsed:.2?}]: {reason}"),
    }
    result.is_ok()
}

fn main() {
    // libtest-style flags (e.g. --list, filters) are accepted and ignored.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    println!("\nacceptance criteria");
    let secs = Duration::from_secs;
    let table = run("table1-f1-arithmetic", secs(1), table_f1);
    let realization = run("metric-realization", secs(10), metric_realization);
    let grammar = run("grammar-json-dot-golden", secs(30), grammar_json_dot);
    let pruned = run("pruning-semantics", secs(30), pruning);
    let e2e = run("pipeline-end-to-end-mock", secs(5), pipeline_end_to_end);
    let degraded = run("degradation-scenarios", secs(5), degradation);
    let substituted = run("desk-scale-substitution", secs(30), || {
        substitution(e2e && degraded, grammar && pruned)
    });
    let results = [
        table,
        realization,
        grammar,
        pruned,
        e2e,
        degraded,
        substituted,
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} passed\n", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
