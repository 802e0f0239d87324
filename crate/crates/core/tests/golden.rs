//! Golden files for the hospital fixtures. Run with `BLESS=1` to rewrite them
//! after an intentional output change, then review the diff.

use std::path::PathBuf;

use erd_mentor_core::prompt::{
    build_faq_prompt, build_feedback_prompt, build_matching_prompt, parse_faq_response,
    parse_feedback_response, parse_matching_response, FAQ_TASK, FEEDBACK_TASK, MATCHING_TASK,
};
use erd_mentor_core::{
    check_dot_syntax, format, from_json, load_requirements, parse, prune, to_dot, to_json,
    view_to_dot, ErdSchema,
};

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with BLESS=1 to create", path.display()));
    assert_eq!(actual, expected, "{} differs", path.display());
}

fn hospital() -> ErdSchema {
    parse(include_str!("../fixtures/hospital.erd"))
        .unwrap()
        .schema
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

#[test]
fn hospital_fixture_shape() {
    let s = hospital();
    assert_eq!(s.entities.len(), 2);
    assert_eq!(s.relationships.len(), 1);
    let names = |e: &str| -> Vec<String> {
        s.entity(e)
            .unwrap()
            .attributes
            .iter()
            .map(|a| a.name.clone())
            .collect()
    };
    assert_eq!(names("Patient"), ["id", "name", "address", "phone_number"]);
    assert_eq!(
        names("HealthRecord"),
        ["record_id", "disease", "date", "status", "description"]
    );
}

#[test]
fn hospital_json() {
    let s = hospital();
    let json = to_json(&s);
    assert_eq!(json, to_json(&s), "serialization must be byte-stable");
    assert_eq!(from_json(&json).unwrap(), s);
    golden("hospital.json", &json);
}

#[test]
fn hospital_text() {
    let text = format(&hospital());
    assert_eq!(text, include_str!("../fixtures/hospital.erd"));
    golden("hospital.erd", &text);
}

#[test]
fn hospital_dot() {
    let dot = to_dot(&hospital()).unwrap();
    check_dot_syntax(&dot).unwrap();
    golden("hospital.dot", &dot);
}

#[test]
fn staff_json_contains_specialization_fragment() {
    let s = parse(include_str!("../fixtures/hospital_staff.erd"))
        .unwrap()
        .schema;
    let json = to_json(&s);
    let fragment = r#""specializations": [{"name": "Hospital_staff", "subcategories": [{"name": "Nurse"}, {"name": "Physician"}], "type": ["disjoint"]}]"#;
    assert!(squash(&json).contains(&squash(fragment)), "{json}");
    let dot = to_dot(&s).unwrap();
    check_dot_syntax(&dot).unwrap();
    golden("hospital_staff.json", &json);
    golden("hospital_staff.dot", &dot);
}

#[test]
fn pruned_view_dot() {
    let view = prune(&hospital(), "HasRecord").unwrap();
    let dot = view_to_dot(&view).unwrap();
    assert!(dot.contains("HealthRecord [shape=box, peripheries=2"));
    assert!(dot.contains("label=\"N\""));
    check_dot_syntax(&dot).unwrap();
}

#[test]
fn running_example_prompts() {
    let reqs = load_requirements(include_str!("../fixtures/hospital_requirements.json")).unwrap();
    let student = parse(include_str!("../fixtures/hospital_student.erd"))
        .unwrap()
        .schema;
    let view = prune(&student, "HasRecord").unwrap();

    let matching = build_matching_prompt(&reqs, &view);
    assert!(matching.body.contains(MATCHING_TASK));
    assert_eq!(build_matching_prompt(&reqs, &view), matching);
    golden("prompt_matching.json", &matching.body);

    let script: serde_json::Value =
        serde_json::from_str(include_str!("../fixtures/mock_hospital.json")).unwrap();
    let reply = |kind: &str| script[kind][0].as_str().unwrap().to_string();

    let relevant = parse_matching_response(&reply("matching"), &reqs).unwrap();
    assert_eq!(relevant.matched_ids(), ["patient", "health-record"]);
    let feedback_prompt = build_feedback_prompt(&relevant, &view);
    assert!(feedback_prompt.body.contains(FEEDBACK_TASK));
    assert!(feedback_prompt
        .body
        .contains("HealthRecord is a weak entity and should have a partial key record_id"));
    golden("prompt_feedback.json", &feedback_prompt.body);

    let feedback = parse_feedback_response(&reply("feedback")).unwrap();
    let faq_prompt = build_faq_prompt(&feedback, &relevant, &view);
    assert!(faq_prompt.body.contains(FAQ_TASK));
    assert!(faq_prompt.body.contains(&feedback.text));
    golden("prompt_faq.json", &faq_prompt.body);

    let faq = parse_faq_response(&reply("faq")).unwrap();
    assert_eq!(
        faq.entries[0].question,
        "Why is HealthRecord considered a weak entity in the ERD?"
    );

    // Every prompt body is itself a JSON document.
    for body in [&matching.body, &feedback_prompt.body, &faq_prompt.body] {
        serde_json::from_str::<serde_json::Value>(body).unwrap();
    }
}

#[test]
fn prompts_without_rubrics_stay_well_formed() {
    let reqs = load_requirements(include_str!(
        "../fixtures/hospital_requirements_no_rubrics.json"
    ))
    .unwrap();
    let student = parse(include_str!("../fixtures/hospital_student.erd"))
        .unwrap()
        .schema;
    let view = prune(&student, "HasRecord").unwrap();
    let matching = build_matching_prompt(&reqs, &view);
    let doc: serde_json::Value = serde_json::from_str(&matching.body).unwrap();
    assert_eq!(doc["problem-statements"].as_array().unwrap().len(), 4);
    assert_eq!(
        doc["problem-statements"][0]["rubrics"],
        serde_json::json!([])
    );
}

#[test]
fn student_view_hides_rubrics() {
    let reqs = load_requirements(include_str!("../fixtures/hospital_requirements.json")).unwrap();
    let view = erd_mentor_core::requirements::student_view(&reqs);
    for item in &reqs.items {
        assert!(view.contains(&item.description));
        for secret in item.rubrics.iter().chain(&item.questions) {
            assert!(!view.contains(secret.as_str()), "leaked: {secret}");
        }
    }
}

#[test]
fn invoicing_item_is_flagged_as_coarse() {
    let reqs = load_requirements(include_str!("../fixtures/hospital_requirements.json")).unwrap();
    let flagged: Vec<String> = erd_mentor_core::requirements::granularity_lint(&reqs)
        .into_iter()
        .map(|w| w.item_id)
        .collect();
    assert!(flagged.contains(&"invoicing".to_string()), "{flagged:?}");
    assert!(!flagged.contains(&"patient".to_string()));
}
