use std::sync::Arc;
use std::time::Duration;

use erd_mentor_core::prompt::{parse_feedback_response, PromptKind, PromptText};
use erd_mentor_llm::{
    Gateway, LlmConfig, LlmError, MemorySink, MockBackend, MockFailure, MockReply, MockScript,
};

fn prompt(kind: PromptKind, body: &str) -> PromptText {
    PromptText {
        kind,
        body: body.into(),
        input_digest: format!("digest-{body}"),
    }
}

fn fast_config(max_retries: u32) -> LlmConfig {
    LlmConfig {
        max_retries,
        backoff_base_ms: 1,
        ..Default::default()
    }
}

#[tokio::test]
async fn mock_is_deterministic_across_gateways() {
    let script = MockScript::texts("*", &["first", "second"]);
    let mut runs = Vec::new();
    for _ in 0..2 {
        let gw = Gateway::new(Arc::new(MockBackend::new(script.clone())), fast_config(0)).unwrap();
        let p = prompt(PromptKind::Feedback, "x");
        let a = gw.complete(&p).await.unwrap().text;
        let b = gw.complete(&p).await.unwrap().text;
        let c = gw.complete(&p).await.unwrap().text;
        runs.push((a, b, c));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], ("first".into(), "second".into(), "second".into()));
}

#[tokio::test]
async fn scripted_failures_are_retried_up_to_the_limit() {
    let script = MockScript::default().with(
        "*",
        vec![
            MockReply::Failure {
                error: MockFailure::RateLimited,
            },
            MockReply::Failure {
                error: MockFailure::Server,
            },
            MockReply::Text("ok".into()),
        ],
    );
    let backend = Arc::new(MockBackend::new(script.clone()));
    let gw = Gateway::new(backend.clone(), fast_config(2)).unwrap();
    assert_eq!(
        gw.complete(&prompt(PromptKind::Faq, "a"))
            .await
            .unwrap()
            .text,
        "ok"
    );
    assert_eq!(backend.calls(), 3);

    let backend = Arc::new(MockBackend::new(script));
    let gw = Gateway::new(backend.clone(), fast_config(1)).unwrap();
    let err = gw
        .complete(&prompt(PromptKind::Faq, "a"))
        .await
        .unwrap_err();
    assert!(
        matches!(
            err,
            LlmError::BackendError {
                status: Some(503),
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(backend.calls(), 2);
}

#[tokio::test]
async fn auth_failure_is_not_retried() {
    let script = MockScript::default().with(
        "*",
        vec![MockReply::Failure {
            error: MockFailure::Auth,
        }],
    );
    let backend = Arc::new(MockBackend::new(script));
    let gw = Gateway::new(backend.clone(), fast_config(3)).unwrap();
    let err = gw
        .complete(&prompt(PromptKind::Matching, "a"))
        .await
        .unwrap_err();
    assert!(matches!(err, LlmError::AuthFailure { status: 401 }));
    assert_eq!(backend.calls(), 1);
}

#[tokio::test]
async fn rate_limit_exhaustion_reports_attempts() {
    let script = MockScript::default().with(
        "*",
        vec![MockReply::Failure {
            error: MockFailure::RateLimited,
        }],
    );
    let backend = Arc::new(MockBackend::new(script));
    let gw = Gateway::new(backend.clone(), fast_config(2)).unwrap();
    let err = gw
        .complete(&prompt(PromptKind::Matching, "a"))
        .await
        .unwrap_err();
    assert!(
        matches!(err, LlmError::RateLimited { attempts: 3 }),
        "{err}"
    );
    assert_eq!(backend.calls(), 3);
}

#[tokio::test]
async fn structured_fenced_json_parses_first_time() {
    let reply = "Here you go:\n```json\n{\"feedback\": \"Looks right.\"}\n```";
    let gw = Gateway::new(
        Arc::new(MockBackend::new(MockScript::texts("*", &[reply]))),
        fast_config(2),
    )
    .unwrap();
    let out = gw
        .complete_structured(&prompt(PromptKind::Feedback, "a"), parse_feedback_response)
        .await
        .unwrap();
    assert_eq!(out.value.text, "Looks right.");
    assert_eq!(out.exchanges.len(), 1);
}

#[tokio::test]
async fn structured_prose_then_json_takes_two_exchanges() {
    let script = MockScript::texts("*", &["I think it is fine.", "{\"feedback\": \"Fine.\"}"]);
    let sink = Arc::new(MemorySink::default());
    let gw = Gateway::new(Arc::new(MockBackend::new(script)), fast_config(2))
        .unwrap()
        .with_sink(sink.clone());
    let p = prompt(PromptKind::Feedback, "a");
    let out = gw
        .complete_structured(&p, parse_feedback_response)
        .await
        .unwrap();
    assert_eq!(out.value.text, "Fine.");
    assert_eq!(out.exchanges.len(), 2);
    assert_eq!(sink.snapshot(), out.exchanges);
    assert_eq!(out.exchanges[0].prompt_digest, p.input_digest);
    assert_ne!(out.exchanges[1].prompt_digest, p.input_digest);
    let second = out.exchanges[1].raw_request["messages"][0]["content"]
        .as_str()
        .unwrap();
    assert!(second.contains(erd_mentor_core::prompt::CORRECTIVE_INSTRUCTION));
}

#[tokio::test]
async fn structured_failure_keeps_every_attempt() {
    let gw = Gateway::new(
        Arc::new(MockBackend::new(MockScript::texts("*", &["just prose"]))),
        fast_config(1),
    )
    .unwrap();
    let err = gw
        .complete_structured(&prompt(PromptKind::Feedback, "a"), parse_feedback_response)
        .await
        .unwrap_err();
    match &err {
        LlmError::StructuredOutputFailure {
            attempts,
            exchanges,
        } => {
            assert_eq!(attempts.len(), 2);
            assert_eq!(exchanges.len(), 2);
            assert!(attempts.iter().all(|a| a.text == "just prose"));
        }
        other => panic!("unexpected {other}"),
    }
    assert_eq!(err.exchanges().len(), 2);
}

#[tokio::test]
async fn concurrency_never_exceeds_the_cap() {
    let backend = Arc::new(
        MockBackend::new(MockScript::texts("*", &["ok"])).with_delay(Duration::from_millis(20)),
    );
    let gw = Arc::new(Gateway::new(backend.clone(), fast_config(0)).unwrap());
    let tasks: Vec<_> = (0..16)
        .map(|i| {
            let gw = gw.clone();
            tokio::spawn(async move {
                gw.complete(&prompt(PromptKind::Faq, &i.to_string()))
                    .await
                    .unwrap();
            })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    assert_eq!(backend.calls(), 16);
    assert!(
        backend.peak_in_flight() <= 4,
        "peak {}",
        backend.peak_in_flight()
    );
    assert!(backend.peak_in_flight() >= 2, "calls never overlapped");
}

#[tokio::test]
async fn slow_backend_times_out() {
    let backend = Arc::new(
        MockBackend::new(MockScript::texts("*", &["late"])).with_delay(Duration::from_millis(1500)),
    );
    let config = LlmConfig {
        timeout_secs: 1,
        ..fast_config(0)
    };
    let gw = Gateway::new(backend, config).unwrap();
    let err = gw
        .complete(&prompt(PromptKind::Faq, "a"))
        .await
        .unwrap_err();
    assert!(matches!(err, LlmError::Timeout(1)), "{err}");
}

#[tokio::test]
async fn unscripted_prompt_is_an_error() {
    let gw = Gateway::new(
        Arc::new(MockBackend::new(MockScript::texts("faq", &["x"]))),
        fast_config(2),
    )
    .unwrap();
    let err = gw
        .complete(&prompt(PromptKind::Matching, "a"))
        .await
        .unwrap_err();
    assert!(err.to_string().contains("no reply"), "{err}");
}
