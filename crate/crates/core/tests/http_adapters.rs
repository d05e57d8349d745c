mod common;

use std::sync::Arc;

use common::{openai_reply, StubServer};
use maintlog::gateway::{
    Gateway, GatewayError, GeminiProvider, OpenAiProvider, Provider, ProviderErrorKind, ProviderKind, ProviderProfile,
};

fn profile(kind: ProviderKind, endpoint: &str) -> ProviderProfile {
    ProviderProfile {
        name: "stub".into(),
        kind,
        model: "stub-model".into(),
        endpoint: endpoint.into(),
        api_key_env: "STUB_KEY".into(),
        context_window_tokens: 100_000,
        max_output_tokens: 1_000,
        request_timeout_s: 10,
        max_retries: 2,
        temperature: Some(0.0),
    }
}

fn no_sleep(gw: Gateway) -> Gateway {
    gw.with_sleeper(Arc::new(|_| {}))
}

#[test]
fn openai_request_shape_and_reply() {
    let server = StubServer::start(vec![(200, openai_reply("hello"))]);
    let p = OpenAiProvider::new(
        profile(ProviderKind::Openai, &format!("{}/v1/", server.url)),
        "sk-test".into(),
    );
    let r = p.send("prompt text").unwrap();
    assert_eq!(r.text, "hello");
    assert_eq!((r.prompt_tokens, r.completion_tokens), (Some(11), Some(7)));
    let req = &server.requests()[0];
    assert_eq!(req.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(req.header("authorization"), Some("Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["messages"][0]["content"], "prompt text");
    assert_eq!(body["max_completion_tokens"], 1000);
    assert_eq!(body["temperature"], 0.0);
}

#[test]
fn gemini_request_shape_and_reply() {
    let reply = serde_json::json!({
        "candidates": [{"content": {"parts": [{"text": "a"}, {"text": "b"}]}}],
        "usageMetadata": {"promptTokenCount": 5, "candidatesTokenCount": 2}
    });
    let server = StubServer::start(vec![(200, reply.to_string())]);
    let p = GeminiProvider::new(profile(ProviderKind::Gemini, &server.url), "g-key".into());
    let r = p.send("hi").unwrap();
    assert_eq!(r.text, "ab");
    assert_eq!(r.prompt_tokens, Some(5));
    let req = &server.requests()[0];
    assert_eq!(req.request_line, "POST /models/stub-model:generateContent HTTP/1.1");
    assert_eq!(req.header("x-goog-api-key"), Some("g-key"));
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["contents"][0]["parts"][0]["text"], "hi");
    assert_eq!(body["generationConfig"]["maxOutputTokens"], 1000);
}

#[test]
fn rate_limits_are_retried_then_succeed() {
    let server = StubServer::start(vec![(429, "{}".into()), (503, "{}".into()), (200, openai_reply("ok"))]);
    let p = profile(ProviderKind::Openai, &server.url);
    let gw = no_sleep(Gateway::new(p.clone(), Arc::new(OpenAiProvider::new(p, "k".into()))));
    let c = gw.complete("x").unwrap();
    assert_eq!((c.response.text.as_str(), c.attempts), ("ok", 3));
}

#[test]
fn persistent_rate_limits_exhaust_retries() {
    let server = StubServer::start(vec![(429, "{\"error\":\"slow down\"}".into())]);
    let p = profile(ProviderKind::Openai, &server.url);
    let gw = no_sleep(Gateway::new(p.clone(), Arc::new(OpenAiProvider::new(p, "k".into()))));
    match gw.complete("x") {
        Err(GatewayError::RetriesExhausted { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert_eq!(last.kind, ProviderErrorKind::RateLimited);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn auth_and_overflow_are_not_retried() {
    let server = StubServer::start(vec![(401, "{}".into())]);
    let p = profile(ProviderKind::Openai, &server.url);
    let gw = no_sleep(Gateway::new(p.clone(), Arc::new(OpenAiProvider::new(p, "k".into()))));
    assert!(matches!(gw.complete("x"), Err(GatewayError::AuthFailure(_))));
    assert_eq!(server.requests().len(), 1);

    let server = StubServer::start(vec![(400, "{\"error\":{\"code\":\"context_length_exceeded\"}}".into())]);
    let p = profile(ProviderKind::Openai, &server.url);
    let gw = no_sleep(Gateway::new(p.clone(), Arc::new(OpenAiProvider::new(p, "k".into()))));
    assert!(matches!(gw.complete("x"), Err(GatewayError::ContextOverflow(_))));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn malformed_envelopes_are_bad_responses() {
    let server = StubServer::start(vec![(200, "{\"choices\":[]}".into())]);
    let p = OpenAiProvider::new(profile(ProviderKind::Openai, &server.url), "k".into());
    assert_eq!(p.send("x").unwrap_err().kind, ProviderErrorKind::BadResponse);
}
