//! The HTTP backends against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use optpick::embed::{embed, EmbeddingSource};
use optpick::gateway::{HttpBackend, HttpConfig};
use optpick::{Backend, Error, LabelId, ModelQuery};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serves one canned `(status, body)` per connection, in order, and records
/// what it was sent.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (name, value) = h.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => len = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                auth,
                body: serde_json::from_slice(&buf).unwrap(),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn config(base_url: String, key_env: &str) -> HttpConfig {
    HttpConfig {
        base_url,
        model: "test-model".into(),
        api_key_env: key_env.into(),
        timeout_secs: 5,
        max_attempts: 3,
        backoff_ms: 1,
    }
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"LABEL: a"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#;

#[test]
fn retries_server_errors_and_sends_chat_shape() {
    std::env::set_var("OPTPICK_HTTP_TEST_KEY", "sk-test");
    let (url, seen) = serve(vec![(500, "{}".into()), (200, OK.into())]);
    let backend = HttpBackend::new(config(url, "OPTPICK_HTTP_TEST_KEY")).unwrap();
    let q = ModelQuery::full_choice("hello", vec![LabelId::new("a"), LabelId::new("b")], false, None);
    let reply = backend.complete(&q).unwrap();
    assert_eq!(reply.text, "LABEL: a");
    assert_eq!(reply.token_usage.unwrap().prompt_tokens, 7);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let s = &seen[1];
    assert_eq!(s.path, "/v1/chat/completions");
    assert_eq!(s.auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(s.body["model"], "test-model");
    assert_eq!(s.body["temperature"], 0.0);
    assert!(s.body["max_tokens"].as_u64().unwrap() > 0);
    let messages = s.body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 1);
    assert_eq!(messages[0]["role"], "user");
    assert!(messages[0]["content"].as_str().unwrap().contains("OPTIONS: a, b"));
    assert_eq!(seen[0].body, seen[1].body);
}

#[test]
fn gives_up_after_max_attempts() {
    let (url, seen) = serve(vec![(503, "busy".into()); 3]);
    let backend = HttpBackend::new(config(url, "OPTPICK_HTTP_UNSET_KEY")).unwrap();
    let q = ModelQuery::full_choice("hello", vec![LabelId::new("a")], false, None);
    match backend.complete(&q) {
        Err(Error::Backend { attempts, message, .. }) => {
            assert_eq!(attempts, 3);
            assert!(message.contains("503"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|s| s.auth.is_none()));
}

#[test]
fn multi_turn_queries_send_the_whole_conversation() {
    let (url, seen) = serve(vec![(200, OK.into())]);
    let backend = HttpBackend::new(config(url, "OPTPICK_HTTP_UNSET_KEY")).unwrap();
    let q = ModelQuery::decide(
        "hello",
        [LabelId::new("a"), LabelId::new("b")],
        Vec::new(),
        "alike".into(),
        "unlike".into(),
    );
    backend.complete(&q).unwrap();
    let seen = seen.lock().unwrap();
    let roles: Vec<&str> = seen[0].body["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["role"].as_str().unwrap())
        .collect();
    assert_eq!(roles, ["user", "assistant", "user", "assistant", "user"]);
}

#[test]
fn http_embeddings_follow_returned_indices() {
    let body = r#"{"data":[{"index":1,"embedding":[0,2]},{"index":0,"embedding":[3,4]}]}"#;
    let (url, seen) = serve(vec![(200, body.into())]);
    let items = vec!["x".to_string(), "y".to_string()];
    let m = embed(
        &items,
        &EmbeddingSource::Http {
            base_url: url,
            model: "emb".into(),
            api_key_env: "OPTPICK_HTTP_UNSET_KEY".into(),
        },
    )
    .unwrap();
    assert_eq!(m.get("x").unwrap(), &[0.6, 0.8]);
    assert_eq!(m.get("y").unwrap(), &[0.0, 1.0]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body["input"], serde_json::json!(["x", "y"]));
}
