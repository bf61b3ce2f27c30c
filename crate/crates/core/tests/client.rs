use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use paremia::client::*;
use paremia::corpus::{Proverb, Variety};
use paremia::prompting::{build_prompt, LabelMode, PromptSpec, Technique};
use paremia::Sentiment;
use rand::{Rng, SeedableRng};

fn config(parallelism: usize) -> InferenceConfig {
    InferenceConfig { backoff_ms: 1, parallelism, ..Default::default() }
}

fn proverbs(n: usize) -> Vec<Proverb> {
    let words = ["καλό", "κακό", "σπίτι"];
    (0..n).map(|i| Proverb::new(format!("p{i:02}"), format!("{} {i}", words[i % 3]), Variety::Standard)).collect()
}

fn rules() -> RuleMockBackend {
    RuleMockBackend::new(vec![("καλό".into(), Sentiment::Positive), ("κακό".into(), Sentiment::Negative)]).unwrap()
}

fn expected(i: usize) -> Sentiment {
    [Sentiment::Positive, Sentiment::Negative, Sentiment::Ambiguous][i % 3]
}

/// Serves one canned HTTP response per accepted connection.
fn serve(responses: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<usize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut served = 0;
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
            served += 1;
        }
        served
    });
    (url, handle)
}

fn http(url: String) -> HttpBackend {
    HttpBackend::new(HttpBackendConfig {
        url,
        api_key: Some("k".into()),
        auth_header: "Authorization".into(),
        auth_prefix: "Bearer ".into(),
        timeout_secs: 5,
    })
}

#[test]
fn scripted_response_then_cache_hit() {
    let backend = ScriptedBackend::new(None).script("prompt text", vec![Ok("Positive".into())]);
    let client = ModelClient::new(&backend, config(1), ResponseCache::in_memory()).unwrap();
    assert_eq!(client.predict_one("z0", "prompt text").unwrap(), "Positive");
    assert_eq!(backend.calls(), 1);
    assert_eq!(client.predict_one("z0", "prompt text").unwrap(), "Positive");
    assert_eq!(backend.calls(), 1);
    assert_eq!(client.cache_hits(), 1);
    assert!(matches!(client.predict_one("z0", "  "), Err(ClientError::EmptyPrompt)));
}

#[test]
fn retries_server_errors_over_http() {
    let ok = r#"{"choices":[{"message":{"role":"assistant","content":"Positive"}}]}"#;
    let (url, server) = serve(vec![(500, "{}"), (500, "{}"), (200, ok)]);
    let backend = http(url);
    let client = ModelClient::new(&backend, config(1), ResponseCache::in_memory()).unwrap();
    assert_eq!(client.predict_one("z0", "Proverb: x").unwrap(), "Positive");
    assert_eq!(client.attempts(), 3);
    assert_eq!(server.join().unwrap(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, server) = serve(vec![(401, r#"{"error":"bad key"}"#)]);
    let backend = http(url);
    let client = ModelClient::new(&backend, config(1), ResponseCache::in_memory()).unwrap();
    match client.predict_one("z0", "Proverb: x") {
        Err(ClientError::Backend { attempts: 1, source: BackendError::Status { status: 401, body } }) => {
            assert!(body.contains("bad key"))
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.join().unwrap(), 1);
}

#[test]
fn retries_are_bounded() {
    let backend = ScriptedBackend::new(None)
        .script("p", vec![Err(BackendError::Status { status: 503, body: "busy".into() })]);
    let client = ModelClient::new(&backend, InferenceConfig { max_retries: 2, ..config(1) }, ResponseCache::in_memory()).unwrap();
    assert!(matches!(client.predict_one("z0", "p"), Err(ClientError::Backend { attempts: 3, .. })));
    assert_eq!(backend.calls(), 3);
}

#[test]
fn timeout_is_reported() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let _hold = std::thread::spawn(move || {
        let conn = listener.accept();
        std::thread::sleep(Duration::from_secs(3));
        drop(conn);
    });
    let backend = HttpBackend::new(HttpBackendConfig {
        url,
        api_key: None,
        auth_header: "Authorization".into(),
        auth_prefix: "Bearer ".into(),
        timeout_secs: 1,
    });
    let client = ModelClient::new(&backend, InferenceConfig { max_retries: 0, ..config(1) }, ResponseCache::in_memory()).unwrap();
    assert!(matches!(client.predict_one("z0", "p"), Err(ClientError::Backend { source: BackendError::Timeout, .. })));
}

/// Counts prompts and how many proverbs each carried.
struct Recording {
    inner: RuleMockBackend,
    sizes: Mutex<Vec<usize>>,
}

impl Backend for Recording {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let n = request.prompt().lines().filter(|l| l.split_once(". ").is_some_and(|(d, _)| d.parse::<usize>().is_ok())).count();
        self.sizes.lock().unwrap().push(n);
        self.inner.complete(request)
    }
}

#[test]
fn batches_of_ten_with_short_tail() {
    let backend = Recording { inner: rules(), sizes: Mutex::new(vec![]) };
    let client = ModelClient::new(&backend, config(1), ResponseCache::in_memory()).unwrap();
    let ps = proverbs(25);
    let spec = PromptSpec::new(Technique::batch(10).unwrap());
    let out = client.predict_corpus::<f64>(&ps, &spec, None, LabelMode::Strict).unwrap();
    assert_eq!(*backend.sizes.lock().unwrap(), vec![10, 10, 5]);
    assert_eq!(out.records.len(), 25);
    for (i, r) in out.records.iter().enumerate() {
        assert_eq!(r.proverb_id, ps[i].id);
        assert_eq!(r.prediction.as_ref().unwrap().label(), Some(expected(i)));
        assert_eq!(r.technique, "zb10");
    }
}

#[test]
fn malformed_response_is_isolated() {
    let ps = proverbs(6);
    let spec = PromptSpec::new(Technique::Z0);
    let bad_prompt = build_prompt(&spec, &[ps[3].text.as_str()], None).unwrap();
    let mut backend = ScriptedBackend::new(Some("Negative".into()));
    backend = backend.script(&bad_prompt, vec![Ok("I would rather not say".into())]);
    let client = ModelClient::new(&backend, config(3), ResponseCache::in_memory()).unwrap();
    let out = client.predict_corpus::<f64>(&ps, &spec, None, LabelMode::Tolerant).unwrap();
    assert_eq!(out.records.iter().filter(|r| r.prediction.is_some()).count(), 5);
    let failures: Vec<_> = out.failures().collect();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].0, "p03");
    assert_eq!(failures[0].1.stage, FailureStage::Parse);
}

#[test]
fn few_shot_without_provider_is_fatal() {
    let backend = rules();
    let client = ModelClient::new(&backend, config(1), ResponseCache::in_memory()).unwrap();
    let spec = PromptSpec::new(Technique::few_shot(1, paremia::shots::ShotStrategy::Rp).unwrap());
    assert!(client.predict_corpus::<f64>(&proverbs(3), &spec, None, LabelMode::Tolerant).unwrap_err().is_config());
}

#[test]
fn warm_disk_cache_needs_no_backend() {
    let dir = tempfile::tempdir().unwrap();
    let ps = proverbs(12);
    let spec = PromptSpec::new(Technique::Zp);
    let first = {
        let backend = rules();
        let client = ModelClient::new(&backend, config(4), ResponseCache::open(dir.path()).unwrap()).unwrap();
        let out = client.predict_corpus::<f64>(&ps, &spec, None, LabelMode::Tolerant).unwrap();
        assert_eq!(backend.calls(), 12);
        out
    };
    let backend = rules();
    let client = ModelClient::new(&backend, config(4), ResponseCache::open(dir.path()).unwrap()).unwrap();
    let second = client.predict_corpus::<f64>(&ps, &spec, None, LabelMode::Tolerant).unwrap();
    assert_eq!(backend.calls(), 0);
    assert_eq!(first, second);
    let lines = std::fs::read_to_string(dir.path().join(CACHE_FILE)).unwrap();
    assert_eq!(lines.lines().count(), 12);
}

/// Sleeps a random amount before answering and tracks peak concurrency.
struct Jittery {
    inner: RuleMockBackend,
    rng: Mutex<rand_chacha::ChaCha8Rng>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl Backend for Jittery {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let ms = self.rng.lock().unwrap().random_range(0..8);
        std::thread::sleep(Duration::from_millis(ms));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

#[test]
fn output_stays_aligned_under_random_delays() {
    for (seed, parallelism, technique) in [(1, 4, Technique::Z0), (2, 7, Technique::batch(10).unwrap()), (3, 3, Technique::Zp)] {
        let backend = Jittery {
            inner: rules(),
            rng: Mutex::new(rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        };
        let client = ModelClient::new(&backend, config(parallelism), ResponseCache::in_memory()).unwrap();
        let ps = proverbs(61);
        let out = client.predict_corpus::<f64>(&ps, &PromptSpec::new(technique), None, LabelMode::Strict).unwrap();
        assert!(backend.peak.load(Ordering::SeqCst) <= parallelism);
        for (i, r) in out.records.iter().enumerate() {
            assert_eq!(r.proverb_id, ps[i].id);
            assert_eq!(r.prediction.as_ref().unwrap().label(), Some(expected(i)), "item {i}");
        }
    }
}

#[test]
fn prediction_records_round_trip_json() {
    let backend = rules();
    let client = ModelClient::new(&backend, config(2), ResponseCache::in_memory()).unwrap();
    let out = client.predict_corpus::<f64>(&proverbs(4), &PromptSpec::new(Technique::Zp), None, LabelMode::Strict).unwrap();
    for r in &out.records {
        let line = serde_json::to_string(r).unwrap();
        let back: PredictionRecord<f64> = serde_json::from_str(&line).unwrap();
        assert_eq!(&back, r);
    }
}
