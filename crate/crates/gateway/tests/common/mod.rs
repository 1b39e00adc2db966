#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use capt_gateway::config::{ProviderConfig, ServiceConfig};
use capt_gateway::Server;
use reqwest::multipart::{Form, Part};
use tempfile::TempDir;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixtures().join(rel)
}

pub fn read_fixture(rel: &str) -> Vec<u8> {
    std::fs::read(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn config(attempts: &Path, provider: ProviderConfig) -> ServiceConfig {
    let json = serde_json::json!({
        "host": "127.0.0.1",
        "port": 0,
        "catalog": fixture("catalog.json"),
        "attempts_dir": attempts,
    });
    let mut cfg = ServiceConfig::parse(&json.to_string(), &fixtures()).unwrap();
    cfg.provider = provider;
    cfg
}

/// A gateway running on a free port with its own attempt directory.
pub struct TestServer {
    pub base: String,
    pub addr: SocketAddr,
    pub attempts: TempDir,
    pub client: reqwest::Client,
}

impl TestServer {
    pub async fn start(provider: ProviderConfig) -> Self {
        let attempts = tempfile::tempdir().unwrap();
        let server = Server::bind(&config(attempts.path(), provider)).await.unwrap();
        let addr = server.local_addr().unwrap();
        tokio::spawn(server.run());
        Self { base: format!("http://{addr}"), addr, attempts, client: reqwest::Client::new() }
    }

    pub async fn demo() -> Self {
        Self::start(ProviderConfig::Demo { error_plan: Vec::new() }).await
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(self.url(path)).send().await.unwrap()
    }

    pub async fn submit(&self, exercise_id: &str, audio: Vec<u8>, ppg: Option<Vec<u8>>) -> reqwest::Response {
        let mut form = Form::new()
            .text("exercise_id", exercise_id.to_string())
            .part("audio", Part::bytes(audio).file_name("attempt.wav").mime_str("audio/wav").unwrap());
        if let Some(ppg) = ppg {
            form = form.part("ppg", Part::bytes(ppg).file_name("ppg.json").mime_str("application/json").unwrap());
        }
        self.client.post(self.url("/v1/attempts")).multipart(form).send().await.unwrap()
    }
}

/// Error code from the `{"error": {"code", "message"}}` envelope.
pub async fn error_code(resp: reqwest::Response) -> String {
    let body: serde_json::Value = resp.json().await.unwrap();
    assert!(body["error"]["message"].is_string(), "envelope without message: {body}");
    body["error"]["code"].as_str().expect("envelope code").to_string()
}

pub fn header(resp: &reqwest::Response, name: &str) -> Option<String> {
    resp.headers().get(name).map(|v| v.to_str().unwrap().to_string())
}
