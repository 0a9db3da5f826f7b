#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::thread;

use release_gate_core::dataset::{load_dataset, save_dataset, ReleaseDataset};

pub const BIN: &str = env!("CARGO_BIN_EXE_release-gate");

pub fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/spaceviewer.csv")
}

pub fn table() -> ReleaseDataset {
    load_dataset(&fixture_path()).expect("fixture loads")
}

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub query: String,
    pub auth: Option<String>,
    pub body: String,
}

impl Request {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.query
            .split('&')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == name)
            .map(|(_, v)| v)
    }
}

type Handler = dyn Fn(&Request) -> (u16, String) + Send + Sync;

/// HTTP server on a random local port, answering with `handler` and
/// recording every request. Stops when dropped.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    requests: Arc<Mutex<Vec<Request>>>,
    worker: Option<thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&Request) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let worker = {
            let server = server.clone();
            let requests = requests.clone();
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let url = req.url().to_string();
                    let (path, query) = url.split_once('?').unwrap_or((&url, ""));
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let record = Request {
                        method: req.method().to_string(),
                        path: path.to_string(),
                        query: query.to_string(),
                        auth: req
                            .headers()
                            .iter()
                            .find(|h| h.field.equiv("Authorization"))
                            .map(|h| h.value.to_string()),
                        body,
                    };
                    let (status, reply) = handler(&record);
                    requests.lock().unwrap().push(record);
                    let _ = req.respond(tiny_http::Response::from_string(reply).with_status_code(status));
                }
            })
        };
        Self {
            server,
            requests,
            worker: Some(worker),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.server.server_addr().to_ip().unwrap())
    }

    pub fn requests(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// A temporary project directory with a config file next to the dataset.
pub struct Project {
    pub dir: tempfile::TempDir,
}

impl Project {
    /// `extra` is spliced into the config object, e.g. `"webhook_url": "..."`.
    pub fn new(history: Option<&ReleaseDataset>, extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = String::from(
            r#"{"dataset_path": "releases.csv", "project_start_date": "2019-04-25""#,
        );
        if !extra.trim().is_empty() {
            config.push_str(", ");
            config.push_str(extra);
        }
        config.push('}');
        fs::write(dir.path().join("release-gate.json"), config).unwrap();
        let project = Self { dir };
        if let Some(d) = history {
            save_dataset(d, &project.dataset_path()).unwrap();
        }
        project
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn config_path(&self) -> PathBuf {
        self.path().join("release-gate.json")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.path().join("releases.csv")
    }

    pub fn candidate_path(&self) -> PathBuf {
        self.path().join("releases.csv.candidate.json")
    }

    pub fn dataset(&self) -> ReleaseDataset {
        load_dataset(&self.dataset_path()).unwrap()
    }

    pub fn run(&self, args: &[&str]) -> Outcome {
        let output = Command::new(BIN)
            .arg("--config")
            .arg(self.config_path())
            .args(args)
            .env_remove("RUST_LOG")
            .output()
            .expect("binary runs");
        Outcome {
            code: output.status.code().expect("exited normally"),
            stdout: String::from_utf8(output.stdout).unwrap(),
            stderr: String::from_utf8(output.stderr).unwrap(),
        }
    }

    pub fn stage(&self, record: &release_gate_core::ReleaseRecord) {
        fs::write(self.candidate_path(), serde_json::to_string_pretty(record).unwrap()).unwrap();
    }
}
