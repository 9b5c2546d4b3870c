#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use g4c_cli::server::{router, AppState};

pub const VILLACH: &str =
    "Umweltschutz- und Energieeffizienzförderung - Förderung sonstiger Energieeffizienzmaßnahmen Villach";
pub const BERATUNG: &str =
    "Per-Bundesland/Steiermark_Beratungskostenzuschuss-Für-Gastronomie-/Hotelleriebetriebe-In-Der-Steiermark";
pub const NACHHALTIGKEIT: &str =
    "Per-Bundesland/Steiermark_Förderung-Zur-Wirtschaftsinitiative-Nachhaltigkeit-Steiermark";

pub fn sample_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../kb/sample")
}

/// The parity profiles, sorted by file name.
pub fn fixture_profiles() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/profiles");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            (p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect()
}

/// Runs the `g4c` binary with `G4C_KB` cleared.
pub fn g4c(kb: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_g4c"))
        .arg("--kb")
        .arg(kb)
        .args(args)
        .env_remove("G4C_KB")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn g4c");
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn app(kb: &Path) -> Router {
    router(Arc::new(AppState::load(kb).expect("knowledge base loads")), None)
}

/// Sends one request through the router; the body is JSON when it parses,
/// otherwise a JSON string.
pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body).await;
    let text = String::from_utf8(bytes).unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

pub async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.unwrap_or("").to_owned()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

/// `(id, verdict)` pairs from a `GrantResult` array, sorted by id.
pub fn verdict_set(results: &Value) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = results
        .as_array()
        .expect("result array")
        .iter()
        .map(|r| (r["id"].as_str().unwrap().to_owned(), r["verdict"].as_str().unwrap().to_owned()))
        .collect();
    v.sort();
    v
}

pub fn write_kb(files: &[(&str, &str)]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in files {
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    dir
}
