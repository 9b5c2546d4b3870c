//! JSON HTTP service over a loaded knowledge base.
//!
//! The knowledge base is held as an immutable snapshot; `POST /api/reload`
//! re-reads the directory and swaps the snapshot only if loading succeeds.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use g4c_core::model::{formula_from_sexpr, Formula};
use g4c_core::render::{escape_html, render_derivation_html, render_derivation_text, STYLESHEET};
use g4c_core::sexpr::read_all;
use g4c_core::{
    consistency_report, evaluate_all, implication_matrix, load_kb, pretty, CompanyProfile, Derivation,
    Filter, Grant, KnowledgeBase, LoadError, Sequent,
};

pub struct AppState {
    kb_path: PathBuf,
    kb: RwLock<Arc<KnowledgeBase>>,
}

impl AppState {
    pub fn load(kb_path: impl Into<PathBuf>) -> Result<AppState, LoadError> {
        let kb_path = kb_path.into();
        let kb = load_kb(&kb_path)?;
        Ok(AppState { kb_path, kb: RwLock::new(Arc::new(kb)) })
    }

    pub fn snapshot(&self) -> Arc<KnowledgeBase> {
        self.kb.read().expect("snapshot lock").clone()
    }

    /// Re-reads the knowledge base; the old snapshot stays on failure.
    pub fn reload(&self) -> Result<Arc<KnowledgeBase>, LoadError> {
        let fresh = Arc::new(load_kb(&self.kb_path)?);
        *self.kb.write().expect("snapshot lock") = fresh.clone();
        Ok(fresh)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: &'static str,
    detail: String,
}

impl ApiError {
    fn bad_request(detail: impl ToString) -> ApiError {
        ApiError { status: StatusCode::BAD_REQUEST, error: "malformed request", detail: detail.to_string() }
    }

    fn unknown_grant(key: &str) -> ApiError {
        ApiError {
            status: StatusCode::NOT_FOUND,
            error: "unknown grant",
            detail: format!("no grant `{key}`"),
        }
    }

    fn internal(detail: impl ToString) -> ApiError {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            error: "internal error",
            detail: detail.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.error, "detail": self.detail }))).into_response()
    }
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

/// Body parsing that reports failures in the service's error shape rather
/// than axum's plain-text rejections.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/grants", get(grants))
        .route("/api/grants/:id", get(grant))
        .route("/api/evaluate", post(evaluate))
        .route("/api/prove", post(prove))
        .route("/api/implications", get(implications))
        .route("/api/consistency", get(consistency))
        .route("/api/reload", post(reload))
        .route("/g4c.css", get(stylesheet))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async {
            ApiError { status: StatusCode::NOT_FOUND, error: "not found", detail: String::new() }
        }),
    }
}

async fn stylesheet() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/css; charset=utf-8")], STYLESHEET)
}

async fn health(State(st): State<Shared>) -> Json<Value> {
    let kb = st.snapshot();
    Json(json!({ "status": "ok", "grants": kb.grants.len(), "concepts": kb.concepts.len() }))
}

#[derive(Serialize)]
pub struct GrantSummary<'a> {
    pub id: String,
    pub name: &'a str,
    pub href: Option<&'a str>,
    pub tp_ref_nr: Option<i64>,
    pub categories: &'a [String],
    pub valid_from: Option<chrono::NaiveDate>,
    pub valid_to: Option<chrono::NaiveDate>,
}

impl<'a> From<&'a Grant> for GrantSummary<'a> {
    fn from(g: &'a Grant) -> Self {
        GrantSummary {
            id: g.id(),
            name: &g.name,
            href: g.href.as_deref(),
            tp_ref_nr: g.tp_ref_nr,
            categories: &g.categories,
            valid_from: g.valid_from,
            valid_to: g.valid_to,
        }
    }
}

async fn grants(State(st): State<Shared>) -> Json<Value> {
    let kb = st.snapshot();
    let list: Vec<GrantSummary> = kb.grants.iter().map(GrantSummary::from).collect();
    Json(json!(list))
}

#[derive(Serialize)]
struct Explained {
    formula: Formula,
    explanation: String,
}

async fn grant(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Value> {
    let kb = st.snapshot();
    let g = kb.grant(&id).ok_or_else(|| ApiError::unknown_grant(&id))?;
    let mut explanations = Vec::new();
    g.conditions.walk(&mut |f| {
        if let Some(e) = &f.explanation {
            explanations.push(Explained { formula: f.clone(), explanation: e.clone() });
        }
    });
    let concepts: Vec<Value> = g
        .conditions
        .concept_refs()
        .iter()
        .filter_map(|n| kb.concepts.get(n))
        .map(|c| {
            json!({
                "name": c.name,
                "definition": pretty::formula(&c.definition),
                "explanation": c.explanation,
            })
        })
        .collect();
    Ok(Json(json!({
        "grant": GrantSummary::from(g),
        "description": g.description,
        "conditions": pretty::formula(&g.conditions),
        "source": g4c_core::sexpr::write(&g.to_sexpr()),
        "explanations": explanations,
        "concepts": concepts,
    })))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    #[serde(default)]
    profile: CompanyProfile,
    #[serde(default)]
    filters: Filter,
}

async fn evaluate(State(st): State<Shared>, body: Bytes) -> ApiResult<Value> {
    let req: EvaluateRequest = parse_body(&body)?;
    let kb = st.snapshot();
    Ok(Json(json!(evaluate_all(&kb, &req.profile, &req.filters))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SequentText {
    #[serde(default)]
    left: Vec<String>,
    #[serde(default)]
    right: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProveRequest {
    Grants { from: String, to: String },
    Sequent { sequent: SequentText },
}

#[derive(Serialize)]
struct ProveResponse {
    derivable: bool,
    sequent: Sequent,
    #[serde(skip_serializing_if = "Option::is_none")]
    derivation: Option<Derivation>,
    html: String,
    text: String,
}

fn parse_formula(text: &str, kb: &KnowledgeBase) -> Result<Formula, ApiError> {
    let forms = read_all(text).map_err(ApiError::bad_request)?;
    let [form] = forms.as_slice() else {
        return Err(ApiError::bad_request(format!("expected one formula, found {}: `{text}`", forms.len())));
    };
    formula_from_sexpr(form, &kb.concepts).map_err(ApiError::bad_request)
}

async fn prove(State(st): State<Shared>, body: Bytes) -> ApiResult<ProveResponse> {
    let req: ProveRequest = parse_body(&body)?;
    let kb = st.snapshot();
    let sequent = match req {
        ProveRequest::Grants { from, to } => {
            let g1 = kb.grant(&from).ok_or_else(|| ApiError::unknown_grant(&from))?;
            let g2 = kb.grant(&to).ok_or_else(|| ApiError::unknown_grant(&to))?;
            Sequent::new(vec![g1.conditions.clone()], vec![g2.conditions.clone()])
        }
        ProveRequest::Sequent { sequent } => {
            let side = |texts: &[String]| -> Result<Vec<Formula>, ApiError> {
                texts.iter().map(|t| parse_formula(t, &kb)).collect()
            };
            Sequent::new(side(&sequent.left)?, side(&sequent.right)?)
        }
    };
    // Formulas are checked against the registry when parsed, so this only
    // fails on a knowledge-base bug.
    let derivation = g4c_core::prove(&sequent, &kb.concepts).map_err(ApiError::internal)?;
    let (html, text) = match &derivation {
        Some(d) => (render_derivation_html(d), render_derivation_text(d)),
        None => (
            format!(
                "<p class=\"g4c-not-derivable\">Not derivable: {}</p>",
                escape_html(&sequent.to_string())
            ),
            format!("“{sequent}” is not derivable.\n"),
        ),
    };
    Ok(Json(ProveResponse { derivable: derivation.is_some(), sequent, derivation, html, text }))
}

async fn implications(State(st): State<Shared>) -> Json<Value> {
    let kb = st.snapshot();
    Json(json!(implication_matrix(&kb)))
}

async fn consistency(State(st): State<Shared>) -> Json<Value> {
    let kb = st.snapshot();
    Json(json!(consistency_report(&kb)))
}

async fn reload(State(st): State<Shared>) -> ApiResult<Value> {
    let kb = st.reload().map_err(ApiError::internal)?;
    Ok(Json(json!({ "reloaded": true, "grants": kb.grants.len(), "concepts": kb.concepts.len() })))
}
