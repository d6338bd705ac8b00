//! Read-only HTTP API over a map bundle.
//!
//! | route                 | body                                   |
//! |-----------------------|----------------------------------------|
//! | `GET /api/maps`       | map descriptors                        |
//! | `GET /api/maps/{id}`  | the map's embedding                    |
//! | `GET /api/tests/{id}` | test index entry                       |
//! | `GET /api/cells`      | study cells                            |
//!
//! Every body is rendered once at startup and carries a strong ETag, so
//! repeated requests return identical bytes.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Serialize;
use sha2::{Digest, Sha256};
use testmap_core::export::{load_bundle, ExportError, LoadedBundle, TestEntry};
use testmap_core::study::MapRef;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Bundle(#[from] ExportError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Runtime(#[source] std::io::Error),
}

const MAX_ID_LEN: usize = 256;

#[derive(Clone)]
struct Body {
    bytes: Arc<[u8]>,
    etag: HeaderValue,
}

impl Body {
    fn new(bytes: Vec<u8>) -> Self {
        let etag = format!("\"{}\"", hex::encode(Sha256::digest(&bytes)));
        Body {
            bytes: bytes.into(),
            etag: HeaderValue::from_str(&etag).expect("hex etag is a valid header"),
        }
    }

    fn json<T: Serialize>(value: &T) -> Self {
        Body::new(serde_json::to_vec(value).expect("bundle data serializes"))
    }

    fn respond(&self, headers: &HeaderMap) -> Response {
        let fresh = headers
            .get(header::IF_NONE_MATCH)
            .is_some_and(|v| v.as_bytes() == self.etag.as_bytes());
        if fresh {
            return (StatusCode::NOT_MODIFIED, [(header::ETAG, self.etag.clone())]).into_response();
        }
        (
            [
                (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
                (header::ETAG, self.etag.clone()),
            ],
            self.bytes.to_vec(),
        )
            .into_response()
    }
}

#[derive(Serialize)]
struct TestView<'a> {
    id: &'a str,
    #[serde(flatten)]
    entry: &'a TestEntry,
}

struct Catalog {
    map_list: Body,
    maps: BTreeMap<String, Body>,
    tests: BTreeMap<String, Body>,
    cells: Body,
}

impl Catalog {
    fn new(loaded: LoadedBundle) -> Self {
        let descriptors: &[MapRef] = &loaded.bundle.maps;
        Catalog {
            map_list: Body::json(&descriptors),
            maps: loaded
                .maps
                .into_iter()
                .map(|(id, bytes)| (id, Body::new(bytes)))
                .collect(),
            tests: loaded
                .bundle
                .test_index
                .iter()
                .map(|(id, entry)| (id.clone(), Body::json(&TestView { id, entry })))
                .collect(),
            cells: Body::new(loaded.cells_json),
        }
    }
}

type Shared = Arc<Catalog>;

fn error(status: StatusCode, message: &str) -> Response {
    let body = serde_json::json!({ "error": message });
    (status, axum::Json(body)).into_response()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= MAX_ID_LEN && !id.chars().any(char::is_control)
}

fn lookup(table: &BTreeMap<String, Body>, id: &str, what: &str, headers: &HeaderMap) -> Response {
    if !valid_id(id) {
        return error(StatusCode::BAD_REQUEST, &format!("malformed {what} id"));
    }
    match table.get(id) {
        Some(body) => body.respond(headers),
        None => error(StatusCode::NOT_FOUND, &format!("unknown {what} `{id}`")),
    }
}

async fn list_maps(State(c): State<Shared>, headers: HeaderMap) -> Response {
    c.map_list.respond(&headers)
}

async fn get_map(State(c): State<Shared>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> Response {
    lookup(&c.maps, &id, "map", &headers)
}

async fn get_test(State(c): State<Shared>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> Response {
    lookup(&c.tests, &id, "test", &headers)
}

async fn get_cells(State(c): State<Shared>, headers: HeaderMap) -> Response {
    c.cells.respond(&headers)
}

fn is_local_origin(origin: &str) -> bool {
    let rest = origin
        .strip_prefix("http://")
        .or_else(|| origin.strip_prefix("https://"));
    let Some(rest) = rest else { return false };
    let host = match rest.strip_prefix("[::1]") {
        Some(tail) => return tail.is_empty() || tail.starts_with(':'),
        None => rest.split(':').next().unwrap_or_default(),
    };
    matches!(host, "localhost" | "127.0.0.1")
}

/// Allows cross-origin reads from pages served on the local machine.
async fn local_cors(request: Request, next: Next) -> Response {
    let origin = request
        .headers()
        .get(header::ORIGIN)
        .filter(|o| o.to_str().is_ok_and(is_local_origin))
        .cloned();
    let mut response = if request.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(request).await
    };
    let headers = response.headers_mut();
    headers.insert(header::VARY, HeaderValue::from_static("Origin"));
    if let Some(origin) = origin {
        headers.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, origin);
        headers.insert(
            header::ACCESS_CONTROL_ALLOW_METHODS,
            HeaderValue::from_static("GET, OPTIONS"),
        );
        headers.insert(
            header::ACCESS_CONTROL_ALLOW_HEADERS,
            HeaderValue::from_static("If-None-Match"),
        );
        headers.insert(header::ACCESS_CONTROL_EXPOSE_HEADERS, HeaderValue::from_static("ETag"));
    }
    response
}

pub fn router(bundle: LoadedBundle) -> Router {
    Router::new()
        .route("/api/maps", get(list_maps))
        .route("/api/maps/{map_id}", get(get_map))
        .route("/api/tests/{id}", get(get_test))
        .route("/api/cells", get(get_cells))
        .with_state(Arc::new(Catalog::new(bundle)))
        .layer(middleware::from_fn(local_cors))
}

/// Loads the bundle in `dir` and binds `addr`; both fail before any
/// request is accepted.
pub async fn bind(dir: &Path, addr: SocketAddr) -> Result<(tokio::net::TcpListener, Router), ServeError> {
    let app = router(load_bundle(dir)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    Ok((listener, app))
}

/// Serves the bundle in `dir` on localhost until interrupted.
pub async fn serve(dir: &Path, port: u16) -> Result<(), ServeError> {
    let (listener, app) = bind(dir, SocketAddr::from(([127, 0, 0, 1], port))).await?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Runtime)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_origins() {
        for ok in ["http://localhost", "http://localhost:5173", "https://127.0.0.1:8080", "http://[::1]:3000"] {
            assert!(is_local_origin(ok), "{ok}");
        }
        for bad in ["http://example.com", "http://localhost.evil.com", "null", "http://[::1]evil", "ftp://localhost"] {
            assert!(!is_local_origin(bad), "{bad}");
        }
    }

    #[test]
    fn id_validation() {
        assert!(valid_id("T-001"));
        assert!(valid_id("login flow"));
        assert!(!valid_id(""));
        assert!(!valid_id("a\nb"));
        assert!(!valid_id(&"x".repeat(MAX_ID_LEN + 1)));
    }
}
