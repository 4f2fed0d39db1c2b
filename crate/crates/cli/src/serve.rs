//! Read-only XYZ tile server.
//!
//! Routes:
//! - `GET /tiles/{layer}/{z}/{x}/{y}.png`: the stored file bytes, `image/png`,
//!   with a strong `ETag` (SHA-256 of the body).
//! - `GET /layers`: `[{"name", "tiles", "min_zoom", "max_zoom"}]`, zooms null
//!   for an empty layer.
//!
//! Unknown layers and absent tiles are 404; malformed addresses and any
//! `..`-style path are 400. No TLS, authentication or rate limiting.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tilesynth_core::xyz::{list_tiles, tile_path};
use tilesynth_core::TileId;
use tokio::sync::oneshot;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMount {
    pub name: String,
    pub root: PathBuf,
}

pub fn valid_layer_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

impl LayerMount {
    pub fn new(name: &str, root: &Path) -> Result<Self, String> {
        if !valid_layer_name(name) {
            return Err(format!("layer name {name:?} must match [a-z0-9_-]+"));
        }
        if !root.is_dir() {
            return Err(format!("layer {name}: {} is not a directory", root.display()));
        }
        let root = root.canonicalize().map_err(|e| format!("layer {name}: {e}"))?;
        Ok(Self { name: name.to_string(), root })
    }
}

/// Parses `NAME=DIR`.
pub fn parse_mount(s: &str) -> Result<LayerMount, String> {
    let (name, dir) = s.split_once('=').ok_or_else(|| format!("layer mount {s:?} must look like NAME=DIR"))?;
    LayerMount::new(name, Path::new(dir))
}

#[derive(Debug, Serialize, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub tiles: usize,
    pub min_zoom: Option<u8>,
    pub max_zoom: Option<u8>,
}

type Mounts = Arc<BTreeMap<String, PathBuf>>;

pub fn router(mounts: Vec<LayerMount>) -> Router {
    let table: Mounts = Arc::new(mounts.into_iter().map(|m| (m.name, m.root)).collect());
    Router::new()
        .route("/layers", get(layers))
        .route("/tiles/{layer}/{z}/{x}/{file}", get(tile))
        .fallback(fallback)
        .with_state(table)
}

async fn layers(State(mounts): State<Mounts>) -> Json<Vec<LayerInfo>> {
    let mounts = mounts.clone();
    let infos = tokio::task::spawn_blocking(move || {
        mounts
            .iter()
            .map(|(name, root)| {
                let tiles = list_tiles(root);
                LayerInfo {
                    name: name.clone(),
                    tiles: tiles.len(),
                    min_zoom: tiles.iter().map(|(t, _)| t.z).min(),
                    max_zoom: tiles.iter().map(|(t, _)| t.z).max(),
                }
            })
            .collect()
    })
    .await
    .unwrap_or_default();
    Json(infos)
}

fn status(code: StatusCode, msg: &str) -> Response {
    (code, msg.to_string()).into_response()
}

fn parse_address(z: &str, x: &str, file: &str) -> Option<TileId> {
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let y = file.strip_suffix(".png")?;
    if !(digits(z) && digits(x) && digits(y)) {
        return None;
    }
    TileId::new(z.parse().ok()?, x.parse().ok()?, y.parse().ok()?).ok()
}

async fn tile(
    State(mounts): State<Mounts>,
    UrlPath((layer, z, x, file)): UrlPath<(String, String, String, String)>,
    headers: HeaderMap,
) -> Response {
    if !valid_layer_name(&layer) {
        return status(StatusCode::BAD_REQUEST, "bad layer name");
    }
    let Some(t) = parse_address(&z, &x, &file) else {
        return status(StatusCode::BAD_REQUEST, "bad tile address");
    };
    let Some(root) = mounts.get(&layer) else {
        return status(StatusCode::NOT_FOUND, "unknown layer");
    };
    let path = tile_path(root, t);
    // Refuse files that resolve outside the layer root through symlinks.
    match tokio::fs::canonicalize(&path).await {
        Ok(real) if real.starts_with(root) => {}
        _ => return status(StatusCode::NOT_FOUND, "no such tile"),
    }
    let bytes = match tokio::fs::read(&path).await {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return status(StatusCode::NOT_FOUND, "no such tile"),
        Err(_) => return status(StatusCode::INTERNAL_SERVER_ERROR, "read failed"),
    };
    let etag = format!("\"{}\"", hex::encode(Sha256::digest(&bytes)));
    let not_modified = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|tag| tag.trim() == etag || tag.trim() == "*"));
    if not_modified {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response();
    }
    (StatusCode::OK, [(header::CONTENT_TYPE, "image/png".to_string()), (header::ETAG, etag)], bytes).into_response()
}

/// True when the raw path tries to climb out of a directory.
pub fn is_traversal(raw_path: &str) -> bool {
    let lower = raw_path.to_ascii_lowercase();
    lower.contains('\\')
        || lower.contains("%5c")
        || lower.contains("%2f")
        || lower.split('/').any(|seg| {
            let seg = seg.replace("%2e", ".");
            seg == ".." || seg == "."
        })
}

async fn fallback(uri: Uri) -> Response {
    if is_traversal(uri.path()) {
        status(StatusCode::BAD_REQUEST, "path traversal rejected")
    } else {
        status(StatusCode::NOT_FOUND, "not found")
    }
}

/// A server running on its own thread; dropped or [`ServerHandle::stop`]ped to shut down.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| CliError::Runtime(e.to_string()))
}

fn check_mounts(mounts: &[LayerMount]) -> Result<(), CliError> {
    if mounts.is_empty() {
        return Err(CliError::Validation("serve needs at least one --layer".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for m in mounts {
        if !seen.insert(&m.name) {
            return Err(CliError::Validation(format!("layer {} mounted twice", m.name)));
        }
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread.
pub fn spawn(mounts: Vec<LayerMount>, addr: &str) -> Result<ServerHandle, CliError> {
    check_mounts(&mounts)?;
    let rt = runtime()?;
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(addr))
        .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(mounts);
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(ServerHandle { addr: local, shutdown: Some(tx), thread: Some(thread) })
}

/// Serves until interrupted.
pub fn serve_blocking(mounts: Vec<LayerMount>, addr: &str) -> Result<(), CliError> {
    check_mounts(&mounts)?;
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        for m in &mounts {
            log::info!("event=mount layer={} root={}", m.name, m.root.display());
        }
        log::info!("event=listening addr=http://{local}");
        axum::serve(listener, router(mounts))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_names() {
        assert!(valid_layer_name("generated_z16-a"));
        assert!(!valid_layer_name("Gen"));
        assert!(!valid_layer_name(".."));
        assert!(!valid_layer_name(""));
    }

    #[test]
    fn addresses() {
        assert_eq!(parse_address("16", "3", "4.png"), Some(TileId::new(16, 3, 4).unwrap()));
        assert_eq!(parse_address("1", "2", "0.png"), None);
        assert_eq!(parse_address("..", "1", "1.png"), None);
        assert_eq!(parse_address("1", "+1", "1.png"), None);
        assert_eq!(parse_address("1", "1", "1.jpg"), None);
    }

    #[test]
    fn traversal_detection() {
        assert!(is_traversal("/tiles/x/../../etc"));
        assert!(is_traversal("/tiles/x/%2e%2e/passwd"));
        assert!(is_traversal("/tiles/x/..%2fetc"));
        assert!(!is_traversal("/tiles/x/1/2/3.png"));
    }
}
