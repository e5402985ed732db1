//! Mock embedding service speaking the client wire protocol.

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use pagescan_core::MockEmbedder;

use crate::client::{encode_matrix, mock_model_id};

fn matrix_response(m: pagescan_core::Result<pagescan_core::MultiVector>) -> Response {
    match m {
        Ok(m) => ([(header::CONTENT_TYPE, "application/octet-stream")], encode_matrix(&m)).into_response(),
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

async fn embed_image(State(m): State<MockEmbedder>, body: Bytes) -> Response {
    if body.is_empty() {
        return (StatusCode::BAD_REQUEST, "empty image body").into_response();
    }
    matrix_response(m.embed_page(&body))
}

async fn embed_text(State(m): State<MockEmbedder>, body: Bytes) -> Response {
    match std::str::from_utf8(&body) {
        Ok(text) => matrix_response(m.embed_text(text)),
        Err(_) => (StatusCode::BAD_REQUEST, "body is not UTF-8").into_response(),
    }
}

async fn health(State(m): State<MockEmbedder>) -> String {
    mock_model_id(&m)
}

pub fn embedder_router(mock: MockEmbedder) -> Router {
    Router::new()
        .route("/embed/image", post(embed_image))
        .route("/embed/text", post(embed_text))
        .route("/health", get(health))
        .layer(axum::extract::DefaultBodyLimit::max(256 << 20))
        .with_state(mock)
}
