mod common;

use std::time::Duration;

use pagescan::client::Embedder;
use pagescan::format::encode_embeddings;
use pagescan::server::{router, AppState, RegisteredBenchmark, ServerConfig};
use pagescan_core::{maxsim_explain, mock_embed, Catalog, Collection, Metric, PageEmbedding};
use reqwest::{Method, StatusCode};
use serde_json::{json, Value};

struct Api {
    base: String,
    client: reqwest::Client,
}

impl Api {
    async fn start(catalog: Catalog, config: ServerConfig) -> Self {
        let base = common::spawn(router(AppState::new(catalog, config))).await;
        Self { base, client: reqwest::Client::new() }
    }

    async fn raw(&self, method: Method, path: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
        let resp = self.client.request(method, format!("{}{path}", self.base)).body(body).send().await.unwrap();
        (resp.status(), resp.bytes().await.unwrap().to_vec())
    }

    async fn json(&self, method: Method, path: &str, body: Value) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, path, serde_json::to_vec(&body).unwrap()).await;
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(Method::GET, path, Vec::new()).await;
        (status, serde_json::from_slice(&bytes).unwrap())
    }
}

fn mock_config() -> ServerConfig {
    ServerConfig { embedder: Some(Embedder::Mock(common::mock())), ..Default::default() }
}

fn corpus(n: u32) -> Vec<PageEmbedding> {
    (1..=n).map(|i| PageEmbedding::new(common::page("vol", i), common::noise_page(&common::page("vol", i)))).collect()
}

fn code(v: &Value) -> &str {
    v["code"].as_str().unwrap_or_default()
}

#[tokio::test]
async fn create_and_list_collections() {
    let api = Api::start(Catalog::new(), mock_config()).await;
    let (s, v) = api.json(Method::POST, "/collections", json!({"name": "cos", "metric": "cosine", "dims": 16})).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v, json!({"name": "cos", "metric": "cosine", "dims": 16, "size": 0}));
    let (s, v) = api.get("/collections").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!([{"name": "cos", "metric": "cosine", "dims": 16, "size": 0}]));

    let (s, v) = api.json(Method::POST, "/collections", json!({"name": "cos", "metric": "dot", "dims": 16})).await;
    assert_eq!((s, code(&v)), (StatusCode::CONFLICT, "collection_exists"));

    let (s, v) = api.json(Method::POST, "/collections", json!({"name": "l3", "metric": "l3", "dims": 16})).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "invalid_metric"));
    let message = v["message"].as_str().unwrap();
    for name in ["cosine", "dot", "euclidean", "manhattan"] {
        assert!(message.contains(name), "{message}");
    }
    assert_eq!(v["detail"]["allowed"], json!(["cosine", "dot", "euclidean", "manhattan"]));

    let (s, v) = api.json(Method::POST, "/collections", json!({"name": "z", "metric": "dot", "dims": 0})).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "validation_error"));
    let (s, bytes) = api.raw(Method::POST, "/collections", b"{not json".to_vec()).await;
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_format"));
}

#[tokio::test]
async fn upload_documents() {
    let api = Api::start(Catalog::new(), mock_config()).await;
    api.json(Method::POST, "/collections", json!({"name": "c", "metric": "dot", "dims": 16})).await;
    let (s, bytes) = api.raw(Method::PUT, "/collections/c/documents", encode_embeddings(&corpus(20)).unwrap()).await;
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v, json!({"collection": "c", "upserted": 20, "size": 20}));
    // Re-upload is idempotent.
    let (_, bytes) = api.raw(Method::PUT, "/collections/c/documents", encode_embeddings(&corpus(20)).unwrap()).await;
    assert_eq!(serde_json::from_slice::<Value>(&bytes).unwrap()["size"], 20);

    let wrong = vec![PageEmbedding::new(common::page("x", 1), mock_embed(b"x", 2, 8, 1).unwrap())];
    let (s, bytes) = api.raw(Method::PUT, "/collections/c/documents", encode_embeddings(&wrong).unwrap()).await;
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "dims_mismatch"));

    let (s, bytes) = api.raw(Method::PUT, "/collections/c/documents", b"XXXX garbage".to_vec()).await;
    assert_eq!((s, code(&serde_json::from_slice(&bytes).unwrap())), (StatusCode::BAD_REQUEST, "bad_format"));

    let (s, bytes) = api.raw(Method::PUT, "/collections/nope/documents", encode_embeddings(&corpus(1)).unwrap()).await;
    assert_eq!((s, code(&serde_json::from_slice(&bytes).unwrap())), (StatusCode::NOT_FOUND, "collection_not_found"));
    let (_, v) = api.get("/collections").await;
    assert_eq!(v[0]["size"], 20);
}

async fn search_api(images: Option<std::path::PathBuf>) -> Api {
    let mut catalog = Catalog::new();
    let mut c = Collection::new("pages", Metric::Cosine, common::DIMS).unwrap();
    c.upsert(corpus(40)).unwrap();
    catalog.insert(c).unwrap();
    catalog.create_collection("empty", Metric::Cosine, common::DIMS).unwrap();
    Api::start(catalog, ServerConfig { images, ..mock_config() }).await
}

#[tokio::test]
async fn text_search_contract() {
    let api = search_api(None).await;
    let (s, v) = api.json(Method::POST, "/collections/pages/search", json!({"text": "deadlock conditions", "k": 5})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 5);
    let scores: Vec<f64> = results.iter().map(|r| r["raw_score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    for (i, r) in results.iter().enumerate() {
        assert_eq!(r["rank"], i + 1);
        assert_eq!(r["image_url"], Value::Null);
        assert!(r.get("explanation").is_none());
        let norm = r["normalized_score"].as_f64().unwrap();
        assert!((norm - r["raw_score"].as_f64().unwrap() / 2.0).abs() < 1e-12);
    }
    assert_eq!(v["query_rows"], 2);
}

#[tokio::test]
async fn explanations_sum_to_raw_scores() {
    let api = search_api(None).await;
    let text = "how does the banker's algorithm avoid deadlock";
    let (s, v) = api
        .json(Method::POST, "/collections/pages/search", json!({"text": text, "k": 5, "candidates": 10, "explain": true}))
        .await;
    assert_eq!(s, StatusCode::OK);
    let query = common::mock().embed_text(text).unwrap();
    for r in v["results"].as_array().unwrap() {
        let raw = r["raw_score"].as_f64().unwrap();
        let x = &r["explanation"];
        let per_token = x["per_token"].as_array().unwrap();
        assert_eq!(per_token.len(), query.rows());
        let sum: f64 = per_token.iter().map(|t| t["best_similarity"].as_f64().unwrap()).sum();
        assert!((sum - raw).abs() <= 1e-6, "{sum} vs {raw}");
        assert!((x["total"].as_f64().unwrap() - raw).abs() <= 1e-6);

        let page = common::page(r["volume_id"].as_str().unwrap(), r["page_number"].as_u64().unwrap() as u32);
        let local = maxsim_explain(&query, &common::noise_page(&page), Metric::Cosine).unwrap();
        for (t, l) in per_token.iter().zip(&local.per_token) {
            assert_eq!(t["best_patch_index"], l.best_patch_index);
            assert!((t["best_similarity"].as_f64().unwrap() - l.best_similarity).abs() <= 1e-6);
        }
    }
}

#[tokio::test]
async fn search_errors() {
    let api = search_api(None).await;
    let (s, v) = api.json(Method::POST, "/collections/pages/search", json!({"text": "q", "k": 5, "candidates": 3})).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "validation_error"));
    assert!(v["message"].as_str().unwrap().contains("k exceeds candidates"));

    let (s, v) = api.json(Method::POST, "/collections/nope/search", json!({"text": "q"})).await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "collection_not_found"));

    let matrix = json!({"rows": 1, "dims": 3, "data": [1.0, 0.0, 0.0]});
    let (s, v) = api.json(Method::POST, "/collections/pages/search", json!({"matrix": matrix})).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "dims_mismatch"));
    assert_eq!(v["detail"], json!({"expected": 16, "found": 3}));

    let (s, v) = api.json(Method::POST, "/collections/empty/search", json!({"text": "q"})).await;
    assert_eq!((s, code(&v)), (StatusCode::CONFLICT, "empty_collection"));

    let (s, v) = api.json(Method::POST, "/collections/pages/search", json!({"text": "  "})).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "validation_error"));
    let (s, v) = api.json(Method::POST, "/collections/pages/search", json!({})).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "validation_error"));

    let (s, v) = api.get("/nowhere").await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "route_not_found"));
    let (s, v) = api.get("/collections/pages/search").await;
    assert_eq!((s, code(&v)), (StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed"));
}

#[tokio::test]
async fn no_embedder_means_text_queries_are_unavailable() {
    let mut catalog = Catalog::new();
    let mut c = Collection::new("pages", Metric::Cosine, common::DIMS).unwrap();
    c.upsert(corpus(5)).unwrap();
    catalog.insert(c).unwrap();
    let api = Api::start(catalog, ServerConfig::default()).await;
    let (s, v) = api.json(Method::POST, "/collections/pages/search", json!({"text": "q"})).await;
    assert_eq!((s, code(&v)), (StatusCode::SERVICE_UNAVAILABLE, "embedder_unavailable"));
    let m = common::noise_page(&common::page("vol", 3));
    let body = json!({"matrix": {"rows": m.rows(), "dims": m.dims(), "data": m.as_slice()}, "k": 1, "candidates": 1});
    let (s, v) = api.json(Method::POST, "/collections/pages/search", body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["results"][0]["page_number"], 3);
    assert_eq!(v["results"][0]["normalized_score"].as_f64().unwrap(), 1.0);
}

#[tokio::test]
async fn identical_requests_give_identical_bytes() {
    let api = search_api(None).await;
    let body = serde_json::to_vec(&json!({"text": "virtual memory paging", "k": 5, "explain": true})).unwrap();
    let (_, a) = api.raw(Method::POST, "/collections/pages/search", body.clone()).await;
    let (_, b) = api.raw(Method::POST, "/collections/pages/search", body).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn page_images_and_urls() {
    let dir = tempfile::tempdir().unwrap();
    let images = common::page_images("vol", 40);
    pagescan::ingest::write_page_images(dir.path(), &images).unwrap();
    let api = search_api(Some(dir.path().to_owned())).await;
    let (_, v) = api.json(Method::POST, "/collections/pages/search", json!({"text": "scheduling", "k": 3})).await;
    for r in v["results"].as_array().unwrap() {
        let url = r["image_url"].as_str().unwrap();
        assert_eq!(url, format!("/pages/vol/{}.png", r["page_number"]));
        let (s, bytes) = api.raw(Method::GET, url, Vec::new()).await;
        assert_eq!(s, StatusCode::OK);
        let n = r["page_number"].as_u64().unwrap() as usize;
        assert_eq!(bytes, images[n - 1].png());
    }
    for missing in ["/pages/vol/99.png", "/pages/vol/1.jpg", "/pages/../1.png", "/pages/other/1.png"] {
        let (s, bytes) = api.raw(Method::GET, missing, Vec::new()).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{missing}");
        let v: Value = serde_json::from_slice(&bytes).unwrap_or_default();
        assert!(matches!(code(&v), "page_not_found" | "route_not_found"), "{missing}: {v}");
    }
}

async fn wait_for(api: &Api, id: &str) -> Value {
    for _ in 0..600 {
        let (s, v) = api.get(&format!("/benchmark/runs/{id}")).await;
        assert_eq!(s, StatusCode::OK);
        if v["status"] != "running" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("run {id} did not finish");
}

async fn benchmark_api() -> Api {
    let (queries, ground_truth) = common::fixture();
    let corpus = common::synthetic_corpus(&queries, &ground_truth);
    let mut catalog = Catalog::new();
    for metric in Metric::ALL {
        let mut c = Collection::new(format!("{metric}_pages"), metric, common::DIMS).unwrap();
        c.upsert(corpus.clone()).unwrap();
        catalog.insert(c).unwrap();
    }
    let config = ServerConfig { benchmark: Some(RegisteredBenchmark { queries, ground_truth }), ..mock_config() };
    Api::start(catalog, config).await
}

#[tokio::test]
async fn benchmark_runs_over_all_collections() {
    let api = benchmark_api().await;
    let (s, v) = api.json(Method::POST, "/benchmark/runs", json!({})).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let id = v["run_id"].as_str().unwrap().to_owned();
    let done = wait_for(&api, &id).await;
    assert_eq!(done["status"], "completed", "{done}");
    let reports = done["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    let ids = |r: &Value| r["per_query"].as_array().unwrap().iter().map(|q| q["query_id"].clone()).collect::<Vec<_>>();
    let first = ids(&reports[0]);
    assert_eq!(first.len(), 75);
    for r in reports {
        assert_eq!(ids(r), first);
        assert!(r["metadata"]["timestamp"].is_string());
        assert_eq!(r["metadata"]["average_precision"], "AP@5");
        assert!((r["overall"]["mean_reciprocal_rank"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
    let metrics: Vec<&str> = reports.iter().map(|r| r["metadata"]["metric"].as_str().unwrap()).collect();
    assert_eq!(metrics, ["cosine", "dot", "euclidean", "manhattan"]);

    let (s, v) = api.json(Method::POST, "/benchmark/runs", json!({"subset": ["MultiPage"], "collections": ["cosine_pages"]})).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let done = wait_for(&api, v["run_id"].as_str().unwrap()).await;
    assert_eq!(done["reports"][0]["per_query"].as_array().unwrap().len(), 14);
    assert_eq!(done["reports"][0]["metadata"]["subset"], json!(["MultiPage"]));
}

#[tokio::test]
async fn benchmark_run_errors() {
    let api = benchmark_api().await;
    let (s, v) = api.get("/benchmark/runs/run-999").await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "run_not_found"));
    let (s, v) = api.json(Method::POST, "/benchmark/runs", json!({"subset": ["Pictorial"]})).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "invalid_subset"));
    let (s, v) = api.json(Method::POST, "/benchmark/runs", json!({"collections": ["missing"]})).await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "collection_not_found"));
    let (s, v) = api.json(Method::POST, "/benchmark/runs", json!({"k": 6, "candidates": 5})).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "validation_error"));

    let bare = Api::start(Catalog::new(), mock_config()).await;
    let (s, v) = bare.json(Method::POST, "/benchmark/runs", json!({})).await;
    assert_eq!((s, code(&v)), (StatusCode::CONFLICT, "benchmark_not_registered"));
    let (s, v) = bare.get("/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["embedder"], "mock-32x16-seed7");
}
