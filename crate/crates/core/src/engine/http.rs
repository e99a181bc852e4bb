//! HTTP/1.1 facade over the engine: JSON bodies, bearer-token sessions,
//! stable error codes. The server runs a dedicated tokio runtime on its
//! own thread so the rest of the engine stays synchronous.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{ConnectInfo, Path, Query, State};
use axum::http::{HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use super::{
    ApiError, Engine, LoginRequest, PayCallbackRequest, PurchaseRequest, QueryParams,
    RegisterRequest, RequestCtx,
};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(serde_json::json!({ "error": self }))).into_response()
    }
}

fn ctx(headers: &HeaderMap, addr: &SocketAddr, uri: &Uri) -> RequestCtx {
    // X-Forwarded-For wins over the socket peer, as a gateway would see it.
    let ip = headers
        .get("x-forwarded-for")
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(',').next().unwrap_or(v).trim().to_string())
        .unwrap_or_else(|| addr.ip().to_string());
    let token = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string);
    RequestCtx { ip, path: uri.path().to_string(), token }
}

type AppState = State<Arc<Engine>>;

async fn register(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
    Json(req): Json<RegisterRequest>,
) -> Result<impl IntoResponse, ApiError> {
    engine.handle_register(&ctx(&headers, &addr, &uri), &req).map(Json)
}

async fn login(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
    Json(req): Json<LoginRequest>,
) -> Result<impl IntoResponse, ApiError> {
    engine.handle_login(&ctx(&headers, &addr, &uri), &req).map(Json)
}

async fn query_trains(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
    Query(params): Query<QueryParams>,
) -> Result<impl IntoResponse, ApiError> {
    engine
        .handle_query_trains(&ctx(&headers, &addr, &uri), &params)
        .map(|trains| Json(serde_json::json!({ "trains": trains })))
}

async fn dedup_token(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
) -> Result<impl IntoResponse, ApiError> {
    engine.handle_dedup_token(&ctx(&headers, &addr, &uri)).map(Json)
}

async fn purchase(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
    Json(req): Json<PurchaseRequest>,
) -> Result<impl IntoResponse, ApiError> {
    engine.handle_purchase(&ctx(&headers, &addr, &uri), &req).map(Json)
}

async fn cancel(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
    Path(order_no): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    engine.handle_cancel(&ctx(&headers, &addr, &uri), &order_no).map(Json)
}

async fn pay(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
    Path(order_no): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    engine.handle_pay(&ctx(&headers, &addr, &uri), &order_no).map(Json)
}

async fn pay_callback(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
    Json(req): Json<PayCallbackRequest>,
) -> Result<impl IntoResponse, ApiError> {
    engine.handle_pay_callback(&ctx(&headers, &addr, &uri), &req).map(Json)
}

async fn by_passenger(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
    Path(id_number): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    engine
        .handle_find_by_passenger(&ctx(&headers, &addr, &uri), &id_number)
        .map(|orders| Json(serde_json::json!({ "orders": orders })))
}

async fn metrics(
    State(engine): AppState,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    uri: Uri,
) -> Result<impl IntoResponse, ApiError> {
    let c = ctx(&headers, &addr, &uri);
    engine.gateway.filter(&c.ip, &c.path, c.token.as_deref())?;
    Ok(Json(engine.metrics_json()))
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/auth/register", post(register))
        .route("/auth/login", post(login))
        .route("/trains/query", get(query_trains))
        .route("/tickets/dedup-token", post(dedup_token))
        .route("/tickets/purchase", post(purchase))
        .route("/orders/{order_no}/cancel", post(cancel))
        .route("/orders/by-passenger/{id_number}", get(by_passenger))
        .route("/pay/callback", post(pay_callback))
        .route("/pay/{order_no}", post(pay))
        .route("/metrics", get(metrics))
        .with_state(engine)
}

/// Handle to a running HTTP server; dropping it does not stop the server,
/// call [`HttpServer::stop`].
pub struct HttpServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    join: Option<std::thread::JoinHandle<()>>,
}

impl HttpServer {
    /// Binds, then serves on a dedicated multi-threaded runtime.
    pub fn start(engine: Arc<Engine>) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(&engine.config.listen_addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let workers = engine.config.worker_threads;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let join = std::thread::spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(workers)
                .enable_all()
                .build()
                .expect("tokio runtime");
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                let app = router(engine)
                    .into_make_service_with_connect_info::<SocketAddr>();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("http server");
            });
        });
        Ok(Self { addr, shutdown: Some(tx), join: Some(join) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Graceful stop: drains in-flight requests, then joins the runtime.
    pub fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}
