//! HTTP oracle service: a human answers the engine's pair queries through
//! a small JSON API while the engine runs on its own thread.

pub mod api;
pub mod error;
pub mod manager;
pub mod projection;
pub mod session;
pub mod spec;

pub use api::router;
pub use error::ApiError;
pub use manager::SessionManager;
pub use session::{Phase, Session, Status};
pub use spec::SessionSpec;

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, manager: SessionManager) -> std::io::Result<()> {
    axum::serve(listener, router(manager)).await
}

/// Like [`serve`], but returns once `shutdown` resolves and in-flight
/// requests have been answered.
pub async fn serve_until(
    listener: tokio::net::TcpListener,
    manager: SessionManager,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(manager)).with_graceful_shutdown(shutdown).await
}
