//! HTTP front end for consultations: sessions fed by utterances, uploaded
//! EHRs and one-shot queries, all backed by a shared read-only engine.

pub mod api;
pub mod config;
pub mod store;

use thiserror::Error;

pub use api::{router, ApiError, AppState, SessionSummary, SessionView};
pub use config::{Assets, ConfigError, ServiceConfig};
pub use store::{SessionLog, SessionStore};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("session log: {0}")]
    Log(std::io::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Io(std::io::Error),
}

/// Loads every asset and replays the session log. Blocking; call before
/// binding so bad configuration fails fast.
pub fn prepare(config: &ServiceConfig) -> Result<AppState, ServeError> {
    config.validate()?;
    let assets = config.load_assets()?;
    let mut recovered = Vec::new();
    let log = match &config.session_log {
        Some(path) => {
            recovered = SessionLog::recover(path).map_err(ServeError::Log)?;
            Some(SessionLog::open(path).map_err(ServeError::Log)?)
        }
        None => None,
    };
    let state = AppState::new(config.auth_token.clone(), log);
    for s in recovered {
        state.store().insert(s);
    }
    state.install(assets);
    Ok(state)
}

pub async fn bind(addr: &str) -> Result<tokio::net::TcpListener, ServeError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
        addr: addr.to_string(),
        source,
    })
}

/// Serves `state` on an already bound listener until Ctrl-C.
pub async fn serve(state: AppState, listener: tokio::net::TcpListener) -> Result<(), ServeError> {
    let addr = listener.local_addr().map_err(ServeError::Io)?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Io)
}
