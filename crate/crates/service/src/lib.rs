//! Case store and HTTP API for the arbitrator console.
//!
//! Cases, predictions, rulings and appeals are events in an append-only
//! log; the API serves the work queue, per-case explanations and rulings.

pub mod api;
pub mod error;
pub mod queue;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::{prediction_payload, router, ActiveModel, AppState, CaseView, PredictionPayload, Stats};
pub use error::{Result, ServiceError};
pub use queue::{build_queue, ConfidenceBand, QueueEntry, QueueOrder};
pub use store::{replay, read_events, CaseRecord, CaseRecordEvent, CaseStatus, EventKind, Store, StoreState};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub model_path: Option<PathBuf>,
    pub port: u16,
    pub token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("odr-data"),
            model_path: None,
            port: 8080,
            token: None,
        }
    }
}

impl ServiceConfig {
    /// Reads `ODR_DATA_DIR`, `ODR_MODEL_PATH`, `ODR_PORT` and `ODR_API_TOKEN`
    /// through `var`, keeping defaults for unset names.
    pub fn from_vars(var: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut cfg = ServiceConfig::default();
        if let Some(d) = var("ODR_DATA_DIR") {
            cfg.data_dir = d.into();
        }
        cfg.model_path = var("ODR_MODEL_PATH").map(PathBuf::from);
        if let Some(p) = var("ODR_PORT") {
            cfg.port = p
                .parse()
                .map_err(|_| ServiceError::Config(format!("ODR_PORT `{p}` is not a port number")))?;
        }
        cfg.token = var("ODR_API_TOKEN").filter(|t| !t.is_empty());
        Ok(cfg)
    }

    pub fn from_env() -> Result<Self> {
        Self::from_vars(|k| std::env::var(k).ok())
    }

    pub fn build_state(&self) -> Result<AppState> {
        let model = self.model_path.as_ref().map(ActiveModel::load).transpose()?;
        let mut state = AppState::new(Store::open(&self.data_dir)?, model);
        state.token = self.token.clone();
        Ok(state)
    }
}

/// Serves the API on all interfaces until the task is cancelled.
pub async fn serve(cfg: &ServiceConfig, state: AppState) -> Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], cfg.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on {addr}");
    axum::serve(listener, router(Arc::new(state)))
        .await
        .map_err(|e| ServiceError::Config(format!("server stopped: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_from_vars() {
        let cfg = ServiceConfig::from_vars(|k| match k {
            "ODR_PORT" => Some("9001".into()),
            "ODR_DATA_DIR" => Some("/tmp/x".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.port, 9001);
        assert_eq!(cfg.data_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.model_path, None);
        assert!(ServiceConfig::from_vars(|k| (k == "ODR_PORT").then(|| "http".into())).is_err());
    }
}
