//! HTTP service and command-line front end for the pronunciation analysis
//! pipeline in `capt-core`.

pub mod config;
pub mod http;
pub mod service;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use capt_core::inventory::PhoneInventory;
use tokio::net::TcpListener;

use crate::config::ServiceConfig;
use crate::http::AppState;
use crate::service::{Catalog, Provider};
use crate::store::AttemptStore;

/// Loads the catalog, provider and attempt store named by `cfg`.
pub fn build_state(cfg: &ServiceConfig) -> anyhow::Result<AppState> {
    let inventory = PhoneInventory::default_shared();
    let catalog = Catalog::load(&cfg.catalog, &inventory)
        .with_context(|| format!("loading catalog {}", cfg.catalog.display()))?;
    let provider = Provider::from_config(&cfg.provider, inventory.clone()).context("configuring provider")?;
    let store = AttemptStore::open(&cfg.attempts_dir)
        .with_context(|| format!("opening attempt store {}", cfg.attempts_dir.display()))?;
    Ok(AppState { catalog, provider, inventory, pipeline: cfg.thresholds, store })
}

/// A bound, not yet running, server.
pub struct Server {
    listener: TcpListener,
    app: axum::Router,
}

impl Server {
    pub async fn bind(cfg: &ServiceConfig) -> anyhow::Result<Self> {
        let state = Arc::new(build_state(cfg)?);
        let app = http::router(state, &cfg.cors_origins);
        let addr = format!("{}:{}", cfg.host, cfg.port);
        let listener = TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        Ok(Self { listener, app })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> std::io::Result<()> {
        axum::serve(self.listener, self.app).await
    }
}
