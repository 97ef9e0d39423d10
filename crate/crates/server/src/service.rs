//! Binding the listener and running the daily purge job.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::Utc;
use thiserror::Error;
use tokio::net::TcpListener;
use warden_core::knowledge::PurgePolicy;

use crate::api::{router, SharedStore};
use crate::store::{Store, StoreError, StoreOptions};

pub const PURGE_INTERVAL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: String,
    pub storage: PathBuf,
    pub purge_policy: PurgePolicy,
    pub purge_interval: Duration,
    pub store: StoreOptions,
}

impl ServerConfig {
    pub fn new(addr: impl Into<String>, storage: impl Into<PathBuf>) -> Self {
        Self {
            addr: addr.into(),
            storage: storage.into(),
            purge_policy: PurgePolicy::default(),
            purge_interval: PURGE_INTERVAL,
            store: StoreOptions::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A bound but not yet serving instance.
pub struct Server {
    listener: TcpListener,
    store: SharedStore,
    config: ServerConfig,
}

impl Server {
    /// Open the store (refusing a corrupt journal) and bind the address.
    pub async fn bind(config: ServerConfig) -> Result<Self, ServeError> {
        let store = Store::open(&config.storage, config.store)?;
        let listener = TcpListener::bind(&config.addr)
            .await
            .map_err(|source| ServeError::BindFailure { addr: config.addr.clone(), source })?;
        Ok(Self { listener, store: Arc::new(Mutex::new(store)), config })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn store(&self) -> SharedStore {
        self.store.clone()
    }

    pub async fn run(self) -> io::Result<()> {
        self.run_until(std::future::pending()).await
    }

    /// Serve until `shutdown` resolves.
    pub async fn run_until(self, shutdown: impl Future<Output = ()> + Send + 'static) -> io::Result<()> {
        tracing::info!(addr = %self.local_addr(), storage = %self.config.storage.display(), "serving");
        let purge = tokio::spawn(purge_loop(self.store.clone(), self.config.purge_policy, self.config.purge_interval));
        let result = axum::serve(self.listener, router(self.store)).with_graceful_shutdown(shutdown).await;
        purge.abort();
        result
    }
}

async fn purge_loop(store: SharedStore, policy: PurgePolicy, every: Duration) {
    let mut ticks = tokio::time::interval(every);
    loop {
        ticks.tick().await;
        let store = store.clone();
        let outcome =
            tokio::task::spawn_blocking(move || store.lock().expect("store lock poisoned").purge(Utc::now(), policy))
                .await;
        match outcome {
            Ok(Ok(removed)) if !removed.is_empty() => tracing::info!(count = removed.len(), "purged solutions"),
            Ok(Ok(_)) => {}
            Ok(Err(e)) => tracing::error!(error = %e, "purge failed"),
            Err(e) => tracing::error!(error = %e, "purge task panicked"),
        }
    }
}
