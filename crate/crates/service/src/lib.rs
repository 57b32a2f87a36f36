//! Local review service for clone-set analyses: HTTP API, label store and
//! the `clonescope` command line.

pub mod api;
pub mod data;
pub mod labels;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use tokio::net::TcpListener;

use crate::api::AppState;
use crate::data::DataSet;
use crate::labels::LabelStore;

/// Loads an analysis directory and opens the label store.
pub fn load_state(data_dir: &Path, labels: &Path) -> anyhow::Result<AppState> {
    let data = DataSet::load(data_dir)?;
    let store = LabelStore::open(labels)?;
    let unknown = store
        .all()
        .iter()
        .filter(|l| data.get(l.fingerprint).is_none())
        .count();
    if unknown > 0 {
        tracing::warn!(unknown, "label store has labels for clone sets not in this data set");
    }
    Ok(AppState {
        data: Arc::new(data),
        labels: Arc::new(Mutex::new(store)),
    })
}

/// Binds and serves until `shutdown` resolves. `on_bound` receives the
/// actual local address, useful when binding port 0.
pub async fn serve<F>(
    state: AppState,
    bind: SocketAddr,
    assets: Option<PathBuf>,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: F,
) -> anyhow::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    let listener = TcpListener::bind(bind)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {bind}: {e}"))?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, api::router(state, assets))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
