//! Startup configuration from flags and environment.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use ildae_core::curation::{flag_instances, FlagSet, DEFAULT_FLAG_COUNT};
use ildae_core::io::{read_difficulty_csv, read_document, read_instances, CsvOrder};
use ildae_core::{Error, Result};

use crate::api::AppState;
use crate::predictor::{HttpPredictor, PredictorHandle, DEFAULT_CONCURRENCY, DEFAULT_TIMEOUT};
use crate::state::Dataset;

pub const ENV_ADDR: &str = "ILDAE_ADDR";
pub const ENV_PREDICTOR_URL: &str = "ILDAE_PREDICTOR_URL";
pub const ENV_DATA_DIR: &str = "ILDAE_DATA_DIR";
pub const ENV_TOKEN: &str = "ILDAE_TOKEN";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

/// Files expected inside the data directory.
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const DIFFICULTY_FILE: &str = "difficulty.csv";
pub const FLAGS_FILE: &str = "flags.json";
pub const EDIT_LOG_FILE: &str = "edits.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
    /// Remote predictor; the in-process stub is used when absent.
    pub predictor_url: Option<String>,
    pub stub_seed: u64,
    pub token: Option<String>,
    pub task_name: String,
    pub timeout: Duration,
    pub concurrency: usize,
}

impl ServiceConfig {
    /// Reads the documented environment variables; unset ones keep defaults.
    pub fn from_env() -> Result<Self> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let addr = var(ENV_ADDR).unwrap_or_else(|| DEFAULT_ADDR.into());
        Ok(Self {
            addr: addr
                .parse()
                .map_err(|_| Error::Invalid(format!("{ENV_ADDR}={addr:?} is not a socket address")))?,
            data_dir: var(ENV_DATA_DIR)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(".")),
            predictor_url: var(ENV_PREDICTOR_URL),
            stub_seed: 0,
            token: var(ENV_TOKEN),
            task_name: "nli".into(),
            timeout: DEFAULT_TIMEOUT,
            concurrency: DEFAULT_CONCURRENCY,
        })
    }

    pub fn predictor(&self) -> Result<PredictorHandle> {
        Ok(match &self.predictor_url {
            Some(url) => {
                let http = HttpPredictor::new(url.clone(), self.timeout).map_err(|e| Error::Invalid(e.to_string()))?;
                PredictorHandle::new(Arc::new(http), self.timeout, self.concurrency)
            }
            None => PredictorHandle::new(
                Arc::new(crate::predictor::StubPredictor::new(self.stub_seed)),
                self.timeout,
                self.concurrency,
            ),
        })
    }

    /// Loads the data directory and replays its edit log.
    pub fn build_state(&self) -> Result<AppState> {
        let dataset = load_dataset(&self.data_dir, &self.task_name)?;
        Ok(
            AppState::with_log(dataset, self.predictor()?, &self.data_dir.join(EDIT_LOG_FILE))?
                .with_token(self.token.clone()),
        )
    }
}

/// Instances, scores, and flags (from `flags.json`, or the default top-k).
pub fn load_dataset(dir: &Path, task_name: &str) -> Result<Dataset> {
    let instances = read_instances(&dir.join(INSTANCES_FILE))?;
    let csv_path = dir.join(DIFFICULTY_FILE);
    let file = std::fs::File::open(&csv_path).map_err(|e| Error::Io {
        path: csv_path.clone(),
        source: e,
    })?;
    let difficulty = read_difficulty_csv(file, CsvOrder::Strict)?;
    let flags_path = dir.join(FLAGS_FILE);
    let flags: FlagSet = if flags_path.exists() {
        read_document(&flags_path, "flag_set")?
    } else {
        let k = DEFAULT_FLAG_COUNT.min(difficulty.len() / 2);
        flag_instances(&difficulty, k, k)?
    };
    Dataset::new(task_name, instances, difficulty, flags)
}

/// Serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let app = config.build_state()?;
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|e| Error::Io {
            path: PathBuf::from(config.addr.to_string()),
            source: e,
        })?;
    tracing::info!(addr = %config.addr, "serving");
    axum::serve(listener, crate::api::router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Io {
            path: PathBuf::from(config.addr.to_string()),
            source: e,
        })
}
