//! HTTP and WebSocket front end for a [`Platform`], with the background
//! ticker, provider job worker and snapshot persistence.

pub mod cli;
pub mod config;
pub mod http;
pub mod ws;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use axum::http::{header, HeaderValue};
use axum::response::Response;
use axum::Router;
use colloquy::auth::Secrets;
use colloquy::clock::{Clock, SystemClock};
use colloquy::engine::Job;
use colloquy::platform::Platform;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

pub use config::{ConfigError, ServerConfig, TlsConfig};

const HSTS: &str = "max-age=31536000; includeSubDomains";
/// Longest the ticker sleeps when no deadline is pending.
const IDLE_TICK_MS: i64 = 250;

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    pub heartbeat: Duration,
}

pub fn router(state: AppState, hsts: bool) -> Router {
    let app = http::routes().merge(ws::routes()).with_state(state);
    if hsts {
        app.layer(axum::middleware::map_response(|mut res: Response| async move {
            res.headers_mut()
                .insert(header::STRICT_TRANSPORT_SECURITY, HeaderValue::from_static(HSTS));
            res
        }))
    } else {
        app
    }
}

/// A running service. Dropping the handle also begins shutdown, without
/// waiting for it to finish.
pub struct Server {
    pub addr: SocketAddr,
    pub state: AppState,
    stop: oneshot::Sender<()>,
    task: JoinHandle<anyhow::Result<()>>,
}

impl Server {
    /// Ends every room, closes all channels, waits for the listener to
    /// drain and writes the final snapshot.
    pub async fn stop(self) -> anyhow::Result<()> {
        let _ = self.stop.send(());
        self.task.await.context("server task panicked")?
    }
}

fn spawn_worker(platform: Arc<Platform>, mut jobs: mpsc::UnboundedReceiver<Job>) {
    tokio::spawn(async move {
        while let Some(job) = jobs.recv().await {
            let platform = platform.clone();
            tokio::spawn(async move { platform.run_job(job).await });
        }
    });
}

fn spawn_ticker(platform: Arc<Platform>) -> JoinHandle<()> {
    tokio::spawn(async move {
        loop {
            let now = platform.now();
            let wait = platform
                .next_deadline()
                .map_or(IDLE_TICK_MS, |d| (d - now).clamp(0, IDLE_TICK_MS));
            tokio::time::sleep(Duration::from_millis(wait as u64)).await;
            platform.tick();
        }
    })
}

fn spawn_saver(platform: Arc<Platform>, config: &ServerConfig) -> Option<JoinHandle<()>> {
    if config.save_interval_s == 0 {
        return None;
    }
    let path = config.data_path.clone();
    let every = Duration::from_secs(config.save_interval_s);
    Some(tokio::spawn(async move {
        let mut ticker = tokio::time::interval(every);
        ticker.tick().await;
        loop {
            ticker.tick().await;
            if let Err(e) = platform.save(&path) {
                tracing::warn!(error = %e, "periodic save failed");
            }
        }
    }))
}

/// Loads state, binds and starts serving.
pub async fn start(config: ServerConfig, secrets: &Secrets, clock: Arc<dyn Clock>) -> anyhow::Result<Server> {
    config.validate()?;
    let (job_tx, job_rx) = mpsc::unbounded_channel::<Job>();
    let platform = Arc::new(
        Platform::open(config.platform.clone(), secrets, clock, Arc::new(job_tx), &config.data_path)
            .context("loading saved state")?,
    );
    spawn_worker(platform.clone(), job_rx);
    let ticker = spawn_ticker(platform.clone());
    let saver = spawn_saver(platform.clone(), &config);
    let state = AppState {
        platform: platform.clone(),
        heartbeat: Duration::from_millis(config.heartbeat_interval_ms),
    };
    let app = router(state.clone(), config.tls.is_some()).into_make_service_with_connect_info::<SocketAddr>();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();

    // Closing every channel first lets open WebSocket connections finish,
    // so the listener can drain.
    let on_stop = {
        let platform = platform.clone();
        async move {
            let _ = stop_rx.await;
            platform.shutdown();
        }
    };

    let (addr, serving): (SocketAddr, JoinHandle<anyhow::Result<()>>) = match &config.tls {
        None => {
            let listener = tokio::net::TcpListener::bind(config.bind)
                .await
                .with_context(|| format!("binding {}", config.bind))?;
            let addr = listener.local_addr()?;
            let task = tokio::spawn(async move {
                axum::serve(listener, app).with_graceful_shutdown(on_stop).await?;
                Ok(())
            });
            (addr, task)
        }
        Some(tls) => {
            let rustls = axum_server::tls_rustls::RustlsConfig::from_pem_file(&tls.cert_path, &tls.key_path)
                .await
                .context("loading TLS certificate")?;
            let handle = axum_server::Handle::new();
            let server = axum_server::bind_rustls(config.bind, rustls).handle(handle.clone());
            let shutdown = handle.clone();
            tokio::spawn(async move {
                on_stop.await;
                shutdown.graceful_shutdown(Some(Duration::from_secs(10)));
            });
            let task = tokio::spawn(async move {
                server.serve(app).await?;
                Ok(())
            });
            let addr = handle.listening().await.context("TLS listener failed to start")?;
            (addr, task)
        }
    };
    tracing::info!(%addr, tls = config.tls.is_some(), "listening");

    let data_path = config.data_path.clone();
    let task = tokio::spawn(async move {
        let served = serving.await.context("listener task panicked")?;
        ticker.abort();
        if let Some(s) = saver {
            s.abort();
        }
        platform.save(&data_path).context("saving state")?;
        tracing::info!(path = %data_path.display(), "state saved");
        served
    });
    Ok(Server {
        addr,
        state,
        stop: stop_tx,
        task,
    })
}

/// Serves until interrupted.
pub async fn run(config: ServerConfig) -> anyhow::Result<()> {
    let secrets = Secrets::from_env().context("reading secrets from the environment")?;
    let server = start(config, &secrets, Arc::new(SystemClock)).await?;
    tokio::signal::ctrl_c().await.context("waiting for interrupt")?;
    tracing::info!("shutting down");
    server.stop().await
}
