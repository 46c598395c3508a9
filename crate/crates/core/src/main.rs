//! hetbridge CLI: run the broker, middleware, or gateways standalone;
//! drive a simulated device fleet; analyze a run directory; or run the
//! whole reproduction experiment in one process with `demo`.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use hetbridge::analysis;
use hetbridge::demo::{run_demo, DemoOptions};
use hetbridge::gateway::{CoapGateway, ForwardConfig, Forwarder, GatewayConfig, MqttGateway};
use hetbridge::middleware::{MiddlewareServer, DEFAULT_TOKEN_TTL};
use hetbridge::model::FleetConfig;
use hetbridge::mqtt::MqttBroker;
use hetbridge::simulator::{run_fleet, FleetEndpoints, SendLog};
use hetbridge::storage::Store;

#[derive(Parser)]
#[command(name = "hetbridge", version, about)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log output format.
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    log: LogFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogFormat {
    Text,
    Ndjson,
}

#[derive(Subcommand)]
enum Command {
    /// Run the MQTT broker until interrupted.
    Broker {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Run the REST middleware until interrupted.
    Middleware {
        #[arg(long)]
        bind: Option<String>,
        /// Token time-to-live in seconds.
        #[arg(long)]
        ttl_s: Option<u64>,
        /// Append accepted readings to this NDJSON log.
        #[arg(long)]
        readings_log: Option<PathBuf>,
        /// Require a bearer token on the read endpoints too.
        #[arg(long)]
        read_auth: bool,
    },
    /// Run one protocol gateway until interrupted.
    Gateway {
        #[command(subcommand)]
        side: GatewaySide,
    },
    /// Drive a device fleet against running endpoints.
    Simulate {
        #[command(flatten)]
        fleet: FleetArgs,
        #[arg(long)]
        broker: Option<String>,
        #[arg(long)]
        coap_gateway: Option<String>,
        #[arg(long)]
        middleware: Option<String>,
        /// Run directory for the send log.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the analysis bundle from a run directory.
    Analyze { run_dir: PathBuf },
    /// Run the whole experiment in-process and check thresholds.
    Demo {
        #[command(flatten)]
        fleet: FleetArgs,
        /// Run directory (default: a fresh directory under the system
        /// temp dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GatewaySide {
    Mqtt {
        #[arg(long)]
        broker: Option<String>,
        #[arg(long)]
        middleware: Option<String>,
    },
    Coap {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        middleware: Option<String>,
    },
}

#[derive(Args, Clone)]
struct FleetArgs {
    /// Number of MQTT devices.
    #[arg(long)]
    mqtt: Option<u32>,
    /// Number of CoAP devices.
    #[arg(long)]
    coap: Option<u32>,
    #[arg(long)]
    interval_ms: Option<u64>,
    #[arg(long)]
    duration_s: Option<u64>,
    /// MQTT publish QoS (0 or 1).
    #[arg(long)]
    qos: Option<u8>,
    /// Pin all device phases to the same tick instead of random offsets.
    #[arg(long)]
    aligned: bool,
}

/// Optional JSON config shared by all subcommands; flags win over it.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    middleware_bind: Option<String>,
    broker_bind: Option<String>,
    coap_gateway_bind: Option<String>,
    middleware_url: Option<String>,
    broker_addr: Option<String>,
    coap_gateway_addr: Option<String>,
    token_ttl_s: Option<u64>,
    fleet: Option<FleetConfig>,
    out: Option<PathBuf>,
}

/// Default ports: middleware 8080, broker 1883, coap gateway 5683; when
/// HETBRIDGE_BASE_PORT is set they become base, base+1, base+2.
struct Defaults {
    middleware_bind: String,
    broker_bind: String,
    coap_bind: String,
    middleware_url: String,
    broker_addr: String,
    coap_addr: String,
}

fn defaults() -> Defaults {
    let base: Option<u16> = std::env::var("HETBRIDGE_BASE_PORT")
        .ok()
        .and_then(|raw| raw.parse().ok());
    let (mw, broker, coap) = match base {
        Some(base) => (base, base + 1, base + 2),
        None => (8080, 1883, 5683),
    };
    Defaults {
        middleware_bind: format!("127.0.0.1:{mw}"),
        broker_bind: format!("127.0.0.1:{broker}"),
        coap_bind: format!("127.0.0.1:{coap}"),
        middleware_url: format!("http://127.0.0.1:{mw}"),
        broker_addr: format!("127.0.0.1:{broker}"),
        coap_addr: format!("127.0.0.1:{coap}"),
    }
}

fn init_logging(format: LogFormat) {
    let mut builder =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if format == LogFormat::Ndjson {
        builder.format(|buf, record| {
            let line = serde_json::json!({
                "ts": hetbridge::model::Timestamp::now(),
                "level": record.level().to_string().to_lowercase(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    builder.init();
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<FileConfig> {
    match path {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str(&raw)
                .with_context(|| format!("cannot parse config {}", path.display()))
        }
        None => Ok(FileConfig::default()),
    }
}

fn merge_fleet(args: &FleetArgs, file: Option<&FleetConfig>) -> FleetConfig {
    let base = file.cloned().unwrap_or_default();
    FleetConfig {
        mqtt_devices: args.mqtt.unwrap_or(base.mqtt_devices),
        coap_devices: args.coap.unwrap_or(base.coap_devices),
        interval_ms: args.interval_ms.unwrap_or(base.interval_ms),
        duration_s: args.duration_s.unwrap_or(base.duration_s),
        qos: args.qos.unwrap_or(base.qos),
        aligned: args.aligned || base.aligned,
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    eprintln!("run with --help for usage");
    ExitCode::from(2)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log);

    let config = match load_config(cli.config.as_ref()) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    match run(cli.command, config).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

async fn run(command: Command, config: FileConfig) -> anyhow::Result<ExitCode> {
    let defaults = defaults();
    match command {
        Command::Broker { bind } => {
            let bind = bind.or(config.broker_bind).unwrap_or(defaults.broker_bind);
            let broker = MqttBroker::bind(&bind).await?;
            println!("mqtt broker on {}", broker.local_addr());
            tokio::signal::ctrl_c().await?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Middleware {
            bind,
            ttl_s,
            readings_log,
            read_auth,
        } => {
            let bind = bind
                .or(config.middleware_bind)
                .unwrap_or(defaults.middleware_bind);
            let ttl = ttl_s
                .or(config.token_ttl_s)
                .map(Duration::from_secs)
                .unwrap_or(DEFAULT_TOKEN_TTL);
            let store = Arc::new(match &readings_log {
                Some(path) => Store::with_wal(path)?,
                None => Store::new(),
            });
            let mut state = hetbridge::middleware::AppState::new(store, ttl);
            if read_auth {
                state = state.with_read_auth();
            }
            let server = MiddlewareServer::bind_state(&bind, state).await?;
            println!("middleware on {}", server.base_url());
            tokio::signal::ctrl_c().await?;
            server.shutdown().await;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gateway { side } => match side {
            GatewaySide::Mqtt { broker, middleware } => {
                let mut cfg = GatewayConfig::for_middleware(
                    middleware
                        .or(config.middleware_url)
                        .unwrap_or(defaults.middleware_url),
                );
                cfg.mqtt.broker_addr = broker
                    .or(config.broker_addr)
                    .unwrap_or(defaults.broker_addr);
                cfg.validate().map_err(anyhow::Error::msg)?;
                let forwarder = Arc::new(
                    Forwarder::register(
                        &cfg.middleware_base_url,
                        "mqtt-gw",
                        ForwardConfig::default(),
                    )
                    .await?,
                );
                let _gateway = MqttGateway::start(&cfg.mqtt, forwarder).await?;
                println!("mqtt gateway subscribed via {}", cfg.mqtt.broker_addr);
                tokio::signal::ctrl_c().await?;
                Ok(ExitCode::SUCCESS)
            }
            GatewaySide::Coap { bind, middleware } => {
                let mut cfg = GatewayConfig::for_middleware(
                    middleware
                        .or(config.middleware_url)
                        .unwrap_or(defaults.middleware_url),
                );
                cfg.coap.bind_addr = bind
                    .or(config.coap_gateway_bind)
                    .unwrap_or(defaults.coap_bind);
                let forwarder = Arc::new(
                    Forwarder::register(
                        &cfg.middleware_base_url,
                        "coap-gw",
                        ForwardConfig::default(),
                    )
                    .await?,
                );
                let gateway = CoapGateway::start(&cfg.coap, forwarder).await?;
                println!("coap gateway on {}", gateway.local_addr());
                tokio::signal::ctrl_c().await?;
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Simulate {
            fleet,
            broker,
            coap_gateway,
            middleware,
            out,
        } => {
            let fleet = merge_fleet(&fleet, config.fleet.as_ref());
            if let Err(e) = fleet.validate() {
                return Ok(usage_error(&e.to_string()));
            }
            let endpoints = FleetEndpoints {
                broker_addr: broker
                    .or(config.broker_addr)
                    .unwrap_or(defaults.broker_addr),
                coap_gateway_addr: coap_gateway
                    .or(config.coap_gateway_addr)
                    .unwrap_or(defaults.coap_addr),
                coap_ingest_path: "ingest".to_string(),
                middleware_base_url: middleware
                    .or(config.middleware_url)
                    .unwrap_or(defaults.middleware_url),
            };
            let run_dir = out.or(config.out).unwrap_or_else(default_run_dir);
            std::fs::create_dir_all(&run_dir)?;

            let send_log = run_fleet(&fleet, &endpoints).await?;
            let path = run_dir.join("send_log.ndjson");
            send_log.write_ndjson(&path)?;
            println!(
                "sent {} of {} attempts; send log: {}",
                send_log.sent_count(),
                send_log.entries.len(),
                path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { run_dir } => {
            let readings_path = run_dir.join("readings.ndjson");
            let send_log_path = run_dir.join("send_log.ndjson");
            let store = Store::recover(&readings_path).with_context(|| {
                format!("cannot recover readings from {}", readings_path.display())
            })?;
            let send_log = SendLog::read_ndjson(&send_log_path).with_context(|| {
                format!("cannot read send log from {}", send_log_path.display())
            })?;
            let loss = analysis::write_run_reports(&run_dir, &store.all_readings(), &send_log)?;
            println!(
                "analyzed {} readings against {} send attempts; lost {}; reports in {}",
                store.len(),
                send_log.entries.len(),
                loss.lost,
                run_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Demo { fleet, out } => {
            let fleet = merge_fleet(&fleet, config.fleet.as_ref());
            if let Err(e) = fleet.validate() {
                return Ok(usage_error(&e.to_string()));
            }
            let run_dir = out.or(config.out).unwrap_or_else(default_run_dir);
            let options = DemoOptions {
                fleet,
                run_dir,
                token_ttl: DEFAULT_TOKEN_TTL,
            };
            let report = run_demo(&options).await?;
            print!("{}", report.summary_table());
            Ok(if report.outcome.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn default_run_dir() -> PathBuf {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs();
    std::env::temp_dir().join(format!("hetbridge-run-{stamp}"))
}
