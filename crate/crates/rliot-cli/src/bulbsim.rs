//! Standalone bulb simulator: a JSON/TCP smart-bulb lookalike to point
//! agents (or a telnet session) at.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::Parser;
use rliot::bulb::advertise::{AdvertiseConfig, DEFAULT_GROUP, DEFAULT_PORT};
use rliot::bulb::server::serve;
use rliot::bulb::DeviceProfile;

/// Serve a simulated smart bulb over JSON/TCP.
#[derive(Parser)]
#[command(name = "bulbsim", version)]
struct Args {
    /// TCP port to listen on (0 picks an ephemeral port).
    #[arg(long, default_value_t = 55443)]
    port: u16,

    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,

    /// Device profile file; the built-in bulb profile if omitted.
    #[arg(long)]
    profile: Option<PathBuf>,

    /// Disable the profile's command rate limiter.
    #[arg(long)]
    no_rate_limit: bool,

    /// Periodically announce the device over UDP.
    #[arg(long)]
    advertise: bool,

    /// Where announcements go; the standard discovery group if omitted.
    #[arg(long)]
    advertise_target: Option<SocketAddr>,

    /// Seconds between announcements.
    #[arg(long, default_value_t = 5)]
    advertise_interval: u64,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut profile = match &args.profile {
        Some(path) => DeviceProfile::load(path)
            .with_context(|| format!("loading profile {}", path.display()))?,
        None => DeviceProfile::builtin(),
    };
    if args.no_rate_limit {
        profile = profile.without_rate_limit();
    }
    let server = serve(SocketAddr::new(args.bind, args.port), profile)
        .context("starting the bulb server")?;
    println!("bulbsim listening on {}", server.addr());
    println!("device id {}", server.handle().device_id());

    let _advertiser = if args.advertise {
        let config = AdvertiseConfig {
            target: args
                .advertise_target
                .unwrap_or_else(|| SocketAddr::new(IpAddr::V4(DEFAULT_GROUP), DEFAULT_PORT)),
            interval: Duration::from_secs(args.advertise_interval.max(1)),
        };
        println!("advertising to {} every {:?}", config.target, config.interval);
        Some(server.advertise(config).context("starting the advertiser")?)
    } else {
        None
    };

    // Serve until killed.
    loop {
        std::thread::park();
    }
}
