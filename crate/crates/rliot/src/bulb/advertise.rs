//! Periodic UDP presence announcements, in the style of SSDP NOTIFY.
//!
//! The payload carries a `Location: yeelight://ip:port` line plus a handful of
//! state headers. The target address is configurable: the conventional
//! multicast group for real deployments, or any unicast address so tests can
//! point a bulb directly at a listener.

use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::server::Shared;
use super::BulbState;

/// Conventional discovery group for this device family.
pub const DEFAULT_GROUP: Ipv4Addr = Ipv4Addr::new(239, 255, 255, 250);
pub const DEFAULT_PORT: u16 = 1982;

#[derive(Debug, Clone, Copy)]
pub struct AdvertiseConfig {
    pub target: SocketAddr,
    pub interval: Duration,
}

impl Default for AdvertiseConfig {
    fn default() -> Self {
        AdvertiseConfig {
            target: SocketAddr::new(IpAddr::V4(DEFAULT_GROUP), DEFAULT_PORT),
            interval: Duration::from_secs(5),
        }
    }
}

/// Render one announcement datagram.
pub fn advertisement_payload(
    device_id: &str,
    location: SocketAddr,
    target: SocketAddr,
    state: &BulbState,
) -> String {
    // An unspecified bind address is not routable; loopback is the honest
    // stand-in on a single machine.
    let ip = match location.ip() {
        ip if ip.is_unspecified() => IpAddr::V4(Ipv4Addr::LOCALHOST),
        ip => ip,
    };
    format!(
        "NOTIFY * HTTP/1.1\r\n\
         Host: {target}\r\n\
         Cache-Control: max-age=3600\r\n\
         Location: yeelight://{ip}:{port}\r\n\
         NTS: ssdp:alive\r\n\
         id: {device_id}\r\n\
         model: color\r\n\
         power: {power}\r\n\
         bright: {bright}\r\n\
         rgb: {rgb}\r\n\
         name: {name}\r\n\
         \r\n",
        port = location.port(),
        power = state.power.as_str(),
        bright = state.bright,
        rgb = state.rgb,
        name = state.name,
    )
}

/// Background announcer tied to a running [`super::server::BulbServer`].
pub struct Advertiser {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Advertiser {
    pub(crate) fn start(shared: Arc<Shared>, config: AdvertiseConfig) -> std::io::Result<Self> {
        let socket = UdpSocket::bind("0.0.0.0:0")?;
        if let SocketAddr::V4(v4) = config.target {
            if v4.ip().is_multicast() {
                // Let listeners on this same host hear us.
                socket.set_multicast_loop_v4(true)?;
            }
        }
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = std::thread::Builder::new()
            .name("bulbsim-advertise".into())
            .spawn(move || loop {
                let state = shared.state.lock().unwrap().clone();
                let payload =
                    advertisement_payload(&shared.device_id, shared.addr, config.target, &state);
                if let Err(e) = socket.send_to(payload.as_bytes(), config.target) {
                    eprintln!("bulbsim: advertise send failed: {e}");
                }
                // Sleep in slices so shutdown is prompt even with long intervals.
                let mut remaining = config.interval;
                while !remaining.is_zero() {
                    if flag.load(Ordering::SeqCst) || shared.stop.load(Ordering::SeqCst) {
                        return;
                    }
                    let nap = remaining.min(Duration::from_millis(50));
                    std::thread::sleep(nap);
                    remaining -= nap;
                }
                if flag.load(Ordering::SeqCst) || shared.stop.load(Ordering::SeqCst) {
                    return;
                }
            })?;
        Ok(Advertiser {
            stop,
            thread: Some(thread),
        })
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Advertiser {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_has_location_id_and_state_headers() {
        let state = BulbState::default();
        let loc: SocketAddr = "192.168.1.20:55443".parse().unwrap();
        let target: SocketAddr = "239.255.255.250:1982".parse().unwrap();
        let text = advertisement_payload("0x0000000b1b", loc, target, &state);
        assert!(text.starts_with("NOTIFY * HTTP/1.1\r\n"));
        assert!(text.contains("Location: yeelight://192.168.1.20:55443\r\n"));
        assert!(text.contains("id: 0x0000000b1b\r\n"));
        assert!(text.contains("power: on\r\n"));
        assert!(text.contains("rgb: 16711680\r\n"));
        assert!(text.ends_with("\r\n\r\n"));
    }

    #[test]
    fn unspecified_bind_address_becomes_loopback() {
        let state = BulbState::default();
        let loc: SocketAddr = "0.0.0.0:55443".parse().unwrap();
        let target: SocketAddr = "127.0.0.1:1982".parse().unwrap();
        let text = advertisement_payload("0xabc", loc, target, &state);
        assert!(text.contains("Location: yeelight://127.0.0.1:55443\r\n"));
    }
}
