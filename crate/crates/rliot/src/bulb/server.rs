//! Single-threaded TCP front end for the simulated bulb.
//!
//! Connections are served strictly one at a time, like the real hardware: a
//! second client queues in the accept backlog until the first disconnects.
//! Tests and the experiment harness hold a [`ServerHandle`] to inspect or
//! reset device state out-of-band and to shut the server down.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::protocol::{decode_command, encode_response, error_code, ResultMessage};

use super::advertise::{Advertiser, AdvertiseConfig};
use super::rate_limit::RateLimiter;
use super::{apply_command, BulbState, DeviceError, DeviceProfile};

pub(crate) struct Shared {
    pub(crate) state: Mutex<BulbState>,
    pub(crate) profile: DeviceProfile,
    limiter: Mutex<Option<RateLimiter>>,
    pub(crate) stop: Arc<AtomicBool>,
    epoch: Instant,
    pub(crate) addr: SocketAddr,
    pub(crate) device_id: String,
}

/// Cloneable out-of-band handle to a running simulator.
#[derive(Clone)]
pub struct ServerHandle {
    pub(crate) shared: Arc<Shared>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.shared.addr
    }

    pub fn device_id(&self) -> &str {
        &self.shared.device_id
    }

    pub fn snapshot(&self) -> BulbState {
        self.shared.state.lock().unwrap().clone()
    }

    /// Replace device state wholesale, e.g. between episodes.
    pub fn reset(&self, state: BulbState) -> Result<(), DeviceError> {
        state.validate()?;
        *self.shared.state.lock().unwrap() = state;
        Ok(())
    }
}

/// A running simulator; dropping it stops the accept loop.
pub struct BulbServer {
    handle: ServerHandle,
    thread: Option<JoinHandle<()>>,
}

/// Bind and start serving. `bind` may use port 0 for an ephemeral port; the
/// actual address is available from [`BulbServer::addr`].
pub fn serve(bind: impl ToSocketAddrs, profile: DeviceProfile) -> std::io::Result<BulbServer> {
    profile
        .initial
        .validate()
        .map_err(|e| std::io::Error::new(ErrorKind::InvalidInput, e.to_string()))?;
    let listener = TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        state: Mutex::new(profile.initial.clone()),
        limiter: Mutex::new(profile.rate_limit.map(RateLimiter::new)),
        profile,
        stop: Arc::new(AtomicBool::new(false)),
        epoch: Instant::now(),
        addr,
        // Stable per instance, unique enough for discovery dedup on one host.
        device_id: format!("0x{:012x}", (addr.port() as u64) << 16 | 0xb1b),
    });
    let worker = Arc::clone(&shared);
    let thread = std::thread::Builder::new()
        .name(format!("bulbsim-{}", addr.port()))
        .spawn(move || accept_loop(listener, worker))?;
    Ok(BulbServer {
        handle: ServerHandle { shared },
        thread: Some(thread),
    })
}

impl BulbServer {
    pub fn addr(&self) -> SocketAddr {
        self.handle.addr()
    }

    pub fn handle(&self) -> ServerHandle {
        self.handle.clone()
    }

    /// Start periodically announcing this device over UDP.
    pub fn advertise(&self, config: AdvertiseConfig) -> std::io::Result<Advertiser> {
        Advertiser::start(Arc::clone(&self.handle.shared), config)
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.handle.shared.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for BulbServer {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                if let Err(e) = serve_connection(stream, &shared) {
                    if e.kind() != ErrorKind::BrokenPipe && e.kind() != ErrorKind::ConnectionReset {
                        eprintln!("bulbsim: connection error: {e}");
                    }
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(2));
            }
            Err(e) => {
                eprintln!("bulbsim: accept error: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn serve_connection(stream: TcpStream, shared: &Arc<Shared>) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    // Short read timeout so the loop notices a shutdown request promptly.
    stream.set_read_timeout(Some(Duration::from_millis(50)))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line: Vec<u8> = Vec::with_capacity(256);
    loop {
        if shared.stop.load(Ordering::SeqCst) {
            return Ok(());
        }
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => return Ok(()), // client closed
            // A complete line, or EOF mid-line — parse what arrived either way.
            Ok(_) => {
                let response = handle_line(&line, shared);
                line.clear();
                let bytes = encode_response(&response)
                    .map_err(|e| std::io::Error::new(ErrorKind::InvalidData, e.to_string()))?;
                writer.write_all(&bytes)?;
                writer.flush()?;
            }
            // Timeout while idle (or mid-line): keep whatever bytes already
            // accumulated in `line` and poll again.
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {}
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
}

fn handle_line(line: &[u8], shared: &Arc<Shared>) -> ResultMessage {
    let cmd = match decode_command(line) {
        Ok(cmd) => cmd,
        // Undecodable input gets an error with id 0 (nothing to echo) and the
        // connection stays up.
        Err(e) => {
            return ResultMessage::error(0, error_code::INVALID_PARAMS, format!("bad frame: {e}"))
        }
    };
    let now_ms = shared.epoch.elapsed().as_millis() as u64;
    if let Some(limiter) = shared.limiter.lock().unwrap().as_mut() {
        if !limiter.admit(now_ms) {
            return ResultMessage::error(cmd.id, error_code::RATE_LIMITED, "rate limited");
        }
    }
    let mut state = shared.state.lock().unwrap();
    let (next, response) = apply_command(&state, &cmd, &shared.profile);
    *state = next;
    response
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{decode_response, encode_command, CommandMessage, ParamValue};

    fn roundtrip(stream: &mut TcpStream, reader: &mut BufReader<TcpStream>, cmd: &CommandMessage) -> ResultMessage {
        stream.write_all(&encode_command(cmd).unwrap()).unwrap();
        let mut line = Vec::new();
        reader.read_until(b'\n', &mut line).unwrap();
        decode_response(&line).unwrap()
    }

    fn connect(addr: SocketAddr) -> (TcpStream, BufReader<TcpStream>) {
        let stream = TcpStream::connect(addr).unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        (stream, reader)
    }

    #[test]
    fn serves_commands_and_reflects_state_changes() {
        let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
        let (mut stream, mut reader) = connect(server.addr());

        let res = roundtrip(
            &mut stream,
            &mut reader,
            &CommandMessage::new(
                1,
                "set_rgb",
                vec![
                    ParamValue::Int(255),
                    ParamValue::Str("sudden".into()),
                    ParamValue::Int(0),
                ],
            ),
        );
        assert!(!res.is_error());
        assert_eq!(res.id, 1);
        assert_eq!(server.handle().snapshot().rgb, 255);

        let res = roundtrip(
            &mut stream,
            &mut reader,
            &CommandMessage::new(2, "get_prop", vec![ParamValue::Str("rgb".into())]),
        );
        assert_eq!(res.values().unwrap(), &["255"]);
        server.shutdown();
    }

    #[test]
    fn garbage_lines_get_an_id_zero_error_and_the_connection_survives() {
        let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
        let (mut stream, mut reader) = connect(server.addr());

        stream.write_all(b"this is not json\r\n").unwrap();
        let mut line = Vec::new();
        reader.read_until(b'\n', &mut line).unwrap();
        let res = decode_response(&line).unwrap();
        assert!(res.is_error());
        assert_eq!(res.id, 0);

        // Same connection still works afterwards.
        let res = roundtrip(
            &mut stream,
            &mut reader,
            &CommandMessage::new(3, "toggle", vec![]),
        );
        assert!(!res.is_error());
        server.shutdown();
    }

    #[test]
    fn out_of_band_reset_replaces_state() {
        let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
        let handle = server.handle();
        let mut fresh = BulbState::default();
        fresh.bright = 77;
        handle.reset(fresh.clone()).unwrap();
        assert_eq!(handle.snapshot(), fresh);
        server.shutdown();
    }

    #[test]
    fn second_client_waits_until_the_first_leaves() {
        let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
        let (mut first, mut first_reader) = connect(server.addr());
        let (mut second, mut second_reader) = connect(server.addr());

        // The second client's command sits unanswered while the first client
        // holds the server.
        second
            .write_all(&encode_command(&CommandMessage::new(9, "toggle", vec![])).unwrap())
            .unwrap();
        second
            .set_read_timeout(Some(Duration::from_millis(200)))
            .unwrap();
        let mut buf = Vec::new();
        let err = second_reader.read_until(b'\n', &mut buf).unwrap_err();
        assert!(
            err.kind() == ErrorKind::WouldBlock || err.kind() == ErrorKind::TimedOut,
            "unexpected: {err:?}"
        );

        let res = roundtrip(
            &mut first,
            &mut first_reader,
            &CommandMessage::new(1, "toggle", vec![]),
        );
        assert!(!res.is_error());
        drop(first);
        drop(first_reader);

        // Now the queued command gets served.
        second.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        buf.clear();
        second_reader.read_until(b'\n', &mut buf).unwrap();
        let res = decode_response(&buf).unwrap();
        assert_eq!(res.id, 9);
        server.shutdown();
    }

    #[test]
    fn rate_limited_commands_error_and_leave_state_alone() {
        let mut profile = DeviceProfile::builtin();
        profile.rate_limit = Some(super::super::RateLimitConfig {
            quota: 3,
            window_ms: 60_000,
        });
        let server = serve("127.0.0.1:0", profile).unwrap();
        let (mut stream, mut reader) = connect(server.addr());
        let before = server.handle().snapshot();
        for i in 1..=3u64 {
            let res = roundtrip(&mut stream, &mut reader, &CommandMessage::new(i, "toggle", vec![]));
            assert!(!res.is_error(), "command {i} inside quota");
        }
        let res = roundtrip(&mut stream, &mut reader, &CommandMessage::new(4, "toggle", vec![]));
        assert!(res.is_error());
        let after = server.handle().snapshot();
        // Three toggles from "on": off, on, off. The rejected fourth must not
        // have flipped anything.
        assert_eq!(after.power, before.power.flipped());
        server.shutdown();
    }
}
