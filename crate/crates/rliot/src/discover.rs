//! Finding bulbs on the network, two ways: passively collecting UDP
//! announcements, and actively probing a subnet for the TCP control port.
//!
//! Datagram handling is split so the interesting part is pure: [`collect`]
//! folds already-received `(timestamp, payload)` pairs into deduplicated
//! device records, and [`listen`] is the thin socket loop that feeds it. A
//! captured session can therefore be replayed through `collect` in tests.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpStream, UdpSocket};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::{decode_response, encode_command, CommandMessage, ParamValue};

/// One discovered device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceRecord {
    pub id: String,
    /// TCP control endpoint.
    pub address: SocketAddr,
    /// Milliseconds on the caller's clock.
    pub first_seen_ms: u64,
    pub last_seen_ms: u64,
    pub sightings: u32,
    /// Remaining announcement headers, lowercased keys.
    pub headers: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum DiscoverError {
    #[error("bad CIDR {0:?}: {1}")]
    BadCidr(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parsed announcement: `(device id, control endpoint, headers)`.
pub fn parse_advertisement(payload: &str) -> Option<(String, SocketAddr, BTreeMap<String, String>)> {
    let mut lines = payload.split("\r\n");
    let start = lines.next()?;
    if !start.starts_with("NOTIFY") && !start.starts_with("HTTP/1.1 200") {
        return None;
    }
    let mut headers = BTreeMap::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once(':')?;
        headers.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
    }
    let id = headers.remove("id")?;
    let location = headers.remove("location")?;
    let endpoint = location.strip_prefix("yeelight://")?;
    let address: SocketAddr = endpoint.parse().ok()?;
    Some((id, address, headers))
}

/// Fold received datagrams into device records, deduplicating by device id.
/// Records keep their first-seen order; repeat sightings update `last_seen_ms`,
/// `sightings`, and the stored address/headers (devices may move).
/// Unparseable payloads are skipped.
pub fn collect<'a>(datagrams: impl IntoIterator<Item = (u64, &'a str)>) -> Vec<DeviceRecord> {
    let mut records: Vec<DeviceRecord> = Vec::new();
    let mut by_id: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (ts, payload) in datagrams {
        let Some((id, address, headers)) = parse_advertisement(payload) else {
            continue;
        };
        match by_id.get(&id) {
            Some(&i) => {
                let rec = &mut records[i];
                rec.last_seen_ms = ts;
                rec.sightings += 1;
                rec.address = address;
                rec.headers = headers;
            }
            None => {
                by_id.insert(id.clone(), records.len());
                records.push(DeviceRecord {
                    id,
                    address,
                    first_seen_ms: ts,
                    last_seen_ms: ts,
                    sightings: 1,
                    headers,
                });
            }
        }
    }
    records
}

/// Listen for announcements on `addr` for `duration` and return what showed
/// up. A multicast `addr` joins the group; a unicast one binds it directly.
pub fn listen(addr: SocketAddr, duration: Duration) -> std::io::Result<Vec<DeviceRecord>> {
    let socket = match (addr.ip(), addr) {
        (IpAddr::V4(ip), _) if ip.is_multicast() => {
            let s = UdpSocket::bind(SocketAddr::new(IpAddr::V4(Ipv4Addr::UNSPECIFIED), addr.port()))?;
            s.join_multicast_v4(&ip, &Ipv4Addr::UNSPECIFIED)?;
            s
        }
        (_, addr) => UdpSocket::bind(addr)?,
    };
    socket.set_read_timeout(Some(Duration::from_millis(50)))?;
    let started = Instant::now();
    let mut buf = [0u8; 2048];
    let mut datagrams: Vec<(u64, String)> = Vec::new();
    while started.elapsed() < duration {
        match socket.recv_from(&mut buf) {
            Ok((n, _)) => {
                let ts = started.elapsed().as_millis() as u64;
                datagrams.push((ts, String::from_utf8_lossy(&buf[..n]).into_owned()));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {}
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(collect(datagrams.iter().map(|(ts, p)| (*ts, p.as_str()))))
}

/// Expand `a.b.c.d/len` into candidate host addresses. Network and broadcast
/// addresses are skipped for prefixes shorter than /31. Prefixes wider than
/// /16 are refused — probing 65k hosts serially is a mistake, not a plan.
pub fn expand_cidr(cidr: &str) -> Result<Vec<Ipv4Addr>, DiscoverError> {
    let bad = |why: &str| DiscoverError::BadCidr(cidr.to_string(), why.to_string());
    let (ip_text, len_text) = cidr.split_once('/').ok_or_else(|| bad("missing /len"))?;
    let ip: Ipv4Addr = ip_text.parse().map_err(|_| bad("unparseable address"))?;
    let len: u32 = len_text.parse().map_err(|_| bad("unparseable prefix length"))?;
    if len > 32 {
        return Err(bad("prefix length over 32"));
    }
    if len < 16 {
        return Err(bad("prefix wider than /16"));
    }
    let base = u32::from(ip) & prefix_mask(len);
    let hosts: Vec<Ipv4Addr> = match len {
        32 => vec![Ipv4Addr::from(base)],
        31 => vec![Ipv4Addr::from(base), Ipv4Addr::from(base + 1)],
        _ => {
            let size = 1u32 << (32 - len);
            (1..size - 1).map(|off| Ipv4Addr::from(base + off)).collect()
        }
    };
    Ok(hosts)
}

fn prefix_mask(len: u32) -> u32 {
    match len {
        0 => 0,
        n => u32::MAX << (32 - n),
    }
}

/// Serially probe every host in `cidr` on each of `ports`, fingerprinting
/// whatever answers. Unreachable hosts are skipped silently; a device is
/// recorded only if it completes a `get_prop ["power"]` round trip with a
/// plausible answer.
pub fn probe(cidr: &str, ports: &[u16], timeout: Duration) -> Result<Vec<DeviceRecord>, DiscoverError> {
    let started = Instant::now();
    let mut records = Vec::new();
    for ip in expand_cidr(cidr)? {
        for &port in ports {
            let addr = SocketAddr::new(IpAddr::V4(ip), port);
            if let Some(power) = fingerprint(addr, timeout) {
                let ts = started.elapsed().as_millis() as u64;
                let mut headers = BTreeMap::new();
                headers.insert("power".to_string(), power);
                records.push(DeviceRecord {
                    id: format!("probe:{addr}"),
                    address: addr,
                    first_seen_ms: ts,
                    last_seen_ms: ts,
                    sightings: 1,
                    headers,
                });
            }
        }
    }
    Ok(records)
}

/// One fingerprint attempt; `None` means "not one of ours" (unreachable,
/// wrong protocol, implausible answer — all the same for a scan).
fn fingerprint(addr: SocketAddr, timeout: Duration) -> Option<String> {
    let stream = TcpStream::connect_timeout(&addr, timeout).ok()?;
    stream.set_read_timeout(Some(timeout)).ok()?;
    stream.set_nodelay(true).ok()?;
    let cmd = CommandMessage::new(1, "get_prop", vec![ParamValue::Str("power".into())]);
    let mut writer = stream.try_clone().ok()?;
    writer.write_all(&encode_command(&cmd).ok()?).ok()?;
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).ok()?;
    let response = decode_response(&line).ok()?;
    match response.values()?.first().map(String::as_str) {
        Some("on") | Some("off") => Some(response.values()?[0].clone()),
        _ => None,
    }
}
