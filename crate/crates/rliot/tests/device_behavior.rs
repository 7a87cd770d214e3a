//! End-to-end checks of the simulated bulb over a real TCP socket: framing,
//! state mutation, error codes, rate limiting, and the out-of-band handle.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use rliot::bulb::server::serve;
use rliot::bulb::{BulbState, DeviceProfile, Power, RateLimitConfig};
use rliot::env::DeviceSession;
use rliot::protocol::{error_code, ParamValue};

fn int(v: i64) -> ParamValue {
    ParamValue::Int(v)
}

fn s(v: &str) -> ParamValue {
    ParamValue::Str(v.into())
}

fn connect(addr: std::net::SocketAddr) -> DeviceSession {
    DeviceSession::connect(addr, Duration::ZERO).expect("connect")
}

#[test]
fn commands_mutate_state_and_get_prop_reports_it() {
    let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
    let mut dev = connect(server.addr());

    let res = dev
        .call("set_rgb", vec![int(255), s("sudden"), int(0)])
        .unwrap();
    assert_eq!(res.values(), Some(&["ok".to_string()][..]));

    let res = dev
        .call("set_power", vec![s("off"), s("smooth"), int(500)])
        .unwrap();
    assert!(!res.is_error());

    let res = dev
        .call("get_prop", vec![s("power"), s("rgb"), s("bright")])
        .unwrap();
    assert_eq!(
        res.values(),
        Some(&["off".to_string(), "255".to_string(), "50".to_string()][..])
    );
    assert_eq!(dev.wire_commands(), 3);

    // With the light off, state commands bounce; power and scene paths work.
    let res = dev.call("set_rgb", vec![int(16), s("sudden"), int(0)]).unwrap();
    assert_eq!(error_of(&res), error_code::DEVICE_OFF);
    let res = dev.call("set_name", vec![s("dark")]).unwrap();
    assert_eq!(error_of(&res), error_code::DEVICE_OFF);
    let res = dev
        .call("get_prop", vec![s("rgb"), s("name")])
        .unwrap();
    assert_eq!(
        res.values(),
        Some(&["255".to_string(), "bulb".to_string()][..])
    );
    let res = dev.call("set_scene", vec![s("color"), int(16)]).unwrap();
    assert!(!res.is_error());
    let res = dev.call("get_prop", vec![s("power"), s("rgb")]).unwrap();
    assert_eq!(res.values(), Some(&["on".to_string(), "16".to_string()][..]));
}

#[test]
fn unsupported_and_invalid_commands_error_without_side_effects() {
    let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
    let handle = server.handle();
    let before = handle.snapshot();
    let mut dev = connect(server.addr());

    // In the dictionary but not in this device's firmware.
    let res = dev.call("cron_get", vec![int(0)]).unwrap();
    assert_eq!(error_of(&res), error_code::UNSUPPORTED);

    // Unknown to any firmware.
    let res = dev.call("frobnicate", vec![]).unwrap();
    assert_eq!(error_of(&res), error_code::UNSUPPORTED);

    // Supported method, out-of-range param.
    let res = dev
        .call("set_bright", vec![int(0), s("sudden"), int(0)])
        .unwrap();
    assert_eq!(error_of(&res), error_code::INVALID_PARAMS);

    // Wrong arity.
    let res = dev.call("toggle", vec![int(1)]).unwrap();
    assert_eq!(error_of(&res), error_code::INVALID_PARAMS);

    assert_eq!(handle.snapshot(), before);
}

#[test]
fn rate_limiter_rejects_over_quota_and_recovers() {
    let profile = DeviceProfile {
        rate_limit: Some(RateLimitConfig {
            quota: 3,
            window_ms: 400,
        }),
        ..DeviceProfile::builtin()
    };
    let server = serve("127.0.0.1:0", profile).unwrap();
    let mut dev = connect(server.addr());

    for _ in 0..3 {
        let res = dev.call("toggle", vec![]).unwrap();
        assert!(!res.is_error());
    }
    let refused = dev.call("toggle", vec![]).unwrap();
    assert_eq!(error_of(&refused), error_code::RATE_LIMITED);
    // The refused toggle must not have flipped power: three applied toggles
    // from "on" leave the bulb off.
    assert_eq!(server.handle().snapshot().power, Power::Off);

    std::thread::sleep(Duration::from_millis(450));
    let res = dev.call("toggle", vec![]).unwrap();
    assert!(!res.is_error(), "window elapsed, quota should be back");
}

#[test]
fn wire_bytes_match_protocol_examples_verbatim() {
    let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
    let mut stream = TcpStream::connect(server.addr()).unwrap();
    stream
        .write_all(b"{\"id\": 1, \"method\": \"set_rgb\", \"params\": [255, \"sudden\", 0]}\r\n")
        .unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert_eq!(line, "{\"id\": 1, \"result\": [\"ok\"]}\r\n");

    // Decoders accept reordered fields and extra whitespace.
    stream
        .write_all(b"{\"params\": [], \"method\": \"toggle\", \"id\": 2}\r\n")
        .unwrap();
    line.clear();
    reader.read_line(&mut line).unwrap();
    assert_eq!(line, "{\"id\": 2, \"result\": [\"ok\"]}\r\n");

    // Garbage gets an error response rather than a hangup.
    stream.write_all(b"garbage\r\n").unwrap();
    line.clear();
    reader.read_line(&mut line).unwrap();
    assert!(line.contains("\"error\""), "got: {line}");
}

#[test]
fn client_synthesizes_error_on_undecodable_response() {
    // A fake device that answers every line with garbage.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let worker = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut line = String::new();
        let mut stream = stream;
        while reader.read_line(&mut line).is_ok_and(|n| n > 0) {
            stream.write_all(b"not json at all\r\n").unwrap();
            line.clear();
        }
    });

    let mut dev = DeviceSession::connect(addr, Duration::ZERO).unwrap();
    let res = dev.call("toggle", vec![]).unwrap();
    assert_eq!(error_of(&res), error_code::CLIENT_DECODE);
    drop(dev);
    worker.join().unwrap();
}

#[test]
fn handle_resets_state_outside_the_protocol() {
    let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
    let handle = server.handle();
    let mut dev = connect(server.addr());

    dev.call("set_name", vec![s("renamed")]).unwrap();
    assert_eq!(handle.snapshot().name, "renamed");

    let fresh = BulbState {
        power: Power::Off,
        rgb: 0x00ff00,
        bright: 10,
        name: "reset".into(),
        ct: 2700,
    };
    handle.reset(fresh.clone()).unwrap();
    let res = dev
        .call("get_prop", vec![s("power"), s("rgb"), s("bright"), s("name"), s("ct")])
        .unwrap();
    assert_eq!(
        res.values(),
        Some(
            &[
                "off".to_string(),
                (0x00ff00u32).to_string(),
                "10".to_string(),
                "reset".to_string(),
                "2700".to_string(),
            ][..]
        )
    );

    // Invalid states are refused and leave the device as it was.
    let bad = BulbState { bright: 0, ..fresh.clone() };
    assert!(handle.reset(bad).is_err());
    assert_eq!(handle.snapshot(), fresh);
}

#[test]
fn connections_are_served_one_after_another() {
    let server = serve("127.0.0.1:0", DeviceProfile::builtin().without_rate_limit()).unwrap();
    {
        let mut first = connect(server.addr());
        assert!(!first.call("toggle", vec![]).unwrap().is_error());
    }
    // After the first client hangs up the next one gets served.
    let mut second = connect(server.addr());
    assert!(!second.call("toggle", vec![]).unwrap().is_error());
    assert_eq!(server.handle().snapshot().power, Power::On);
}

fn error_of(res: &rliot::protocol::ResultMessage) -> i64 {
    match &res.outcome {
        rliot::protocol::ResponseOutcome::Error(body) => body.code,
        other => panic!("expected an error outcome, got {other:?}"),
    }
}
