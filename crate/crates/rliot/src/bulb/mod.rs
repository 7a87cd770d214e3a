//! Simulated smart bulb: state, command semantics, rate limiting, TCP server
//! and LAN advertisement.
//!
//! The heart of the module is [`apply_command`], a pure function from
//! `(state, command)` to `(state', response)`. The TCP server is a thin shell
//! around it, which keeps the transition semantics trivially testable and
//! guarantees the device can never be wedged by a weird command — worst case
//! it answers with an error and stays put.

pub mod advertise;
pub mod color;
pub mod rate_limit;
pub mod server;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{error_code, CommandMessage, ParamValue, ResultMessage};

/// Power switch position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Power {
    On,
    Off,
}

impl Power {
    pub fn flipped(self) -> Power {
        match self {
            Power::On => Power::Off,
            Power::Off => Power::On,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Power::On => "on",
            Power::Off => "off",
        }
    }
}

/// Complete observable device state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulbState {
    pub power: Power,
    /// Packed 0xRRGGBB, 0..=16777215.
    pub rgb: u32,
    /// Percent, 1..=100.
    pub bright: u8,
    /// Up to 64 bytes.
    pub name: String,
    /// Color temperature in Kelvin, 1700..=6500.
    pub ct: u16,
}

pub const RGB_MAX: u32 = 0xff_ff_ff;
pub const CT_MIN: u16 = 1700;
pub const CT_MAX: u16 = 6500;
pub const NAME_MAX_BYTES: usize = 64;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid bulb state: {0}")]
    InvalidState(String),
    #[error("unreadable profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("unparseable profile: {0}")]
    Parse(String),
}

impl BulbState {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.rgb > RGB_MAX {
            return Err(DeviceError::InvalidState(format!("rgb {} out of range", self.rgb)));
        }
        if !(1..=100).contains(&self.bright) {
            return Err(DeviceError::InvalidState(format!(
                "bright {} out of range",
                self.bright
            )));
        }
        if !(CT_MIN..=CT_MAX).contains(&self.ct) {
            return Err(DeviceError::InvalidState(format!("ct {} out of range", self.ct)));
        }
        if self.name.len() > NAME_MAX_BYTES {
            return Err(DeviceError::InvalidState(format!(
                "name is {} bytes, max {NAME_MAX_BYTES}",
                self.name.len()
            )));
        }
        Ok(())
    }
}

impl Default for BulbState {
    fn default() -> Self {
        BulbState {
            power: Power::On,
            rgb: 0xff0000,
            bright: 50,
            name: "bulb".into(),
            ct: 4000,
        }
    }
}

/// Sliding-window rate limit settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimitConfig {
    pub quota: u32,
    pub window_ms: u64,
}

/// Which methods a concrete device implements, what state it boots with, and
/// how hard it throttles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub supported: BTreeSet<String>,
    pub initial: BulbState,
    pub rate_limit: Option<RateLimitConfig>,
}

impl DeviceProfile {
    pub fn from_json(text: &str) -> Result<Self, DeviceError> {
        let profile: DeviceProfile =
            serde_json::from_str(text).map_err(|e| DeviceError::Parse(e.to_string()))?;
        profile.initial.validate()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DeviceError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The bundled color-bulb profile: 18 implemented methods, 60 commands
    /// per rolling minute.
    pub fn builtin() -> Self {
        Self::from_json(include_str!("../../data/bulb_default.json"))
            .expect("bundled profile must validate")
    }

    pub fn without_rate_limit(mut self) -> Self {
        self.rate_limit = None;
        self
    }

    pub fn with_initial(mut self, initial: BulbState) -> Self {
        self.initial = initial;
        self
    }
}

/// Apply one decoded command to a state. Pure: returns the next state and the
/// response to send. On any error response the returned state is bit-for-bit
/// the input state.
pub fn apply_command(
    state: &BulbState,
    cmd: &CommandMessage,
    profile: &DeviceProfile,
) -> (BulbState, ResultMessage) {
    let id = cmd.id;
    if !profile.supported.contains(&cmd.method) {
        return (
            state.clone(),
            ResultMessage::error(id, error_code::UNSUPPORTED, "method not supported"),
        );
    }
    if state.power == Power::Off && needs_power(&cmd.method) {
        return (
            state.clone(),
            ResultMessage::error(id, error_code::DEVICE_OFF, "device is off"),
        );
    }
    match transition(state, cmd) {
        Ok((next, values)) => {
            debug_assert!(next.validate().is_ok(), "transition left valid range");
            (next, ResultMessage::ok(id, values))
        }
        Err(msg) => (
            state.clone(),
            ResultMessage::error(id, error_code::INVALID_PARAMS, msg),
        ),
    }
}

/// Whether a method only makes sense with the light on. Queries, the power
/// commands themselves, and scene recall (which switches on as part of its
/// job) work from either power state; everything else is rejected while off,
/// matching the firmware's "on state only" rule for state-changing commands.
fn needs_power(method: &str) -> bool {
    !matches!(
        method,
        "get_prop" | "set_power" | "toggle" | "dev_toggle" | "set_scene"
    )
}

/// The per-method semantics. `Err` means invalid params; the caller turns it
/// into an error response and discards any state change.
fn transition(state: &BulbState, cmd: &CommandMessage) -> Result<(BulbState, Vec<String>), String> {
    let p = Params(&cmd.params);
    let ok = vec!["ok".to_string()];
    let mut next = state.clone();
    match cmd.method.as_str() {
        "get_prop" => {
            if cmd.params.is_empty() {
                return Err("get_prop needs at least one property".into());
            }
            let mut values = Vec::with_capacity(cmd.params.len());
            for param in &cmd.params {
                let name = param.as_str().ok_or("property names must be strings")?;
                values.push(match name {
                    "power" => state.power.as_str().to_string(),
                    "bright" => state.bright.to_string(),
                    "rgb" => state.rgb.to_string(),
                    "ct" => state.ct.to_string(),
                    "name" => state.name.clone(),
                    _ => String::new(),
                });
            }
            return Ok((next, values));
        }
        "set_ct_abx" => {
            p.arity(3)?;
            let ct = p.int(0, CT_MIN as i64, CT_MAX as i64)?;
            p.effect(1)?;
            p.duration(2)?;
            next.ct = ct as u16;
        }
        "set_rgb" => {
            p.arity(3)?;
            let rgb = p.int(0, 0, RGB_MAX as i64)?;
            p.effect(1)?;
            p.duration(2)?;
            // Value 0 is the firmware's "lights out": the bulb switches off
            // and keeps its stored color.
            if rgb == 0 {
                next.power = Power::Off;
            } else {
                next.rgb = rgb as u32;
            }
        }
        "set_hsv" => {
            p.arity(4)?;
            let h = p.int(0, 0, 359)?;
            let s = p.int(1, 0, 100)?;
            p.effect(2)?;
            p.duration(3)?;
            next.rgb = color::hsv_to_rgb(h as f64, s as f64, 100.0);
        }
        "set_bright" => {
            p.arity(3)?;
            let b = p.int(0, 1, 100)?;
            p.effect(1)?;
            p.duration(2)?;
            next.bright = b as u8;
        }
        "set_power" => {
            p.arity(3)?;
            let mode = p.str_of(0, &["on", "off"])?;
            p.effect(1)?;
            p.duration(2)?;
            next.power = if mode == "on" { Power::On } else { Power::Off };
        }
        "toggle" | "dev_toggle" => {
            p.arity(0)?;
            next.power = next.power.flipped();
        }
        "set_default" | "stop_cf" => {
            p.arity(0)?;
        }
        "start_cf" => {
            p.arity(3)?;
            p.int(0, 0, 10)?;
            p.int(1, 0, 2)?;
            let expr = p.any_str(2)?;
            if expr.len() > 64 {
                return Err("flow expression too long".into());
            }
        }
        "set_scene" => {
            p.arity(2)?;
            p.str_of(0, &["color"])?;
            let rgb = p.int(1, 0, RGB_MAX as i64)?;
            // Scenes recall a color and switch the bulb on in one go.
            next.power = Power::On;
            next.rgb = rgb as u32;
        }
        "cron_add" => {
            p.arity(2)?;
            p.int(0, 0, 0)?;
            p.int(1, 1, 60)?;
        }
        "set_adjust" => {
            p.arity(2)?;
            let action = p.str_of(0, &["increase", "decrease", "circle"])?;
            let prop = p.str_of(1, &["bright", "ct", "color"])?;
            match (action, prop) {
                ("increase", "bright") => next.bright = (next.bright + 10).min(100),
                ("decrease", "bright") => next.bright = next.bright.saturating_sub(10).max(1),
                ("circle", "bright") => {
                    next.bright = ((next.bright as u32 - 1 + 10) % 100 + 1) as u8
                }
                ("increase", "ct") => next.ct = (next.ct + 500).min(CT_MAX),
                ("decrease", "ct") => next.ct = next.ct.saturating_sub(500).max(CT_MIN),
                ("circle", "ct") => {
                    next.ct = CT_MIN + ((next.ct - CT_MIN + 500) % (CT_MAX - CT_MIN + 1))
                }
                ("circle", "color") => next.rgb = color::hue_rotate(next.rgb, 36.0),
                // Hue has no scalar direction; only circle makes sense.
                _ => return Err("color adjustment requires circle".into()),
            }
        }
        "set_name" => {
            p.arity(1)?;
            let name = p.any_str(0)?;
            if name.len() > NAME_MAX_BYTES {
                return Err("name too long".into());
            }
            next.name = name.to_string();
        }
        "adjust_bright" => {
            p.arity(2)?;
            let pct = p.int(0, -100, 100)?;
            p.duration(1)?;
            let target = next.bright as i64 + pct;
            // Dimming to (or past) zero is another way to switch off; the
            // stored brightness survives for the next power-on.
            if target <= 0 {
                next.power = Power::Off;
            } else {
                next.bright = target.min(100) as u8;
            }
        }
        "adjust_ct" => {
            p.arity(2)?;
            let pct = p.int(0, -100, 100)?;
            p.duration(1)?;
            let shifted = next.ct as i64 + pct * 48;
            next.ct = shifted.clamp(CT_MIN as i64, CT_MAX as i64) as u16;
        }
        "adjust_color" => {
            p.arity(2)?;
            let pct = p.int(0, -100, 100)?;
            p.duration(1)?;
            // Percentage maps onto the hue wheel: ±100% is a half turn.
            if pct != 0 {
                next.rgb = color::hue_rotate(next.rgb, pct as f64 * 1.8);
            }
        }
        _ => unreachable!("supported set only contains known methods"),
    }
    Ok((next, ok))
}

/// Positional parameter accessors; every failure names the position.
struct Params<'a>(&'a [ParamValue]);

impl Params<'_> {
    fn arity(&self, n: usize) -> Result<(), String> {
        if self.0.len() == n {
            Ok(())
        } else {
            Err(format!("expected {n} params, got {}", self.0.len()))
        }
    }

    fn int(&self, i: usize, min: i64, max: i64) -> Result<i64, String> {
        let v = self
            .0
            .get(i)
            .and_then(ParamValue::as_int)
            .ok_or(format!("param {i} must be an integer"))?;
        if (min..=max).contains(&v) {
            Ok(v)
        } else {
            Err(format!("param {i} out of range {min}..={max}"))
        }
    }

    fn any_str(&self, i: usize) -> Result<&str, String> {
        self.0
            .get(i)
            .and_then(ParamValue::as_str)
            .ok_or(format!("param {i} must be a string"))
    }

    fn str_of(&self, i: usize, allowed: &[&str]) -> Result<&str, String> {
        let s = self.any_str(i)?;
        if allowed.contains(&s) {
            Ok(s)
        } else {
            Err(format!("param {i} must be one of {allowed:?}"))
        }
    }

    fn effect(&self, i: usize) -> Result<(), String> {
        self.str_of(i, &["sudden", "smooth"]).map(|_| ())
    }

    fn duration(&self, i: usize) -> Result<(), String> {
        self.int(i, 0, 8000).map(|_| ())
    }
}
