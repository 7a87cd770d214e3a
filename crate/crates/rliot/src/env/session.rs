//! TCP-backed episode driver: one socket, one goal, one episode at a time.
//!
//! [`DeviceSession`] owns the socket and the command-id counter and paces
//! every outgoing wire command. [`EnvSession`] layers the goal machine on
//! top: each step sends the chosen action command, then a `get_prop` query
//! for feedback, condenses the observed transition and scores it. Device
//! errors are part of the learning signal (they cost more than a normal
//! step); transport problems are not — they get one silent retry and then
//! abort the episode.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use rand::Rng;
use thiserror::Error;

use crate::bulb::server::ServerHandle;
use crate::bulb::{BulbState, DeviceError, Power};
use crate::protocol::{
    decode_response, encode_command, error_code, CommandMessage, MessageDictionary, ParamValue,
    ResultMessage,
};

use super::machine::{AbstractState, EpisodeHistory, GoalMachine, StepClass, Terminal, TerminalKind};
use super::{GoalError, GoalSpec};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("state query failed: {0}")]
    Feedback(String),
    #[error("device reset failed: {0}")]
    ResetFailed(String),
    #[error("step on a finished episode")]
    EpisodeOver,
    #[error("unknown action index {0}")]
    UnknownAction(usize),
    #[error(transparent)]
    Goal(#[from] GoalError),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

const READ_TIMEOUT: Duration = Duration::from_secs(5);

/// One paced JSON/TCP connection to a device.
pub struct DeviceSession {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    next_id: u64,
    pacing: Duration,
    last_send: Option<Instant>,
    wire_commands: u64,
}

impl DeviceSession {
    /// Connect with the given minimum delay between wire commands. Pacing
    /// exists to stay under device rate limits; pass zero when talking to an
    /// unthrottled simulator.
    pub fn connect(addr: SocketAddr, pacing: Duration) -> Result<Self, SessionError> {
        let stream = TcpStream::connect(addr).map_err(transport)?;
        stream.set_nodelay(true).map_err(transport)?;
        stream
            .set_read_timeout(Some(READ_TIMEOUT))
            .map_err(transport)?;
        let reader = BufReader::new(stream.try_clone().map_err(transport)?);
        Ok(DeviceSession {
            writer: stream,
            reader,
            next_id: 1,
            pacing,
            last_send: None,
            wire_commands: 0,
        })
    }

    /// Total wire commands sent, feedback queries included.
    pub fn wire_commands(&self) -> u64 {
        self.wire_commands
    }

    /// Send one command and read its response. Transport trouble is an `Err`;
    /// an unintelligible response becomes a synthetic error result, because
    /// to the caller it means the same thing as a device-reported failure.
    pub fn call(
        &mut self,
        method: &str,
        params: Vec<ParamValue>,
    ) -> Result<ResultMessage, SessionError> {
        if let (Some(last), false) = (self.last_send, self.pacing.is_zero()) {
            let elapsed = last.elapsed();
            if elapsed < self.pacing {
                std::thread::sleep(self.pacing - elapsed);
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        let cmd = CommandMessage::new(id, method, params);
        let bytes = encode_command(&cmd)
            .map_err(|e| SessionError::Transport(format!("unencodable command: {e}")))?;
        self.last_send = Some(Instant::now());
        self.wire_commands += 1;
        self.writer.write_all(&bytes).map_err(transport)?;
        self.writer.flush().map_err(transport)?;

        let mut line = Vec::with_capacity(128);
        loop {
            match self.reader.read_until(b'\n', &mut line) {
                Ok(0) => return Err(SessionError::Transport("connection closed".into())),
                Ok(_) if line.last() == Some(&b'\n') => break,
                Ok(_) => continue,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(transport(e)),
            }
        }
        match decode_response(&line) {
            Ok(res) if res.id == id => Ok(res),
            Ok(res) => Ok(ResultMessage::error(
                id,
                error_code::CLIENT_DECODE,
                format!("response id {} does not match command id {id}", res.id),
            )),
            Err(e) => Ok(ResultMessage::error(
                id,
                error_code::CLIENT_DECODE,
                format!("undecodable response: {e}"),
            )),
        }
    }

    /// [`Self::call`] with one retry on transport failure. The retry re-sends
    /// the command; against hardware that applied the first copy and lost the
    /// response this can double-apply, but a link that flaky is about to
    /// abort the episode anyway.
    pub fn call_with_retry(
        &mut self,
        method: &str,
        params: Vec<ParamValue>,
    ) -> Result<ResultMessage, SessionError> {
        match self.call(method, params.clone()) {
            Err(SessionError::Transport(_)) => self.call(method, params),
            other => other,
        }
    }
}

fn transport(e: std::io::Error) -> SessionError {
    SessionError::Transport(e.to_string())
}

/// How episodes put the device back into the goal's initial state.
pub enum ResetStrategy {
    /// Out-of-band, through the in-process simulator's handle. Instant and
    /// exact; the normal choice for training runs.
    Handle(ServerHandle),
    /// Over the wire, with ordinary commands — works against anything that
    /// speaks the protocol, including hardware.
    Commands,
}

/// What one environment step produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: AbstractState,
    pub reward: i64,
    pub command_failed: bool,
    pub raw_response: ResultMessage,
}

/// The goal-shaped environment over a device session.
pub struct EnvSession {
    device: DeviceSession,
    dict: MessageDictionary,
    machine: GoalMachine,
    reset: ResetStrategy,
    episode_initial: BulbState,
    current_bulb: BulbState,
    history: EpisodeHistory,
    current: AbstractState,
    t: u32,
}

impl EnvSession {
    pub fn new(
        device: DeviceSession,
        dict: MessageDictionary,
        goal: &GoalSpec,
        reset: ResetStrategy,
    ) -> Result<Self, SessionError> {
        let machine = GoalMachine::new(goal)?;
        let initial = goal.initial.clone();
        let current = machine.initial_abstract();
        Ok(EnvSession {
            device,
            dict,
            machine,
            reset,
            episode_initial: initial.clone(),
            current_bulb: initial,
            history: EpisodeHistory::new(),
            current,
            t: 0,
        })
    }

    pub fn machine(&self) -> &GoalMachine {
        &self.machine
    }

    pub fn dict(&self) -> &MessageDictionary {
        &self.dict
    }

    pub fn state(&self) -> &AbstractState {
        &self.current
    }

    pub fn label(&self) -> String {
        self.machine.label(&self.current)
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn terminal_kind(&self) -> TerminalKind {
        self.machine.is_terminal(&self.current, self.t)
    }

    pub fn wire_commands(&self) -> u64 {
        self.device.wire_commands()
    }

    /// Drive the device back to the goal's initial state and begin a fresh
    /// episode. Verifies the result with a state query in both reset modes.
    pub fn reset(&mut self) -> Result<&AbstractState, SessionError> {
        let target = self.machine.goal().initial.clone();
        match &self.reset {
            ResetStrategy::Handle(handle) => {
                handle.reset(target.clone())?;
            }
            ResetStrategy::Commands => {
                self.reset_via_commands(&target)?;
            }
        }
        let observed = self.fetch_state()?;
        if observed != target {
            return Err(SessionError::ResetFailed(format!(
                "device reports {observed:?} instead of {target:?}"
            )));
        }
        self.episode_initial = target.clone();
        self.current_bulb = target;
        self.history = EpisodeHistory::new();
        self.current = self.machine.initial_abstract();
        self.t = 0;
        Ok(&self.current)
    }

    fn reset_via_commands(&mut self, target: &BulbState) -> Result<(), SessionError> {
        if target.rgb == 0 {
            // set_rgb 0 means "switch off", so color 0 cannot be set over the
            // wire; such a goal needs the handle strategy.
            return Err(SessionError::ResetFailed(
                "initial color 0 is not settable by command".into(),
            ));
        }
        let eff = || ParamValue::Str("sudden".into());
        let zero = || ParamValue::Int(0);
        let sequence: Vec<(&str, Vec<ParamValue>)> = vec![
            // Power on first so the state is fully settable, regardless of
            // where the previous episode left the bulb.
            ("set_power", vec![ParamValue::Str("on".into()), eff(), zero()]),
            ("set_rgb", vec![ParamValue::Int(target.rgb as i64), eff(), zero()]),
            ("set_bright", vec![ParamValue::Int(target.bright as i64), eff(), zero()]),
            ("set_name", vec![ParamValue::Str(target.name.clone())]),
            ("set_ct_abx", vec![ParamValue::Int(target.ct as i64), eff(), zero()]),
        ];
        for (method, params) in sequence {
            let res = self.device.call_with_retry(method, params)?;
            if res.is_error() {
                return Err(SessionError::ResetFailed(format!("{method} rejected during reset")));
            }
        }
        if target.power == Power::Off {
            let res = self.device.call_with_retry(
                "set_power",
                vec![ParamValue::Str("off".into()), eff(), zero()],
            )?;
            if res.is_error() {
                return Err(SessionError::ResetFailed("set_power off rejected during reset".into()));
            }
        }
        Ok(())
    }

    fn fetch_state(&mut self) -> Result<BulbState, SessionError> {
        let props = ["power", "rgb", "bright", "name", "ct"];
        let params = props
            .iter()
            .map(|p| ParamValue::Str((*p).to_string()))
            .collect();
        let res = self.device.call_with_retry("get_prop", params)?;
        let values = res
            .values()
            .ok_or_else(|| SessionError::Feedback("device rejected the state query".into()))?;
        if values.len() != props.len() {
            return Err(SessionError::Feedback(format!(
                "expected {} values, got {}",
                props.len(),
                values.len()
            )));
        }
        let bad = |what: &str| SessionError::Feedback(format!("unparseable {what} value"));
        let power = match values[0].as_str() {
            "on" => Power::On,
            "off" => Power::Off,
            _ => return Err(bad("power")),
        };
        let state = BulbState {
            power,
            rgb: values[1].parse().map_err(|_| bad("rgb"))?,
            bright: values[2].parse().map_err(|_| bad("bright"))?,
            name: values[3].clone(),
            ct: values[4].parse().map_err(|_| bad("ct"))?,
        };
        state
            .validate()
            .map_err(|e| SessionError::Feedback(e.to_string()))?;
        Ok(state)
    }

    /// Take the action with the given index, sampling its parameters.
    pub fn step(
        &mut self,
        action: usize,
        rng: &mut impl Rng,
    ) -> Result<StepOutcome, SessionError> {
        if action >= self.dict.actions().len() {
            return Err(SessionError::UnknownAction(action));
        }
        let method = self.dict.method_of_action(action).name.clone();
        let params = self.dict.sample_action_params(action, rng);
        self.step_with_command(&method, params)
    }

    /// Take a fully specified command as the step's action. Used by scripted
    /// trajectories and anything else that needs exact parameters.
    pub fn step_with_command(
        &mut self,
        method: &str,
        params: Vec<ParamValue>,
    ) -> Result<StepOutcome, SessionError> {
        if self.current.terminal != Terminal::None || self.t >= self.machine.goal().t_max {
            return Err(SessionError::EpisodeOver);
        }
        let response = self.device.call_with_retry(method, params)?;
        let command_failed = response.is_error();
        let after = self.fetch_state()?;
        let before = std::mem::replace(&mut self.current_bulb, after.clone());
        debug_assert!(
            !(command_failed && before != after),
            "device mutated state while reporting an error"
        );
        let next = self
            .machine
            .observe(&self.episode_initial, &before, &after, &mut self.history);
        let class = self.machine.classify(&next, command_failed);
        let reward = self.machine.reward(class);
        self.current = next.clone();
        self.t += 1;
        Ok(StepOutcome {
            next,
            reward,
            command_failed,
            raw_response: response,
        })
    }

    /// Step classification for external bookkeeping (mirrors the reward).
    pub fn classify(&self, outcome: &StepOutcome) -> StepClass {
        self.machine.classify(&outcome.next, outcome.command_failed)
    }
}
