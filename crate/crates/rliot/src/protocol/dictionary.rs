//! Message dictionary: the catalogue of methods the agent may try.
//!
//! The dictionary is data, not code — a JSON file listing every method name,
//! its positional parameter shapes, and whether the target device class is
//! expected to support it. The agent's action set is derived from it
//! mechanically, so pointing the system at a different device family is a
//! matter of swapping this one file.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ParamValue;

/// Shape of one positional parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamSpec {
    /// Integer drawn uniformly from `min..=max`.
    Int { min: i64, max: i64 },
    /// One of a fixed set of strings.
    Enum { values: Vec<String> },
    /// Free-form ASCII string up to `max_len` bytes.
    String { max_len: usize },
}

/// One protocol method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    /// Whether this device class is believed to implement the method. The
    /// agent still gets to try unsupported ones — finding out is part of the
    /// learning problem.
    pub expected_supported: bool,
}

/// One agent action: a method plus, optionally, a pinned first parameter.
///
/// `set_power` is split into two actions (`set_power_on`, `set_power_off`)
/// because the two directions have opposite consequences; leaving the power
/// argument to random sampling would blur them into one coin-flip action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub label: String,
    /// Index into [`MessageDictionary::methods`].
    pub method: usize,
    /// Replaces the first sampled parameter when present.
    pub pinned_first: Option<ParamValue>,
}

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("unreadable dictionary: {0}")]
    Io(#[from] std::io::Error),
    #[error("unparseable dictionary: {0}")]
    Parse(String),
    #[error("invalid method {name:?}: {reason}")]
    InvalidMethod { name: String, reason: String },
    #[error("duplicate method name {0:?}")]
    DuplicateMethod(String),
}

#[derive(Deserialize)]
struct DictionaryFile {
    methods: Vec<MethodSpec>,
}

/// A validated method catalogue plus the action set derived from it.
#[derive(Debug, Clone)]
pub struct MessageDictionary {
    methods: Vec<MethodSpec>,
    actions: Vec<Action>,
}

impl MessageDictionary {
    /// Parse and validate dictionary JSON. Empty (or whitespace-only) input
    /// yields an empty dictionary with zero actions.
    pub fn from_json(text: &str) -> Result<Self, DictionaryError> {
        if text.trim().is_empty() {
            return Self::from_methods(Vec::new());
        }
        let file: DictionaryFile =
            serde_json::from_str(text).map_err(|e| DictionaryError::Parse(e.to_string()))?;
        Self::from_methods(file.methods)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DictionaryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The bundled Yeelight-family dictionary (37 methods).
    pub fn builtin_yeelight() -> Self {
        Self::from_json(include_str!("../../data/yeelight.dict"))
            .expect("bundled dictionary must validate")
    }

    pub fn from_methods(methods: Vec<MethodSpec>) -> Result<Self, DictionaryError> {
        for m in &methods {
            validate_method(m)?;
        }
        let mut seen = std::collections::HashSet::new();
        for m in &methods {
            if !seen.insert(m.name.as_str()) {
                return Err(DictionaryError::DuplicateMethod(m.name.clone()));
            }
        }
        let actions = derive_actions(&methods);
        Ok(MessageDictionary { methods, actions })
    }

    pub fn methods(&self) -> &[MethodSpec] {
        &self.methods
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action_labels(&self) -> Vec<String> {
        self.actions.iter().map(|a| a.label.clone()).collect()
    }

    pub fn action_by_label(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.label == label)
    }

    pub fn method_of_action(&self, action: usize) -> &MethodSpec {
        &self.methods[self.actions[action].method]
    }

    /// Sample concrete parameters for an action, honouring its pinned first
    /// parameter if any.
    pub fn sample_action_params(&self, action: usize, rng: &mut impl Rng) -> Vec<ParamValue> {
        let act = &self.actions[action];
        let spec = &self.methods[act.method];
        match &act.pinned_first {
            None => sample_params(spec, rng),
            Some(pinned) => {
                let mut out = Vec::with_capacity(spec.params.len());
                out.push(pinned.clone());
                for p in spec.params.iter().skip(1) {
                    out.push(sample_one(p, rng));
                }
                out
            }
        }
    }
}

fn validate_method(m: &MethodSpec) -> Result<(), DictionaryError> {
    let fail = |reason: &str| {
        Err(DictionaryError::InvalidMethod {
            name: m.name.clone(),
            reason: reason.to_string(),
        })
    };
    if m.name.is_empty() {
        return fail("empty name");
    }
    if !m.name.bytes().all(|b| b == b'_' || b.is_ascii_lowercase()) {
        return fail("name must match [a-z_]+");
    }
    for (i, p) in m.params.iter().enumerate() {
        match p {
            ParamSpec::Int { min, max } => {
                if min > max {
                    return fail(&format!("param {i}: empty integer range"));
                }
            }
            ParamSpec::Enum { values } => {
                if values.is_empty() {
                    return fail(&format!("param {i}: empty enum"));
                }
                if values.iter().any(|v| v.is_empty()) {
                    return fail(&format!("param {i}: empty enum value"));
                }
            }
            ParamSpec::String { max_len } => {
                if *max_len == 0 {
                    return fail(&format!("param {i}: zero-length string spec"));
                }
            }
        }
    }
    Ok(())
}

fn derive_actions(methods: &[MethodSpec]) -> Vec<Action> {
    let mut actions = Vec::with_capacity(methods.len() + 1);
    for (i, m) in methods.iter().enumerate() {
        if m.name == "set_power" {
            for state in ["on", "off"] {
                actions.push(Action {
                    label: format!("set_power_{state}"),
                    method: i,
                    pinned_first: Some(ParamValue::Str(state.into())),
                });
            }
        } else {
            actions.push(Action {
                label: m.name.clone(),
                method: i,
                pinned_first: None,
            });
        }
    }
    actions
}

fn sample_one(spec: &ParamSpec, rng: &mut impl Rng) -> ParamValue {
    match spec {
        ParamSpec::Int { min, max } => ParamValue::Int(rng.gen_range(*min..=*max)),
        ParamSpec::Enum { values } => {
            ParamValue::Str(values[rng.gen_range(0..values.len())].clone())
        }
        ParamSpec::String { max_len } => {
            // Short lowercase strings; long names add nothing to the learning
            // problem and bloat the logs.
            let len = rng.gen_range(1..=(*max_len).min(12));
            let mut s = String::with_capacity(len);
            for _ in 0..len {
                let _ = write!(s, "{}", (b'a' + rng.gen_range(0..26u8)) as char);
            }
            ParamValue::Str(s)
        }
    }
}

/// Sample a full parameter vector for a method.
pub fn sample_params(spec: &MethodSpec, rng: &mut impl Rng) -> Vec<ParamValue> {
    spec.params.iter().map(|p| sample_one(p, rng)).collect()
}
