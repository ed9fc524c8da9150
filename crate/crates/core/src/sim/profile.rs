use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerLevel {
    High,
    Low,
}

/// Pin inventory and logic levels of a microcontroller board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardProfile {
    pub name: String,
    /// Index in this list is the firmware pin number.
    pub digital_pins: Vec<String>,
    pub analog_pins: Vec<String>,
    /// Firmware pin number of the first analog pin (`A0`).
    pub analog_base: i64,
    pub power_pins: BTreeMap<String, PowerLevel>,
    #[serde(default)]
    pub other_pins: Vec<String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    pub logic_high_volts: f64,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed profile: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid profile: {0}")]
    Invalid(String),
}

const ARDUINO_UNO: &str = include_str!("../../profiles/arduino-uno.json");

impl BoardProfile {
    pub fn arduino_uno() -> BoardProfile {
        BoardProfile::from_json(ARDUINO_UNO).expect("built-in profile is valid")
    }

    /// Looks up a built-in profile by name.
    pub fn builtin(name: &str) -> Option<BoardProfile> {
        match name {
            "arduino-uno" | "uno" => Some(BoardProfile::arduino_uno()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<BoardProfile, ProfileError> {
        let mut p: BoardProfile = serde_json::from_str(text)?;
        p.normalize();
        p.check()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<BoardProfile, ProfileError> {
        BoardProfile::from_json(&std::fs::read_to_string(path)?)
    }

    fn normalize(&mut self) {
        let lower = |v: &mut Vec<String>| v.iter_mut().for_each(|s| *s = s.to_lowercase());
        lower(&mut self.digital_pins);
        lower(&mut self.analog_pins);
        lower(&mut self.other_pins);
        self.power_pins = std::mem::take(&mut self.power_pins)
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v))
            .collect();
        self.aliases = std::mem::take(&mut self.aliases)
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
            .collect();
    }

    fn check(&self) -> Result<(), ProfileError> {
        let mut seen = BTreeSet::new();
        for p in self.all_pins() {
            if !seen.insert(p) {
                return Err(ProfileError::Invalid(format!("pin `{p}` declared twice")));
            }
        }
        for (alias, target) in &self.aliases {
            if seen.contains(alias.as_str()) {
                return Err(ProfileError::Invalid(format!("alias `{alias}` shadows a pin")));
            }
            if !seen.contains(target.as_str()) {
                return Err(ProfileError::Invalid(format!("alias `{alias}` targets unknown pin `{target}`")));
            }
        }
        if !(self.logic_high_volts > 0.0) {
            return Err(ProfileError::Invalid("logic_high_volts must be positive".into()));
        }
        if self.analog_base < self.digital_pins.len() as i64 {
            return Err(ProfileError::Invalid("analog_base overlaps digital pin numbers".into()));
        }
        Ok(())
    }

    /// Every pin name, in declaration order.
    pub fn all_pins(&self) -> impl Iterator<Item = &str> {
        self.digital_pins
            .iter()
            .chain(&self.analog_pins)
            .chain(self.power_pins.keys())
            .chain(&self.other_pins)
            .map(String::as_str)
    }

    /// Canonical pin name for a (case-insensitive) name or alias.
    pub fn canonical(&self, name: &str) -> Option<String> {
        let lower = name.to_lowercase();
        if self.all_pins().any(|p| p == lower) {
            return Some(lower);
        }
        self.aliases.get(&lower).cloned()
    }

    /// Board pin addressed by a firmware pin number.
    pub fn pin_for_number(&self, n: i64) -> Option<&str> {
        if n >= 0 && (n as usize) < self.digital_pins.len() {
            return Some(&self.digital_pins[n as usize]);
        }
        let a = n - self.analog_base;
        if a >= 0 && (a as usize) < self.analog_pins.len() {
            return Some(&self.analog_pins[a as usize]);
        }
        None
    }

    /// Analog input addressed by `analogRead(n)`: either the channel number
    /// (`0` = first analog pin) or the full pin number (`A0`).
    pub fn analog_pin_for_number(&self, n: i64) -> Option<&str> {
        if n >= 0 && (n as usize) < self.analog_pins.len() {
            return Some(&self.analog_pins[n as usize]);
        }
        let a = n - self.analog_base;
        if a >= 0 && (a as usize) < self.analog_pins.len() {
            return Some(&self.analog_pins[a as usize]);
        }
        None
    }
}
