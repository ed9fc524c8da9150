//! Catalog of the component types the engine understands.
//!
//! Type strings in circuit documents are free-form ("LED", "Push button",
//! "Piezo Buzzer"); [`ComponentClass::classify`] maps them onto the built-in
//! behavioral models. Anything unrecognized is [`ComponentClass::Unknown`].

use serde::{Deserialize, Serialize};

use crate::circuit::normalize_type;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentClass {
    Microcontroller,
    Breadboard,
    Led,
    RgbLed,
    BarGraphLed,
    Resistor,
    PushButton,
    Buzzer,
    Servo,
    Potentiometer,
    Photoresistor,
    Dht22,
    SevenSegment,
    Unknown,
}

impl ComponentClass {
    pub fn classify(type_name: &str) -> ComponentClass {
        let t = normalize_type(type_name);
        let words: Vec<&str> = t.split(' ').collect();
        let has = |w: &str| words.contains(&w);
        let compact: String = t.chars().filter(|c| c.is_ascii_alphanumeric()).collect();

        if compact.starts_with("breadboard") {
            ComponentClass::Breadboard
        } else if compact.starts_with("arduino") || compact == "uno" {
            ComponentClass::Microcontroller
        } else if compact.contains("rgb") && compact.contains("led") {
            ComponentClass::RgbLed
        } else if (compact.contains("bargraph") || has("bar")) && compact.contains("led")
            || compact == "bargraph"
        {
            ComponentClass::BarGraphLed
        } else if compact.contains("7segment") || compact.contains("sevensegment") {
            ComponentClass::SevenSegment
        } else if has("led") {
            ComponentClass::Led
        } else if has("resistor") {
            ComponentClass::Resistor
        } else if compact.contains("button") || has("pushbutton") {
            ComponentClass::PushButton
        } else if has("buzzer") || has("piezo") {
            ComponentClass::Buzzer
        } else if has("servo") {
            ComponentClass::Servo
        } else if has("potentiometer") {
            ComponentClass::Potentiometer
        } else if compact.contains("photoresistor") || has("ldr") {
            ComponentClass::Photoresistor
        } else if compact.starts_with("dht22") || compact == "dht" {
            ComponentClass::Dht22
        } else {
            ComponentClass::Unknown
        }
    }

    /// Pins the built-in model declares, lowercased. Microcontroller pins
    /// come from the board profile, so that class returns an empty list.
    pub fn pins(self) -> Vec<String> {
        let fixed: &[&str] = match self {
            ComponentClass::Led => &["anode", "cathode"],
            ComponentClass::RgbLed => &["r", "g", "b", "com"],
            ComponentClass::Resistor => &["pin1", "pin2"],
            ComponentClass::PushButton => &["pin1.l", "pin1.r", "pin2.l", "pin2.r"],
            ComponentClass::Buzzer => &["pin1", "pin2"],
            ComponentClass::Servo => &["pwm", "v+", "gnd"],
            ComponentClass::Potentiometer => &["vcc", "sig", "gnd"],
            ComponentClass::Photoresistor => &["vcc", "gnd", "do", "ao"],
            ComponentClass::Dht22 => &["vcc", "sda", "nc", "gnd"],
            ComponentClass::SevenSegment => &["a", "b", "c", "d", "e", "f", "g", "dp", "com"],
            ComponentClass::BarGraphLed => {
                return (1..=BAR_SEGMENTS)
                    .flat_map(|i| [format!("a{i}"), format!("c{i}")])
                    .collect()
            }
            ComponentClass::Microcontroller | ComponentClass::Breadboard | ComponentClass::Unknown => &[],
        };
        fixed.iter().map(|s| s.to_string()).collect()
    }

    pub fn has_model(self) -> bool {
        self != ComponentClass::Unknown
    }
}

pub const BAR_SEGMENTS: usize = 10;

/// Segment patterns (a..g) for digits 0-9 on a seven-segment display.
pub const SEVEN_SEGMENT_DIGITS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

pub fn decode_seven_segment(segments: [bool; 7]) -> Option<u8> {
    SEVEN_SEGMENT_DIGITS
        .iter()
        .position(|p| *p == segments)
        .map(|d| d as u8)
}
