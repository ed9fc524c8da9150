//! Behavioral models: which interned points make up each component.

use crate::components::{decode_seven_segment, ComponentClass, BAR_SEGMENTS};

pub(crate) const SEGMENT_NAMES: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "dp"];

#[derive(Debug, Clone)]
pub(crate) enum Model {
    Led { anode: usize, cathode: usize },
    /// Common-cathode RGB LED.
    Rgb { channels: [usize; 3], com: usize },
    Bar { anodes: Vec<usize>, cathodes: Vec<usize> },
    /// Common-cathode display, segments a..g then dp.
    Segment { segments: [usize; 8], com: usize },
    /// `side1` is on the pin1 pair, `side2` on the pin2 pair.
    Button { side1: usize, side2: usize },
    Buzzer { a: usize, b: usize },
    Servo { pwm: usize, vplus: usize, gnd: usize },
    Pot { vcc: usize, sig: usize, gnd: usize },
    Photo { vcc: usize, gnd: usize, ao: usize, dout: usize },
    Dht { vcc: usize, sda: usize, gnd: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct Part {
    pub id: String,
    pub model: Model,
}

impl Model {
    /// Model for a component type, interning its pins through `point`.
    /// Resistors, breadboards, boards and unknown types have none.
    pub fn build(type_name: &str, mut point: impl FnMut(&str) -> usize) -> Option<Model> {
        let m = match ComponentClass::classify(type_name) {
            ComponentClass::Led => Model::Led {
                anode: point("anode"),
                cathode: point("cathode"),
            },
            ComponentClass::RgbLed => Model::Rgb {
                channels: [point("r"), point("g"), point("b")],
                com: point("com"),
            },
            ComponentClass::BarGraphLed => {
                let anodes = (1..=BAR_SEGMENTS).map(|i| point(&format!("a{i}"))).collect();
                let cathodes = (1..=BAR_SEGMENTS).map(|i| point(&format!("c{i}"))).collect();
                Model::Bar { anodes, cathodes }
            }
            ComponentClass::SevenSegment => Model::Segment {
                segments: SEGMENT_NAMES.map(&mut point),
                com: point("com"),
            },
            ComponentClass::PushButton => Model::Button {
                side1: point("pin1.l"),
                side2: point("pin2.l"),
            },
            ComponentClass::Buzzer => Model::Buzzer {
                a: point("pin1"),
                b: point("pin2"),
            },
            ComponentClass::Servo => Model::Servo {
                pwm: point("pwm"),
                vplus: point("v+"),
                gnd: point("gnd"),
            },
            ComponentClass::Potentiometer => Model::Pot {
                vcc: point("vcc"),
                sig: point("sig"),
                gnd: point("gnd"),
            },
            ComponentClass::Photoresistor => Model::Photo {
                vcc: point("vcc"),
                gnd: point("gnd"),
                ao: point("ao"),
                dout: point("do"),
            },
            ComponentClass::Dht22 => Model::Dht {
                vcc: point("vcc"),
                sda: point("sda"),
                gnd: point("gnd"),
            },
            ComponentClass::Resistor
            | ComponentClass::Microcontroller
            | ComponentClass::Breadboard
            | ComponentClass::Unknown => return None,
        };
        Some(m)
    }
}

/// Digit shown by a lit-segment pattern such as `"bc"`; the decimal point
/// is ignored.
pub(crate) fn pattern_digit(pattern: &str) -> Option<u8> {
    let segs = pattern.replace("dp", "");
    let mut lit = [false; 7];
    for (i, name) in SEGMENT_NAMES[..7].iter().enumerate() {
        lit[i] = segs.contains(name);
    }
    decode_seven_segment(lit)
}
