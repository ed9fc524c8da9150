use serde::Serialize;

/// A push driver on a net.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Drive {
    Level(bool),
    Volts(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NetValue {
    DrivenHigh,
    DrivenLow,
    Analog(f64),
    Floating,
    Conflict,
}

impl NetValue {
    pub fn from_drive(d: Drive) -> NetValue {
        match d {
            Drive::Level(true) => NetValue::DrivenHigh,
            Drive::Level(false) => NetValue::DrivenLow,
            Drive::Volts(v) => NetValue::Analog(v),
        }
    }

    pub fn is_high(self) -> bool {
        self == NetValue::DrivenHigh
    }

    pub fn is_low(self) -> bool {
        self == NetValue::DrivenLow
    }

    /// The value as a push driver, when it has one.
    pub fn as_drive(self) -> Option<Drive> {
        match self {
            NetValue::DrivenHigh => Some(Drive::Level(true)),
            NetValue::DrivenLow => Some(Drive::Level(false)),
            NetValue::Analog(v) => Some(Drive::Volts(v)),
            NetValue::Floating | NetValue::Conflict => None,
        }
    }
}

/// No drivers: floating; drivers that all agree: their value; anything
/// else: conflict.
pub fn resolve_net(drivers: &[Drive]) -> NetValue {
    let Some(first) = drivers.first() else {
        return NetValue::Floating;
    };
    if drivers.iter().all(|d| d == first) {
        NetValue::from_drive(*first)
    } else {
        NetValue::Conflict
    }
}
