//! Circuit documents: components plus two-ended connections.
//!
//! The JSON form is a top-level object with a `"components"` array of
//! `{id, type, properties?}` objects and a `"connections"` array of
//! two-element endpoint-string arrays. Endpoint strings follow
//!
//! ```text
//! component_id "." pin_path
//! board_id "." column row          (column 1-60, row a-j)
//! board_id "." rail "." index      (rail tp|tn|bp|bn, index 1-50)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

pub const MAX_COLUMN: u8 = 60;
pub const MAX_RAIL_INDEX: u8 = 50;
pub const BREADBOARD_TYPE: &str = "Breadboard";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircuitKind {
    Logical,
    Physical,
}

impl fmt::Display for CircuitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CircuitKind::Logical => "logical",
            CircuitKind::Physical => "physical",
        })
    }
}

impl std::str::FromStr for CircuitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logical" | "l" => Ok(CircuitKind::Logical),
            "physical" | "p" => Ok(CircuitKind::Physical),
            other => Err(format!("unknown circuit kind \"{other}\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentDecl {
    pub id: String,
    pub type_name: String,
    pub properties: Option<BTreeMap<String, String>>,
}

impl ComponentDecl {
    pub fn new(id: impl Into<String>, type_name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            type_name: type_name.into(),
            properties: None,
        }
    }

    pub fn with_property(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.properties
            .get_or_insert_with(BTreeMap::new)
            .insert(key.into(), value.into());
        self
    }

    pub fn property(&self, key: &str) -> Option<&str> {
        self.properties.as_ref()?.get(key).map(String::as_str)
    }

    pub fn is_breadboard(&self) -> bool {
        is_breadboard_type(&self.type_name)
    }
}

pub fn is_breadboard_type(type_name: &str) -> bool {
    normalize_type(type_name).starts_with("breadboard")
}

/// Canonical spelling of a component type used for matching: lowercase,
/// with runs of whitespace, `_` and `-` collapsed to a single space.
pub fn normalize_type(type_name: &str) -> String {
    let mut out = String::with_capacity(type_name.len());
    for word in type_name
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rail {
    Tp,
    Tn,
    Bp,
    Bn,
}

impl Rail {
    pub const ALL: [Rail; 4] = [Rail::Tp, Rail::Tn, Rail::Bp, Rail::Bn];

    pub fn as_str(self) -> &'static str {
        match self {
            Rail::Tp => "tp",
            Rail::Tn => "tn",
            Rail::Bp => "bp",
            Rail::Bn => "bn",
        }
    }

    pub fn parse(s: &str) -> Option<Rail> {
        match s.to_ascii_lowercase().as_str() {
            "tp" => Some(Rail::Tp),
            "tn" => Some(Rail::Tn),
            "bp" => Some(Rail::Bp),
            "bn" => Some(Rail::Bn),
            _ => None,
        }
    }
}

/// One end of a connection.
///
/// Pin names are stored lowercased: pin names compare case-insensitively
/// while component ids are case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Pin { component: String, pin: String },
    Hole { board: String, column: u8, row: char },
    RailPos { board: String, rail: Rail, index: u8 },
}

impl Endpoint {
    pub fn pin(component: impl Into<String>, pin: impl AsRef<str>) -> Self {
        Endpoint::Pin {
            component: component.into(),
            pin: pin.as_ref().to_lowercase(),
        }
    }

    pub fn hole(board: impl Into<String>, column: u8, row: char) -> Self {
        Endpoint::Hole {
            board: board.into(),
            column,
            row: row.to_ascii_lowercase(),
        }
    }

    pub fn rail(board: impl Into<String>, rail: Rail, index: u8) -> Self {
        Endpoint::RailPos {
            board: board.into(),
            rail,
            index,
        }
    }

    /// Id of the component (or breadboard) this endpoint belongs to.
    pub fn component_id(&self) -> &str {
        match self {
            Endpoint::Pin { component, .. } => component,
            Endpoint::Hole { board, .. } | Endpoint::RailPos { board, .. } => board,
        }
    }

    pub fn is_component_pin(&self) -> bool {
        matches!(self, Endpoint::Pin { .. })
    }

    pub fn is_breadboard_position(&self) -> bool {
        !self.is_component_pin()
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Pin { component, pin } => write!(f, "{component}.{pin}"),
            Endpoint::Hole { board, column, row } => write!(f, "{board}.{column}{row}"),
            Endpoint::RailPos { board, rail, index } => {
                write!(f, "{board}.{}.{index}", rail.as_str())
            }
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// An unordered pair of endpoints. The stored order is the document order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Connection {
    pub a: Endpoint,
    pub b: Endpoint,
}

impl Connection {
    pub fn new(a: Endpoint, b: Endpoint) -> Self {
        Self { a, b }
    }

    /// Order-independent identity of the pair.
    pub fn key(&self) -> (&Endpoint, &Endpoint) {
        if self.a <= self.b {
            (&self.a, &self.b)
        } else {
            (&self.b, &self.a)
        }
    }

    pub fn endpoints(&self) -> [&Endpoint; 2] {
        [&self.a, &self.b]
    }
}

impl Serialize for Connection {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(2))?;
        seq.serialize_element(&self.a)?;
        seq.serialize_element(&self.b)?;
        seq.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitDoc {
    pub kind: CircuitKind,
    pub components: Vec<ComponentDecl>,
    pub connections: Vec<Connection>,
}

impl CircuitDoc {
    pub fn empty(kind: CircuitKind) -> Self {
        Self {
            kind,
            components: Vec::new(),
            connections: Vec::new(),
        }
    }

    pub fn component(&self, id: &str) -> Option<&ComponentDecl> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn breadboards(&self) -> impl Iterator<Item = &ComponentDecl> {
        self.components.iter().filter(|c| c.is_breadboard())
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &Endpoint> {
        self.connections.iter().flat_map(|c| [&c.a, &c.b])
    }

    /// Checks the document-level invariants that do not depend on parsing.
    pub fn check_invariants(&self) -> Result<(), CircuitError> {
        let mut seen = HashMap::new();
        for (index, c) in self.components.iter().enumerate() {
            check_component_id(&c.id).map_err(|message| CircuitError::Component { index, message })?;
            if c.type_name.trim().is_empty() {
                return Err(CircuitError::Component {
                    index,
                    message: "component type is empty".into(),
                });
            }
            if seen.insert(c.id.as_str(), index).is_some() {
                return Err(CircuitError::DuplicateId(c.id.clone()));
            }
        }
        match self.kind {
            CircuitKind::Logical => {
                if let Some(bb) = self.breadboards().next() {
                    return Err(CircuitError::KindMismatch(format!(
                        "logical circuit declares breadboard \"{}\"",
                        bb.id
                    )));
                }
                if let Some(ep) = self.endpoints().find(|e| e.is_breadboard_position()) {
                    return Err(CircuitError::KindMismatch(format!(
                        "logical circuit uses breadboard position \"{ep}\""
                    )));
                }
            }
            CircuitKind::Physical => {
                if !self.connections.is_empty() && self.breadboards().next().is_none() {
                    return Err(CircuitError::KindMismatch(
                        "physical circuit has connections but no breadboard".into(),
                    ));
                }
            }
        }
        for (index, conn) in self.connections.iter().enumerate() {
            for (side, ep) in conn.endpoints().into_iter().enumerate() {
                let declared = self.component(ep.component_id());
                let ok = match (ep, declared) {
                    (_, None) => false,
                    (Endpoint::Pin { .. }, Some(_)) => true,
                    (_, Some(c)) => c.is_breadboard(),
                };
                if !ok {
                    return Err(CircuitError::Endpoint {
                        index,
                        side,
                        source: EndpointError {
                            text: ep.to_string(),
                            offset: 0,
                            kind: EndpointErrorKind::UnknownComponent(ep.component_id().to_string()),
                        },
                    });
                }
            }
        }
        Ok(())
    }
}

impl Serialize for CircuitDoc {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        struct Components<'a>(&'a [ComponentDecl]);
        struct Component<'a>(&'a ComponentDecl);

        impl Serialize for Components<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_seq(self.0.iter().map(Component))
            }
        }

        impl Serialize for Component<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                let c = self.0;
                let len = if c.properties.is_some() { 3 } else { 2 };
                let mut map = serializer.serialize_map(Some(len))?;
                map.serialize_entry("id", &c.id)?;
                map.serialize_entry("type", &c.type_name)?;
                if let Some(props) = &c.properties {
                    map.serialize_entry("properties", props)?;
                }
                map.end()
            }
        }

        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("components", &Components(&self.components))?;
        map.serialize_entry("connections", &self.connections)?;
        map.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CircuitStats {
    pub num_components: usize,
    pub num_connections: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndpointErrorKind {
    #[error("expected \"component.pin\"")]
    MissingDot,
    #[error("unknown component \"{0}\"")]
    UnknownComponent(String),
    #[error("empty pin name")]
    EmptyPin,
    #[error("column {0} outside 1-60")]
    ColumnOutOfRange(u32),
    #[error("row '{0}' outside a-j")]
    RowOutOfRange(char),
    #[error("rail index {0} outside 1-50")]
    RailIndexOutOfRange(u32),
    #[error("malformed breadboard position")]
    MalformedPosition,
}

/// Endpoint parse failure; `offset` is the byte offset into `text`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} in \"{text}\" at offset {offset}")]
pub struct EndpointError {
    pub text: String,
    pub offset: usize,
    pub kind: EndpointErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing or invalid \"{0}\" array")]
    MissingSection(&'static str),
    #[error("component {index}: {message}")]
    Component { index: usize, message: String },
    #[error("duplicate component id \"{0}\"")]
    DuplicateId(String),
    #[error("connection {index}: expected exactly 2 endpoints, found {found}")]
    Arity { index: usize, found: usize },
    #[error("connection {index}, endpoint {side}: {source}")]
    Endpoint {
        index: usize,
        side: usize,
        source: EndpointError,
    },
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
}

/// Declared component ids, used to resolve endpoint strings.
pub struct EndpointContext<'a> {
    boards: HashMap<&'a str, bool>,
    sole_breadboard: Option<&'a str>,
}

impl<'a> EndpointContext<'a> {
    pub fn new(components: &'a [ComponentDecl]) -> Self {
        let boards: HashMap<&str, bool> = components
            .iter()
            .map(|c| (c.id.as_str(), c.is_breadboard()))
            .collect();
        let mut breadboards = components.iter().filter(|c| c.is_breadboard());
        let sole_breadboard = match (breadboards.next(), breadboards.next()) {
            (Some(only), None) => Some(only.id.as_str()),
            _ => None,
        };
        Self {
            boards,
            sole_breadboard,
        }
    }

    /// Returns the resolved id and whether it is a breadboard.
    fn resolve(&self, id: &str) -> Option<(&'a str, bool)> {
        if let Some((&key, &is_bb)) = self.boards.get_key_value(id) {
            return Some((key, is_bb));
        }
        // A bare "breadboard" aliases the only breadboard in the circuit.
        match (id, self.sole_breadboard) {
            ("breadboard", Some(only)) => Some((only, true)),
            _ => None,
        }
    }
}

pub fn parse_endpoint(text: &str, ctx: &EndpointContext<'_>) -> Result<Endpoint, EndpointError> {
    let err = |offset: usize, kind| EndpointError {
        text: text.to_string(),
        offset,
        kind,
    };
    let Some(dot) = text.find('.') else {
        return Err(err(0, EndpointErrorKind::MissingDot));
    };
    let (id, rest) = (&text[..dot], &text[dot + 1..]);
    let rest_at = dot + 1;
    let Some((resolved, is_board)) = ctx.resolve(id) else {
        return Err(err(0, EndpointErrorKind::UnknownComponent(id.to_string())));
    };
    if !is_board {
        if rest.is_empty() {
            return Err(err(rest_at, EndpointErrorKind::EmptyPin));
        }
        return Ok(Endpoint::pin(resolved, rest));
    }

    if let Some((rail, index)) = rest.split_once('.') {
        let rail = Rail::parse(rail).ok_or_else(|| err(rest_at, EndpointErrorKind::MalformedPosition))?;
        let index_at = rest_at + 3;
        if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(index_at, EndpointErrorKind::MalformedPosition));
        }
        let n: u32 = index.parse().unwrap_or(u32::MAX);
        if !(1..=MAX_RAIL_INDEX as u32).contains(&n) {
            return Err(err(index_at, EndpointErrorKind::RailIndexOutOfRange(n)));
        }
        return Ok(Endpoint::rail(resolved, rail, n as u8));
    }

    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    let row_part = &rest[digits..];
    let mut row_chars = row_part.chars();
    let (Some(row), None) = (row_chars.next(), row_chars.next()) else {
        return Err(err(rest_at, EndpointErrorKind::MalformedPosition));
    };
    if digits == 0 || !row.is_ascii_alphabetic() {
        return Err(err(rest_at, EndpointErrorKind::MalformedPosition));
    }
    let column: u32 = rest[..digits].parse().unwrap_or(u32::MAX);
    if !(1..=MAX_COLUMN as u32).contains(&column) {
        return Err(err(rest_at, EndpointErrorKind::ColumnOutOfRange(column)));
    }
    let row = row.to_ascii_lowercase();
    if !('a'..='j').contains(&row) {
        return Err(err(rest_at + digits, EndpointErrorKind::RowOutOfRange(row)));
    }
    Ok(Endpoint::hole(resolved, column as u8, row))
}

fn check_component_id(id: &str) -> Result<(), String> {
    let letters = id
        .bytes()
        .take_while(|b| b.is_ascii_lowercase() || *b == b'_')
        .count();
    let digits = &id.as_bytes()[letters..];
    if letters == 0 || digits.is_empty() || !digits.iter().all(u8::is_ascii_digit) {
        return Err(format!(
            "id \"{id}\" must be a lowercase name followed by a number (e.g. \"led1\")"
        ));
    }
    Ok(())
}

fn property_value(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn parse_component(index: usize, v: &Value) -> Result<ComponentDecl, CircuitError> {
    let fail = |message: String| CircuitError::Component { index, message };
    let obj = v
        .as_object()
        .ok_or_else(|| fail("expected an object".into()))?;
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| fail("missing string \"id\"".into()))?;
    let type_name = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| fail("missing string \"type\"".into()))?;
    let properties = match obj.get("properties") {
        None | Some(Value::Null) => None,
        Some(Value::Object(props)) => {
            let mut out = BTreeMap::new();
            for (k, v) in props {
                let s = property_value(v)
                    .ok_or_else(|| fail(format!("property \"{k}\" must be a scalar")))?;
                out.insert(k.clone(), s);
            }
            Some(out)
        }
        Some(_) => return Err(fail("\"properties\" must be an object".into())),
    };
    Ok(ComponentDecl {
        id: id.to_string(),
        type_name: type_name.to_string(),
        properties,
    })
}

pub fn parse_circuit(text: &str, kind: CircuitKind) -> Result<CircuitDoc, CircuitError> {
    let root: Value = serde_json::from_str(text).map_err(|e| CircuitError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let components = root
        .get("components")
        .and_then(Value::as_array)
        .ok_or(CircuitError::MissingSection("components"))?;
    let connections = root
        .get("connections")
        .and_then(Value::as_array)
        .ok_or(CircuitError::MissingSection("connections"))?;

    let components = components
        .iter()
        .enumerate()
        .map(|(i, v)| parse_component(i, v))
        .collect::<Result<Vec<_>, _>>()?;

    let mut doc = CircuitDoc {
        kind,
        components,
        connections: Vec::with_capacity(connections.len()),
    };
    // Component-level invariants first so endpoint errors name real problems.
    doc.check_invariants()?;

    let ctx = EndpointContext::new(&doc.components);
    for (index, v) in connections.iter().enumerate() {
        let pair = v.as_array().ok_or(CircuitError::Arity { index, found: 1 })?;
        if pair.len() != 2 {
            return Err(CircuitError::Arity {
                index,
                found: pair.len(),
            });
        }
        let mut ends = Vec::with_capacity(2);
        for (side, e) in pair.iter().enumerate() {
            let s = e.as_str().ok_or_else(|| CircuitError::Endpoint {
                index,
                side,
                source: EndpointError {
                    text: e.to_string(),
                    offset: 0,
                    kind: EndpointErrorKind::MissingDot,
                },
            })?;
            let ep = parse_endpoint(s, &ctx).map_err(|source| CircuitError::Endpoint {
                index,
                side,
                source,
            })?;
            ends.push(ep);
        }
        let b = ends.pop().expect("two endpoints");
        let a = ends.pop().expect("two endpoints");
        doc.connections.push(Connection::new(a, b));
    }
    doc.check_invariants()?;
    Ok(doc)
}

/// Compact JSON with deterministic key order and input element order.
pub fn serialize_circuit(doc: &CircuitDoc) -> String {
    serde_json::to_string(doc).expect("circuit serialization is infallible")
}

pub fn serialize_circuit_pretty(doc: &CircuitDoc) -> String {
    serde_json::to_string_pretty(doc).expect("circuit serialization is infallible")
}

pub fn circuit_stats(doc: &CircuitDoc) -> CircuitStats {
    CircuitStats {
        num_components: doc.components.len(),
        num_connections: doc.connections.len(),
    }
}
