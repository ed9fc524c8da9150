//! Electrical nets induced by wiring, breadboard internals and the static
//! bridges inside components.
//!
//! Breadboard rules: within one column, holes a-e form one strip and f-j
//! another; the central gap separates them; columns never connect to each
//! other; each of the four rails (tp, tn, bp, bn) is a single strip along its
//! whole length and the rails are mutually separate unless wired.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{normalize_type, CircuitDoc, CircuitKind, ComponentDecl, Connection, Endpoint, Rail};
use crate::components::ComponentClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum GroupKey {
    Segment { column: u8, half: Half },
    Rail(Rail),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElectricalPoint {
    Pin { component: String, pin: String },
    Board { board: String, group: GroupKey },
}

impl ElectricalPoint {
    pub fn pin(component: impl Into<String>, pin: impl AsRef<str>) -> Self {
        ElectricalPoint::Pin {
            component: component.into(),
            pin: pin.as_ref().to_lowercase(),
        }
    }

    pub fn component_pin(&self) -> Option<(&str, &str)> {
        match self {
            ElectricalPoint::Pin { component, pin } => Some((component, pin)),
            ElectricalPoint::Board { .. } => None,
        }
    }
}

impl fmt::Display for ElectricalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElectricalPoint::Pin { component, pin } => write!(f, "{component}.{pin}"),
            ElectricalPoint::Board { board, group } => match group {
                GroupKey::Segment { column, half } => {
                    let rows = if *half == Half::Top { "a-e" } else { "f-j" };
                    write!(f, "{board}.{column}[{rows}]")
                }
                GroupKey::Rail(rail) => write!(f, "{board}.{}", rail.as_str()),
            },
        }
    }
}

/// Breadboard strip a hole or rail position belongs to. Component pins have
/// no group.
pub fn hole_group(endpoint: &Endpoint) -> Option<GroupKey> {
    match endpoint {
        Endpoint::Pin { .. } => None,
        Endpoint::Hole { column, row, .. } => Some(GroupKey::Segment {
            column: *column,
            half: if *row <= 'e' { Half::Top } else { Half::Bottom },
        }),
        Endpoint::RailPos { rail, .. } => Some(GroupKey::Rail(*rail)),
    }
}

pub fn point_of(endpoint: &Endpoint) -> ElectricalPoint {
    match endpoint {
        Endpoint::Pin { component, pin } => ElectricalPoint::Pin {
            component: component.clone(),
            pin: pin.clone(),
        },
        Endpoint::Hole { board, .. } | Endpoint::RailPos { board, .. } => ElectricalPoint::Board {
            board: board.clone(),
            group: hole_group(endpoint).expect("breadboard endpoint has a group"),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeKind {
    /// Metal-to-metal connection (e.g. the two legs of one button side).
    Conductive,
    /// Conducts at the net level but carries only a weak (pull) value in
    /// simulation.
    Resistive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bridge {
    pub pins: Vec<String>,
    pub kind: BridgeKind,
}

impl Bridge {
    fn new(kind: BridgeKind, pins: &[&str]) -> Self {
        Self {
            pins: pins.iter().map(|p| p.to_string()).collect(),
            kind,
        }
    }
}

/// Pins permanently joined inside a component, looked up first by exact
/// (normalized) type string and then by component class.
#[derive(Debug, Clone, Default)]
pub struct StaticBridgeTable {
    by_type: BTreeMap<String, Vec<Bridge>>,
    by_class: BTreeMap<ComponentClass, Vec<Bridge>>,
}

impl StaticBridgeTable {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Resistor `{pin1, pin2}`; push button `{pin1.l, pin1.r}` and
    /// `{pin2.l, pin2.r}`. Everything else has no static bridges.
    pub fn standard() -> Self {
        let mut table = Self::default();
        table.by_class.insert(
            ComponentClass::Resistor,
            vec![Bridge::new(BridgeKind::Resistive, &["pin1", "pin2"])],
        );
        table.by_class.insert(
            ComponentClass::PushButton,
            vec![
                Bridge::new(BridgeKind::Conductive, &["pin1.l", "pin1.r"]),
                Bridge::new(BridgeKind::Conductive, &["pin2.l", "pin2.r"]),
            ],
        );
        table
    }

    pub fn with_type(mut self, type_name: &str, bridges: Vec<Bridge>) -> Self {
        self.by_type.insert(normalize_type(type_name), bridges);
        self
    }

    pub fn bridges_for(&self, component: &ComponentDecl) -> &[Bridge] {
        if let Some(b) = self.by_type.get(&normalize_type(&component.type_name)) {
            return b;
        }
        self.by_class
            .get(&ComponentClass::classify(&component.type_name))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn has_bridges(&self, component: &ComponentDecl) -> bool {
        !self.bridges_for(component).is_empty()
    }

    /// The same table restricted to conductive bridges.
    pub fn conductive_only(&self) -> Self {
        let keep = |v: &Vec<Bridge>| -> Vec<Bridge> {
            v.iter()
                .filter(|b| b.kind == BridgeKind::Conductive)
                .cloned()
                .collect()
        };
        Self {
            by_type: self.by_type.iter().map(|(k, v)| (k.clone(), keep(v))).collect(),
            by_class: self.by_class.iter().map(|(k, v)| (*k, keep(v))).collect(),
        }
    }
}

/// Index-based disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone, Default)]
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Interns points and unions them; shared by the netlist and the simulator.
#[derive(Debug, Clone, Default)]
pub(crate) struct PointSets {
    ids: BTreeMap<ElectricalPoint, usize>,
    points: Vec<ElectricalPoint>,
    sets: DisjointSets,
}

impl PointSets {
    pub(crate) fn intern(&mut self, p: ElectricalPoint) -> usize {
        if let Some(&i) = self.ids.get(&p) {
            return i;
        }
        let i = self.points.len();
        self.ids.insert(p.clone(), i);
        self.points.push(p);
        self.sets.parent.push(i);
        self.sets.size.push(1);
        i
    }

    pub(crate) fn len(&self) -> usize {
        self.points.len()
    }

    pub(crate) fn point(&self, i: usize) -> &ElectricalPoint {
        &self.points[i]
    }

    pub(crate) fn find(&mut self, i: usize) -> usize {
        self.sets.find(i)
    }

    pub(crate) fn union_ids(&mut self, a: usize, b: usize) {
        self.sets.union(a, b);
    }

    pub(crate) fn union(&mut self, a: ElectricalPoint, b: ElectricalPoint) {
        let (a, b) = (self.intern(a), self.intern(b));
        self.sets.union(a, b);
    }

    pub(crate) fn add_circuit(&mut self, circuit: &CircuitDoc, bridges: &StaticBridgeTable) {
        for conn in &circuit.connections {
            self.union(point_of(&conn.a), point_of(&conn.b));
        }
        for c in &circuit.components {
            for bridge in bridges.bridges_for(c) {
                let mut pins = bridge.pins.iter();
                if let Some(first) = pins.next() {
                    let first = self.intern(ElectricalPoint::pin(&c.id, first));
                    for p in pins {
                        let p = self.intern(ElectricalPoint::pin(&c.id, p));
                        self.sets.union(first, p);
                    }
                }
            }
        }
    }

    pub(crate) fn into_partition(mut self, declared: BTreeSet<String>) -> NetPartition {
        let mut groups: BTreeMap<usize, Vec<ElectricalPoint>> = BTreeMap::new();
        for i in 0..self.points.len() {
            let root = self.sets.find(i);
            groups.entry(root).or_default().push(self.points[i].clone());
        }
        let mut nets: Vec<Vec<ElectricalPoint>> = groups
            .into_values()
            .map(|mut v| {
                v.sort();
                v
            })
            .collect();
        nets.sort();
        let index = nets
            .iter()
            .enumerate()
            .flat_map(|(i, net)| net.iter().map(move |p| (p.clone(), NetId(i))))
            .collect();
        NetPartition {
            nets,
            index,
            declared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NetId(pub usize);

/// Disjoint nets over every point the circuit mentions. Net ids are stable:
/// nets are ordered by their smallest point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetPartition {
    nets: Vec<Vec<ElectricalPoint>>,
    index: BTreeMap<ElectricalPoint, NetId>,
    declared: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetlistError {
    #[error("endpoint \"{0}\" is not part of the circuit")]
    UnknownEndpoint(String),
}

impl NetPartition {
    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn nets(&self) -> impl Iterator<Item = (NetId, &[ElectricalPoint])> {
        self.nets.iter().enumerate().map(|(i, n)| (NetId(i), n.as_slice()))
    }

    pub fn net(&self, id: NetId) -> &[ElectricalPoint] {
        &self.nets[id.0]
    }

    pub fn net_of(&self, point: &ElectricalPoint) -> Option<NetId> {
        self.index.get(point).copied()
    }

    /// Nets restricted to component pins, as `"component.pin"` strings.
    /// Nets without component pins are dropped.
    pub fn component_pin_partition(&self) -> BTreeSet<BTreeSet<String>> {
        self.nets
            .iter()
            .map(|net| {
                net.iter()
                    .filter(|p| p.component_pin().is_some())
                    .map(|p| p.to_string())
                    .collect::<BTreeSet<_>>()
            })
            .filter(|s| !s.is_empty())
            .collect()
    }
}

pub fn build_nets(circuit: &CircuitDoc, bridges: &StaticBridgeTable) -> NetPartition {
    let mut sets = PointSets::default();
    sets.add_circuit(circuit, bridges);
    let declared = circuit.components.iter().map(|c| c.id.clone()).collect();
    sets.into_partition(declared)
}

/// Whether two endpoints are electrically connected. A declared endpoint the
/// circuit never wires forms a net of its own.
pub fn same_net(partition: &NetPartition, a: &Endpoint, b: &Endpoint) -> Result<bool, NetlistError> {
    for ep in [a, b] {
        if !partition.declared.contains(ep.component_id()) {
            return Err(NetlistError::UnknownEndpoint(ep.to_string()));
        }
    }
    let (pa, pb) = (point_of(a), point_of(b));
    if pa == pb {
        return Ok(true);
    }
    Ok(match (partition.net_of(&pa), partition.net_of(&pb)) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    })
}

/// Rewrites a physical circuit as logical connectivity.
///
/// Breadboards are dropped. Within each net (built with the conductive
/// bridges only, so resistors and other component bodies survive as
/// components) the wired component pins are sorted and joined in a star from
/// the smallest one.
pub fn reduce_to_logical(physical: &CircuitDoc, bridges: &StaticBridgeTable) -> CircuitDoc {
    let partition = build_nets(physical, &bridges.conductive_only());
    let wired: HashSet<ElectricalPoint> = physical
        .endpoints()
        .filter(|e| e.is_component_pin())
        .map(point_of)
        .collect();

    let mut connections = Vec::new();
    for (_, net) in partition.nets() {
        let mut pins: Vec<(String, &str, &str)> = net
            .iter()
            .filter(|p| wired.contains(*p))
            .filter_map(|p| p.component_pin().map(|(c, pin)| (p.to_string(), c, pin)))
            .collect();
        pins.sort();
        if let Some(((_, hub_c, hub_p), rest)) = pins.split_first() {
            for (_, c, p) in rest {
                connections.push(Connection::new(Endpoint::pin(*hub_c, hub_p), Endpoint::pin(*c, p)));
            }
        }
    }
    CircuitDoc {
        kind: CircuitKind::Logical,
        components: physical
            .components
            .iter()
            .filter(|c| !c.is_breadboard())
            .cloned()
            .collect(),
        connections,
    }
}
