//! Capacitated time-expanded network of an instance.
//!
//! One vertex per distinct station time point, plus a source `s` and a sink
//! `t`. Demand arcs (capacity 1) carry customers between stations, connecting
//! arcs chain each station's time points and lead to `t`, and two source arcs
//! hand out the initial fleets.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::instance::{CustomerId, Instance, Leg, Minute, Station};

pub type VertexId = usize;
pub type ArcId = usize;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VertexLabel {
    Source,
    Sink,
    Point(Station, Minute),
}

impl fmt::Display for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexLabel::Source => f.write_str("s"),
            VertexLabel::Sink => f.write_str("t"),
            VertexLabel::Point(s, t) => write!(f, "{s}{t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Vertex {
    pub label: VertexLabel,
    /// Station time points represented by this vertex; more than one after
    /// contraction.
    pub points: Vec<(Station, Minute)>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ArcKind {
    Demand,
    Connecting,
    Source,
}

impl fmt::Display for ArcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArcKind::Demand => "demand",
            ArcKind::Connecting => "connecting",
            ArcKind::Source => "source",
        })
    }
}

/// Which demands of a customer an arc carries.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Legs {
    Outbound,
    Return,
    Both,
}

impl Legs {
    pub fn union(self, other: Legs) -> Legs {
        if self == other {
            self
        } else {
            Legs::Both
        }
    }
}

impl From<Leg> for Legs {
    fn from(leg: Leg) -> Self {
        match leg {
            Leg::Outbound => Legs::Outbound,
            Leg::Return => Legs::Return,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Owner {
    pub customer: CustomerId,
    pub legs: Legs,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let legs = match self.legs {
            Legs::Outbound => "o",
            Legs::Return => "r",
            Legs::Both => "or",
        };
        write!(f, "c{}{}", self.customer, legs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Arc {
    pub tail: VertexId,
    pub head: VertexId,
    pub capacity: u32,
    pub kind: ArcKind,
    /// Customers whose demands the arc carries, sorted by id.
    pub owners: Vec<Owner>,
    /// Fleet station for source arcs.
    pub station: Option<Station>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("no vertex for {0}{1}")]
    UnknownTimePoint(Station, Minute),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    pub vertices: Vec<Vertex>,
    pub arcs: Vec<Arc>,
    pub source: VertexId,
    pub sink: VertexId,
    pub fleet_a: u32,
    pub fleet_b: u32,
    /// Number of customers of the originating instance.
    pub customers: usize,
}

impl Network {
    /// Builds the network of a valid instance.
    ///
    /// Vertices are ordered `s`, then station points by (time, A before B),
    /// then `t`. Arcs are ordered source arcs, connecting arcs of A then B in
    /// time order (each chain ending at `t`), then each customer's outbound
    /// and return demand arcs.
    pub fn build(inst: &Instance) -> Result<Network, NetworkError> {
        let violations = inst.validate();
        if !violations.is_empty() {
            let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(NetworkError::InvalidInstance(msg));
        }
        let mut points: Vec<(Minute, Station)> = [Station::A, Station::B]
            .iter()
            .flat_map(|&s| inst.time_points(s).into_iter().map(move |t| (t, s)))
            .collect();
        points.sort();

        let mut vertices = vec![Vertex {
            label: VertexLabel::Source,
            points: Vec::new(),
        }];
        vertices.extend(points.iter().map(|&(t, s)| Vertex {
            label: VertexLabel::Point(s, t),
            points: vec![(s, t)],
        }));
        vertices.push(Vertex {
            label: VertexLabel::Sink,
            points: Vec::new(),
        });
        let source = 0;
        let sink = vertices.len() - 1;
        let mut net = Network {
            vertices,
            arcs: Vec::new(),
            source,
            sink,
            fleet_a: inst.fleet_a,
            fleet_b: inst.fleet_b,
            customers: inst.len(),
        };

        let chain = |s: Station| -> Vec<VertexId> {
            points
                .iter()
                .enumerate()
                .filter(|(_, p)| p.1 == s)
                .map(|(i, _)| i + 1)
                .collect()
        };
        let chains = [chain(Station::A), chain(Station::B)];
        for s in [Station::A, Station::B] {
            if let Some(&first) = chains[s.index()].first() {
                net.arcs.push(Arc {
                    tail: source,
                    head: first,
                    capacity: inst.fleet(s),
                    kind: ArcKind::Source,
                    owners: Vec::new(),
                    station: Some(s),
                });
            }
        }
        let lookup: HashMap<(Station, Minute), VertexId> =
            points.iter().enumerate().map(|(i, &(t, s))| ((s, t), i + 1)).collect();
        let unbounded = net.unbounded();
        for s in [Station::A, Station::B] {
            let c = &chains[s.index()];
            for (i, &v) in c.iter().enumerate() {
                let head = c.get(i + 1).copied().unwrap_or(sink);
                net.arcs.push(Arc {
                    tail: v,
                    head,
                    capacity: unbounded,
                    kind: ArcKind::Connecting,
                    owners: Vec::new(),
                    station: None,
                });
            }
        }
        for c in &inst.customers {
            for leg in [Leg::Outbound, Leg::Return] {
                let d = c.leg(leg);
                let tail = lookup[&(d.origin, d.start)];
                let head = lookup[&(d.destination(), d.end)];
                net.arcs.push(Arc {
                    tail,
                    head,
                    capacity: 1,
                    kind: ArcKind::Demand,
                    owners: vec![Owner {
                        customer: c.id,
                        legs: leg.into(),
                    }],
                    station: None,
                });
            }
        }
        Ok(net)
    }

    /// Capacity standing in for an unbounded connecting arc.
    pub fn unbounded(&self) -> u32 {
        self.fleet_a + self.fleet_b
    }

    pub fn fleet(&self, s: Station) -> u32 {
        match s {
            Station::A => self.fleet_a,
            Station::B => self.fleet_b,
        }
    }

    /// Vertex holding time point `time` of `station`.
    pub fn vertex_for(&self, station: Station, time: Minute) -> Result<VertexId, NetworkError> {
        self.vertices
            .iter()
            .position(|v| v.points.contains(&(station, time)))
            .ok_or(NetworkError::UnknownTimePoint(station, time))
    }

    pub fn vertex_name(&self, v: VertexId) -> String {
        self.vertices[v].label.to_string()
    }

    pub fn count(&self, kind: ArcKind) -> usize {
        self.arcs.iter().filter(|a| a.kind == kind).count()
    }

    pub fn out_arcs(&self, v: VertexId) -> impl Iterator<Item = ArcId> + '_ {
        self.arcs.iter().enumerate().filter(move |(_, a)| a.tail == v).map(|(i, _)| i)
    }

    pub fn in_arcs(&self, v: VertexId) -> impl Iterator<Item = ArcId> + '_ {
        self.arcs.iter().enumerate().filter(move |(_, a)| a.head == v).map(|(i, _)| i)
    }

    /// Arcs carrying any demand of customer `c`.
    pub fn customer_arcs(&self, c: CustomerId) -> impl Iterator<Item = ArcId> + '_ {
        self.arcs
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.owners.iter().any(|o| o.customer == c))
            .map(|(i, _)| i)
    }

    /// A topological order of the vertices, or `None` if there is a cycle.
    pub fn topological_order(&self) -> Option<Vec<VertexId>> {
        let n = self.vertices.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<VertexId>> = vec![Vec::new(); n];
        for a in &self.arcs {
            indeg[a.head] += 1;
            out[a.tail].push(a.head);
        }
        let mut stack: Vec<VertexId> = (0..n).rev().filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            order.push(v);
            for &w in out[v].iter().rev() {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Edge list dump, one `kind tail head cap owner` line per arc; `-` marks
    /// arcs without owners.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for a in &self.arcs {
            let owner = if a.owners.is_empty() {
                a.station.map_or_else(|| "-".to_string(), |s| s.to_string())
            } else {
                a.owners.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(",")
            };
            writeln!(
                out,
                "{} {} {} {} {}",
                a.kind,
                self.vertex_name(a.tail),
                self.vertex_name(a.head),
                a.capacity,
                owner
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{fixtures, generate_st, Customer};

    #[test]
    fn network_example_counts() {
        let net = Network::build(&fixtures::network_example(2, 3)).unwrap();
        assert_eq!(net.vertices.len(), 14);
        assert_eq!(net.arcs.len(), 22);
        assert_eq!(net.count(ArcKind::Demand), 8);
        assert_eq!(net.count(ArcKind::Connecting), 12);
        assert_eq!(net.count(ArcKind::Source), 2);
        for a in &net.arcs {
            let want = match a.kind {
                ArcKind::Demand => 1,
                ArcKind::Connecting => 5,
                ArcKind::Source => net.fleet(a.station.unwrap()),
            };
            assert_eq!(a.capacity, want);
        }
        assert!(net.topological_order().is_some());
    }

    #[test]
    fn empty_network() {
        let net = Network::build(&Instance::empty(4, 4)).unwrap();
        assert_eq!(net.vertices.len(), 2);
        assert!(net.arcs.is_empty());
    }

    #[test]
    fn single_customer_counts() {
        let inst = Instance::new(vec![Customer::new(1, Station::A, (100, 130), (400, 440))], 1, 1);
        let net = Network::build(&inst).unwrap();
        assert_eq!(net.vertices.len(), 6);
        assert_eq!(net.arcs.len(), 8);
        assert_eq!(net.count(ArcKind::Demand), 2);
        assert_eq!(net.count(ArcKind::Source), 2);
        assert_eq!(net.count(ArcKind::Connecting), 4);
    }

    #[test]
    fn vertex_lookup() {
        let inst = fixtures::network_example(1, 1);
        let net = Network::build(&inst).unwrap();
        let a1 = net.vertex_for(Station::A, 10).unwrap();
        let src_a = net.arcs.iter().find(|a| a.station == Some(Station::A)).unwrap();
        assert_eq!(src_a.head, a1);
        assert_eq!(
            net.vertex_for(Station::A, 999),
            Err(NetworkError::UnknownTimePoint(Station::A, 999))
        );
        // customers 2 and 3 both leave A at 10
        let c2 = &net.arcs[net.customer_arcs(2).next().unwrap()];
        let c3 = &net.arcs[net.customer_arcs(3).next().unwrap()];
        assert_eq!(c2.tail, c3.tail);
    }

    #[test]
    fn canonical_order_and_rebuild() {
        let inst = generate_st(60, 4);
        let net = Network::build(&inst).unwrap();
        assert_eq!(net, Network::build(&inst).unwrap());
        let keys: Vec<_> = net.vertices[1..net.vertices.len() - 1]
            .iter()
            .map(|v| match v.label {
                VertexLabel::Point(s, t) => (t, s),
                _ => panic!("terminal inside"),
            })
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        // connecting arcs always go forward in time
        for a in net.arcs.iter().filter(|a| a.kind == ArcKind::Connecting && a.head != net.sink) {
            assert!(a.tail < a.head);
        }
        let expected = 2 * 60
            + (inst.time_points(Station::A).len() - 1)
            + (inst.time_points(Station::B).len() - 1)
            + 2
            + 2;
        assert_eq!(net.arcs.len(), expected);
        assert!(net.topological_order().is_some());
    }

    #[test]
    fn dump_format() {
        let inst = Instance::new(vec![Customer::new(1, Station::B, (5, 20), (30, 50))], 2, 1);
        let net = Network::build(&inst).unwrap();
        let expected = "\
source s A20 2 A
source s B5 1 B
connecting A20 A30 3 -
connecting A30 t 3 -
connecting B5 B50 3 -
connecting B50 t 3 -
demand B5 A20 1 c1o
demand A30 B50 1 c1r
";
        assert_eq!(net.dump(), expected);
    }

    #[test]
    fn invalid_instance_rejected() {
        let mut inst = fixtures::all_or_nothing();
        inst.customers[0].ret.origin = Station::B;
        assert!(matches!(Network::build(&inst), Err(NetworkError::InvalidInstance(_))));
    }
}
