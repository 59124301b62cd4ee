//! Network reduction by arc contraction, arc merge and vertex removal.
//!
//! * Contraction fuses the endpoints `x`, `y` of a connecting arc when `x`
//!   has no other outgoing arc or `y` no other incoming arc. The fused vertex
//!   keeps `x`'s id.
//! * Merge replaces a customer's outbound and return arcs by a single arc when
//!   the first ends where the second starts.
//! * Removal deletes a vertex with exactly one incoming and one outgoing arc
//!   and fuses the two arcs.
//!
//! [`minimize`] applies contractions until none applies, then merges, then
//! removals, and repeats until the network is a fixed point of all three.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::instance::CustomerId;
use crate::network::{Arc, ArcId, ArcKind, Legs, Network, Owner, Vertex, VertexId};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operation {
    /// Connecting arc `x -> y` contracted into `x`.
    Contraction { x: VertexId, y: VertexId },
    Merge { customer: CustomerId },
    Removal { vertex: VertexId },
}

/// Operations in application order. Vertex ids refer to the input network;
/// they stay valid throughout because fused vertices keep the tail's id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReductionTrace {
    pub ops: Vec<Operation>,
    /// Input vertex id to output vertex id; `None` for removed vertices.
    pub vertex_map: Vec<Option<VertexId>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReduceError {
    #[error("arc {0} does not exist")]
    UnknownArc(ArcId),
    #[error("vertex {0} does not exist")]
    UnknownVertex(VertexId),
    #[error("arc {0} is not a connecting arc")]
    NotConnecting(ArcId),
    #[error("arc {0} touches the source or sink")]
    Terminal(ArcId),
    #[error("arc {arc}: tail has out-degree {out_degree} and head has in-degree {in_degree}")]
    NotContractible {
        arc: ArcId,
        out_degree: usize,
        in_degree: usize,
    },
    #[error("customer {0}: no dedicated outbound and return arcs")]
    NoDemandPair(CustomerId),
    #[error("customer {0}: outbound arc ends where the return arc does not start")]
    EndpointsDiffer(CustomerId),
    #[error("vertex {0} is the source or sink")]
    TerminalVertex(VertexId),
    #[error("vertex {vertex} has in-degree {in_degree} and out-degree {out_degree}")]
    NotExpendable {
        vertex: VertexId,
        in_degree: usize,
        out_degree: usize,
    },
}

/// Mutable network with stable ids and tombstones.
#[derive(Clone, Debug)]
struct Reducer {
    vertices: Vec<Option<Vertex>>,
    arcs: Vec<Option<Arc>>,
    outs: Vec<BTreeSet<ArcId>>,
    ins: Vec<BTreeSet<ArcId>>,
    source: VertexId,
    sink: VertexId,
    fleet_a: u32,
    fleet_b: u32,
    customers: usize,
}

impl Reducer {
    fn new(net: &Network) -> Self {
        let n = net.vertices.len();
        let mut outs = vec![BTreeSet::new(); n];
        let mut ins = vec![BTreeSet::new(); n];
        for (i, a) in net.arcs.iter().enumerate() {
            outs[a.tail].insert(i);
            ins[a.head].insert(i);
        }
        Reducer {
            vertices: net.vertices.iter().cloned().map(Some).collect(),
            arcs: net.arcs.iter().cloned().map(Some).collect(),
            outs,
            ins,
            source: net.source,
            sink: net.sink,
            fleet_a: net.fleet_a,
            fleet_b: net.fleet_b,
            customers: net.customers,
        }
    }

    fn arc(&self, a: ArcId) -> Result<&Arc, ReduceError> {
        self.arcs.get(a).and_then(Option::as_ref).ok_or(ReduceError::UnknownArc(a))
    }

    fn is_terminal(&self, v: VertexId) -> bool {
        v == self.source || v == self.sink
    }

    fn check_contraction(&self, a: ArcId) -> Result<(VertexId, VertexId), ReduceError> {
        let arc = self.arc(a)?;
        if arc.kind != ArcKind::Connecting {
            return Err(ReduceError::NotConnecting(a));
        }
        if self.is_terminal(arc.tail) || self.is_terminal(arc.head) {
            return Err(ReduceError::Terminal(a));
        }
        let out_degree = self.outs[arc.tail].len();
        let in_degree = self.ins[arc.head].len();
        if out_degree != 1 && in_degree != 1 {
            return Err(ReduceError::NotContractible {
                arc: a,
                out_degree,
                in_degree,
            });
        }
        Ok((arc.tail, arc.head))
    }

    fn contract(&mut self, a: ArcId) -> Result<Operation, ReduceError> {
        let (x, y) = self.check_contraction(a)?;
        self.delete_arc(a);
        for e in std::mem::take(&mut self.outs[y]) {
            self.arcs[e].as_mut().expect("live arc").tail = x;
            self.outs[x].insert(e);
        }
        for e in std::mem::take(&mut self.ins[y]) {
            self.arcs[e].as_mut().expect("live arc").head = x;
            self.ins[x].insert(e);
        }
        let gone = self.vertices[y].take().expect("live vertex");
        self.vertices[x].as_mut().expect("live vertex").points.extend(gone.points);
        // A non-demand arc that now starts and ends at x carries nothing.
        let loops: Vec<ArcId> = self.outs[x]
            .intersection(&self.ins[x])
            .copied()
            .filter(|&e| self.arcs[e].as_ref().is_some_and(|a| a.kind != ArcKind::Demand))
            .collect();
        for e in loops {
            self.delete_arc(e);
        }
        Ok(Operation::Contraction { x, y })
    }

    fn delete_arc(&mut self, a: ArcId) {
        let arc = self.arcs[a].take().expect("live arc");
        self.outs[arc.tail].remove(&a);
        self.ins[arc.head].remove(&a);
    }

    fn push_arc(&mut self, arc: Arc) -> ArcId {
        let id = self.arcs.len();
        self.outs[arc.tail].insert(id);
        self.ins[arc.head].insert(id);
        self.arcs.push(Some(arc));
        id
    }

    /// The arcs owned by `c` alone, carrying its outbound and return demands.
    fn demand_pair(&self, c: CustomerId) -> Result<(ArcId, ArcId), ReduceError> {
        let mut out = None;
        let mut ret = None;
        for (i, arc) in self.arcs.iter().enumerate() {
            let Some(arc) = arc else { continue };
            if arc.owners.len() == 1 && arc.owners[0].customer == c {
                match arc.owners[0].legs {
                    Legs::Outbound => out = Some(i),
                    Legs::Return => ret = Some(i),
                    Legs::Both => {}
                }
            }
        }
        out.zip(ret).ok_or(ReduceError::NoDemandPair(c))
    }

    fn check_merge_arcs(&self, c: CustomerId, o: ArcId, r: ArcId) -> Result<(), ReduceError> {
        if self.arc(o)?.head != self.arc(r)?.tail {
            return Err(ReduceError::EndpointsDiffer(c));
        }
        Ok(())
    }

    fn merge_arcs(&mut self, c: CustomerId, o: ArcId, r: ArcId) -> Result<Operation, ReduceError> {
        self.check_merge_arcs(c, o, r)?;
        let (oa, ra) = (self.arc(o)?.clone(), self.arc(r)?.clone());
        self.delete_arc(o);
        self.delete_arc(r);
        self.push_arc(Arc {
            tail: oa.tail,
            head: ra.head,
            capacity: oa.capacity.min(ra.capacity),
            kind: ArcKind::Demand,
            owners: vec![Owner {
                customer: c,
                legs: Legs::Both,
            }],
            station: None,
        });
        Ok(Operation::Merge { customer: c })
    }

    fn merge(&mut self, c: CustomerId) -> Result<Operation, ReduceError> {
        let (o, r) = self.demand_pair(c)?;
        self.merge_arcs(c, o, r)
    }

    fn check_removal(&self, v: VertexId) -> Result<(ArcId, ArcId), ReduceError> {
        if self.vertices.get(v).and_then(Option::as_ref).is_none() {
            return Err(ReduceError::UnknownVertex(v));
        }
        if self.is_terminal(v) {
            return Err(ReduceError::TerminalVertex(v));
        }
        let (in_degree, out_degree) = (self.ins[v].len(), self.outs[v].len());
        let looped = self.ins[v] == self.outs[v];
        if in_degree != 1 || out_degree != 1 || looped {
            return Err(ReduceError::NotExpendable {
                vertex: v,
                in_degree,
                out_degree,
            });
        }
        let first = |s: &BTreeSet<ArcId>| *s.iter().next().expect("degree one");
        Ok((first(&self.ins[v]), first(&self.outs[v])))
    }

    fn remove(&mut self, v: VertexId) -> Result<Operation, ReduceError> {
        let (i, o) = self.check_removal(v)?;
        let (ia, oa) = (self.arc(i)?.clone(), self.arc(o)?.clone());
        self.delete_arc(i);
        self.delete_arc(o);
        self.vertices[v] = None;
        let kind = [ArcKind::Demand, ArcKind::Source]
            .into_iter()
            .find(|k| ia.kind == *k || oa.kind == *k)
            .unwrap_or(ArcKind::Connecting);
        self.push_arc(Arc {
            tail: ia.tail,
            head: oa.head,
            capacity: ia.capacity.min(oa.capacity),
            kind,
            owners: union_owners(&ia.owners, &oa.owners),
            station: ia.station.or(oa.station),
        });
        Ok(Operation::Removal { vertex: v })
    }

    fn apply(&mut self, op: Operation) -> Result<(), ReduceError> {
        match op {
            Operation::Contraction { x, y } => {
                let a = self.outs[x]
                    .iter()
                    .copied()
                    .find(|&e| self.arcs[e].as_ref().is_some_and(|a| a.head == y && a.kind == ArcKind::Connecting))
                    .ok_or(ReduceError::UnknownVertex(y))?;
                self.contract(a)?;
            }
            Operation::Merge { customer } => {
                self.merge(customer)?;
            }
            Operation::Removal { vertex } => {
                self.remove(vertex)?;
            }
        }
        Ok(())
    }

    fn contract_all(&mut self, ops: &mut Vec<Operation>) -> bool {
        let mut any = false;
        loop {
            let mut changed = false;
            for a in 0..self.arcs.len() {
                if self.check_contraction(a).is_ok() {
                    ops.push(self.contract(a).expect("checked"));
                    changed = true;
                }
            }
            if !changed {
                return any;
            }
            any = true;
        }
    }

    fn merge_all(&mut self, ops: &mut Vec<Operation>) -> bool {
        let mut pairs: Vec<(Option<ArcId>, Option<ArcId>)> = vec![(None, None); self.customers + 1];
        for (i, arc) in self.arcs.iter().enumerate() {
            let Some(arc) = arc else { continue };
            if let [owner] = arc.owners[..] {
                match owner.legs {
                    Legs::Outbound => pairs[owner.customer].0 = Some(i),
                    Legs::Return => pairs[owner.customer].1 = Some(i),
                    Legs::Both => {}
                }
            }
        }
        let mut any = false;
        for (c, pair) in pairs.into_iter().enumerate() {
            if let (Some(o), Some(r)) = pair {
                if self.check_merge_arcs(c, o, r).is_ok() {
                    ops.push(self.merge_arcs(c, o, r).expect("checked"));
                    any = true;
                }
            }
        }
        any
    }

    fn remove_all(&mut self, ops: &mut Vec<Operation>) -> bool {
        let mut any = false;
        for v in 0..self.vertices.len() {
            if self.check_removal(v).is_ok() {
                ops.push(self.remove(v).expect("checked"));
                any = true;
            }
        }
        any
    }

    fn finish(self) -> (Network, Vec<Option<VertexId>>) {
        let mut map = vec![None; self.vertices.len()];
        let mut vertices = Vec::new();
        for (v, vertex) in self.vertices.into_iter().enumerate() {
            if let Some(vertex) = vertex {
                map[v] = Some(vertices.len());
                vertices.push(vertex);
            }
        }
        let arcs = self
            .arcs
            .into_iter()
            .flatten()
            .map(|mut a| {
                a.tail = map[a.tail].expect("arc endpoints are live");
                a.head = map[a.head].expect("arc endpoints are live");
                a
            })
            .collect();
        let net = Network {
            vertices,
            arcs,
            source: map[self.source].expect("source is never removed"),
            sink: map[self.sink].expect("sink is never removed"),
            fleet_a: self.fleet_a,
            fleet_b: self.fleet_b,
            customers: self.customers,
        };
        (net, map)
    }
}

fn union_owners(a: &[Owner], b: &[Owner]) -> Vec<Owner> {
    let mut all: Vec<Owner> = a.iter().chain(b).copied().collect();
    all.sort();
    let mut out: Vec<Owner> = Vec::with_capacity(all.len());
    for o in all {
        match out.last_mut() {
            Some(last) if last.customer == o.customer => last.legs = last.legs.union(o.legs),
            _ => out.push(o),
        }
    }
    out
}

/// Vertex and arc counts before and after reduction.
#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct ReductionStats {
    pub vertices_before: usize,
    pub arcs_before: usize,
    pub vertices_after: usize,
    pub arcs_after: usize,
}

impl ReductionStats {
    pub fn new(before: &Network, after: &Network) -> Self {
        ReductionStats {
            vertices_before: before.vertices.len(),
            arcs_before: before.arcs.len(),
            vertices_after: after.vertices.len(),
            arcs_after: after.arcs.len(),
        }
    }
}

/// Contracts connecting arc `arc`.
pub fn contract_arc(net: &Network, arc: ArcId) -> Result<Network, ReduceError> {
    let mut r = Reducer::new(net);
    r.contract(arc)?;
    Ok(r.finish().0)
}

/// Merges the outbound and return arcs of `customer`.
pub fn merge_demand_arcs(net: &Network, customer: CustomerId) -> Result<Network, ReduceError> {
    let mut r = Reducer::new(net);
    r.merge(customer)?;
    Ok(r.finish().0)
}

/// Removes expendable vertex `vertex`.
pub fn remove_vertex(net: &Network, vertex: VertexId) -> Result<Network, ReduceError> {
    let mut r = Reducer::new(net);
    r.remove(vertex)?;
    Ok(r.finish().0)
}

/// Contractions only, until none applies.
pub fn contract_all(net: &Network) -> (Network, Vec<Operation>) {
    let mut r = Reducer::new(net);
    let mut ops = Vec::new();
    r.contract_all(&mut ops);
    (r.finish().0, ops)
}

/// Reduces `net` until no operation applies.
pub fn minimize(net: &Network) -> (Network, ReductionTrace) {
    let mut r = Reducer::new(net);
    let mut ops = Vec::new();
    loop {
        let c = r.contract_all(&mut ops);
        let m = r.merge_all(&mut ops);
        let v = r.remove_all(&mut ops);
        if !(c || m || v) {
            break;
        }
    }
    let (out, vertex_map) = r.finish();
    (out, ReductionTrace { ops, vertex_map })
}

/// Re-applies a trace to the network it was recorded on.
pub fn replay(net: &Network, trace: &ReductionTrace) -> Result<Network, ReduceError> {
    let mut r = Reducer::new(net);
    for &op in &trace.ops {
        r.apply(op)?;
    }
    Ok(r.finish().0)
}

/// Whether any reduction still applies to `net`.
pub fn is_minimal(net: &Network) -> bool {
    let r = Reducer::new(net);
    let contractible = (0..net.arcs.len()).any(|a| r.check_contraction(a).is_ok());
    let removable = (0..net.vertices.len()).any(|v| r.check_removal(v).is_ok());
    let mergeable = (1..=net.customers)
        .any(|c| r.demand_pair(c).is_ok_and(|(o, rr)| r.check_merge_arcs(c, o, rr).is_ok()));
    !(contractible || removable || mergeable)
}
