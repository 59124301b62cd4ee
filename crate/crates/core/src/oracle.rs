//! Brute-force ground truth for small instances.
//!
//! Nothing here shares code with the incremental index or the LP machinery:
//! feasibility is decided either by replaying car movements event by event,
//! or by searching for a flow in a (possibly preprocessed) network.

use std::collections::VecDeque;

use thiserror::Error;

use crate::instance::{CustomerId, Instance, Solution};
use crate::network::{ArcKind, Network};

/// Largest instance the enumeration accepts.
pub const MAX_CUSTOMERS: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("brute force limited to {MAX_CUSTOMERS} customers, got {0}")]
    TooLarge(usize),
}

/// Replays the satisfied demands in time order and reports whether a car is
/// always available. Arrivals at an instant are processed before departures
/// at the same instant.
pub fn replay_feasible(inst: &Instance, ids: &[CustomerId]) -> bool {
    // (station, time, departure?) events
    let mut events = Vec::with_capacity(4 * ids.len());
    for &id in ids {
        let c = inst.customer(id);
        for d in [c.outbound, c.ret] {
            events.push((d.origin, d.start, true));
            events.push((d.destination(), d.end, false));
        }
    }
    events.sort_by_key(|&(s, t, dep)| (s, t, dep));
    let mut cars = [i64::from(inst.fleet_a), i64::from(inst.fleet_b)];
    for (s, _, dep) in events {
        let k = &mut cars[s.index()];
        if dep {
            *k -= 1;
            if *k < 0 {
                return false;
            }
        } else {
            *k += 1;
        }
    }
    true
}

/// Advances `combo` (strictly increasing ids in `1..=n`) to the next
/// combination in lexicographic order.
fn next_combo(combo: &mut [CustomerId], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - (k - 1 - i) {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Best subset by decreasing cardinality; within a size, subsets are tried in
/// lexicographic order of sorted ids, so the witness is deterministic.
fn enumerate(n: usize, mut feasible: impl FnMut(&[CustomerId]) -> bool) -> (usize, Solution) {
    for k in (0..=n).rev() {
        let mut combo: Vec<CustomerId> = (1..=k).collect();
        loop {
            if feasible(&combo) {
                return (k, Solution::new(combo));
            }
            if !next_combo(&mut combo, n) {
                break;
            }
        }
    }
    unreachable!("the empty set is always feasible")
}

/// Maximum number of simultaneously satisfiable customers and a witness.
pub fn brute_force_optimum(inst: &Instance) -> Result<(usize, Solution), OracleError> {
    if inst.len() > MAX_CUSTOMERS {
        return Err(OracleError::TooLarge(inst.len()));
    }
    Ok(enumerate(inst.len(), |s| replay_feasible(inst, s)))
}

/// Same search, with feasibility decided on `net` by [`network_feasible`].
pub fn brute_force_network_optimum(net: &Network) -> Result<(usize, Solution), OracleError> {
    if net.customers > MAX_CUSTOMERS {
        return Err(OracleError::TooLarge(net.customers));
    }
    Ok(enumerate(net.customers, |s| network_feasible(net, s)))
}

/// Whether `net` admits a flow in which every arc carrying a demand of a
/// customer in `ids` moves exactly one car and every other demand-carrying
/// arc moves none. Connecting and source arcs range over `[0, capacity]`;
/// flow is conserved everywhere except at `s` and `t`.
pub fn network_feasible(net: &Network, ids: &[CustomerId]) -> bool {
    let mut chosen = vec![false; net.customers + 1];
    for &id in ids {
        chosen[id] = true;
    }
    let nv = net.vertices.len();
    let mut excess = vec![0i64; nv];
    let mut flow = MaxFlow::new(nv + 2);
    let big = i64::from(net.unbounded()) + 4 * net.customers as i64 + 1;
    for a in &net.arcs {
        if a.owners.is_empty() {
            debug_assert_ne!(a.kind, ArcKind::Demand);
            flow.add(a.tail, a.head, i64::from(a.capacity));
            continue;
        }
        let on = chosen[a.owners[0].customer];
        if a.owners.iter().any(|o| chosen[o.customer] != on) {
            return false;
        }
        if on {
            if a.capacity < 1 {
                return false;
            }
            excess[a.head] += 1;
            excess[a.tail] -= 1;
        }
    }
    // s and t exchange cars freely.
    flow.add(net.sink, net.source, big);
    let (ss, tt) = (nv, nv + 1);
    let mut need = 0;
    for (v, &e) in excess.iter().enumerate() {
        if e > 0 {
            flow.add(ss, v, e);
            need += e;
        } else if e < 0 {
            flow.add(v, tt, -e);
        }
    }
    flow.run(ss, tt) == need
}

/// Edmonds-Karp on an adjacency list with paired residual edges.
struct MaxFlow {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
}

impl MaxFlow {
    fn new(n: usize) -> Self {
        MaxFlow {
            head: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add(&mut self, u: usize, v: usize, c: i64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0);
    }

    fn run(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        loop {
            let mut prev = vec![usize::MAX; self.head.len()];
            let mut queue = VecDeque::from([s]);
            let mut seen = vec![false; self.head.len()];
            seen[s] = true;
            while let Some(u) = queue.pop_front() {
                for &e in &self.head[u] {
                    let v = self.to[e];
                    if !seen[v] && self.cap[e] > 0 {
                        seen[v] = true;
                        prev[v] = e;
                        queue.push_back(v);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut push = i64::MAX;
            let mut v = t;
            while v != s {
                let e = prev[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            total += push;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::is_feasible_set;
    use crate::instance::{fixtures, micro_corpus};

    fn subsets(n: usize) -> impl Iterator<Item = Vec<CustomerId>> {
        (0u32..(1 << n)).map(move |mask| (1..=n).filter(|&i| mask >> (i - 1) & 1 == 1).collect())
    }

    #[test]
    fn empty_instance() {
        let (v, w) = brute_force_optimum(&Instance::empty(1, 1)).unwrap();
        assert_eq!(v, 0);
        assert!(w.satisfied.is_empty());
    }

    #[test]
    fn all_or_nothing_optimum() {
        let inst = fixtures::all_or_nothing();
        let (v, w) = brute_force_optimum(&inst).unwrap();
        assert_eq!(v, 4);
        assert_eq!(w, Solution::new([1, 2, 3, 4]));
        for drop in 1..=4 {
            let three: Vec<_> = (1..=4).filter(|&c| c != drop).collect();
            assert!(!replay_feasible(&inst, &three));
        }
    }

    #[test]
    fn size_guard() {
        let inst = crate::instance::generate_st(25, 1);
        assert_eq!(brute_force_optimum(&inst), Err(OracleError::TooLarge(25)));
    }

    #[test]
    fn lexicographic_witness() {
        // Any single customer fits, two never do: one car at A only.
        let inst = Instance::new(
            vec![
                crate::instance::Customer::new(1, crate::instance::Station::A, (0, 10), (20, 30)),
                crate::instance::Customer::new(2, crate::instance::Station::A, (5, 15), (25, 35)),
                crate::instance::Customer::new(3, crate::instance::Station::A, (6, 16), (26, 36)),
            ],
            1,
            0,
        );
        let (v, w) = brute_force_optimum(&inst).unwrap();
        assert_eq!(v, 1);
        assert_eq!(w, Solution::new([1]));
    }

    #[test]
    fn replay_agrees_with_index_and_network() {
        for inst in micro_corpus(12, 77) {
            let net = Network::build(&inst).unwrap();
            for s in subsets(inst.len()) {
                let r = replay_feasible(&inst, &s);
                assert_eq!(r, is_feasible_set(&inst, s.iter().copied()), "{s:?}");
                assert_eq!(r, network_feasible(&net, &s), "{s:?}");
            }
        }
    }

    #[test]
    fn fleet_monotone() {
        for inst in micro_corpus(15, 3) {
            let (base, _) = brute_force_optimum(&inst).unwrap();
            let mut more = inst.clone();
            more.fleet_a += 1;
            assert!(brute_force_optimum(&more).unwrap().0 >= base);
            let mut more = inst.clone();
            more.fleet_b += 1;
            assert!(brute_force_optimum(&more).unwrap().0 >= base);
        }
    }
}
