//! Dominance between customers and the precedence constraints derived from it.
//!
//! Customer `c` dominates `c'` when both leave the same station and each of
//! `c'`'s demands lies inside the matching demand of `c`. Swapping `c` for
//! `c'` in a feasible set keeps it feasible, so some optimum satisfies
//! `x_c <= x_c'`. The raw relation is thinned in two steps: a transitive
//! reduction, then a forest in which each customer keeps the parent with the
//! smallest work schedule.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::instance::{Customer, CustomerId, Instance};

/// Return end minus outbound start, in minutes.
pub fn work_schedule(c: &Customer) -> i64 {
    c.work_schedule()
}

/// Whether `c'` is nested inside `c`: same home station, `c'` leaves no
/// earlier and arrives no later on both trips.
pub fn dominates(c: &Customer, c2: &Customer) -> bool {
    c.home() == c2.home()
        && c.outbound.start <= c2.outbound.start
        && c2.outbound.end <= c.outbound.end
        && c.ret.start <= c2.ret.start
        && c2.ret.end <= c.ret.end
}

/// Arc `c -> c'` of the precedence relation: `c` dominates `c'`, and when
/// the two dominate each other only the arc toward the lower id is kept.
pub fn precedes(c: &Customer, c2: &Customer) -> bool {
    c.id != c2.id && dominates(c, c2) && (c2.id < c.id || !dominates(c2, c))
}

/// Directed graph over customer ids; arc `(c, c')` reads "`c` only if `c'`".
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PriorityDag {
    pub nodes: usize,
    /// Sorted, without duplicates.
    pub arcs: Vec<(CustomerId, CustomerId)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PriorityError {
    #[error("the priority graph has a cycle")]
    Cycle,
}

impl PriorityDag {
    pub fn new(nodes: usize, mut arcs: Vec<(CustomerId, CustomerId)>) -> Self {
        arcs.sort_unstable();
        arcs.dedup();
        PriorityDag { nodes, arcs }
    }

    fn successors(&self) -> Vec<Vec<CustomerId>> {
        let mut succ = vec![Vec::new(); self.nodes + 1];
        for &(u, v) in &self.arcs {
            succ[u].push(v);
        }
        succ
    }

    /// Kahn order of the ids `1..=nodes`, smallest available id first.
    pub fn topological_order(&self) -> Result<Vec<CustomerId>, PriorityError> {
        let succ = self.successors();
        let mut indeg = vec![0usize; self.nodes + 1];
        for &(_, v) in &self.arcs {
            indeg[v] += 1;
        }
        let mut ready: VecDeque<CustomerId> = (1..=self.nodes).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes);
        while let Some(u) = ready.pop_front() {
            order.push(u);
            for &v in &succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push_back(v);
                }
            }
        }
        if order.len() == self.nodes {
            Ok(order)
        } else {
            Err(PriorityError::Cycle)
        }
    }

    pub fn in_degree(&self, v: CustomerId) -> usize {
        self.arcs.iter().filter(|a| a.1 == v).count()
    }
}

/// Every precedence arc, by pairwise evaluation within each home station.
pub fn build_dag(inst: &Instance) -> PriorityDag {
    let mut arcs = Vec::new();
    for c in &inst.customers {
        for c2 in &inst.customers {
            if precedes(c, c2) {
                arcs.push((c.id, c2.id));
            }
        }
    }
    PriorityDag::new(inst.len(), arcs)
}

/// Fixed-width bit set over customer ids.
#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n / 64 + 1])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn or(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

/// Drops every arc implied by a longer path; the result has the same
/// reachability and is the unique smallest such subgraph of a DAG.
///
/// Descendant sets are built in reverse topological order. An arc `u -> v`
/// survives exactly when no other child of `u` reaches `v`; children are
/// scanned in topological order, so a child that could reach `v` is always
/// seen before `v`.
pub fn transitive_reduction(dag: &PriorityDag) -> Result<PriorityDag, PriorityError> {
    let order = dag.topological_order()?;
    let mut rank = vec![0usize; dag.nodes + 1];
    for (i, &v) in order.iter().enumerate() {
        rank[v] = i;
    }
    let mut succ = dag.successors();
    for s in &mut succ {
        s.sort_by_key(|&v| rank[v]);
    }
    let mut reach: Vec<Bits> = vec![Bits::new(dag.nodes + 1); dag.nodes + 1];
    let mut kept = Vec::new();
    for &u in order.iter().rev() {
        let mut covered = Bits::new(dag.nodes + 1);
        for &v in &succ[u] {
            if !covered.get(v) {
                kept.push((u, v));
            }
            covered.set(v);
            covered.or(&reach[v]);
        }
        reach[u] = covered;
    }
    Ok(PriorityDag::new(dag.nodes, kept))
}

/// Keeps at most one incoming arc per node: the one whose tail has the
/// smallest `work` value, ties to the lower id.
pub fn arborescence_forest(dag: &PriorityDag, work: impl Fn(CustomerId) -> i64) -> PriorityDag {
    let mut best: Vec<Option<CustomerId>> = vec![None; dag.nodes + 1];
    for &(u, v) in &dag.arcs {
        let better = match best[v] {
            None => true,
            Some(p) => (work(u), u) < (work(p), p),
        };
        if better {
            best[v] = Some(u);
        }
    }
    let arcs = best
        .iter()
        .enumerate()
        .filter_map(|(v, p)| p.map(|u| (u, v)))
        .collect();
    PriorityDag::new(dag.nodes, arcs)
}

/// Precedence arcs used by the strengthened model.
pub fn forest_constraints(inst: &Instance) -> PriorityDag {
    let reduced = transitive_reduction(&build_dag(inst)).expect("precedence is acyclic");
    arborescence_forest(&reduced, |c| inst.customer(c).work_schedule())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PriorityStats {
    pub raw_pairs: usize,
    pub reduced_arcs: usize,
    pub forest_arcs: usize,
}

pub fn priority_stats(inst: &Instance) -> PriorityStats {
    let dag = build_dag(inst);
    let reduced = transitive_reduction(&dag).expect("precedence is acyclic");
    let forest = arborescence_forest(&reduced, |c| inst.customer(c).work_schedule());
    PriorityStats {
        raw_pairs: dag.arcs.len(),
        reduced_arcs: reduced.arcs.len(),
        forest_arcs: forest.arcs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::is_feasible_set;
    use crate::instance::{fixtures, generate_st, micro_corpus, Station};
    use proptest::prelude::*;

    /// Pairwise reachability by breadth-first search.
    fn closure(dag: &PriorityDag) -> Vec<Vec<bool>> {
        let n = dag.nodes;
        let mut adj = vec![Vec::new(); n + 1];
        for &(u, v) in &dag.arcs {
            adj[u].push(v);
        }
        (0..=n)
            .map(|s| {
                let mut seen = vec![false; n + 1];
                let mut q = VecDeque::from(adj[s].clone());
                while let Some(v) = q.pop_front() {
                    if !seen[v] {
                        seen[v] = true;
                        q.extend(adj[v].iter().copied());
                    }
                }
                seen
            })
            .collect()
    }

    fn assert_is_reduction(dag: &PriorityDag, red: &PriorityDag) {
        assert_eq!(closure(dag), closure(red));
        // no surviving arc is implied by another path
        for &(u, v) in &red.arcs {
            let without = PriorityDag::new(red.nodes, red.arcs.iter().copied().filter(|&a| a != (u, v)).collect());
            assert!(!closure(&without)[u][v], "arc {u}->{v} is redundant");
        }
    }

    #[test]
    fn work_schedule_formula() {
        let c = Customer::new(1, Station::A, (100, 130), (400, 440));
        assert_eq!(work_schedule(&c), 340);
        let inst = fixtures::all_or_nothing();
        assert_eq!(work_schedule(inst.customer(3)), 140 - 10);
    }

    #[test]
    fn nesting_and_ties() {
        let c = Customer::new(1, Station::A, (0, 100), (200, 300));
        let c2 = Customer::new(2, Station::A, (10, 90), (210, 290));
        assert!(dominates(&c, &c2));
        assert!(!dominates(&c2, &c));
        let mut twin = c.clone();
        twin.id = 2;
        assert!(dominates(&c, &twin) && dominates(&twin, &c));
        assert!(precedes(&twin, &c));
        assert!(!precedes(&c, &twin));
        let other_way = Customer::new(3, Station::B, (10, 90), (210, 290));
        assert!(!dominates(&c, &other_way));
    }

    #[test]
    fn nested_five_dag() {
        let inst = fixtures::nested_five();
        let dag = build_dag(&inst);
        assert_eq!(
            dag.arcs,
            vec![(1, 2), (1, 3), (1, 4), (1, 5), (2, 4), (2, 5), (3, 4), (3, 5), (4, 5)]
        );
        let red = transitive_reduction(&dag).unwrap();
        assert_eq!(red.arcs, vec![(1, 2), (1, 3), (2, 4), (3, 4), (4, 5)]);
        assert_is_reduction(&dag, &red);
        let forest = arborescence_forest(&red, |c| inst.customer(c).work_schedule());
        // 4 has parents 2 (280) and 3 (290)
        assert_eq!(forest.arcs, vec![(1, 2), (1, 3), (2, 4), (4, 5)]);
    }

    #[test]
    fn chain_of_five_is_complete() {
        let customers = (1..=5)
            .map(|i| Customer::new(i, Station::B, (10 * i as u32, 200 - 10 * i as u32), (300 + 10 * i as u32, 500 - 10 * i as u32)))
            .collect();
        let inst = Instance { horizon: 600, ..Instance::new(customers, 1, 1) };
        let dag = build_dag(&inst);
        assert_eq!(dag.arcs.len(), 10);
        assert_eq!(transitive_reduction(&dag).unwrap().arcs, vec![(1, 2), (2, 3), (3, 4), (4, 5)]);
    }

    #[test]
    fn opposite_directions_have_no_arcs() {
        let inst = Instance::new(
            vec![
                Customer::new(1, Station::A, (0, 100), (200, 300)),
                Customer::new(2, Station::B, (10, 90), (210, 290)),
            ],
            1,
            1,
        );
        assert!(build_dag(&inst).arcs.is_empty());
    }

    #[test]
    fn textbook_reduction() {
        let dag = PriorityDag::new(3, vec![(1, 2), (2, 3), (1, 3)]);
        let red = transitive_reduction(&dag).unwrap();
        assert_eq!(red.arcs, vec![(1, 2), (2, 3)]);
        assert_eq!(transitive_reduction(&red).unwrap(), red);
        assert_eq!(
            transitive_reduction(&PriorityDag::new(2, vec![(1, 2), (2, 1)])),
            Err(PriorityError::Cycle)
        );
    }

    #[test]
    fn forest_keeps_cheapest_parent() {
        let dag = PriorityDag::new(4, vec![(1, 4), (2, 4), (3, 4)]);
        let work = |c: CustomerId| [0, 340, 200, 500][c];
        assert_eq!(arborescence_forest(&dag, work).arcs, vec![(2, 4)]);
        let forest = PriorityDag::new(4, vec![(1, 2), (1, 3), (3, 4)]);
        assert_eq!(arborescence_forest(&forest, work), forest);
    }

    #[test]
    fn pairwise_oracle_and_acyclicity() {
        for inst in micro_corpus(40, 12) {
            let dag = build_dag(&inst);
            for c in &inst.customers {
                for c2 in &inst.customers {
                    let want = c.id != c2.id
                        && dominates(c, c2)
                        && !(dominates(c2, c) && c2.id > c.id);
                    assert_eq!(dag.arcs.contains(&(c.id, c2.id)), want);
                }
            }
            assert!(dag.topological_order().is_ok());
            let red = transitive_reduction(&dag).unwrap();
            assert_is_reduction(&dag, &red);
        }
    }

    #[test]
    fn reduction_at_fifty_nodes() {
        let mut inst = generate_st(100, 5);
        inst.customers.truncate(50);
        let dag = build_dag(&inst);
        let red = transitive_reduction(&dag).unwrap();
        assert_eq!(closure(&dag), closure(&red));
    }

    #[test]
    fn exchange_keeps_feasibility() {
        let mut checked = 0;
        for inst in micro_corpus(60, 99) {
            let n = inst.len();
            let dag = build_dag(&inst);
            for &(c, c2) in &dag.arcs {
                for mask in 0u32..(1 << n) {
                    let s: Vec<_> = (1..=n).filter(|&i| mask >> (i - 1) & 1 == 1).collect();
                    if !s.contains(&c) || s.contains(&c2) || !is_feasible_set(&inst, s.iter().copied()) {
                        continue;
                    }
                    let swapped = s.iter().map(|&x| if x == c { c2 } else { x });
                    assert!(is_feasible_set(&inst, swapped));
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    proptest! {
        #[test]
        fn forest_is_a_subforest(arcs in prop::collection::vec((1usize..12, 1usize..12), 0..40)) {
            // orient every pair from lower to higher id to stay acyclic
            let arcs = arcs.into_iter().filter(|(u, v)| u != v).map(|(u, v)| (u.min(v), u.max(v))).collect();
            let dag = PriorityDag::new(12, arcs);
            let red = transitive_reduction(&dag).unwrap();
            prop_assert_eq!(closure(&dag), closure(&red));
            let forest = arborescence_forest(&red, |c| (c * 7 % 5) as i64);
            for v in 1..=12 {
                prop_assert!(forest.in_degree(v) <= 1);
            }
            prop_assert!(forest.arcs.iter().all(|a| red.arcs.contains(a)));
        }
    }
}
