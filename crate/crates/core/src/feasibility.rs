//! Incremental feasibility checks over per-station displacement vectors.
//!
//! Each station keeps an array indexed by its sorted distinct time points.
//! Cell 0 starts at the station's fleet size; satisfying a customer subtracts
//! one at each demand's departure cell and adds one at each arrival cell. A
//! customer set is feasible exactly when every prefix sum of both arrays is
//! non-negative. Arrivals and departures at the same instant share a cell, so
//! a car that arrives at `t` may leave again at `t`.
//!
//! The arrays live in segment trees whose nodes store `(sum, min prefix)`,
//! which answers prefix sums and range minima of prefix sums in one
//! logarithmic descent.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fmt;

use num_traits::{PrimInt, Signed};
use thiserror::Error;

use crate::instance::{CustomerId, Instance, Minute, Solution, Station};

/// Integer type stored in the displacement vectors.
pub trait Count: PrimInt + Signed + fmt::Debug + Send + Sync + 'static {}

impl<T: PrimInt + Signed + fmt::Debug + Send + Sync + 'static> Count for T {}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
struct Node<T> {
    sum: T,
    min_prefix: T,
}

impl<T: Count> Node<T> {
    fn leaf(v: T) -> Self {
        Node { sum: v, min_prefix: v }
    }

    fn join(l: Self, r: Self) -> Self {
        Node {
            sum: l.sum + r.sum,
            min_prefix: l.min_prefix.min(l.sum + r.min_prefix),
        }
    }
}

/// Segment tree over a fixed-length array supporting point updates, prefix
/// sums and the minimum of prefix sums over an index range.
#[derive(Clone, Debug)]
pub struct PrefixTree<T> {
    len: usize,
    size: usize,
    nodes: Vec<Node<T>>,
    visits: Cell<usize>,
}

impl<T: Count> PrefixTree<T> {
    pub fn new(values: &[T]) -> Self {
        let len = values.len();
        let size = len.next_power_of_two().max(1);
        let mut nodes = vec![Node::leaf(T::zero()); 2 * size];
        for (i, &v) in values.iter().enumerate() {
            nodes[size + i] = Node::leaf(v);
        }
        for i in (1..size).rev() {
            nodes[i] = Node::join(nodes[2 * i], nodes[2 * i + 1]);
        }
        PrefixTree {
            len,
            size,
            nodes,
            visits: Cell::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn value(&self, i: usize) -> T {
        self.nodes[self.size + i].sum
    }

    pub fn values(&self) -> Vec<T> {
        (0..self.len).map(|i| self.value(i)).collect()
    }

    /// Adds `delta` to cell `i`.
    pub fn add(&mut self, i: usize, delta: T) {
        assert!(i < self.len, "cell {i} out of range {}", self.len);
        let mut p = self.size + i;
        self.nodes[p] = Node::leaf(self.nodes[p].sum + delta);
        while p > 1 {
            p /= 2;
            self.nodes[p] = Node::join(self.nodes[2 * p], self.nodes[2 * p + 1]);
        }
    }

    /// Node reads since the last call.
    pub fn take_visits(&self) -> usize {
        self.visits.replace(0)
    }

    fn read(&self, p: usize) -> Node<T> {
        self.visits.set(self.visits.get() + 1);
        self.nodes[p]
    }

    /// Sum of cells `0..=i`.
    pub fn prefix_sum(&self, i: usize) -> T {
        self.scan(i, i).0
    }

    /// Minimum over `k` in `lo..=hi` of the prefix sum through cell `k`.
    pub fn min_prefix(&self, lo: usize, hi: usize) -> T {
        self.scan(lo, hi).1
    }

    /// Minimum prefix sum over the whole array; zero when empty.
    pub fn global_min(&self) -> T {
        if self.len == 0 {
            T::zero()
        } else {
            // Padding cells are zero, so they repeat the last prefix sum.
            self.read(1).min_prefix
        }
    }

    /// One root-to-leaf descent covering `0..=hi`: returns the prefix sum
    /// through `hi` and the minimum prefix sum over `lo..=hi`.
    fn scan(&self, lo: usize, hi: usize) -> (T, T) {
        assert!(lo <= hi && hi < self.len, "range {lo}..={hi} out of {}", self.len);
        let mut acc = T::zero();
        let mut best: Option<T> = None;
        self.descend(1, 0, self.size, lo, hi + 1, &mut acc, &mut best);
        (acc, best.expect("non-empty range"))
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        p: usize,
        a: usize,
        b: usize,
        lo: usize,
        hi: usize,
        acc: &mut T,
        best: &mut Option<T>,
    ) {
        if a >= hi {
            return;
        }
        if b <= lo {
            *acc = *acc + self.read(p).sum;
            return;
        }
        if lo <= a && b <= hi {
            let node = self.read(p);
            let cand = *acc + node.min_prefix;
            *best = Some(best.map_or(cand, |m| m.min(cand)));
            *acc = *acc + node.sum;
            return;
        }
        let mid = (a + b) / 2;
        self.descend(2 * p, a, mid, lo, hi, acc, best);
        self.descend(2 * p + 1, mid, b, lo, hi, acc, best);
    }

    /// First cell `k >= from` whose prefix sum is below `bound`.
    pub fn first_below(&self, from: usize, bound: T) -> Option<usize> {
        if from >= self.len {
            return None;
        }
        let before = if from == 0 { T::zero() } else { self.prefix_sum(from - 1) };
        let mut acc = before;
        self.first_below_in(1, 0, self.size, from, bound, &mut acc)
    }

    fn first_below_in(
        &self,
        p: usize,
        a: usize,
        b: usize,
        from: usize,
        bound: T,
        acc: &mut T,
    ) -> Option<usize> {
        if b <= from || a >= self.len {
            return None;
        }
        let node = self.nodes[p];
        if from <= a && *acc + node.min_prefix >= bound {
            *acc = *acc + node.sum;
            return None;
        }
        if b - a == 1 {
            return Some(a);
        }
        let mid = (a + b) / 2;
        self.first_below_in(2 * p, a, mid, from, bound, acc)
            .or_else(|| self.first_below_in(2 * p + 1, mid, b, from, bound, acc))
    }
}

impl<T: Count> PrefixTree<T> {
    /// Last cell whose prefix sum is below `bound`.
    pub fn last_below(&self, bound: T) -> Option<usize> {
        if self.len == 0 {
            return None;
        }
        self.last_below_in(1, 0, self.size, bound, T::zero())
    }

    fn last_below_in(&self, p: usize, a: usize, b: usize, bound: T, acc: T) -> Option<usize> {
        if a >= self.len {
            return None;
        }
        let node = self.read(p);
        if acc + node.min_prefix >= bound {
            return None;
        }
        if b - a == 1 {
            return Some(a);
        }
        let mid = (a + b) / 2;
        let left = self.nodes[2 * p];
        self.last_below_in(2 * p + 1, mid, b, bound, acc + left.sum)
            .or_else(|| self.last_below_in(2 * p, a, mid, bound, acc))
    }
}

/// Cell positions of one customer's four demand end-points.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Footprint {
    /// Station the outbound trip leaves from.
    pub home: Station,
    /// Outbound departure cell at `home`.
    pub depart: usize,
    /// Outbound arrival cell at the other station.
    pub arrive: usize,
    /// Return departure cell at the other station.
    pub back: usize,
    /// Return arrival cell at `home`.
    pub home_again: usize,
}

impl Footprint {
    /// Cells at `home` whose prefix sums drop by one while the customer is
    /// satisfied.
    pub fn home_span(&self) -> (usize, usize) {
        (self.depart, self.home_again - 1)
    }

    /// Cells at the other station whose prefix sums rise by one, if any.
    pub fn away_span(&self) -> Option<(usize, usize)> {
        (self.arrive < self.back).then(|| (self.arrive, self.back - 1))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeasibilityError {
    #[error("customer {0} does not exist")]
    UnknownCustomer(CustomerId),
    #[error("customer {0} is already satisfied")]
    AlreadySatisfied(CustomerId),
    #[error("customer {0} is not satisfied")]
    NotSatisfied(CustomerId),
    #[error("changing customer {0} would leave a station without a car")]
    WouldBreak(CustomerId),
}

/// Displacement vectors for both stations plus the tracked customer set.
#[derive(Clone, Debug)]
pub struct DisplacementIndex<T = i64> {
    times: [Vec<Minute>; 2],
    trees: [PrefixTree<T>; 2],
    footprints: Vec<Footprint>,
    member: Vec<bool>,
    count: usize,
}

impl<T: Count> DisplacementIndex<T> {
    pub fn new(inst: &Instance) -> Self {
        let times = [inst.time_points(Station::A), inst.time_points(Station::B)];
        let trees = [Station::A, Station::B].map(|s| {
            let mut cells = vec![T::zero(); times[s.index()].len()];
            if let Some(first) = cells.first_mut() {
                *first = T::from(inst.fleet(s)).expect("fleet fits the count type");
            }
            PrefixTree::new(&cells)
        });
        let cell = |s: Station, t: Minute| {
            times[s.index()]
                .binary_search(&t)
                .expect("every demand time is a station time point")
        };
        let footprints = inst
            .customers
            .iter()
            .map(|c| {
                let home = c.home();
                Footprint {
                    home,
                    depart: cell(home, c.outbound.start),
                    arrive: cell(home.other(), c.outbound.end),
                    back: cell(home.other(), c.ret.start),
                    home_again: cell(home, c.ret.end),
                }
            })
            .collect::<Vec<_>>();
        DisplacementIndex {
            member: vec![false; footprints.len()],
            times,
            trees,
            footprints,
            count: 0,
        }
    }

    /// Index already holding `ids`, which need not be feasible.
    pub fn with_solution(inst: &Instance, ids: impl IntoIterator<Item = CustomerId>) -> Result<Self, FeasibilityError> {
        let mut idx = Self::new(inst);
        for id in ids {
            idx.insert_unchecked(id)?;
        }
        Ok(idx)
    }

    pub fn customers(&self) -> usize {
        self.footprints.len()
    }

    pub fn footprint(&self, id: CustomerId) -> &Footprint {
        &self.footprints[id - 1]
    }

    pub fn times(&self, s: Station) -> &[Minute] {
        &self.times[s.index()]
    }

    pub fn tree(&self, s: Station) -> &PrefixTree<T> {
        &self.trees[s.index()]
    }

    /// Raw cell values of one station's displacement vector.
    pub fn displacement(&self, s: Station) -> Vec<T> {
        self.trees[s.index()].values()
    }

    pub fn contains(&self, id: CustomerId) -> bool {
        self.member.get(id.wrapping_sub(1)).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn members(&self) -> impl Iterator<Item = CustomerId> + '_ {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i + 1)
    }

    pub fn outsiders(&self) -> impl Iterator<Item = CustomerId> + '_ {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &m)| !m)
            .map(|(i, _)| i + 1)
    }

    pub fn solution(&self) -> Solution {
        Solution::new(self.members())
    }

    /// Whether every prefix sum of both stations is non-negative.
    pub fn is_valid(&self) -> bool {
        self.trees.iter().all(|t| t.global_min() >= T::zero())
    }

    fn check_known(&self, id: CustomerId) -> Result<(), FeasibilityError> {
        if id == 0 || id > self.footprints.len() {
            Err(FeasibilityError::UnknownCustomer(id))
        } else {
            Ok(())
        }
    }

    /// Whether adding `id` keeps (or makes) the tracked set feasible.
    pub fn can_insert(&self, id: CustomerId) -> Result<bool, FeasibilityError> {
        self.check_known(id)?;
        if self.member[id - 1] {
            return Err(FeasibilityError::AlreadySatisfied(id));
        }
        Ok(self.fits_after(id, -1))
    }

    /// Whether dropping `id` keeps (or makes) the tracked set feasible.
    pub fn can_remove(&self, id: CustomerId) -> Result<bool, FeasibilityError> {
        self.check_known(id)?;
        if !self.member[id - 1] {
            return Err(FeasibilityError::NotSatisfied(id));
        }
        Ok(self.fits_after(id, 1))
    }

    /// Feasibility after shifting `id`'s home span by `sign` and its away
    /// span by `-sign`.
    fn fits_after(&self, id: CustomerId, sign: i32) -> bool {
        let f = self.footprints[id - 1];
        let one = T::one();
        let (home_delta, away_delta) = if sign < 0 { (-one, one) } else { (one, -one) };
        // The shrinking side is the only place a valid state can break.
        let (shrink_station, shrink_span) = if sign < 0 {
            (f.home, Some(f.home_span()))
        } else {
            (f.home.other(), f.away_span())
        };
        if self.is_valid() {
            return match shrink_span {
                Some((lo, hi)) => self.trees[shrink_station.index()].min_prefix(lo, hi) >= one,
                None => true,
            };
        }
        let shifted_min = |s: Station, span: Option<(usize, usize)>, delta: T| -> T {
            let tree = &self.trees[s.index()];
            if tree.is_empty() {
                return T::zero();
            }
            let last = tree.len() - 1;
            let Some((lo, hi)) = span else {
                return tree.global_min();
            };
            let mut m = T::max_value();
            {
                if lo > 0 {
                    m = m.min(tree.min_prefix(0, lo - 1));
                }
                m = m.min(tree.min_prefix(lo, hi) + delta);
                if hi < last {
                    m = m.min(tree.min_prefix(hi + 1, last));
                }
            }
            m
        };
        shifted_min(f.home, Some(f.home_span()), home_delta) >= T::zero()
            && shifted_min(f.home.other(), f.away_span(), away_delta) >= T::zero()
    }

    fn apply(&mut self, id: CustomerId, sign: T) {
        let f = self.footprints[id - 1];
        let (h, o) = (f.home.index(), f.home.other().index());
        self.trees[h].add(f.depart, -sign);
        self.trees[o].add(f.arrive, sign);
        self.trees[o].add(f.back, -sign);
        self.trees[h].add(f.home_again, sign);
    }

    /// Satisfies `id`, refusing when that would break feasibility.
    pub fn insert(&mut self, id: CustomerId) -> Result<(), FeasibilityError> {
        if !self.can_insert(id)? {
            return Err(FeasibilityError::WouldBreak(id));
        }
        self.insert_unchecked(id)
    }

    /// Satisfies `id` even if the result is infeasible.
    pub fn insert_unchecked(&mut self, id: CustomerId) -> Result<(), FeasibilityError> {
        self.check_known(id)?;
        if self.member[id - 1] {
            return Err(FeasibilityError::AlreadySatisfied(id));
        }
        self.apply(id, T::one());
        self.member[id - 1] = true;
        self.count += 1;
        Ok(())
    }

    /// Drops `id`, refusing when that would break feasibility.
    pub fn remove(&mut self, id: CustomerId) -> Result<(), FeasibilityError> {
        if !self.can_remove(id)? {
            return Err(FeasibilityError::WouldBreak(id));
        }
        self.remove_unchecked(id)
    }

    /// Drops `id` even if the result is infeasible.
    pub fn remove_unchecked(&mut self, id: CustomerId) -> Result<(), FeasibilityError> {
        self.check_known(id)?;
        if !self.member[id - 1] {
            return Err(FeasibilityError::NotSatisfied(id));
        }
        self.apply(id, -T::one());
        self.member[id - 1] = false;
        self.count -= 1;
        Ok(())
    }

    /// Drops every customer.
    pub fn clear(&mut self) {
        let ids: Vec<_> = self.members().collect();
        for id in ids {
            self.apply(id, -T::one());
            self.member[id - 1] = false;
        }
        self.count = 0;
    }

    /// Total node reads across both trees since the last call.
    pub fn take_visits(&self) -> usize {
        self.trees.iter().map(|t| t.take_visits()).sum()
    }

    /// Cheap structural fingerprint of the arrays and member set.
    pub fn state_key(&self) -> (Vec<T>, Vec<T>, BTreeSet<CustomerId>) {
        (
            self.displacement(Station::A),
            self.displacement(Station::B),
            self.members().collect(),
        )
    }
}

/// From-scratch feasibility of `ids` via the displacement vectors.
pub fn is_feasible_set(inst: &Instance, ids: impl IntoIterator<Item = CustomerId>) -> bool {
    match DisplacementIndex::<i64>::with_solution(inst, ids) {
        Ok(idx) => idx.is_valid(),
        Err(_) => false,
    }
}

pub fn is_feasible(inst: &Instance, sol: &Solution) -> bool {
    is_feasible_set(inst, sol.satisfied.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures;
    use proptest::prelude::*;

    fn naive_prefix(values: &[i64]) -> Vec<i64> {
        values
            .iter()
            .scan(0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }

    #[test]
    fn fresh_index_holds_fleets() {
        let inst = fixtures::network_example(3, 5);
        let idx = DisplacementIndex::<i64>::new(&inst);
        assert_eq!(idx.displacement(Station::A), vec![3, 0, 0, 0, 0, 0]);
        assert_eq!(idx.displacement(Station::B), vec![5, 0, 0, 0, 0, 0]);
        for i in 0..6 {
            assert_eq!(idx.tree(Station::A).prefix_sum(i), 3);
            assert_eq!(idx.tree(Station::B).prefix_sum(i), 5);
        }
        assert!(idx.is_valid());
    }

    #[test]
    fn empty_instance_index() {
        let inst = Instance::empty(2, 2);
        let idx = DisplacementIndex::<i64>::new(&inst);
        assert!(idx.displacement(Station::A).is_empty());
        assert!(idx.displacement(Station::B).is_empty());
        assert!(idx.is_valid());
    }

    #[test]
    fn two_insertions_shift_cells() {
        let (ma, mb) = (4i64, 2i64);
        let inst = fixtures::network_example(ma as u32, mb as u32);
        let mut idx = DisplacementIndex::<i64>::new(&inst);
        idx.insert(1).unwrap();
        idx.insert(2).unwrap();
        assert_eq!(idx.displacement(Station::A), vec![ma - 1, 0, 1, -1, 0, 1]);
        assert_eq!(idx.displacement(Station::B), vec![mb + 1, -1, 0, 0, 0, 0]);
    }

    #[test]
    fn insert_remove_round_trip() {
        let inst = fixtures::network_example(1, 1);
        let mut idx = DisplacementIndex::<i64>::new(&inst);
        let before = idx.state_key();
        idx.insert_unchecked(3).unwrap();
        idx.remove_unchecked(3).unwrap();
        assert_eq!(idx.state_key(), before);
    }

    #[test]
    fn all_or_nothing_checks() {
        let inst = fixtures::all_or_nothing();
        let idx = DisplacementIndex::<i64>::new(&inst);
        assert!(idx.can_insert(3).unwrap());

        let mut idx = DisplacementIndex::<i64>::with_solution(&inst, [3, 4]).unwrap();
        assert!(idx.is_valid());
        assert!(!idx.can_insert(2).unwrap());
        assert!(!idx.can_insert(1).unwrap());

        idx.insert_unchecked(2).unwrap();
        idx.insert_unchecked(1).unwrap();
        assert!(idx.is_valid());
        for c in 1..=4 {
            assert!(!idx.can_remove(c).unwrap());
        }
        idx.remove_unchecked(1).unwrap();
        assert!(!idx.is_valid());
        // From the broken state, putting customer 1 back repairs it.
        assert!(idx.can_insert(1).unwrap());

        assert!(is_feasible_set(&inst, [1, 2, 3, 4]));
        assert!(!is_feasible_set(&inst, [3, 4, 1]));
    }

    #[test]
    fn singleton_always_removable() {
        let inst = fixtures::all_or_nothing();
        let idx = DisplacementIndex::<i64>::with_solution(&inst, [2]).unwrap();
        assert!(idx.can_remove(2).unwrap());
    }

    #[test]
    fn membership_errors() {
        let inst = fixtures::all_or_nothing();
        let mut idx = DisplacementIndex::<i64>::with_solution(&inst, [2]).unwrap();
        assert_eq!(idx.can_insert(2), Err(FeasibilityError::AlreadySatisfied(2)));
        assert_eq!(idx.can_remove(3), Err(FeasibilityError::NotSatisfied(3)));
        assert_eq!(idx.insert(9), Err(FeasibilityError::UnknownCustomer(9)));
        assert_eq!(idx.remove_unchecked(1), Err(FeasibilityError::NotSatisfied(1)));
        assert_eq!(idx.insert(3), Err(FeasibilityError::WouldBreak(3)));
        assert_eq!(idx.len(), 1);
    }

    #[test]
    fn narrow_count_type() {
        let inst = fixtures::all_or_nothing();
        let idx = DisplacementIndex::<i8>::with_solution(&inst, [1, 2, 3, 4]).unwrap();
        assert!(idx.is_valid());
    }

    fn visit_bound(len: usize) -> usize {
        2 * (len.next_power_of_two().trailing_zeros() as usize) + 2
    }

    proptest! {
        #[test]
        fn tree_matches_naive(values in prop::collection::vec(-3i64..4, 1..40), updates in prop::collection::vec((0usize..40, -2i64..3), 0..30)) {
            let mut vals = values.clone();
            let mut tree = PrefixTree::new(&vals);
            for (i, d) in updates {
                let i = i % vals.len();
                vals[i] += d;
                tree.add(i, d);
            }
            let pre = naive_prefix(&vals);
            let bound = visit_bound(vals.len());
            for lo in 0..vals.len() {
                for hi in lo..vals.len() {
                    tree.take_visits();
                    let got = tree.min_prefix(lo, hi);
                    prop_assert!(tree.take_visits() <= bound);
                    prop_assert_eq!(got, *pre[lo..=hi].iter().min().unwrap());
                }
                tree.take_visits();
                prop_assert_eq!(tree.prefix_sum(lo), pre[lo]);
                prop_assert!(tree.take_visits() <= bound);
                let first = (lo..vals.len()).find(|&k| pre[k] < 0);
                prop_assert_eq!(tree.first_below(lo, 0), first);
            }
            prop_assert_eq!(tree.global_min(), *pre.iter().min().unwrap());
            for bound in -2..2 {
                prop_assert_eq!(tree.last_below(bound), (0..vals.len()).rev().find(|&k| pre[k] < bound));
            }
        }
    }
}
