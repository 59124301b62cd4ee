//! Neighborhoods N1 to N8, local search, GRASP, VNS and tabu search.
//!
//! Every state is feasible between public calls. Candidate moves are
//! checked on the shared [`DisplacementIndex`] by applying them unchecked
//! and undoing them afterwards.

use std::collections::{HashSet, VecDeque};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::bnb::round_heuristic;
use crate::feasibility::{is_feasible_set, DisplacementIndex, FeasibilityError};
use crate::instance::{CustomerId, Instance, Solution, Station};
use crate::lp::{LpStatus, Simplex};
use crate::model::Problem;
use crate::report::{Method, RunReport, RunStatus};

pub type SearchRng = Xoshiro256PlusPlus;

pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_TENURE: f64 = 0.046;

/// Threshold for reading an LP value as "at least one half".
const HALF: f64 = 0.5 - 1e-9;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Neighborhood {
    /// Add one customer.
    N1,
    /// Add two, neither addable alone.
    N2,
    /// Add three, no one or two of them addable.
    N3,
    /// Remove one customer.
    N4,
    /// Remove two, neither removable alone.
    N5,
    /// Remove three, no one or two of them removable.
    N6,
    /// Swap one member for one outsider.
    N7,
    /// Swap one member for two outsiders.
    N8,
}

impl Neighborhood {
    pub const ALL: [Neighborhood; 8] = [
        Neighborhood::N1,
        Neighborhood::N2,
        Neighborhood::N3,
        Neighborhood::N4,
        Neighborhood::N5,
        Neighborhood::N6,
        Neighborhood::N7,
        Neighborhood::N8,
    ];

    /// Customers removed and added by one move.
    pub fn shape(self) -> (usize, usize) {
        match self {
            Neighborhood::N1 => (0, 1),
            Neighborhood::N2 => (0, 2),
            Neighborhood::N3 => (0, 3),
            Neighborhood::N4 => (1, 0),
            Neighborhood::N5 => (2, 0),
            Neighborhood::N6 => (3, 0),
            Neighborhood::N7 => (1, 1),
            Neighborhood::N8 => (1, 2),
        }
    }

    fn from_shape(give: usize, take: usize) -> Option<Neighborhood> {
        Neighborhood::ALL.into_iter().find(|n| n.shape() == (give, take))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Rejection sampling with a cap of `50 n` draws.
    Sample,
    /// Full enumeration, then a uniform pick.
    Exhaust,
}

/// Customers leaving and entering the solution; both lists sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Move {
    pub remove: Vec<CustomerId>,
    pub add: Vec<CustomerId>,
}

impl Move {
    fn new(mut remove: Vec<CustomerId>, mut add: Vec<CustomerId>) -> Self {
        remove.sort_unstable();
        add.sort_unstable();
        Move { remove, add }
    }

    pub fn delta(&self) -> isize {
        self.add.len() as isize - self.remove.len() as isize
    }
}

/// Where the prefix sums went negative after a tentative change.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Shortfall {
    None,
    /// All negative cells sit at one station, at `-1`, within `lo..=hi`.
    One { station: Station, lo: usize, hi: usize },
    /// Needs more than one extra car somewhere.
    Hopeless,
}

fn shortfall(index: &DisplacementIndex) -> Shortfall {
    let mut found = Shortfall::None;
    for s in [Station::A, Station::B] {
        let tree = index.tree(s);
        let min = tree.global_min();
        if min >= 0 {
            continue;
        }
        if min < -1 || found != Shortfall::None {
            return Shortfall::Hopeless;
        }
        let lo = tree.first_below(0, 0).expect("negative cell exists");
        let hi = tree.last_below(0).expect("negative cell exists");
        found = Shortfall::One { station: s, lo, hi };
    }
    found
}

fn covers(span: Option<(usize, usize)>, lo: usize, hi: usize) -> bool {
    span.is_some_and(|(a, b)| a <= lo && hi <= b)
}

/// A feasible solution tied to its displacement index and an RNG.
#[derive(Clone, Debug)]
pub struct SearchState<'a> {
    inst: &'a Instance,
    index: DisplacementIndex,
    pub rng: SearchRng,
    deadline: Option<Instant>,
}

impl<'a> SearchState<'a> {
    pub fn new(inst: &'a Instance, sol: &Solution, seed: u64) -> Result<Self, FeasibilityError> {
        Self::with_rng(inst, sol, SearchRng::seed_from_u64(seed))
    }

    pub fn with_rng(inst: &'a Instance, sol: &Solution, rng: SearchRng) -> Result<Self, FeasibilityError> {
        let index = DisplacementIndex::with_solution(inst, sol.satisfied.iter().copied())?;
        if !index.is_valid() {
            let first = sol.satisfied.iter().next().copied().unwrap_or(0);
            return Err(FeasibilityError::WouldBreak(first));
        }
        Ok(SearchState {
            inst,
            index,
            rng,
            deadline: None,
        })
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn solution(&self) -> Solution {
        self.index.solution()
    }

    pub fn value(&self) -> usize {
        self.index.len()
    }

    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    pub fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Replaces the current solution, which must be feasible.
    pub fn reset(&mut self, sol: &Solution) -> Result<(), FeasibilityError> {
        let next = DisplacementIndex::with_solution(self.inst, sol.satisfied.iter().copied())?;
        if !next.is_valid() {
            let first = sol.satisfied.iter().next().copied().unwrap_or(0);
            return Err(FeasibilityError::WouldBreak(first));
        }
        self.index = next;
        Ok(())
    }

    pub fn apply(&mut self, mv: &Move) {
        for &c in &mv.remove {
            self.index.remove_unchecked(c).expect("member");
        }
        for &c in &mv.add {
            self.index.insert_unchecked(c).expect("outsider");
        }
        debug_assert!(self.index.is_valid(), "move {mv:?} broke feasibility");
    }

    fn members(&self) -> Vec<CustomerId> {
        self.index.members().collect()
    }

    fn outsiders(&self) -> Vec<CustomerId> {
        self.index.outsiders().collect()
    }

    fn addable(&self, c: CustomerId) -> bool {
        self.index.can_insert(c).expect("outsider")
    }

    fn removable(&self, c: CustomerId) -> bool {
        self.index.can_remove(c).expect("member")
    }

    /// Whether the current (possibly infeasible) index becomes feasible
    /// after `mv`; the index is restored.
    fn feasible_after(&mut self, mv: &Move) -> bool {
        for &c in &mv.remove {
            self.index.remove_unchecked(c).expect("member");
        }
        for &c in &mv.add {
            self.index.insert_unchecked(c).expect("outsider");
        }
        let ok = self.index.is_valid();
        for &c in &mv.add {
            self.index.remove_unchecked(c).expect("added");
        }
        for &c in &mv.remove {
            self.index.insert_unchecked(c).expect("removed");
        }
        ok
    }

    /// Whether `mv` belongs to `nb` at the current state.
    pub fn is_neighbor(&mut self, nb: Neighborhood, mv: &Move) -> bool {
        if (mv.remove.len(), mv.add.len()) != nb.shape()
            || mv.remove.iter().any(|&c| !self.index.contains(c))
            || mv.add.iter().any(|&c| c == 0 || c > self.inst.len() || self.index.contains(c))
            || has_duplicates(&mv.remove)
            || has_duplicates(&mv.add)
        {
            return false;
        }
        if !self.feasible_after(mv) {
            return false;
        }
        // minimality filters of the multi-customer moves
        match nb {
            Neighborhood::N2 | Neighborhood::N3 => {
                for k in 1..mv.add.len() {
                    for sub in subsets(&mv.add, k) {
                        if self.feasible_after(&Move::new(Vec::new(), sub)) {
                            return false;
                        }
                    }
                }
                true
            }
            Neighborhood::N5 | Neighborhood::N6 => {
                for k in 1..mv.remove.len() {
                    for sub in subsets(&mv.remove, k) {
                        if self.feasible_after(&Move::new(sub, Vec::new())) {
                            return false;
                        }
                    }
                }
                true
            }
            _ => true,
        }
    }

    /// Every move of `nb` at the current state, sorted.
    pub fn neighbors(&mut self, nb: Neighborhood) -> Vec<Move> {
        let mut out = match nb {
            Neighborhood::N1 => self.outsiders().into_iter().filter(|&c| self.addable(c)).map(|c| Move::new(vec![], vec![c])).collect(),
            Neighborhood::N4 => self.members().into_iter().filter(|&c| self.removable(c)).map(|c| Move::new(vec![c], vec![])).collect(),
            Neighborhood::N2 => self.add_pairs().into_iter().map(|(a, b)| Move::new(vec![], vec![a, b])).collect(),
            Neighborhood::N3 => self.add_triples(),
            Neighborhood::N5 => self.remove_pairs().into_iter().map(|(a, b)| Move::new(vec![a, b], vec![])).collect(),
            Neighborhood::N6 => self.remove_triples(),
            Neighborhood::N7 => self.swaps(1),
            Neighborhood::N8 => self.swaps(2),
        };
        out.sort();
        out
    }

    /// One move of `nb` drawn uniformly, or `None` when the neighborhood is
    /// empty (or, in sample mode, when the draw cap is reached).
    pub fn neighbor(&mut self, nb: Neighborhood, mode: Mode) -> Option<Move> {
        match mode {
            Mode::Exhaust => {
                let all = self.neighbors(nb);
                all.choose(&mut self.rng).cloned()
            }
            Mode::Sample => self.sample(nb),
        }
    }

    pub fn neighbor_increase(&mut self, k: usize, mode: Mode) -> Option<Move> {
        Neighborhood::from_shape(0, k).and_then(|nb| self.neighbor(nb, mode))
    }

    pub fn neighbor_decrease(&mut self, k: usize, mode: Mode) -> Option<Move> {
        Neighborhood::from_shape(k, 0).and_then(|nb| self.neighbor(nb, mode))
    }

    pub fn neighbor_exchange(&mut self, give: usize, take: usize, mode: Mode) -> Option<Move> {
        if give != 1 {
            return None;
        }
        Neighborhood::from_shape(give, take).and_then(|nb| self.neighbor(nb, mode))
    }

    fn sample(&mut self, nb: Neighborhood) -> Option<Move> {
        let (give, take) = nb.shape();
        // Pools can be narrowed to customers that fail alone, since the
        // minimality filter rejects every other tuple anyway.
        let members: Vec<CustomerId> = if give >= 2 {
            self.members().into_iter().filter(|&c| !self.removable(c)).collect()
        } else {
            self.members()
        };
        let outsiders: Vec<CustomerId> = if take >= 2 && give == 0 {
            self.outsiders().into_iter().filter(|&c| !self.addable(c)).collect()
        } else {
            self.outsiders()
        };
        if members.len() < give || outsiders.len() < take {
            return None;
        }
        let cap = 50 * self.inst.len().max(1);
        for _ in 0..cap {
            let remove: Vec<CustomerId> = members.choose_multiple(&mut self.rng, give).copied().collect();
            let add: Vec<CustomerId> = outsiders.choose_multiple(&mut self.rng, take).copied().collect();
            let mv = Move::new(remove, add);
            if self.is_neighbor(nb, &mv) {
                return Some(mv);
            }
        }
        None
    }

    /// Outsider pairs addable together but not one at a time.
    fn add_pairs(&mut self) -> Vec<(CustomerId, CustomerId)> {
        let failing: Vec<CustomerId> = self.outsiders().into_iter().filter(|&c| !self.addable(c)).collect();
        let mut out = Vec::new();
        for (i, &a) in failing.iter().enumerate() {
            self.index.insert_unchecked(a).expect("outsider");
            if let Shortfall::One { station, lo, hi } = shortfall(&self.index) {
                for &b in &failing[i + 1..] {
                    let f = self.index.footprint(b);
                    if f.home != station && covers(f.away_span(), lo, hi) && self.addable(b) {
                        out.push((a, b));
                    }
                }
            }
            self.index.remove_unchecked(a).expect("inserted");
        }
        out
    }

    fn add_triples(&mut self) -> Vec<Move> {
        let failing: Vec<CustomerId> = self.outsiders().into_iter().filter(|&c| !self.addable(c)).collect();
        let pairs: HashSet<(CustomerId, CustomerId)> = self.add_pairs().into_iter().collect();
        let mut out = Vec::new();
        for (i, &a) in failing.iter().enumerate() {
            self.index.insert_unchecked(a).expect("outsider");
            for (j, &b) in failing.iter().enumerate().skip(i + 1) {
                if pairs.contains(&(a, b)) {
                    continue;
                }
                self.index.insert_unchecked(b).expect("outsider");
                if let Shortfall::One { station, lo, hi } = shortfall(&self.index) {
                    for &c in &failing[j + 1..] {
                        let f = self.index.footprint(c);
                        if f.home != station
                            && covers(f.away_span(), lo, hi)
                            && !pairs.contains(&(a, c))
                            && !pairs.contains(&(b, c))
                            && self.addable(c)
                        {
                            out.push(Move::new(vec![], vec![a, b, c]));
                        }
                    }
                }
                self.index.remove_unchecked(b).expect("inserted");
            }
            self.index.remove_unchecked(a).expect("inserted");
        }
        out
    }

    /// Member pairs removable together but not one at a time.
    fn remove_pairs(&mut self) -> Vec<(CustomerId, CustomerId)> {
        let stuck: Vec<CustomerId> = self.members().into_iter().filter(|&c| !self.removable(c)).collect();
        let mut out = Vec::new();
        for (i, &a) in stuck.iter().enumerate() {
            self.index.remove_unchecked(a).expect("member");
            if let Shortfall::One { station, lo, hi } = shortfall(&self.index) {
                for &b in &stuck[i + 1..] {
                    let f = self.index.footprint(b);
                    if f.home == station && covers(Some(f.home_span()), lo, hi) && self.removable(b) {
                        out.push((a, b));
                    }
                }
            }
            self.index.insert_unchecked(a).expect("removed");
        }
        out
    }

    fn remove_triples(&mut self) -> Vec<Move> {
        let stuck: Vec<CustomerId> = self.members().into_iter().filter(|&c| !self.removable(c)).collect();
        let pairs: HashSet<(CustomerId, CustomerId)> = self.remove_pairs().into_iter().collect();
        let mut out = Vec::new();
        for (i, &a) in stuck.iter().enumerate() {
            self.index.remove_unchecked(a).expect("member");
            for (j, &b) in stuck.iter().enumerate().skip(i + 1) {
                if pairs.contains(&(a, b)) {
                    continue;
                }
                self.index.remove_unchecked(b).expect("member");
                if let Shortfall::One { station, lo, hi } = shortfall(&self.index) {
                    for &c in &stuck[j + 1..] {
                        let f = self.index.footprint(c);
                        if f.home == station
                            && covers(Some(f.home_span()), lo, hi)
                            && !pairs.contains(&(a, c))
                            && !pairs.contains(&(b, c))
                            && self.removable(c)
                        {
                            out.push(Move::new(vec![a, b, c], vec![]));
                        }
                    }
                }
                self.index.insert_unchecked(b).expect("removed");
            }
            self.index.insert_unchecked(a).expect("removed");
        }
        out
    }

    /// One member out, `take` outsiders in.
    fn swaps(&mut self, take: usize) -> Vec<Move> {
        let members = self.members();
        let outsiders = self.outsiders();
        let mut out = Vec::new();
        for &m in &members {
            self.index.remove_unchecked(m).expect("member");
            let after_removal = shortfall(&self.index);
            if take == 1 {
                self.fill_one(m, &outsiders, after_removal, &[], &mut out);
            } else if after_removal != Shortfall::Hopeless {
                for (i, &a) in outsiders.iter().enumerate() {
                    self.index.insert_unchecked(a).expect("outsider");
                    let sf = shortfall(&self.index);
                    self.fill_one(m, &outsiders[i + 1..], sf, &[a], &mut out);
                    self.index.remove_unchecked(a).expect("inserted");
                }
            }
            self.index.insert_unchecked(m).expect("removed");
        }
        out
    }

    /// Completes a swap removing `m` and adding `added` plus one customer
    /// from `pool`.
    fn fill_one(&self, m: CustomerId, pool: &[CustomerId], sf: Shortfall, added: &[CustomerId], out: &mut Vec<Move>) {
        for &c in pool {
            let ok = match sf {
                Shortfall::Hopeless => false,
                Shortfall::None => self.addable(c),
                Shortfall::One { station, lo, hi } => {
                    let f = self.index.footprint(c);
                    f.home != station && covers(f.away_span(), lo, hi) && self.addable(c)
                }
            };
            if ok {
                let mut add = added.to_vec();
                add.push(c);
                out.push(Move::new(vec![m], add));
            }
        }
    }
}

fn has_duplicates(ids: &[CustomerId]) -> bool {
    let set: HashSet<_> = ids.iter().collect();
    set.len() != ids.len()
}

fn subsets(ids: &[CustomerId], k: usize) -> Vec<Vec<CustomerId>> {
    match k {
        0 => vec![Vec::new()],
        _ if k > ids.len() => Vec::new(),
        _ => {
            let mut out = Vec::new();
            for i in 0..ids.len() {
                for mut rest in subsets(&ids[i + 1..], k - 1) {
                    rest.insert(0, ids[i]);
                    out.push(rest);
                }
            }
            out
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalSearchStats {
    pub moves: u64,
    /// Stopped by the deadline before reaching a local optimum.
    pub interrupted: bool,
}

/// Improves the state until N1, N2 and N8 are all empty: N2 is applied
/// until exhausted, then one N1 move (or N8 if N1 is empty), repeated.
pub fn local_search(state: &mut SearchState<'_>) -> LocalSearchStats {
    let mut stats = LocalSearchStats::default();
    loop {
        loop {
            if state.expired() {
                stats.interrupted = true;
                return stats;
            }
            let Some(mv) = state.neighbor(Neighborhood::N2, Mode::Exhaust) else { break };
            state.apply(&mv);
            stats.moves += 1;
        }
        if state.expired() {
            stats.interrupted = true;
            return stats;
        }
        let mv = state
            .neighbor(Neighborhood::N1, Mode::Exhaust)
            .or_else(|| state.neighbor(Neighborhood::N8, Mode::Exhaust));
        match mv {
            Some(mv) => {
                state.apply(&mv);
                stats.moves += 1;
            }
            None => return stats,
        }
    }
}

/// Greedy randomized construction over the CS2 relaxation.
///
/// The first evaluation round depends only on the instance, so its LP
/// results are kept across calls.
pub struct Constructor<'p> {
    problem: &'p Problem,
    lp: Simplex<f64>,
    root: Option<Vec<f64>>,
    first_round: Option<Vec<(CustomerId, f64, Vec<f64>)>>,
    pub lp_solves: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Construction {
    pub solution: Solution,
    /// Evaluation rounds performed.
    pub rounds: usize,
    /// The deadline cut the LP rounds short and the list was completed by
    /// rounding.
    pub interrupted: bool,
}

impl<'p> Constructor<'p> {
    pub fn new(problem: &'p Problem) -> Self {
        let mut lp = Simplex::<f64>::new(&problem.model).expect("models have finite bounds");
        lp.set_iteration_limit(usize::MAX);
        Constructor {
            problem,
            lp,
            root: None,
            first_round: None,
            lp_solves: 0,
        }
    }

    fn solve(&mut self) -> Option<(f64, Vec<f64>)> {
        self.lp_solves += 1;
        let sol = self.lp.solve();
        match sol.status {
            LpStatus::Optimal => Some((sol.objective, sol.customer_values(&self.problem.model))),
            LpStatus::Infeasible => panic!("zero fixings keep the relaxation feasible"),
            LpStatus::IterationLimit => None,
        }
    }

    fn evaluate(&mut self, cl: &[CustomerId]) -> Option<Vec<(CustomerId, f64, Vec<f64>)>> {
        let mut evals = Vec::with_capacity(cl.len());
        for &c in cl {
            self.lp.fix_customer(c, Some(false)).expect("customer in model");
            let res = self.solve();
            self.lp.fix_customer(c, None).expect("customer in model");
            let (obj, x) = res?;
            evals.push((c, obj, x));
        }
        Some(evals)
    }

    pub fn construct(&mut self, alpha: f64, rng: &mut SearchRng, deadline: Option<Instant>) -> Construction {
        let inst = &self.problem.instance;
        let n = inst.len();
        self.lp.set_deadline(deadline);
        self.lp.reset_all_bounds();
        if self.root.is_none() {
            self.root = self.solve().map(|(_, x)| x);
        }
        let Some(root) = self.root.clone() else {
            return self.fallback(&vec![0.0; n]);
        };
        let mut in_cl = vec![false; n + 1];
        for c in 1..=n {
            in_cl[c] = root[c - 1] >= HALF;
            if !in_cl[c] {
                self.lp.fix_customer(c, Some(false)).expect("customer in model");
            }
        }
        let mut last_x = root;
        let mut rounds = 0;
        loop {
            let cl: Vec<CustomerId> = (1..=n).filter(|&c| in_cl[c]).collect();
            if is_feasible_set(inst, cl.iter().copied()) {
                return Construction {
                    solution: Solution::new(cl),
                    rounds,
                    interrupted: false,
                };
            }
            let evals = if rounds == 0 && self.first_round.is_some() {
                self.first_round.clone()
            } else {
                self.evaluate(&cl)
            };
            let Some(evals) = evals else {
                let mut x = last_x;
                for c in 1..=n {
                    if !in_cl[c] {
                        x[c - 1] = 0.0;
                    }
                }
                return self.fallback(&x);
            };
            if rounds == 0 && self.first_round.is_none() {
                self.first_round = Some(evals.clone());
            }
            rounds += 1;
            let lo = evals.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
            let hi = evals.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
            let cut = lo + alpha * (hi - lo);
            // tolerance keeps alpha = 1 from emptying the list on round-off
            let rcl: Vec<usize> = (0..evals.len()).filter(|&k| evals[k].1 >= cut - 1e-9).collect();
            let pick = *rcl.choose(rng).expect("RCL holds the argmax");
            let (c, _, x) = &evals[pick];
            let drop = |c2: CustomerId, in_cl: &mut Vec<bool>, lp: &mut Simplex<f64>| {
                in_cl[c2] = false;
                lp.fix_customer(c2, Some(false)).expect("customer in model");
            };
            drop(*c, &mut in_cl, &mut self.lp);
            for c2 in 1..=n {
                if in_cl[c2] && x[c2 - 1] < HALF {
                    drop(c2, &mut in_cl, &mut self.lp);
                }
            }
            last_x = x.clone();
        }
    }

    fn fallback(&self, values: &[f64]) -> Construction {
        let mut index = DisplacementIndex::new(&self.problem.instance);
        Construction {
            solution: round_heuristic(values, &mut index),
            rounds: 0,
            interrupted: true,
        }
    }
}

/// Outcome of one heuristic run.
#[derive(Clone, Debug, PartialEq)]
pub struct HeuristicReport {
    pub method: Method,
    pub solution: Solution,
    pub construction_value: usize,
    pub iterations: u64,
    pub improvements: u64,
    pub elapsed: Duration,
    pub seed: u64,
    /// The last local search was cut by the deadline.
    pub interrupted: bool,
}

impl HeuristicReport {
    pub fn value(&self) -> usize {
        self.solution.value()
    }

    /// Report row; `ub` is a known upper bound for the gap column.
    pub fn to_run_report(&self, instance: &str, problem: &Problem, ub: Option<f64>) -> RunReport {
        let value = self.value();
        let gap = ub.map(|u| crate::report::relative_gap(u, value as f64));
        RunReport {
            instance: instance.to_string(),
            method: self.method,
            model: problem.formulation,
            n: problem.instance.len(),
            value,
            ub,
            gap_pct: gap,
            iterations: self.iterations,
            improvements: self.improvements,
            construction_value: Some(self.construction_value),
            elapsed_s: self.elapsed.as_secs_f64(),
            status: if gap == Some(0.0) { RunStatus::Optimal } else { RunStatus::TimeLimit },
            seed: Some(self.seed),
        }
    }
}

/// Multi-start construction plus local search until `time_limit`.
pub fn grasp(problem: &Problem, alpha: f64, time_limit: Duration, seed: u64) -> HeuristicReport {
    let start = Instant::now();
    let deadline = start + time_limit;
    let mut rng = SearchRng::seed_from_u64(seed);
    let mut ctor = Constructor::new(problem);
    let mut best: Option<Solution> = None;
    let mut construction_value = 0;
    let mut iterations = 0;
    let mut improvements = 0;
    let mut interrupted;
    loop {
        let built = ctor.construct(alpha, &mut rng, Some(deadline));
        if iterations == 0 {
            construction_value = built.solution.value();
        }
        iterations += 1;
        let mut state = SearchState::with_rng(&problem.instance, &built.solution, rng.clone()).expect("constructions are feasible");
        state.set_deadline(Some(deadline));
        interrupted = local_search(&mut state).interrupted;
        rng = state.rng.clone();
        let sol = state.solution();
        if best.as_ref().is_none_or(|b| sol.value() > b.value()) {
            improvements += 1;
            best = Some(sol);
        }
        if Instant::now() >= deadline {
            break;
        }
    }
    HeuristicReport {
        method: Method::Grasp,
        solution: best.unwrap_or_default(),
        construction_value,
        iterations,
        improvements,
        elapsed: start.elapsed(),
        seed,
        interrupted,
    }
}

/// The shaking sequence.
pub const VNS_SHAKES: [Neighborhood; 4] = [Neighborhood::N7, Neighborhood::N4, Neighborhood::N5, Neighborhood::N6];

/// Greedy construction, then shake-and-descend over [`VNS_SHAKES`] until
/// `time_limit`.
pub fn vns(problem: &Problem, time_limit: Duration, seed: u64) -> HeuristicReport {
    let start = Instant::now();
    let deadline = start + time_limit;
    let mut rng = SearchRng::seed_from_u64(seed);
    let built = Constructor::new(problem).construct(1.0, &mut rng, Some(deadline));
    let construction_value = built.solution.value();
    let mut state = SearchState::with_rng(&problem.instance, &built.solution, rng).expect("constructions are feasible");
    state.set_deadline(Some(deadline));
    let mut iterations = 0;
    let mut improvements = 0;
    let mut interrupted = false;
    'outer: while !state.expired() {
        iterations += 1;
        let mut seq: VecDeque<Neighborhood> = VNS_SHAKES.into_iter().collect();
        let mut shaken_any = false;
        while let Some(&k) = seq.front() {
            if state.expired() {
                break 'outer;
            }
            let current = state.solution();
            let Some(mv) = state.neighbor(k, Mode::Sample) else {
                seq.pop_front();
                continue;
            };
            shaken_any = true;
            state.apply(&mv);
            let ls = local_search(&mut state);
            interrupted = ls.interrupted;
            if state.value() > current.value() {
                improvements += 1;
                seq = VNS_SHAKES.into_iter().collect();
            } else {
                state.reset(&current).expect("previous solution is feasible");
                seq.pop_front();
            }
        }
        if !shaken_any {
            // nothing to shake: the state can only stay put
            break;
        }
    }
    HeuristicReport {
        method: Method::Vns,
        solution: state.solution(),
        construction_value,
        iterations,
        improvements,
        elapsed: start.elapsed(),
        seed,
        interrupted,
    }
}

/// Aggregate neighborhood of the tabu search, in order.
pub const TABU_NEIGHBORHOODS: [Neighborhood; 6] = [
    Neighborhood::N1,
    Neighborhood::N2,
    Neighborhood::N3,
    Neighborhood::N4,
    Neighborhood::N7,
    Neighborhood::N8,
];

/// Fingerprint of a customer set: a hash of its sorted ids.
pub fn fingerprint(sol: &Solution) -> u64 {
    let mut h = DefaultHasher::new();
    for c in &sol.satisfied {
        c.hash(&mut h);
    }
    h.finish()
}

/// FIFO list of recently accepted solutions.
#[derive(Clone, Debug, Default)]
pub struct TabuList {
    queue: VecDeque<u64>,
    capacity: usize,
}

impl TabuList {
    /// Capacity `floor(tenure * n)`.
    pub fn new(tenure: f64, n: usize) -> Self {
        TabuList {
            queue: VecDeque::new(),
            capacity: (tenure * n as f64 + 1e-9).floor().max(0.0) as usize,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, key: u64) -> bool {
        self.queue.contains(&key)
    }

    pub fn push(&mut self, key: u64) {
        if self.capacity == 0 {
            return;
        }
        if self.queue.len() == self.capacity {
            self.queue.pop_front();
        }
        self.queue.push_back(key);
    }
}

/// Draws a neighborhood uniformly from [`TABU_NEIGHBORHOODS`], then falls
/// through the list in order until one yields a move.
pub fn aggregate_neighbor(state: &mut SearchState<'_>) -> Option<Move> {
    let first = state.rng.gen_range(0..TABU_NEIGHBORHOODS.len());
    (0..TABU_NEIGHBORHOODS.len()).find_map(|k| {
        let nb = TABU_NEIGHBORHOODS[(first + k) % TABU_NEIGHBORHOODS.len()];
        state.neighbor(nb, Mode::Sample)
    })
}

pub fn tabu_search(problem: &Problem, tenure: f64, time_limit: Duration, seed: u64) -> HeuristicReport {
    let start = Instant::now();
    let deadline = start + time_limit;
    let mut rng = SearchRng::seed_from_u64(seed);
    let built = Constructor::new(problem).construct(1.0, &mut rng, Some(deadline));
    let construction_value = built.solution.value();
    let mut state = SearchState::with_rng(&problem.instance, &built.solution, rng).expect("constructions are feasible");
    state.set_deadline(Some(deadline));
    let mut best = state.solution();
    let mut tabu = TabuList::new(tenure, problem.instance.len());
    let mut iterations = 0;
    let mut improvements = 0;
    while !state.expired() {
        iterations += 1;
        let Some(mv) = aggregate_neighbor(&mut state) else { break };
        state.apply(&mv);
        let cand = state.solution();
        let key = fingerprint(&cand);
        if tabu.contains(key) {
            state.apply(&Move {
                remove: mv.add.clone(),
                add: mv.remove.clone(),
            });
        } else {
            tabu.push(key);
        }
        if cand.value() > best.value() {
            improvements += 1;
            best = cand;
        }
    }
    HeuristicReport {
        method: Method::Ts,
        solution: best,
        construction_value,
        iterations,
        improvements,
        elapsed: start.elapsed(),
        seed,
        interrupted: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{fixtures, micro_corpus};
    use crate::model::Formulation;
    use crate::oracle::brute_force_optimum;

    /// All moves of `nb` by testing every tuple.
    fn naive_neighbors(state: &mut SearchState<'_>, nb: Neighborhood) -> Vec<Move> {
        let (give, take) = nb.shape();
        let members = state.members();
        let outsiders = state.outsiders();
        let mut out = Vec::new();
        for r in subsets(&members, give) {
            for a in subsets(&outsiders, take) {
                let mv = Move::new(r.clone(), a);
                if state.is_neighbor(nb, &mv) {
                    out.push(mv);
                }
            }
        }
        out.sort();
        out
    }

    fn random_feasible(inst: &Instance, seed: u64) -> Solution {
        let mut rng = SearchRng::seed_from_u64(seed);
        let mut ids: Vec<CustomerId> = inst.ids().collect();
        ids.shuffle(&mut rng);
        let mut idx: DisplacementIndex = DisplacementIndex::new(inst);
        for c in ids {
            if idx.can_insert(c).unwrap() && rng.gen_bool(0.7) {
                idx.insert(c).unwrap();
            }
        }
        idx.solution()
    }

    #[test]
    fn enumeration_matches_naive_scan() {
        for (k, inst) in micro_corpus(60, 21).iter().enumerate() {
            for seed in 0..3 {
                let sol = random_feasible(inst, seed + 10 * k as u64);
                let mut st = SearchState::new(inst, &sol, seed).unwrap();
                for nb in Neighborhood::ALL {
                    assert_eq!(st.neighbors(nb), naive_neighbors(&mut st, nb), "instance {k} {nb:?} from {sol:?}");
                }
                assert_eq!(st.solution(), sol);
            }
        }
    }

    #[test]
    fn samples_are_neighbors() {
        for inst in micro_corpus(30, 4) {
            let sol = random_feasible(&inst, 2);
            let mut st = SearchState::new(&inst, &sol, 9).unwrap();
            for nb in Neighborhood::ALL {
                let all = st.neighbors(nb);
                let got = st.neighbor(nb, Mode::Sample);
                match got {
                    Some(mv) => assert!(all.contains(&mv)),
                    None => assert!(all.is_empty()),
                }
                assert_eq!(st.neighbor(nb, Mode::Exhaust).is_none(), all.is_empty());
            }
        }
    }

    #[test]
    fn increase_and_decrease_on_all_or_nothing() {
        let inst = fixtures::all_or_nothing();
        let mut st = SearchState::new(&inst, &Solution::new([3, 4]), 1).unwrap();
        assert_eq!(st.neighbor_increase(1, Mode::Exhaust), None);
        let mv = st.neighbor_increase(2, Mode::Exhaust).unwrap();
        assert_eq!(mv.add, vec![1, 2]);
        st.apply(&mv);
        assert_eq!(st.solution(), Solution::new([1, 2, 3, 4]));
        assert_eq!(st.neighbor_decrease(1, Mode::Exhaust), None);
        assert_eq!(st.neighbor_decrease(1, Mode::Sample), None);
    }

    #[test]
    fn single_member_decrease_empties() {
        let inst = fixtures::nested_five();
        let first = random_feasible(&inst, 0);
        let c = *first.satisfied.iter().next().unwrap();
        let mut st = SearchState::new(&inst, &Solution::new([c]), 0).unwrap();
        let mv = st.neighbor_decrease(1, Mode::Exhaust).unwrap();
        st.apply(&mv);
        assert_eq!(st.value(), 0);
        assert_eq!(st.neighbor_exchange(1, 1, Mode::Exhaust), None);
    }

    #[test]
    fn exchange_with_identical_twin() {
        let base = fixtures::nested_five();
        let c = base.customers[0].clone();
        let inst = Instance::new(vec![c.clone(), c], 1, 1);
        let mut st = SearchState::new(&inst, &Solution::new([1]), 0).unwrap();
        let mv = st.neighbor_exchange(1, 1, Mode::Exhaust).unwrap();
        assert_eq!(mv, Move::new(vec![1], vec![2]));
        st.apply(&mv);
        assert_eq!(st.solution(), Solution::new([2]));
    }

    #[test]
    fn local_search_reaches_local_optimum() {
        for (k, inst) in micro_corpus(50, 33).iter().enumerate() {
            let mut st = SearchState::new(inst, &random_feasible(inst, k as u64), k as u64).unwrap();
            let before = st.value();
            let stats = local_search(&mut st);
            assert!(!stats.interrupted);
            assert!(st.value() >= before);
            assert!(is_feasible_set(inst, st.solution().satisfied.iter().copied()));
            for nb in [Neighborhood::N1, Neighborhood::N2, Neighborhood::N8] {
                assert!(naive_neighbors(&mut st, nb).is_empty(), "instance {k} {nb:?}");
            }
        }
    }

    #[test]
    fn local_search_on_all_or_nothing() {
        let inst = fixtures::all_or_nothing();
        let mut st = SearchState::new(&inst, &Solution::new([3, 4]), 5).unwrap();
        let stats = local_search(&mut st);
        assert_eq!(stats.moves, 1);
        assert_eq!(st.value(), 4);
        let again = local_search(&mut st);
        assert_eq!(again.moves, 0);
        assert_eq!(st.value(), 4);
    }

    #[test]
    fn expired_deadline_interrupts() {
        let inst = fixtures::all_or_nothing();
        let mut st = SearchState::new(&inst, &Solution::new([3, 4]), 5).unwrap();
        st.set_deadline(Some(Instant::now()));
        let stats = local_search(&mut st);
        assert!(stats.interrupted);
        assert_eq!(st.value(), 2);
    }

    #[test]
    fn construction_is_feasible() {
        for inst in micro_corpus(40, 2) {
            let p = Problem::new(inst.clone(), Formulation::Cs2, false).unwrap();
            let mut ctor = Constructor::new(&p);
            let mut rng = SearchRng::seed_from_u64(1);
            for alpha in [0.0, 0.8, 1.0] {
                let built = ctor.construct(alpha, &mut rng, None);
                assert!(!built.interrupted);
                assert!(is_feasible_set(&inst, built.solution.satisfied.iter().copied()));
            }
        }
    }

    #[test]
    fn construction_keeps_feasible_full_set() {
        let inst = fixtures::all_or_nothing();
        let p = Problem::new(inst, Formulation::Cs2, false).unwrap();
        let built = Constructor::new(&p).construct(0.8, &mut SearchRng::seed_from_u64(0), None);
        assert_eq!(built.solution.value(), 4);
        assert_eq!(built.rounds, 0);
    }

    #[test]
    fn greedy_list_is_the_argmax_set() {
        // with alpha = 1 every pick attains the largest evaluation
        for inst in micro_corpus(20, 6) {
            let p = Problem::new(inst.clone(), Formulation::Cs2, false).unwrap();
            let a = Constructor::new(&p).construct(1.0, &mut SearchRng::seed_from_u64(1), None);
            assert!(is_feasible_set(&inst, a.solution.satisfied.iter().copied()));
        }
    }

    #[test]
    fn metaheuristics_on_all_or_nothing() {
        let p = Problem::new(fixtures::all_or_nothing(), Formulation::Cs2, false).unwrap();
        let t = Duration::from_millis(200);
        for r in [grasp(&p, DEFAULT_ALPHA, t, 1), vns(&p, t, 1), tabu_search(&p, DEFAULT_TENURE, t, 1)] {
            assert_eq!(r.value(), 4, "{:?}", r.method);
            assert!(r.value() >= r.construction_value);
        }
    }

    #[test]
    fn metaheuristics_stay_feasible_and_bounded() {
        for inst in micro_corpus(12, 77) {
            let (best, _) = brute_force_optimum(&inst).unwrap();
            let p = Problem::new(inst.clone(), Formulation::Cs2, true).unwrap();
            let t = Duration::from_millis(30);
            for r in [grasp(&p, DEFAULT_ALPHA, t, 3), vns(&p, t, 3), tabu_search(&p, DEFAULT_TENURE, t, 3)] {
                assert!(is_feasible_set(&inst, r.solution.satisfied.iter().copied()));
                assert!(r.value() <= best);
                assert!(r.value() >= r.construction_value);
                assert!(r.iterations >= 1);
            }
        }
    }

    #[test]
    fn empty_instance_heuristics() {
        let p = Problem::new(Instance::empty(1, 1), Formulation::Cs2, true).unwrap();
        let t = Duration::from_millis(20);
        assert_eq!(grasp(&p, DEFAULT_ALPHA, t, 0).value(), 0);
        assert_eq!(vns(&p, t, 0).value(), 0);
        assert_eq!(tabu_search(&p, DEFAULT_TENURE, t, 0).value(), 0);
    }

    #[test]
    fn tabu_capacity() {
        assert_eq!(TabuList::new(0.046, 1000).capacity(), 46);
        let mut t = TabuList::new(0.0, 1000);
        t.push(3);
        assert!(!t.contains(3));
        let mut t = TabuList::new(0.002, 1000);
        for k in 0..5 {
            t.push(k);
        }
        assert_eq!(t.len(), 2);
        assert!(t.contains(4) && t.contains(3) && !t.contains(2));
    }

    #[test]
    fn fingerprint_ignores_insertion_order() {
        assert_eq!(fingerprint(&Solution::new([3, 1, 2])), fingerprint(&Solution::new([1, 2, 3])));
        assert_ne!(fingerprint(&Solution::new([1, 2])), fingerprint(&Solution::new([1, 3])));
    }
}
