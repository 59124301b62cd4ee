//! Branch-and-bound over the LP relaxation of CS1/CS2.
//!
//! Nodes carry customer fixings only; every node LP warm-starts from the
//! basis left by the previous one, which stays dual feasible because costs
//! never change. Bounds are floored since the objective counts customers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use serde::Serialize;

use crate::feasibility::{is_feasible_set, DisplacementIndex};
use crate::heuristics::{local_search, Constructor, SearchRng, SearchState};
use crate::instance::{CustomerId, Solution, Station};
use crate::lp::{LpStatus, Simplex};
use crate::model::Problem;
use crate::report::{relative_gap, Method, RunReport, RunStatus};

const INT_TOL: f64 = 1e-6;

/// Nodes between diving runs; the root always dives.
const DIVE_EVERY: u64 = 100;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStrategy {
    /// Best bound first, diving depth-first until the first incumbent.
    BestBound,
    /// Depth-first throughout.
    DepthFirst,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BnbOptions {
    pub time_limit: Duration,
    pub strategy: NodeStrategy,
    pub node_limit: Option<u64>,
    /// Greedy construction at the root and local search on every new
    /// incumbent. Rounding runs at every node regardless.
    pub heuristics: bool,
    /// Seed for the local search draws.
    pub seed: u64,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            time_limit: Duration::from_secs(600),
            strategy: NodeStrategy::BestBound,
            node_limit: None,
            heuristics: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub solution: Solution,
    pub lower_bound: usize,
    pub upper_bound: usize,
    /// Unfloored LP value at the root.
    pub root_bound: f64,
    pub gap_pct: f64,
    pub nodes: u64,
    pub lp_iterations: u64,
    pub improvements: u64,
    /// Value of the first incumbent.
    pub first_value: usize,
    pub elapsed: Duration,
    pub status: RunStatus,
    /// Bound pairs recorded whenever either bound moves.
    pub progress: Vec<Progress>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub nodes: u64,
    pub lower: usize,
    pub upper: usize,
}

impl SolveReport {
    pub fn to_run_report(&self, instance: &str, problem: &Problem) -> RunReport {
        RunReport {
            instance: instance.to_string(),
            method: Method::Bb,
            model: problem.formulation,
            n: problem.instance.len(),
            value: self.lower_bound,
            ub: Some(self.upper_bound as f64),
            gap_pct: Some(self.gap_pct),
            iterations: self.nodes,
            improvements: self.improvements,
            construction_value: Some(self.first_value),
            elapsed_s: self.elapsed.as_secs_f64(),
            status: self.status,
            seed: None,
        }
    }
}

/// Inserts customers in descending LP value (ties by id) wherever the
/// index allows; starts from the set of customers at value one when that
/// set is feasible on its own.
pub fn round_heuristic(values: &[f64], index: &mut DisplacementIndex) -> Solution {
    index.clear();
    let ones: Vec<CustomerId> = (1..=values.len()).filter(|&c| values[c - 1] >= 1.0 - INT_TOL).collect();
    let mut ones_in = false;
    if !ones.is_empty() {
        for &c in &ones {
            index.insert_unchecked(c).expect("customer in range");
        }
        ones_in = index.is_valid();
        if !ones_in {
            index.clear();
        }
    }
    let mut order: Vec<CustomerId> = (1..=values.len()).collect();
    order.sort_by(|&a, &b| values[b - 1].partial_cmp(&values[a - 1]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    for c in order {
        if index.contains(c) || (ones_in && values[c - 1] >= 1.0 - INT_TOL) {
            continue;
        }
        if index.can_insert(c).expect("customer in range") {
            index.insert_unchecked(c).expect("customer in range");
        }
    }
    index.solution()
}

/// Starts from every customer at one half or more, drops customers until
/// feasible, then inserts the rest as [`round_heuristic`] does.
///
/// Each drop targets the first cell with a negative prefix sum and removes
/// the lowest-valued member holding a car there (ties: larger work
/// schedule, then higher id).
pub fn repair_heuristic(values: &[f64], work: &[i64], index: &mut DisplacementIndex) -> Solution {
    index.clear();
    for c in (1..=values.len()).filter(|&c| values[c - 1] >= 0.5 - INT_TOL) {
        index.insert_unchecked(c).expect("customer in range");
    }
    while !index.is_valid() {
        let (station, cell) = [Station::A, Station::B]
            .into_iter()
            .filter_map(|s| index.tree(s).first_below(0, 0).map(|k| (s, k)))
            .next()
            .expect("an invalid index has a negative cell");
        let victim = index
            .members()
            .filter(|&c| {
                let f = index.footprint(c);
                let (lo, hi) = f.home_span();
                f.home == station && lo <= cell && cell <= hi
            })
            .min_by(|&a, &b| {
                values[a - 1]
                    .total_cmp(&values[b - 1])
                    .then(work[b - 1].cmp(&work[a - 1]))
                    .then(b.cmp(&a))
            })
            .expect("a negative cell has a member using it");
        index.remove_unchecked(victim).expect("member");
    }
    let mut order: Vec<CustomerId> = index.outsiders().collect();
    order.sort_by(|&a, &b| values[b - 1].total_cmp(&values[a - 1]).then(a.cmp(&b)));
    for c in order {
        if index.can_insert(c).expect("customer in range") {
            index.insert_unchecked(c).expect("customer in range");
        }
    }
    index.solution()
}

/// Persistent list of fixings from a node to the root.
struct Fix {
    customer: CustomerId,
    value: bool,
    parent: Option<Rc<Fix>>,
}

struct Node {
    fixes: Option<Rc<Fix>>,
    /// Parent LP value; bounds every LP in the subtree.
    bound: f64,
    depth: usize,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

fn floor_bound(v: f64) -> usize {
    (v + INT_TOL).floor().max(0.0) as usize
}

struct Search<'p> {
    problem: &'p Problem,
    lp: Simplex<f64>,
    index: DisplacementIndex,
    fixed: Vec<Option<bool>>,
    fixed_list: Vec<CustomerId>,
    incumbent: Solution,
    improvements: u64,
    first_value: Option<usize>,
    options: BnbOptions,
    deadline: Instant,
    rng: SearchRng,
}

impl Search<'_> {
    fn apply(&mut self, fixes: &Option<Rc<Fix>>) {
        let mut target: Vec<(CustomerId, bool)> = Vec::new();
        let mut cur = fixes.clone();
        while let Some(f) = cur {
            target.push((f.customer, f.value));
            cur = f.parent.clone();
        }
        let mut wanted = vec![None; self.fixed.len()];
        for &(c, v) in &target {
            wanted[c] = Some(v);
        }
        for c in std::mem::take(&mut self.fixed_list) {
            if wanted[c].is_none() {
                self.lp.fix_customer(c, None).expect("customer in model");
                self.fixed[c] = None;
            }
        }
        for (c, v) in target {
            if self.fixed[c] != Some(v) {
                self.lp.fix_customer(c, Some(v)).expect("customer in model");
                self.fixed[c] = Some(v);
            }
            self.fixed_list.push(c);
        }
    }

    fn offer(&mut self, sol: Solution) {
        debug_assert!(is_feasible_set(&self.problem.instance, sol.satisfied.iter().copied()));
        if self.first_value.is_none() {
            self.first_value = Some(sol.value());
        }
        if sol.value() > self.incumbent.value() {
            self.improvements += 1;
            self.incumbent = sol;
        }
    }

    /// Repeatedly fixes the fractional customer with the largest value to
    /// one (or to zero when that is infeasible) and resolves, until the LP
    /// is integral or cannot beat the incumbent. Fixings made here are
    /// undone before returning.
    fn dive(&mut self, mut values: Vec<f64>) {
        let mut changed = Vec::new();
        loop {
            if Instant::now() >= self.deadline {
                break;
            }
            let pick = (1..=values.len())
                .filter(|&c| self.fixed[c].is_none() && values[c - 1] > INT_TOL && values[c - 1] < 1.0 - INT_TOL)
                .max_by(|&a, &b| values[a - 1].total_cmp(&values[b - 1]).then(b.cmp(&a)));
            let Some(c) = pick else {
                self.offer(Solution::new((1..=values.len()).filter(|&c| values[c - 1] >= 0.5)));
                break;
            };
            changed.push(c);
            self.lp.fix_customer(c, Some(true)).expect("customer in model");
            let mut sol = self.lp.solve();
            if sol.status == LpStatus::Infeasible {
                self.lp.fix_customer(c, Some(false)).expect("customer in model");
                sol = self.lp.solve();
            }
            if sol.status != LpStatus::Optimal || floor_bound(sol.objective) <= self.incumbent.value() {
                break;
            }
            values = sol.customer_values(&self.problem.model);
        }
        for c in changed {
            self.lp.fix_customer(c, self.fixed[c]).expect("customer in model");
        }
    }

    /// Local search from the incumbent.
    fn polish(&mut self) {
        if !self.options.heuristics || Instant::now() >= self.deadline {
            return;
        }
        let mut state = SearchState::with_rng(&self.problem.instance, &self.incumbent, self.rng.clone()).expect("incumbents are feasible");
        state.set_deadline(Some(self.deadline));
        local_search(&mut state);
        self.rng = state.rng.clone();
        self.offer(state.solution());
    }
}

/// Branch on the customer whose value is closest to 1/2; ties go to the
/// larger work schedule, then the lower id.
fn branching_customer(values: &[f64], work: &[i64]) -> Option<CustomerId> {
    let mut best: Option<(f64, i64, CustomerId)> = None;
    for (k, &v) in values.iter().enumerate() {
        let frac = v - v.floor();
        if frac <= INT_TOL || frac >= 1.0 - INT_TOL {
            continue;
        }
        let dist = (frac - 0.5).abs();
        let c = k + 1;
        let better = match best {
            None => true,
            Some((bd, bw, _)) => dist < bd || (dist == bd && work[k] > bw),
        };
        if better {
            best = Some((dist, work[k], c));
        }
    }
    best.map(|(_, _, c)| c)
}

/// Solves `problem` to optimality or until the time limit.
pub fn solve_exact(problem: &Problem, options: BnbOptions) -> SolveReport {
    let start = Instant::now();
    let deadline = start + options.time_limit;
    let n = problem.model.customers();
    let work = problem.work_schedules();
    let mut lp = Simplex::<f64>::new(&problem.model).expect("models have finite bounds");
    lp.set_iteration_limit(usize::MAX);
    lp.set_deadline(Some(deadline));
    let mut s = Search {
        problem,
        lp,
        index: DisplacementIndex::new(&problem.instance),
        fixed: vec![None; n + 1],
        fixed_list: Vec::new(),
        incumbent: Solution::default(),
        improvements: 0,
        first_value: None,
        options,
        deadline,
        rng: SearchRng::seed_from_u64(options.seed),
    };
    let strategy = s.options.strategy;
    let node_limit = s.options.node_limit;

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut stack: Vec<Node> = Vec::new();
    let mut seq = 0u64;
    let mut nodes = 0u64;
    let mut root_bound = f64::INFINITY;
    let mut upper = n;
    let mut timed_out = false;
    let mut progress: Vec<Progress> = Vec::new();
    let mut record = |nodes: u64, lower: usize, upper: usize| {
        if progress.last().is_none_or(|p| p.lower != lower || p.upper != upper) {
            progress.push(Progress { nodes, lower, upper });
        }
    };
    stack.push(Node {
        fixes: None,
        bound: n as f64,
        depth: 0,
        seq,
    });

    loop {
        let diving = strategy == NodeStrategy::DepthFirst || s.first_value.is_none();
        let node = if diving {
            stack.pop().or_else(|| heap.pop())
        } else {
            // move any dive leftovers into the heap
            heap.extend(stack.drain(..));
            heap.pop()
        };
        let Some(node) = node else { break };
        // global bound over open nodes, including this one
        let open_max = heap
            .iter()
            .chain(stack.iter())
            .map(|x| x.bound)
            .fold(node.bound, f64::max);
        upper = upper.min(floor_bound(open_max)).max(s.incumbent.value());
        record(nodes, s.incumbent.value(), upper);
        if floor_bound(node.bound) <= s.incumbent.value() {
            continue;
        }
        if Instant::now() >= deadline || node_limit.is_some_and(|l| nodes >= l) {
            timed_out = true;
            heap.push(node);
            break;
        }
        nodes += 1;
        s.apply(&node.fixes);
        let sol = s.lp.solve();
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::IterationLimit => {
                // the truncated objective is still a valid bound
                if node.depth == 0 {
                    root_bound = sol.objective;
                }
                timed_out = true;
                heap.push(Node {
                    bound: sol.objective.min(node.bound),
                    ..node
                });
                break;
            }
            LpStatus::Optimal => {}
        }
        let bound = sol.objective.min(node.bound);
        let before = s.incumbent.value();
        if node.depth == 0 {
            root_bound = sol.objective;
            if s.options.heuristics {
                let built = Constructor::new(problem).construct(1.0, &mut s.rng, Some(deadline));
                s.offer(built.solution);
            }
        }
        let values = sol.customer_values(&problem.model);
        let rounded = round_heuristic(&values, &mut s.index);
        s.offer(rounded);
        let repaired = repair_heuristic(&values, &work, &mut s.index);
        s.offer(repaired);
        if s.options.heuristics && (nodes - 1).is_multiple_of(DIVE_EVERY) && floor_bound(bound) > s.incumbent.value() {
            s.dive(values.clone());
        }
        if s.incumbent.value() > before {
            s.polish();
        }
        if floor_bound(bound) <= s.incumbent.value() {
            continue;
        }
        let Some(c) = branching_customer(&values, &work) else {
            // integral: the customer columns carry a feasible solution
            let sat: Solution = Solution::new((1..=n).filter(|&c| values[c - 1] >= 0.5));
            s.offer(sat);
            continue;
        };
        let up_first = values[c - 1] >= 0.5;
        for value in [!up_first, up_first] {
            seq += 1;
            let child = Node {
                fixes: Some(Rc::new(Fix {
                    customer: c,
                    value,
                    parent: node.fixes.clone(),
                })),
                bound,
                depth: node.depth + 1,
                seq,
            };
            // the preferred child is pushed last so a dive pops it first
            if strategy == NodeStrategy::DepthFirst || s.first_value.is_none() {
                stack.push(child);
            } else {
                heap.push(child);
            }
        }
    }

    let lower = s.incumbent.value();
    let upper = if timed_out {
        let open_max = heap.iter().chain(stack.iter()).map(|x| x.bound).fold(lower as f64, f64::max);
        upper.min(floor_bound(open_max)).max(lower)
    } else {
        lower
    };
    record(nodes, lower, upper);
    let status = if upper == lower { RunStatus::Optimal } else { RunStatus::TimeLimit };
    SolveReport {
        first_value: s.first_value.unwrap_or(0),
        solution: s.incumbent,
        lower_bound: lower,
        upper_bound: upper,
        root_bound: if root_bound.is_finite() { root_bound } else { n as f64 },
        gap_pct: relative_gap(upper as f64, lower as f64),
        nodes,
        lp_iterations: s.lp.total_iterations() as u64,
        improvements: s.improvements,
        elapsed: start.elapsed(),
        status,
        progress,
    }
}
