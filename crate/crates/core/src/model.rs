//! Integer programs over a network: CS1 (flow conservation with one binary
//! per customer) and CS2 (CS1 plus precedence rows from the dominance
//! forest).
//!
//! Every demand arc of customer `c` uses the single column `xd_c`, so the
//! outbound and return flows are equal by construction. Source and
//! connecting arcs get continuous columns bounded by their capacities; arc
//! capacities are column bounds, not rows.

mod formats;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use formats::{read_lp, read_mps, FormatError};

use crate::instance::{CustomerId, Instance};
use crate::network::{ArcKind, Legs, Network, NetworkError};
use crate::preprocess::{minimize, ReductionStats};
use crate::priority::{forest_constraints, PriorityDag};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Cs1,
    Cs2,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Cs1 => "cs1",
            Formulation::Cs2 => "cs2",
        })
    }
}

impl std::str::FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cs1" => Ok(Formulation::Cs1),
            "cs2" => Ok(Formulation::Cs2),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub lower: i64,
    pub upper: i64,
    pub objective: i64,
    pub integer: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub name: String,
    pub sense: Sense,
    pub rhs: i64,
    /// `(column, coefficient)`, sorted by column, no zeros.
    pub coeffs: Vec<(usize, i64)>,
}

/// A maximization problem with integer data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    /// Column of each customer's satisfaction variable, by id - 1.
    pub customer_columns: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("precedence arc ({0}, {1}) names an unknown customer")]
    UnknownCustomer(CustomerId, CustomerId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Model {
    pub fn customers(&self) -> usize {
        self.customer_columns.len()
    }

    pub fn customer_column(&self, id: CustomerId) -> usize {
        self.customer_columns[id - 1]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.name == name)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.columns.iter().zip(x).map(|(c, v)| c.objective as f64 * v).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, &v) in self.columns.iter().zip(x) {
            worst = worst.max(c.lower as f64 - v).max(v - c.upper as f64);
        }
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().map(|&(j, a)| a as f64 * x[j]).sum();
            let gap = lhs - r.rhs as f64;
            worst = worst.max(match r.sense {
                Sense::Eq => gap.abs(),
                Sense::Le => gap,
                Sense::Ge => -gap,
            });
        }
        worst
    }

    fn push_column(&mut self, names: &mut HashMap<String, usize>, base: String, lower: i64, upper: i64, objective: i64, integer: bool) -> usize {
        let count = names.entry(base.clone()).or_insert(0);
        *count += 1;
        let name = if *count == 1 { base } else { format!("{base}_{count}") };
        self.columns.push(Column {
            name,
            lower,
            upper,
            objective,
            integer,
        });
        self.columns.len() - 1
    }
}

fn add_coeff(coeffs: &mut Vec<(usize, i64)>, col: usize, a: i64) {
    coeffs.push((col, a));
}

fn normalize(mut coeffs: Vec<(usize, i64)>) -> Vec<(usize, i64)> {
    coeffs.sort_unstable();
    let mut out: Vec<(usize, i64)> = Vec::with_capacity(coeffs.len());
    for (j, a) in coeffs {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0);
    out
}

/// CS1 over `net`.
pub fn build_cs1(net: &Network) -> Model {
    build(net, true)
}

/// CS1 plus one row `xd_c - xd_c' <= 0` per arc of `forest`.
pub fn build_cs2(net: &Network, forest: &PriorityDag) -> Result<Model, ModelError> {
    let mut model = build_cs1(net);
    add_precedence(&mut model, forest)?;
    Ok(model)
}

fn add_precedence(model: &mut Model, forest: &PriorityDag) -> Result<(), ModelError> {
    for &(c, c2) in &forest.arcs {
        if c == 0 || c2 == 0 || c > model.customers() || c2 > model.customers() {
            return Err(ModelError::UnknownCustomer(c, c2));
        }
        model.rows.push(Row {
            name: format!("prec_{c}_{c2}"),
            sense: Sense::Le,
            rhs: 0,
            coeffs: normalize(vec![(model.customer_column(c), 1), (model.customer_column(c2), -1)]),
        });
    }
    Ok(())
}

/// CS1 with separate outbound and return columns tied by `pair_<c>` rows;
/// for differential testing only.
pub fn build_unmerged(net: &Network) -> Model {
    build(net, false)
}

fn build(net: &Network, merged: bool) -> Model {
    let n = net.customers;
    let mut model = Model {
        name: "carshare".into(),
        columns: Vec::new(),
        rows: Vec::new(),
        customer_columns: Vec::with_capacity(n),
    };
    let mut names = HashMap::new();
    // upper bound of each customer column: the tightest arc it rides on
    let mut cust_cap = vec![1i64; n + 1];
    for a in net.arcs.iter().filter(|a| !a.owners.is_empty()) {
        for o in &a.owners {
            cust_cap[o.customer] = cust_cap[o.customer].min(i64::from(a.capacity));
        }
    }
    let mut return_columns = Vec::new();
    for (c, &cap) in cust_cap.iter().enumerate().skip(1) {
        let prefix = if merged { "xd" } else { "xo" };
        let col = model.push_column(&mut names, format!("{prefix}_{c}"), 0, cap, 1, true);
        model.customer_columns.push(col);
    }
    if !merged {
        for (c, &cap) in cust_cap.iter().enumerate().skip(1) {
            return_columns.push(model.push_column(&mut names, format!("xr_{c}"), 0, cap, 0, true));
        }
    }

    let mut vertex_rows: Vec<Vec<(usize, i64)>> = vec![Vec::new(); net.vertices.len()];
    let mut links = Vec::new();
    for a in &net.arcs {
        let col = match a.kind {
            _ if !a.owners.is_empty() => {
                let first = a.owners[0];
                let col_of = |o: crate::network::Owner| {
                    if !merged && o.legs == Legs::Return {
                        return_columns[o.customer - 1]
                    } else {
                        model.customer_columns[o.customer - 1]
                    }
                };
                let col = col_of(first);
                for &other in &a.owners[1..] {
                    links.push((first.customer, other.customer, col, col_of(other)));
                }
                col
            }
            ArcKind::Source => {
                let s = a.station.expect("source arcs name their station");
                model.push_column(&mut names, format!("src_{s}"), 0, i64::from(a.capacity), 0, false)
            }
            ArcKind::Connecting | ArcKind::Demand => model.push_column(
                &mut names,
                format!("conn_{}_{}", net.vertex_name(a.tail), net.vertex_name(a.head)),
                0,
                i64::from(a.capacity),
                0,
                false,
            ),
        };
        add_coeff(&mut vertex_rows[a.head], col, 1);
        add_coeff(&mut vertex_rows[a.tail], col, -1);
    }
    for (v, coeffs) in vertex_rows.into_iter().enumerate() {
        if v == net.source || v == net.sink {
            continue;
        }
        model.rows.push(Row {
            name: format!("flow_{}", net.vertex_name(v)),
            sense: Sense::Eq,
            rhs: 0,
            coeffs: normalize(coeffs),
        });
    }
    for (c, c2, j, j2) in links {
        model.rows.push(Row {
            name: format!("link_{c}_{c2}"),
            sense: Sense::Eq,
            rhs: 0,
            coeffs: normalize(vec![(j, 1), (j2, -1)]),
        });
    }
    if !merged {
        for c in 1..=n {
            model.rows.push(Row {
                name: format!("pair_{c}"),
                sense: Sense::Eq,
                rhs: 0,
                coeffs: normalize(vec![(model.customer_columns[c - 1], 1), (return_columns[c - 1], -1)]),
            });
        }
    }
    model
}

/// An instance with its (optionally reduced) network and model.
#[derive(Clone, Debug)]
pub struct Problem {
    pub instance: Instance,
    pub network: Network,
    pub model: Model,
    pub formulation: Formulation,
    pub forest: PriorityDag,
    pub reduction: Option<ReductionStats>,
}

impl Problem {
    pub fn new(instance: Instance, formulation: Formulation, reduce: bool) -> Result<Problem, ModelError> {
        let full = Network::build(&instance)?;
        let (network, reduction) = if reduce {
            let (min, _) = minimize(&full);
            let stats = ReductionStats::new(&full, &min);
            (min, Some(stats))
        } else {
            (full, None)
        };
        let forest = match formulation {
            Formulation::Cs1 => PriorityDag::new(instance.len(), Vec::new()),
            Formulation::Cs2 => forest_constraints(&instance),
        };
        let model = build_cs2(&network, &forest)?;
        Ok(Problem {
            instance,
            network,
            model,
            formulation,
            forest,
            reduction,
        })
    }

    /// Work schedule of each customer, by id - 1.
    pub fn work_schedules(&self) -> Vec<i64> {
        self.instance.customers.iter().map(|c| c.work_schedule()).collect()
    }
}
