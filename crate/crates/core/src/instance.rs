//! Problem data: stations, demands, customers, fleets.
//!
//! An [`Instance`] holds `n` customers, each an ordered pair of demands in
//! opposite directions between the two stations, plus the starting fleet at
//! each station. Times are integer minutes within `[0, horizon]`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;
use thiserror::Error;

/// Minutes since the start of the planning horizon.
pub type Minute = u32;

/// 1-based customer identifier.
pub type CustomerId = usize;

pub const DEFAULT_HORIZON: Minute = 1440;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Station {
    A,
    B,
}

impl Station {
    pub fn other(self) -> Station {
        match self {
            Station::A => Station::B,
            Station::B => Station::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Station::A => 0,
            Station::B => 1,
        }
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Station::A => f.write_str("A"),
            Station::B => f.write_str("B"),
        }
    }
}

/// A single timed trip from `origin` to the other station.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Demand {
    pub origin: Station,
    pub start: Minute,
    pub end: Minute,
}

impl Demand {
    pub fn destination(&self) -> Station {
        self.origin.other()
    }

    pub fn duration(&self) -> Minute {
        self.end.saturating_sub(self.start)
    }
}

/// Which of a customer's two demands.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Leg {
    Outbound,
    Return,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Customer {
    pub id: CustomerId,
    pub outbound: Demand,
    pub ret: Demand,
}

impl Customer {
    /// Builds a customer whose outbound trip leaves `origin`; the return
    /// trip goes the other way.
    pub fn new(
        id: CustomerId,
        origin: Station,
        outbound: (Minute, Minute),
        ret: (Minute, Minute),
    ) -> Self {
        Customer {
            id,
            outbound: Demand {
                origin,
                start: outbound.0,
                end: outbound.1,
            },
            ret: Demand {
                origin: origin.other(),
                start: ret.0,
                end: ret.1,
            },
        }
    }

    /// Station the outbound trip leaves from.
    pub fn home(&self) -> Station {
        self.outbound.origin
    }

    pub fn leg(&self, leg: Leg) -> &Demand {
        match leg {
            Leg::Outbound => &self.outbound,
            Leg::Return => &self.ret,
        }
    }

    /// Return end minus outbound start.
    pub fn work_schedule(&self) -> i64 {
        i64::from(self.ret.end) - i64::from(self.outbound.start)
    }
}

/// Benchmark instance family.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Group {
    /// Independent driving times in 15..=60.
    St,
    /// One driving time in 15..=45 shared by both trips.
    Ft,
    /// Shared driving time plus a fixed working time in 60..=240.
    Fc,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::St => "st",
            Group::Ft => "ft",
            Group::Fc => "fc",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "st" => Ok(Group::St),
            "ft" => Ok(Group::Ft),
            "fc" => Ok(Group::Fc),
            other => Err(format!("unknown instance group `{other}`")),
        }
    }
}

/// Generator provenance written as a comment line in instance files.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Manifest {
    pub seed: u64,
    pub group: Group,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub customers: Vec<Customer>,
    pub fleet_a: u32,
    pub fleet_b: u32,
    pub horizon: Minute,
    pub manifest: Option<Manifest>,
}

impl Instance {
    pub fn new(customers: Vec<Customer>, fleet_a: u32, fleet_b: u32) -> Self {
        Instance {
            customers,
            fleet_a,
            fleet_b,
            horizon: DEFAULT_HORIZON,
            manifest: None,
        }
    }

    pub fn empty(fleet_a: u32, fleet_b: u32) -> Self {
        Self::new(Vec::new(), fleet_a, fleet_b)
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    pub fn fleet(&self, station: Station) -> u32 {
        match station {
            Station::A => self.fleet_a,
            Station::B => self.fleet_b,
        }
    }

    /// Customer by 1-based id. Ids are contiguous in valid instances.
    pub fn customer(&self, id: CustomerId) -> &Customer {
        &self.customers[id - 1]
    }

    pub fn ids(&self) -> impl Iterator<Item = CustomerId> + '_ {
        self.customers.iter().map(|c| c.id)
    }

    /// Sorted distinct time points touched by demands at `station`.
    pub fn time_points(&self, station: Station) -> Vec<Minute> {
        let mut times: Vec<Minute> = self
            .customers
            .iter()
            .flat_map(|c| [c.outbound, c.ret])
            .flat_map(|d| {
                let mut at = Vec::with_capacity(2);
                if d.origin == station {
                    at.push(d.start);
                }
                if d.destination() == station {
                    at.push(d.end);
                }
                at
            })
            .collect();
        times.sort_unstable();
        times.dedup();
        times
    }

    /// Every broken invariant, in customer order.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (pos, c) in self.customers.iter().enumerate() {
            if c.id != pos + 1 {
                out.push(Violation::IdOutOfSequence {
                    expected: pos + 1,
                    found: c.id,
                });
            }
            if c.outbound.origin == c.ret.origin {
                out.push(Violation::SameDirectionPair { customer: c.id });
            }
            for (leg, d) in [(Leg::Outbound, &c.outbound), (Leg::Return, &c.ret)] {
                if d.start >= d.end {
                    out.push(Violation::EmptyDemand { customer: c.id, leg });
                }
                if d.end > self.horizon {
                    out.push(Violation::BeyondHorizon { customer: c.id, leg });
                }
            }
            if c.ret.start < c.outbound.end {
                out.push(Violation::OverlappingDemands { customer: c.id });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(
            w,
            "carshare v1 n={} mA={} mB={} horizon={}",
            self.customers.len(),
            self.fleet_a,
            self.fleet_b,
            self.horizon
        )?;
        if let Some(m) = self.manifest {
            writeln!(w, "# seed={} group={}", m.seed, m.group)?;
        }
        for c in &self.customers {
            let dir = match c.home() {
                Station::A => "AB",
                Station::B => "BA",
            };
            writeln!(
                w,
                "{} {} {} {} {} {}",
                c.id, dir, c.outbound.start, c.outbound.end, c.ret.start, c.ret.end
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("instance text is ASCII")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
        let text = fs::read_to_string(path)?;
        Instance::parse(&text)
    }

    /// Parses the canonical text format and validates the result.
    pub fn parse(text: &str) -> Result<Instance, InstanceError> {
        let mut header: Option<(usize, u32, u32, Minute)> = None;
        let mut manifest = None;
        let mut customers = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(m) = parse_manifest(comment) {
                    manifest = Some(m);
                }
                continue;
            }
            if header.is_none() {
                header = Some(parse_header(line, line_no)?);
                continue;
            }
            customers.push(parse_customer(line, line_no)?);
        }

        let (n, fleet_a, fleet_b, horizon) = header.ok_or(InstanceError::Parse {
            line: 0,
            field: "header",
            message: "missing `carshare v1` header".into(),
        })?;
        if customers.len() != n {
            return Err(InstanceError::Parse {
                line: 1,
                field: "n",
                message: format!("header declares {n} customers, found {}", customers.len()),
            });
        }
        let inst = Instance {
            customers,
            fleet_a,
            fleet_b,
            horizon,
            manifest,
        };
        let violations = inst.validate();
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(InstanceError::Invalid(violations))
        }
    }
}

fn parse_manifest(comment: &str) -> Option<Manifest> {
    let mut seed = None;
    let mut group = None;
    for tok in comment.split_whitespace() {
        if let Some(v) = tok.strip_prefix("seed=") {
            seed = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("group=") {
            group = v.parse().ok();
        }
    }
    Some(Manifest {
        seed: seed?,
        group: group?,
    })
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, u32, u32, Minute), InstanceError> {
    let mut toks = line.split_whitespace();
    if toks.next() != Some("carshare") || toks.next() != Some("v1") {
        return Err(InstanceError::Parse {
            line: line_no,
            field: "header",
            message: "expected `carshare v1`".into(),
        });
    }
    let (mut n, mut ma, mut mb, mut horizon) = (None, None, None, None);
    for tok in toks {
        let (key, value) = tok.split_once('=').ok_or_else(|| InstanceError::Parse {
            line: line_no,
            field: "header",
            message: format!("malformed token `{tok}`"),
        })?;
        let field: &'static str = match key {
            "n" => "n",
            "mA" => "mA",
            "mB" => "mB",
            "horizon" => "horizon",
            _ => {
                return Err(InstanceError::Parse {
                    line: line_no,
                    field: "header",
                    message: format!("unknown key `{key}`"),
                })
            }
        };
        let v: i64 = value.parse().map_err(|_| InstanceError::Parse {
            line: line_no,
            field,
            message: format!("`{value}` is not an integer"),
        })?;
        if v < 0 {
            if field == "mA" || field == "mB" {
                return Err(InstanceError::NegativeFleet {
                    line: line_no,
                    field,
                    value: v,
                });
            }
            return Err(InstanceError::Parse {
                line: line_no,
                field,
                message: format!("negative value {v}"),
            });
        }
        let v = u32::try_from(v).map_err(|_| InstanceError::Parse {
            line: line_no,
            field,
            message: format!("value {v} out of range"),
        })?;
        match field {
            "n" => n = Some(v as usize),
            "mA" => ma = Some(v),
            "mB" => mb = Some(v),
            _ => horizon = Some(v),
        }
    }
    let missing = |field: &'static str| InstanceError::Parse {
        line: line_no,
        field,
        message: format!("header is missing `{field}=`"),
    };
    Ok((
        n.ok_or_else(|| missing("n"))?,
        ma.ok_or_else(|| missing("mA"))?,
        mb.ok_or_else(|| missing("mB"))?,
        horizon.unwrap_or(DEFAULT_HORIZON),
    ))
}

fn parse_customer(line: &str, line_no: usize) -> Result<Customer, InstanceError> {
    const FIELDS: [&str; 6] = ["id", "dir", "o_start", "o_end", "r_start", "r_end"];
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != FIELDS.len() {
        return Err(InstanceError::Parse {
            line: line_no,
            field: "customer",
            message: format!("expected 6 fields, found {}", toks.len()),
        });
    }
    let num = |i: usize| -> Result<u32, InstanceError> {
        toks[i].parse().map_err(|_| InstanceError::Parse {
            line: line_no,
            field: FIELDS[i],
            message: format!("`{}` is not a non-negative integer", toks[i]),
        })
    };
    let id = num(0)? as usize;
    let origin = match toks[1] {
        "AB" => Station::A,
        "BA" => Station::B,
        other => {
            return Err(InstanceError::Parse {
                line: line_no,
                field: "dir",
                message: format!("expected AB or BA, found `{other}`"),
            })
        }
    };
    Ok(Customer::new(id, origin, (num(2)?, num(3)?), (num(4)?, num(5)?)))
}

/// A broken instance invariant, tagged with the offending customer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    SameDirectionPair { customer: CustomerId },
    OverlappingDemands { customer: CustomerId },
    EmptyDemand { customer: CustomerId, leg: Leg },
    BeyondHorizon { customer: CustomerId, leg: Leg },
    IdOutOfSequence { expected: CustomerId, found: CustomerId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SameDirectionPair { customer } => {
                write!(f, "customer {customer}: same-direction pair")
            }
            Violation::OverlappingDemands { customer } => {
                write!(f, "customer {customer}: overlapping demands")
            }
            Violation::EmptyDemand { customer, leg } => {
                write!(f, "customer {customer}: {leg:?} demand does not end after it starts")
            }
            Violation::BeyondHorizon { customer, leg } => {
                write!(f, "customer {customer}: {leg:?} demand ends past the horizon")
            }
            Violation::IdOutOfSequence { expected, found } => {
                write!(f, "customer id {found} found where {expected} was expected")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: negative fleet {field}={value}")]
    NegativeFleet {
        line: usize,
        field: &'static str,
        value: i64,
    },
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A set of customers claimed to be simultaneously satisfiable. The type does
/// not check feasibility; see [`crate::feasibility`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Solution {
    pub satisfied: BTreeSet<CustomerId>,
}

impl Solution {
    pub fn new(ids: impl IntoIterator<Item = CustomerId>) -> Self {
        Solution {
            satisfied: ids.into_iter().collect(),
        }
    }

    pub fn value(&self) -> usize {
        self.satisfied.len()
    }

    pub fn contains(&self, id: CustomerId) -> bool {
        self.satisfied.contains(&id)
    }
}

/// Parameters for the random benchmark families.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub horizon: Minute,
    pub fleet_a: u32,
    pub fleet_b: u32,
    /// Inclusive driving-time range.
    pub drive: (Minute, Minute),
    /// Inclusive working-time range (`fc` only).
    pub work: (Minute, Minute),
}

impl GenParams {
    /// The published benchmark settings for `group`: one day, 10 cars per
    /// station.
    pub fn benchmark(group: Group) -> Self {
        let drive = match group {
            Group::St => (15, 60),
            Group::Ft | Group::Fc => (15, 45),
        };
        GenParams {
            horizon: DEFAULT_HORIZON,
            fleet_a: 10,
            fleet_b: 10,
            drive,
            work: (60, 240),
        }
    }

    /// Smallest horizon that admits every draw for `group`.
    fn required_horizon(&self, group: Group) -> Minute {
        match group {
            Group::St | Group::Ft => 2 * self.drive.1 + 1,
            Group::Fc => 2 * self.drive.1 + self.work.1,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("horizon {horizon} too short for group {group}: need at least {needed}")]
    HorizonTooShort {
        group: Group,
        horizon: Minute,
        needed: Minute,
    },
    #[error("empty range {0:?}")]
    EmptyRange((Minute, Minute)),
}

/// Deterministic draws for the instance generators.
///
/// The stream is SplitMix64 seeded with the user seed; an inclusive integer
/// range `[lo, hi]` maps a 64-bit output `x` to `lo + x mod (hi - lo + 1)`.
/// A coin is `x mod 2 == 0` for an outbound trip starting at station A.
pub struct Draws(SplitMix64);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws(SplitMix64::from_seed(seed.to_le_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self, lo: Minute, hi: Minute) -> Minute {
        debug_assert!(lo <= hi);
        let span = u64::from(hi - lo) + 1;
        lo + (self.next_u64() % span) as Minute
    }

    /// Start `t1` in `0..=max` drawn with weight `max - t1 + 1`, the number
    /// of valid second starts when those run from `t1 + gap` to `max + gap`.
    /// Following it with a uniform second start makes the pair uniform over
    /// all valid pairs.
    ///
    /// One draw `k` uniform in `[0, (max+1)(max+2)/2)` selects the smallest
    /// `j` with `(j+1)(j+2)/2 > k`, and `t1 = max - j`.
    pub fn pair_start(&mut self, max: Minute) -> Minute {
        let m = u64::from(max);
        let k = self.next_u64() % ((m + 1) * (m + 2) / 2);
        triangular_pick(k, max)
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64().is_multiple_of(2)
    }
}


fn triangular_pick(k: u64, max: Minute) -> Minute {
    let tri = |j: u64| (j + 1) * (j + 2) / 2;
    let mut j = ((2.0 * k as f64).sqrt() as u64).saturating_sub(1);
    while tri(j) <= k {
        j += 1;
    }
    while j > 0 && tri(j - 1) > k {
        j -= 1;
    }
    max - j as Minute
}

/// Generates `n` customers of `group` under `params`.
///
/// Per customer the draw order is: driving time(s), working time (`fc`),
/// `t1`, `t2` (not drawn for `fc`), direction coin. For `st` and `ft` the
/// pair `(t1, t2)` is uniform over all pairs meeting the constraints: `t1`
/// comes from [`Draws::pair_start`], then `t2` is uniform over its valid
/// range. For `fc`, `t1` is uniform over every start that fits the horizon.
pub fn generate(
    group: Group,
    n: usize,
    seed: u64,
    params: &GenParams,
) -> Result<Instance, GenError> {
    for range in [params.drive, params.work] {
        if range.0 > range.1 {
            return Err(GenError::EmptyRange(range));
        }
    }
    let needed = params.required_horizon(group);
    if params.horizon < needed {
        return Err(GenError::HorizonTooShort {
            group,
            horizon: params.horizon,
            needed,
        });
    }
    let h = params.horizon;
    let (dlo, dhi) = params.drive;
    let mut rng = Draws::new(seed);
    let mut customers = Vec::with_capacity(n);
    for id in 1..=n {
        let (outbound, ret) = match group {
            Group::St => {
                let d1 = rng.uniform(dlo, dhi);
                let d2 = rng.uniform(dlo, dhi);
                let t1 = rng.pair_start(h - 1 - d1 - d2);
                let t2 = rng.uniform(t1 + d1 + 1, h - d2);
                ((t1, t1 + d1), (t2, t2 + d2))
            }
            Group::Ft => {
                let d = rng.uniform(dlo, dhi);
                let t1 = rng.pair_start(h - 1 - 2 * d);
                let t2 = rng.uniform(t1 + d + 1, h - d);
                ((t1, t1 + d), (t2, t2 + d))
            }
            Group::Fc => {
                let d = rng.uniform(dlo, dhi);
                let w = rng.uniform(params.work.0, params.work.1);
                let t1 = rng.uniform(0, h - 2 * d - w);
                let t2 = t1 + d + w;
                ((t1, t1 + d), (t2, t2 + d))
            }
        };
        let origin = if rng.coin() { Station::A } else { Station::B };
        customers.push(Customer::new(id, origin, outbound, ret));
    }
    Ok(Instance {
        customers,
        fleet_a: params.fleet_a,
        fleet_b: params.fleet_b,
        horizon: h,
        manifest: Some(Manifest { seed, group }),
    })
}

pub fn generate_st(n: usize, seed: u64) -> Instance {
    generate(Group::St, n, seed, &GenParams::benchmark(Group::St)).expect("benchmark parameters are valid")
}

pub fn generate_ft(n: usize, seed: u64) -> Instance {
    generate(Group::Ft, n, seed, &GenParams::benchmark(Group::Ft)).expect("benchmark parameters are valid")
}

pub fn generate_fc(n: usize, seed: u64) -> Instance {
    generate(Group::Fc, n, seed, &GenParams::benchmark(Group::Fc)).expect("benchmark parameters are valid")
}

/// Small instances for exhaustive verification: horizon 200, 4 to 12
/// customers, 1 to 3 cars per station, groups cycling st, ft, fc.
///
/// The `fc` working time is scaled to 20..=80 so that it fits the short
/// horizon.
pub fn micro_corpus(count: usize, seed: u64) -> Vec<Instance> {
    let mut meta = Draws::new(seed ^ 0x6d69_6372_6f00_0000);
    (0..count)
        .map(|i| {
            let group = [Group::St, Group::Ft, Group::Fc][i % 3];
            let n = meta.uniform(4, 12) as usize;
            let mut params = GenParams::benchmark(group);
            params.horizon = 200;
            params.fleet_a = meta.uniform(1, 3);
            params.fleet_b = meta.uniform(1, 3);
            params.work = (20, 80);
            let inst_seed = meta.next_u64();
            generate(group, n, inst_seed, &params).expect("micro parameters fit the horizon")
        })
        .collect()
}

/// Hand-encoded fixtures used throughout the tests and docs.
pub mod fixtures {
    use super::*;

    /// Four customers over six time points per station; every demand arc of
    /// the network drawing has its own vertex pair.
    pub fn network_example(fleet_a: u32, fleet_b: u32) -> Instance {
        // a1..a6 = 10, 40, 55, 85, 115, 145; b1..b6 = 25, 40, 70, 85, 100, 130
        let customers = vec![
            Customer::new(1, Station::B, (40, 55), (85, 130)),
            Customer::new(2, Station::A, (10, 25), (130, 145)),
            Customer::new(3, Station::A, (10, 25), (85, 115)),
            Customer::new(4, Station::A, (40, 70), (100, 115)),
        ];
        Instance {
            horizon: 200,
            ..Instance::new(customers, fleet_a, fleet_b)
        }
    }

    /// Four customers that are only satisfiable all together (one car per
    /// station); every three-customer subset is infeasible.
    pub fn all_or_nothing() -> Instance {
        // a1..a4 = 10, 52, 95, 140; b1..b4 = 15, 57, 100, 145
        let customers = vec![
            Customer::new(1, Station::B, (15, 95), (140, 145)),
            Customer::new(2, Station::A, (52, 57), (100, 140)),
            Customer::new(3, Station::A, (10, 15), (57, 140)),
            Customer::new(4, Station::B, (15, 52), (95, 100)),
        ];
        Instance {
            horizon: 200,
            ..Instance::new(customers, 1, 1)
        }
    }

    /// Five same-direction customers whose pairwise nesting forms the
    /// order 1 > {2, 3} > 4 > 5, with 2 and 3 incomparable.
    pub fn nested_five() -> Instance {
        let customers = vec![
            Customer::new(1, Station::A, (0, 100), (200, 300)),
            Customer::new(2, Station::A, (10, 95), (205, 290)),
            Customer::new(3, Station::A, (5, 90), (210, 295)),
            Customer::new(4, Station::A, (20, 80), (220, 280)),
            Customer::new(5, Station::A, (30, 70), (230, 270)),
        ];
        Instance {
            horizon: 300,
            ..Instance::new(customers, 2, 2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_generators() {
        for inst in [generate_st(0, 7), generate_ft(0, 7), generate_fc(0, 7)] {
            assert!(inst.is_empty());
            assert_eq!((inst.fleet_a, inst.fleet_b), (10, 10));
        }
    }

    #[test]
    fn st_ranges() {
        let inst = generate_st(1000, 42);
        assert_eq!(inst.len(), 1000);
        assert!(inst.is_valid());
        for c in &inst.customers {
            for d in [c.outbound, c.ret] {
                assert!((15..=60).contains(&d.duration()));
                assert!(d.end <= 1440);
            }
            assert!(c.outbound.end < c.ret.start);
        }
    }

    #[test]
    fn ft_shared_duration() {
        let inst = generate_ft(1000, 42);
        for c in &inst.customers {
            assert_eq!(c.outbound.duration(), c.ret.duration());
            assert!((15..=45).contains(&c.outbound.duration()));
            assert!(c.outbound.end < c.ret.start && c.ret.end <= 1440);
        }
    }

    #[test]
    fn fc_working_time() {
        let inst = generate_fc(1000, 42);
        for c in &inst.customers {
            let d = c.outbound.duration();
            let w = c.ret.start - c.outbound.end;
            assert!((60..=240).contains(&w));
            assert_eq!(c.ret.start, c.outbound.start + d + w);
            assert_eq!(c.ret.duration(), d);
            assert!(c.ret.end <= 1440);
        }
    }

    fn mean(xs: impl Iterator<Item = u32>) -> f64 {
        let v: Vec<f64> = xs.map(f64::from).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn sample_means() {
        let st = generate_st(10_000, 1);
        let d = mean(st.customers.iter().flat_map(|c| [c.outbound.duration(), c.ret.duration()]));
        assert!((d - 37.5).abs() <= 0.5, "{d}");
        let ft = generate_ft(10_000, 1);
        let d = mean(ft.customers.iter().map(|c| c.outbound.duration()));
        assert!((d - 30.0).abs() <= 0.5, "{d}");
        let fc = generate_fc(10_000, 1);
        let w = mean(fc.customers.iter().map(|c| c.ret.start - c.outbound.end));
        assert!((w - 150.0).abs() <= 2.0, "{w}");
        for inst in [st, ft, fc] {
            let a = inst.customers.iter().filter(|c| c.home() == Station::A).count() as f64 / 1e4;
            assert!((a - 0.5).abs() <= 0.03, "{a}");
        }
    }

    #[test]
    fn pair_start_is_exact() {
        let max = 6u32;
        let total = (max as u64 + 1) * (max as u64 + 2) / 2;
        let mut counts = vec![0u64; max as usize + 1];
        for k in 0..total {
            counts[triangular_pick(k, max) as usize] += 1;
        }
        for t in 0..=max {
            assert_eq!(counts[t as usize], u64::from(max - t + 1));
        }
        let mut d = Draws::new(3);
        for _ in 0..10_000 {
            assert!(d.pair_start(max) <= max);
        }
        assert_eq!(Draws::new(3).pair_start(0), 0);
    }

    #[test]
    fn st_pairs_are_jointly_uniform() {
        // fixed durations make every valid (t1, t2) pair equally likely
        let mut p = GenParams::benchmark(Group::St);
        p.horizon = 12;
        p.drive = (2, 2);
        let inst = generate(Group::St, 60_000, 8, &p).unwrap();
        let mut counts = std::collections::HashMap::new();
        for c in &inst.customers {
            *counts.entry((c.outbound.start, c.ret.start)).or_insert(0u32) += 1;
        }
        // t1 in 0..=7, t2 in t1+3..=10: 36 pairs
        assert_eq!(counts.len(), 36);
        let expect = 60_000.0 / 36.0;
        for (&pair, &n) in &counts {
            assert!((f64::from(n) - expect).abs() < 0.12 * expect, "{pair:?} {n}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(generate_st(200, 9), generate_st(200, 9));
        assert_ne!(generate_st(200, 9), generate_st(200, 10));
    }

    #[test]
    fn short_horizon_is_rejected() {
        let mut p = GenParams::benchmark(Group::Fc);
        p.horizon = 200;
        assert!(matches!(
            generate(Group::Fc, 3, 1, &p),
            Err(GenError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn validation_flags_each_breach() {
        assert!(fixtures::all_or_nothing().validate().is_empty());
        assert!(fixtures::network_example(1, 1).validate().is_empty());

        let mut inst = fixtures::all_or_nothing();
        inst.customers[1].ret.origin = Station::A;
        let v = inst.validate();
        assert_eq!(v, vec![Violation::SameDirectionPair { customer: 2 }]);
        assert!(v[0].to_string().contains("same-direction pair"));

        let mut inst = fixtures::all_or_nothing();
        inst.customers[2].ret.start = 12;
        let v = inst.validate();
        assert_eq!(v, vec![Violation::OverlappingDemands { customer: 3 }]);
        assert!(v[0].to_string().contains("overlapping demands"));
    }

    #[test]
    fn equal_leg_boundary_is_accepted() {
        let c = Customer::new(1, Station::A, (0, 10), (10, 20));
        assert!(Instance::new(vec![c], 1, 1).is_valid());
    }

    #[test]
    fn parse_fixture_by_hand() {
        let text = "carshare v1 n=4 mA=1 mB=1 horizon=200\n\
                    1 BA 15 95 140 145\n\
                    2 AB 52 57 100 140\n\
                    3 AB 10 15 57 140\n\
                    4 BA 15 52 95 100\n";
        let inst = Instance::parse(text).unwrap();
        assert_eq!(inst.len(), 4);
        assert_eq!((inst.fleet_a, inst.fleet_b), (1, 1));
        assert_eq!(inst, fixtures::all_or_nothing());
    }

    #[test]
    fn negative_fleet_is_reported() {
        let err = Instance::parse("carshare v1 n=0 mA=-1 mB=2 horizon=1440\n").unwrap_err();
        assert!(matches!(err, InstanceError::NegativeFleet { field: "mA", value: -1, .. }));
        assert!(err.to_string().contains("negative fleet"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Instance::parse("carshare v1 n=1 mA=1 mB=1\n1 AX 0 10 20 30\n").unwrap_err();
        match err {
            InstanceError::Parse { line, field, .. } => assert_eq!((line, field), (2, "dir")),
            other => panic!("unexpected {other:?}"),
        }
        let err = Instance::parse("carshare v1 n=2 mA=1 mB=1\n1 AB 0 10 20 30\n").unwrap_err();
        assert!(matches!(err, InstanceError::Parse { field: "n", .. }));
        let err = Instance::parse("carshare v1 n=1 mA=1 mB=1\n1 AB 0 10 5 30\n").unwrap_err();
        assert!(matches!(err, InstanceError::Invalid(_)));
    }

    #[test]
    fn manifest_survives_round_trip() {
        let inst = generate_fc(25, 3);
        let text = inst.to_text();
        assert!(text.lines().nth(1).unwrap().starts_with("# seed=3 group=fc"));
        assert_eq!(Instance::parse(&text).unwrap(), inst);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        let inst = generate_st(50, 11);
        inst.write(&path).unwrap();
        assert_eq!(Instance::read(&path).unwrap(), inst);
    }

    #[test]
    fn micro_corpus_shape() {
        let corpus = micro_corpus(30, 5);
        assert_eq!(corpus.len(), 30);
        for inst in &corpus {
            assert!(inst.is_valid());
            assert!((4..=12).contains(&inst.len()));
            assert!((1..=3).contains(&inst.fleet_a) && (1..=3).contains(&inst.fleet_b));
            assert_eq!(inst.horizon, 200);
        }
    }

    #[test]
    fn time_points_are_sorted_and_distinct() {
        let inst = fixtures::network_example(1, 1);
        assert_eq!(inst.time_points(Station::A), vec![10, 40, 55, 85, 115, 145]);
        assert_eq!(inst.time_points(Station::B), vec![25, 40, 70, 85, 100, 130]);
    }
}
