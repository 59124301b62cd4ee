//! Per-run reports and their aggregation into table rows.

use std::fmt;

use serde::Serialize;

use crate::model::Formulation;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bb,
    Grasp,
    Vns,
    Ts,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bb => "bb",
            Method::Grasp => "grasp",
            Method::Vns => "vns",
            Method::Ts => "ts",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bb" => Ok(Method::Bb),
            "grasp" => Ok(Method::Grasp),
            "vns" => Ok(Method::Vns),
            "ts" => Ok(Method::Ts),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// Proven optimal.
    Optimal,
    /// Stopped by the time limit.
    TimeLimit,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Optimal => "optimal",
            RunStatus::TimeLimit => "time-limit",
        })
    }
}

/// One solver run on one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub instance: String,
    pub method: Method,
    pub model: Formulation,
    pub n: usize,
    pub value: usize,
    /// Upper bound; exact methods only.
    pub ub: Option<f64>,
    /// `100 (ub - value) / ub`; exact methods only.
    pub gap_pct: Option<f64>,
    /// Nodes for branch-and-bound, outer iterations for the heuristics.
    pub iterations: u64,
    /// Incumbent improvements.
    pub improvements: u64,
    pub construction_value: Option<usize>,
    pub elapsed_s: f64,
    pub status: RunStatus,
    pub seed: Option<u64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str =
        "instance,method,model,n,value,ub,gap_pct,iterations,improvements,construction_value,elapsed_s,status,seed";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3},{},{}",
            self.instance,
            self.method,
            self.model,
            self.n,
            self.value,
            opt(self.ub.map(|v| format!("{v}"))),
            opt(self.gap_pct.map(|v| format!("{v:.3}"))),
            self.iterations,
            self.improvements,
            opt(self.construction_value.map(|v| v.to_string())),
            self.elapsed_s,
            self.status,
            opt(self.seed.map(|v| v.to_string())),
        )
    }
}

/// `100 (ub - lb) / ub`, zero when `ub` is zero.
pub fn relative_gap(ub: f64, lb: f64) -> f64 {
    if ub <= 0.0 {
        0.0
    } else {
        100.0 * (ub - lb) / ub
    }
}

/// Sample mean and standard deviation (n - 1 denominator; zero for a
/// single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One table row over a set of runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub set: String,
    pub runs: usize,
    pub optimal: usize,
    pub value: (f64, f64),
    pub gap_pct: Option<(f64, f64)>,
    pub iterations: (f64, f64),
    pub improvements: (f64, f64),
}

impl Aggregate {
    pub fn new(set: impl Into<String>, runs: &[RunReport]) -> Self {
        let col = |f: &dyn Fn(&RunReport) -> f64| mean_sd(&runs.iter().map(f).collect::<Vec<_>>());
        let gaps: Vec<f64> = runs.iter().filter_map(|r| r.gap_pct).collect();
        Aggregate {
            set: set.into(),
            runs: runs.len(),
            optimal: runs.iter().filter(|r| r.status == RunStatus::Optimal).count(),
            value: col(&|r| r.value as f64),
            gap_pct: (!gaps.is_empty()).then(|| mean_sd(&gaps)),
            iterations: col(&|r| r.iterations as f64),
            improvements: col(&|r| r.improvements as f64),
        }
    }

    pub const CSV_HEADER: &'static str =
        "set,runs,opt,avg_value,sd_value,avg_gap_pct,sd_gap_pct,avg_iterations,sd_iterations,avg_improvements,sd_improvements";

    pub fn to_csv(&self) -> String {
        let (g, gs) = match self.gap_pct {
            Some((g, s)) => (format!("{g:.3}"), format!("{s:.3}")),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{:.2},{:.2},{},{},{:.2},{:.2},{:.2},{:.2}",
            self.set,
            self.runs,
            self.optimal,
            self.value.0,
            self.value.1,
            g,
            gs,
            self.iterations.0,
            self.iterations.1,
            self.improvements.0,
            self.improvements.1
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(value: usize, gap: Option<f64>, status: RunStatus) -> RunReport {
        RunReport {
            instance: "x".into(),
            method: Method::Bb,
            model: Formulation::Cs2,
            n: 10,
            value,
            ub: gap.map(|_| 10.0),
            gap_pct: gap,
            iterations: 3,
            improvements: 1,
            construction_value: None,
            elapsed_s: 0.5,
            status,
            seed: Some(4),
        }
    }

    #[test]
    fn gap_formula() {
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert_eq!(relative_gap(10.0, 9.0), 10.0);
        assert_eq!(relative_gap(4.0, 4.0), 0.0);
    }

    #[test]
    fn json_fields() {
        let v: serde_json::Value = serde_json::from_str(&report(9, Some(10.0), RunStatus::TimeLimit).to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in [
            "instance",
            "method",
            "model",
            "n",
            "value",
            "ub",
            "gap_pct",
            "iterations",
            "improvements",
            "construction_value",
            "elapsed_s",
            "status",
            "seed",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(v["status"], "time-limit");
        assert_eq!(v["method"], "bb");
        assert_eq!(v["model"], "cs2");
    }

    #[test]
    fn csv_columns_match_header() {
        let r = report(9, None, RunStatus::Optimal);
        assert_eq!(r.to_csv().split(',').count(), RunReport::CSV_HEADER.split(',').count());
        let a = Aggregate::new("st", &[r.clone(), report(7, Some(30.0), RunStatus::TimeLimit)]);
        assert_eq!(a.optimal, 1);
        assert_eq!(a.value, (8.0, 2f64.sqrt()));
        assert_eq!(a.gap_pct, Some((30.0, 0.0)));
        assert_eq!(a.to_csv().split(',').count(), Aggregate::CSV_HEADER.split(',').count());
    }

    #[test]
    fn mean_sd_edges() {
        assert_eq!(mean_sd(&[]), (0.0, 0.0));
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
        assert_eq!(mean_sd(&[1.0, 3.0]).0, 2.0);
    }
}
