//! Experiment data model, CSV ingestion and aggregate-table expansion.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed network over unit indices. An edge `i -> j` means unit `i` is
/// exposed to the treatment of unit `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    n_units: usize,
    out: Vec<Vec<usize>>,
}

impl Network {
    pub fn empty(n_units: usize) -> Self {
        Network {
            n_units,
            out: vec![Vec::new(); n_units],
        }
    }

    /// Builds a network from an edge list. Duplicate edges are dropped; the
    /// number dropped is returned alongside the network.
    pub fn from_edges(n_units: usize, edges: &[(usize, usize)]) -> Result<(Self, usize)> {
        let mut out = vec![Vec::new(); n_units];
        for &(src, dst) in edges {
            if src >= n_units || dst >= n_units {
                return Err(Error::DanglingEndpoint { src, dst, n_units });
            }
            if src == dst {
                return Err(Error::SelfLoop(src));
            }
            out[src].push(dst);
        }
        let mut duplicates = 0;
        for list in &mut out {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            duplicates += before - list.len();
        }
        Ok((Network { n_units, out }, duplicates))
    }

    /// Adds the reverse of every edge.
    pub fn symmetrized(&self) -> Self {
        let mut edges: Vec<(usize, usize)> = self.edges().collect();
        edges.extend(self.edges().map(|(i, j)| (j, i)));
        Network::from_edges(self.n_units, &edges)
            .expect("reversing valid edges stays valid")
            .0
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.out.iter().map(Vec::len).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_units];
        for list in &self.out {
            for &j in list {
                deg[j] += 1;
            }
        }
        deg
    }

    pub fn n_edges(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&j| (i, j)))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.out[i].binary_search(&j).is_ok()
    }
}

/// Unit-level experiment data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentData {
    outcomes: Vec<f64>,
    treatment: Vec<u8>,
    network: Network,
    covariates: BTreeMap<String, Vec<f64>>,
    counterfactual: Option<Vec<u8>>,
}

impl ExperimentData {
    pub fn new(
        outcomes: Vec<f64>,
        treatment: Vec<u8>,
        network: Network,
        covariates: BTreeMap<String, Vec<f64>>,
        counterfactual: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = treatment.len();
        check_len("outcomes", outcomes.len(), n)?;
        check_len("network", network.n_units(), n)?;
        for (row, &x) in treatment.iter().enumerate() {
            if x > 1 {
                return Err(Error::NonBinaryTreatment {
                    row,
                    value: f64::from(x),
                });
            }
        }
        for (row, &y) in outcomes.iter().enumerate() {
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::InvalidValue {
                    row,
                    column: "outcome".into(),
                    message: format!("{y} is outside [0, 1]"),
                });
            }
        }
        for (name, col) in &covariates {
            if col.len() != n {
                return Err(Error::InvalidValue {
                    row: col.len().min(n),
                    column: name.clone(),
                    message: format!("column has {} rows, expected {n}", col.len()),
                });
            }
        }
        if let Some(theta) = &counterfactual {
            check_len("counterfactual", theta.len(), n)?;
            if let Some(row) = theta.iter().position(|&t| t > 1) {
                return Err(Error::InvalidValue {
                    row,
                    column: "theta".into(),
                    message: "counterfactual must be 0 or 1".into(),
                });
            }
        }
        Ok(ExperimentData {
            outcomes,
            treatment,
            network,
            covariates,
            counterfactual,
        })
    }

    pub fn n_units(&self) -> usize {
        self.treatment.len()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&x| x == 1).count()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn covariates(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Result<&[f64]> {
        self.covariates
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn counterfactual(&self) -> Option<&[u8]> {
        self.counterfactual.as_deref()
    }

    /// Replaces the observed assignment and outcomes (used by simulators).
    pub fn with_observation(&self, treatment: Vec<u8>, outcomes: Vec<f64>) -> Result<Self> {
        ExperimentData::new(
            outcomes,
            treatment,
            self.network.clone(),
            self.covariates.clone(),
            self.counterfactual.clone(),
        )
    }

    pub fn with_network(&self, network: Network) -> Result<Self> {
        ExperimentData::new(
            self.outcomes.clone(),
            self.treatment.clone(),
            network,
            self.covariates.clone(),
            self.counterfactual.clone(),
        )
    }

    pub fn with_covariate(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        check_len("covariate column", values.len(), self.n_units())?;
        self.covariates.insert(name.to_string(), values);
        Ok(self)
    }

    /// Canonical JSON serialization, stable across runs.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("experiment data serializes")
    }

    /// Partition of units by the distinct values of the named columns
    /// (first-appearance order). The pseudo-column `"treatment"` refers to
    /// the observed assignment.
    pub fn partition_by(&self, columns: &[&str]) -> Result<Vec<usize>> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
        for &c in columns {
            if c == "treatment" {
                cols.push(self.treatment.iter().map(|&x| f64::from(x)).collect());
            } else {
                cols.push(self.covariate(c)?.to_vec());
            }
        }
        Ok(partition_rows(self.n_units(), |i| {
            cols.iter().map(|c| c[i].to_bits()).collect::<Vec<u64>>()
        }))
    }
}

pub(crate) fn partition_rows<K, F>(n: usize, key: F) -> Vec<usize>
where
    K: Ord,
    F: Fn(usize) -> K,
{
    let mut ids: BTreeMap<K, usize> = BTreeMap::new();
    (0..n)
        .map(|i| {
            let next = ids.len();
            *ids.entry(key(i)).or_insert(next)
        })
        .collect()
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            got,
            expected,
        })
    }
}

/// Column names used when reading unit CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub outcome: String,
    pub treatment: String,
    pub theta: Option<String>,
    /// Covariate columns to keep. `None` keeps every other numeric column.
    pub covariates: Option<Vec<String>>,
    /// Treat the edge file as undirected and add reverse edges.
    pub undirected: bool,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            outcome: "y".into(),
            treatment: "x".into(),
            theta: None,
            covariates: None,
            undirected: false,
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::Io {
                path: path.to_path_buf(),
                source: io,
            };
        }
        unreachable!()
    }
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_f64(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| Error::InvalidValue {
        row,
        column: column.to_string(),
        message: format!("`{raw}` is not a number"),
    })
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes a unit CSV (`y`, `x`, `theta` when known, then covariates in name
/// order) and optionally an edge CSV (`src,dst`) readable by [`load_experiment`].
pub fn write_experiment(data: &ExperimentData, unit_csv: &Path, edge_csv: Option<&Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(unit_csv).map_err(|e| csv_err(unit_csv, e))?;
    let mut header = vec!["y".to_string(), "x".to_string()];
    if data.counterfactual().is_some() {
        header.push("theta".into());
    }
    header.extend(data.covariates().keys().cloned());
    w.write_record(&header).map_err(|e| csv_err(unit_csv, e))?;
    for i in 0..data.n_units() {
        let mut rec = vec![data.outcomes()[i].to_string(), data.treatment()[i].to_string()];
        if let Some(t) = data.counterfactual() {
            rec.push(t[i].to_string());
        }
        rec.extend(data.covariates().values().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(|e| csv_err(unit_csv, e))?;
    }
    w.flush().map_err(|e| write_err(unit_csv, e))?;
    if let Some(path) = edge_csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["src", "dst"]).map_err(|e| csv_err(path, e))?;
        for (a, b) in data.network().edges() {
            w.write_record([a.to_string(), b.to_string()]).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| write_err(path, e))?;
    }
    Ok(())
}

/// Reads a unit CSV and an optional edge CSV (`src,dst`, zero-based).
pub fn load_experiment(
    unit_csv: &Path,
    edge_csv: Option<&Path>,
    schema: &Schema,
) -> Result<ExperimentData> {
    let mut reader = open_csv(unit_csv)?;
    let headers = reader.headers().map_err(|e| csv_err(unit_csv, e))?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_col = find(&schema.outcome)?;
    let x_col = find(&schema.treatment)?;
    let theta_col = schema.theta.as_deref().map(find).transpose()?;
    let cov_cols: Vec<(String, usize)> = match &schema.covariates {
        Some(names) => names
            .iter()
            .map(|n| find(n).map(|c| (n.clone(), c)))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != y_col && c != x_col && Some(c) != theta_col)
            .map(|(c, h)| (h.to_string(), c))
            .collect(),
    };

    let mut outcomes = Vec::new();
    let mut treatment = Vec::new();
    let mut theta = theta_col.map(|_| Vec::new());
    let mut covs: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(unit_csv, e))?;
        let x = parse_f64(&record[x_col], row, &schema.treatment)?;
        if x != 0.0 && x != 1.0 {
            return Err(Error::NonBinaryTreatment { row, value: x });
        }
        treatment.push(x as u8);
        outcomes.push(parse_f64(&record[y_col], row, &schema.outcome)?);
        if let (Some(c), Some(t)) = (theta_col, theta.as_mut()) {
            let v = parse_f64(&record[c], row, "theta")?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidValue {
                    row,
                    column: "theta".into(),
                    message: format!("{v} is not binary"),
                });
            }
            t.push(v as u8);
        }
        for (k, (name, c)) in cov_cols.iter().enumerate() {
            covs[k].push(parse_f64(&record[*c], row, name)?);
        }
    }
    let n = treatment.len();

    let network = match edge_csv {
        None => Network::empty(n),
        Some(path) => {
            let mut reader = open_csv(path)?;
            let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
            let col = |name: &str| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::MissingColumn(name.to_string()))
            };
            let (s, d) = (col("src")?, col("dst")?);
            let mut edges = Vec::new();
            for (row, record) in reader.records().enumerate() {
                let record = record.map_err(|e| csv_err(path, e))?;
                let parse = |c: usize, name: &str| {
                    record[c].parse::<usize>().map_err(|_| Error::InvalidValue {
                        row,
                        column: name.to_string(),
                        message: format!("`{}` is not a unit index", &record[c]),
                    })
                };
                edges.push((parse(s, "src")?, parse(d, "dst")?));
            }
            if schema.undirected {
                let rev: Vec<_> = edges.iter().map(|&(a, b)| (b, a)).collect();
                edges.extend(rev);
            }
            let (net, dups) = Network::from_edges(n, &edges)?;
            let expected_dups = if schema.undirected { edges.len() / 2 } else { 0 };
            // Undirected input with both directions listed produces benign duplicates.
            if dups > 0 && !(schema.undirected && dups <= expected_dups) {
                log::warn!("{}: dropped {dups} duplicate edge(s)", path.display());
            }
            net
        }
    };

    let covariates = cov_cols
        .into_iter()
        .map(|(name, _)| name)
        .zip(covs)
        .collect();
    ExperimentData::new(outcomes, treatment, network, covariates, theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treated,
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub arm: Arm,
    pub events: u64,
    pub size: u64,
}

/// Event counts per (group, arm) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn new(rows: Vec<AggregateRow>) -> Result<Self> {
        for (row, r) in rows.iter().enumerate() {
            if r.size == 0 {
                return Err(Error::InvalidAggregate {
                    row,
                    message: "size must be positive".into(),
                });
            }
            if r.events > r.size {
                return Err(Error::InvalidAggregate {
                    row,
                    message: format!("events {} exceed size {}", r.events, r.size),
                });
            }
        }
        Ok(AggregateTable { rows })
    }

    /// Reads `group,arm,events,size`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = open_csv(path)?;
        let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (g, a, e, s) = (col("group")?, col("arm")?, col("events")?, col("size")?);
        let mut rows = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|err| csv_err(path, err))?;
            let arm = match record[a].to_ascii_lowercase().as_str() {
                "treated" | "treatment" | "1" => Arm::Treated,
                "control" | "placebo" | "0" => Arm::Control,
                other => {
                    return Err(Error::InvalidAggregate {
                        row,
                        message: format!("unknown arm `{other}`"),
                    })
                }
            };
            let count = |c: usize, name: &str| {
                record[c].parse::<u64>().map_err(|_| Error::InvalidAggregate {
                    row,
                    message: format!("{name} `{}` is not a count", &record[c]),
                })
            };
            rows.push(AggregateRow {
                group: record[g].to_string(),
                arm,
                events: count(e, "events")?,
                size: count(s, "size")?,
            });
        }
        AggregateTable::new(rows)
    }

    /// Group labels in first-appearance order.
    pub fn groups(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.group.as_str()) {
                seen.push(&r.group);
            }
        }
        seen
    }

    pub fn total_units(&self) -> u64 {
        self.rows.iter().map(|r| r.size).sum()
    }
}

/// Numeric code for a group label: the label itself when it parses as a
/// number, otherwise its first-appearance index.
fn group_code(labels: &[&str]) -> Vec<f64> {
    let parsed: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    match parsed {
        Some(v) => v,
        None => (0..labels.len()).map(|i| i as f64).collect(),
    }
}

/// Expands an aggregate table into unit-level data: group-major, treated
/// before control, event units first within each cell. The group code is
/// stored in the `group` covariate.
pub fn expand_aggregate(table: &AggregateTable) -> Result<ExperimentData> {
    let table = AggregateTable::new(table.rows.clone())?;
    let groups = table.groups();
    let codes = group_code(&groups);
    let n = table.total_units() as usize;
    let mut outcomes = Vec::with_capacity(n);
    let mut treatment = Vec::with_capacity(n);
    let mut group_col = Vec::with_capacity(n);
    for (g, label) in groups.iter().enumerate() {
        for arm in [Arm::Treated, Arm::Control] {
            for r in table.rows.iter().filter(|r| r.group == *label && r.arm == arm) {
                let x = u8::from(arm == Arm::Treated);
                for k in 0..r.size {
                    outcomes.push(if k < r.events { 1.0 } else { 0.0 });
                    treatment.push(x);
                    group_col.push(codes[g]);
                }
            }
        }
    }
    let mut covariates = BTreeMap::new();
    covariates.insert("group".to_string(), group_col);
    ExperimentData::new(outcomes, treatment, Network::empty(n), covariates, None)
}

/// Re-aggregates unit data over (group column, arm), in the same row order
/// that [`expand_aggregate`] consumes. Group labels are formatted codes.
pub fn reaggregate(data: &ExperimentData, group_column: &str) -> Result<AggregateTable> {
    let group = data.covariate(group_column)?;
    let mut order: Vec<f64> = Vec::new();
    for &g in group {
        if !order.iter().any(|&o| o.to_bits() == g.to_bits()) {
            order.push(g);
        }
    }
    let mut rows = Vec::new();
    for &g in &order {
        for arm in [Arm::Treated, Arm::Control] {
            let x = u8::from(arm == Arm::Treated);
            let (mut events, mut size) = (0u64, 0u64);
            for i in 0..data.n_units() {
                if group[i].to_bits() == g.to_bits() && data.treatment()[i] == x {
                    size += 1;
                    if data.outcomes()[i] >= 0.5 {
                        events += 1;
                    }
                }
            }
            if size > 0 {
                rows.push(AggregateRow {
                    group: format!("{g}"),
                    arm,
                    events,
                    size,
                });
            }
        }
    }
    AggregateTable::new(rows)
}
