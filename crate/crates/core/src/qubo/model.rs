use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::build::ModelMetadata;
use crate::error::{Error, Result};

/// Name of one binary variable of a DDPP Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    /// `x[i][j]`: drone `i` performs delivery `j`.
    Assign { drone: usize, delivery: usize },
    /// `y[i]`: drone `i` is used.
    Used { drone: usize },
    /// `s[i][l]`: bit `l` of drone `i`'s unused battery.
    BatterySlack { drone: usize, bit: usize },
    /// `t[i][p]` for conflicting pair `p`, or the shared `t[i]`.
    ConflictSlack { drone: usize, pair: Option<usize> },
    /// `r[i][j]`: slack of `x[i][j] <= y[i]`.
    LinkSlack { drone: usize, delivery: usize },
    /// `p[i][l]`: bit `l` of the slack of `y[i] <= sum_j x[i][j]`.
    UsageSlack { drone: usize, bit: usize },
}

impl VarKey {
    pub fn drone(&self) -> usize {
        match *self {
            VarKey::Assign { drone, .. }
            | VarKey::Used { drone }
            | VarKey::BatterySlack { drone, .. }
            | VarKey::ConflictSlack { drone, .. }
            | VarKey::LinkSlack { drone, .. }
            | VarKey::UsageSlack { drone, .. } => drone,
        }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarKey::Assign { drone, delivery } => write!(f, "x[{drone}][{delivery}]"),
            VarKey::Used { drone } => write!(f, "y[{drone}]"),
            VarKey::BatterySlack { drone, bit } => write!(f, "s[{drone}][{bit}]"),
            VarKey::ConflictSlack { drone, pair: Some(p) } => write!(f, "t[{drone}][{p}]"),
            VarKey::ConflictSlack { drone, pair: None } => write!(f, "t[{drone}]"),
            VarKey::LinkSlack { drone, delivery } => write!(f, "r[{drone}][{delivery}]"),
            VarKey::UsageSlack { drone, bit } => write!(f, "p[{drone}][{bit}]"),
        }
    }
}

impl FromStr for VarKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed variable key `{s}`"));
        let mut chars = s.chars();
        let kind = chars.next().ok_or_else(bad)?;
        let rest = chars.as_str();
        let mut indices = Vec::new();
        let mut tail = rest;
        while !tail.is_empty() {
            let inner = tail.strip_prefix('[').ok_or_else(bad)?;
            let close = inner.find(']').ok_or_else(bad)?;
            indices.push(inner[..close].parse::<usize>().map_err(|_| bad())?);
            tail = &inner[close + 1..];
        }
        let key = match (kind, indices.as_slice()) {
            ('x', &[drone, delivery]) => VarKey::Assign { drone, delivery },
            ('y', &[drone]) => VarKey::Used { drone },
            ('s', &[drone, bit]) => VarKey::BatterySlack { drone, bit },
            ('t', &[drone, p]) => VarKey::ConflictSlack { drone, pair: Some(p) },
            ('t', &[drone]) => VarKey::ConflictSlack { drone, pair: None },
            ('r', &[drone, delivery]) => VarKey::LinkSlack { drone, delivery },
            ('p', &[drone, bit]) => VarKey::UsageSlack { drone, bit },
            _ => return Err(bad()),
        };
        Ok(key)
    }
}

/// A quadratic pseudo-boolean function
/// `E(z) = offset + sum_v linear[v] z_v + sum_{u<v} quadratic[u,v] z_u z_v`
/// over a fixed registry of named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboModel {
    variables: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
    metadata: Option<ModelMetadata>,
}

impl QuboModel {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[VarKey] {
        &self.variables
    }

    pub fn index_of(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Upper-triangular couplings keyed by registry indices `(u, v)`, `u < v`.
    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn metadata(&self) -> Option<&ModelMetadata> {
        self.metadata.as_ref()
    }

    pub(crate) fn set_metadata(&mut self, metadata: ModelMetadata) {
        self.metadata = Some(metadata);
    }

    /// Energy of a full assignment, in registry order.
    pub fn energy(&self, bits: &[bool]) -> Result<f64> {
        if bits.len() < self.variables.len() {
            return Err(Error::MissingVariable(self.variables[bits.len()].to_string()));
        }
        if bits.len() > self.variables.len() {
            return Err(Error::InvalidArgument(format!(
                "assignment has {} bits but the model has {} variables",
                bits.len(),
                self.variables.len()
            )));
        }
        Ok(self.energy_unchecked(bits))
    }

    pub(crate) fn energy_unchecked(&self, bits: &[bool]) -> f64 {
        let mut e = self.offset;
        for (v, &c) in self.linear.iter().enumerate() {
            if bits[v] {
                e += c;
            }
        }
        for (&(u, v), &c) in &self.quadratic {
            if bits[u] && bits[v] {
                e += c;
            }
        }
        e
    }

    /// Energy of an assignment given by variable name. Every registered
    /// variable must be present.
    pub fn energy_of(&self, bits: &HashMap<VarKey, bool>) -> Result<f64> {
        let dense = self
            .variables
            .iter()
            .map(|k| bits.get(k).copied().ok_or_else(|| Error::MissingVariable(k.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.energy_unchecked(&dense))
    }

    /// Largest absolute coefficient, offset excluded.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.linear
            .iter()
            .chain(self.quadratic.values())
            .fold(0.0f64, |acc, c| acc.max(c.abs()))
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> QuboModel {
        let mut out = self.clone();
        out.offset *= factor;
        out.linear.iter_mut().for_each(|c| *c *= factor);
        out.quadratic.values_mut().for_each(|c| *c *= factor);
        out
    }

    pub fn to_file_format(&self) -> QuboFile {
        let name = |v: usize| self.variables[v].to_string();
        QuboFile {
            offset: self.offset,
            variables: self.variables.iter().map(ToString::to_string).collect(),
            linear: self
                .linear
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(v, &c)| (name(v), c))
                .collect(),
            quadratic: self
                .quadratic
                .iter()
                .map(|(&(u, v), &c)| (name(u), name(v), c))
                .collect(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_file_format(file: QuboFile) -> Result<Self> {
        let mut builder = QuboBuilder::new();
        for name in &file.variables {
            let key: VarKey = name.parse()?;
            if builder.index_of(&key).is_some() {
                return Err(Error::InvalidArgument(format!("variable {name} listed twice")));
            }
            builder.add_var(key);
        }
        let lookup = |builder: &QuboBuilder, name: &str| -> Result<usize> {
            let key: VarKey = name.parse()?;
            builder
                .index_of(&key)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown variable {name}")))
        };
        for (name, c) in &file.linear {
            let v = lookup(&builder, name)?;
            builder.add_linear(v, *c);
        }
        for (a, b, c) in &file.quadratic {
            let u = lookup(&builder, a)?;
            let v = lookup(&builder, b)?;
            builder.add_quadratic(u, v, *c);
        }
        builder.add_offset(file.offset);
        let mut model = builder.finish()?;
        model.metadata = file.metadata;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_format()).expect("model serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: QuboFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_file_format(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// On-disk form of a [`QuboModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuboFile {
    pub offset: f64,
    pub variables: Vec<String>,
    pub linear: BTreeMap<String, f64>,
    pub quadratic: Vec<(String, String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<ModelMetadata>,
}

/// Incrementally accumulates a [`QuboModel`].
#[derive(Debug, Default)]
pub struct QuboBuilder {
    variables: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl QuboBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `key` (if new) and returns its index.
    pub fn add_var(&mut self, key: VarKey) -> usize {
        if let Some(&v) = self.index.get(&key) {
            return v;
        }
        let v = self.variables.len();
        self.variables.push(key);
        self.index.insert(key, v);
        self.linear.push(0.0);
        v
    }

    pub fn index_of(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn add_offset(&mut self, c: f64) {
        self.offset += c;
    }

    pub fn add_linear(&mut self, v: usize, c: f64) {
        self.linear[v] += c;
    }

    /// Adds `c * z_u * z_v`; a diagonal term folds into the linear part.
    pub fn add_quadratic(&mut self, u: usize, v: usize, c: f64) {
        if u == v {
            self.linear[u] += c;
            return;
        }
        let key = if u < v { (u, v) } else { (v, u) };
        *self.quadratic.entry(key).or_insert(0.0) += c;
    }

    /// Adds `weight * (sum_t coef_t * z_t + constant)^2`.
    pub fn add_squared(&mut self, weight: f64, terms: &[(usize, f64)], constant: f64) {
        self.offset += weight * constant * constant;
        for (a, &(u, cu)) in terms.iter().enumerate() {
            // z^2 = z for binaries.
            self.linear[u] += weight * (cu * cu + 2.0 * constant * cu);
            for &(v, cv) in &terms[a + 1..] {
                self.add_quadratic(u, v, 2.0 * weight * cu * cv);
            }
        }
    }

    pub fn finish(mut self) -> Result<QuboModel> {
        self.quadratic.retain(|_, c| *c != 0.0);
        let finite = self.offset.is_finite()
            && self.linear.iter().all(|c| c.is_finite())
            && self.quadratic.values().all(|c| c.is_finite());
        if !finite {
            return Err(Error::Build(
                "coefficient magnitude exceeds the representable range".into(),
            ));
        }
        Ok(QuboModel {
            variables: self.variables,
            index: self.index,
            linear: self.linear,
            quadratic: self.quadratic,
            offset: self.offset,
            metadata: None,
        })
    }
}
