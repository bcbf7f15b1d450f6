//! Cohen's kappa between a human rater and a machine rater making binary
//! accept/reject decisions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// 2x2 joint decision counts. Rows are the human rater, columns the machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Both yes.
    pub a: u64,
    /// Human yes, machine no.
    pub b: u64,
    /// Human no, machine yes.
    pub c: u64,
    /// Both no.
    pub d: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgreementError {
    #[error("no decisions to compare")]
    Empty,
    #[error("rater id sets differ: {only_human} only rated by the human, {only_machine} only by the machine")]
    IdMismatch { only_human: usize, only_machine: usize },
    #[error("kappa is undefined when chance agreement is 1 (p_o = {p_o}, p_e = {p_e})")]
    Undefined { p_o: f64, p_e: f64 },
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable { a, b, c, d }
    }

    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn transposed(&self) -> Self {
        ContingencyTable { a: self.a, b: self.c, c: self.b, d: self.d }
    }
}

/// Pairs decisions by id. Both maps must cover the same ids.
pub fn build_contingency<K: Ord>(
    human: &BTreeMap<K, bool>,
    machine: &BTreeMap<K, bool>,
) -> Result<ContingencyTable, AgreementError> {
    let only_human = human.keys().filter(|k| !machine.contains_key(k)).count();
    let only_machine = machine.keys().filter(|k| !human.contains_key(k)).count();
    if only_human > 0 || only_machine > 0 {
        return Err(AgreementError::IdMismatch { only_human, only_machine });
    }
    if human.is_empty() {
        return Err(AgreementError::Empty);
    }
    let mut t = ContingencyTable::new(0, 0, 0, 0);
    for (k, &h) in human {
        match (h, machine[k]) {
            (true, true) => t.a += 1,
            (true, false) => t.b += 1,
            (false, true) => t.c += 1,
            (false, false) => t.d += 1,
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    NoneOrNegative,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl Band {
    /// Upper edges are inclusive: 0.20 is slight, 0.40 fair, and so on.
    pub fn of(kappa: f64) -> Band {
        if kappa <= 0.0 {
            Band::NoneOrNegative
        } else if kappa <= 0.20 {
            Band::Slight
        } else if kappa <= 0.40 {
            Band::Fair
        } else if kappa <= 0.60 {
            Band::Moderate
        } else if kappa <= 0.80 {
            Band::Substantial
        } else {
            Band::AlmostPerfect
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Band::NoneOrNegative => "none or negative",
            Band::Slight => "slight",
            Band::Fair => "fair",
            Band::Moderate => "moderate",
            Band::Substantial => "substantial",
            Band::AlmostPerfect => "almost perfect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub p_o: f64,
    pub p_e: f64,
    pub kappa: f64,
    pub band: Band,
}

/// p_o = (a+d)/N, p_e = [(a+b)(a+c) + (c+d)(b+d)]/N², κ = (p_o − p_e)/(1 − p_e).
pub fn cohen_kappa(t: &ContingencyTable) -> Result<KappaResult, AgreementError> {
    let n = t.n();
    if n == 0 {
        return Err(AgreementError::Empty);
    }
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    let n = n as f64;
    let p_o = (a + d) / n;
    let p_e = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n);
    if p_e >= 1.0 {
        return Err(AgreementError::Undefined { p_o, p_e });
    }
    let kappa = (p_o - p_e) / (1.0 - p_e);
    Ok(KappaResult { p_o, p_e, kappa, band: Band::of(kappa) })
}

/// Plain-text agreement table with marginals and κ.
pub struct KappaReport<'a> {
    pub label: &'a str,
    pub table: ContingencyTable,
    pub result: Result<KappaResult, AgreementError>,
}

impl fmt::Display for KappaReport<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.table;
        writeln!(f, "{}", self.label)?;
        writeln!(f, "{:<12}{:>12}{:>12}{:>8}", "", "machine yes", "machine no", "total")?;
        writeln!(f, "{:<12}{:>12}{:>12}{:>8}", "human yes", t.a, t.b, t.a + t.b)?;
        writeln!(f, "{:<12}{:>12}{:>12}{:>8}", "human no", t.c, t.d, t.c + t.d)?;
        writeln!(f, "{:<12}{:>12}{:>12}{:>8}", "total", t.a + t.c, t.b + t.d, t.n())?;
        match &self.result {
            Ok(r) => write!(f, "kappa {:.3} ({}), p_o {:.3}, p_e {:.3}", r.kappa, r.band.label(), r.p_o, r.p_e),
            Err(e) => write!(f, "kappa undefined: {e}"),
        }
    }
}
