//! Evaluators for the theoretical bounds and checkers that compare them with
//! measured quantities.
//!
//! Every evaluator is a pure function. When a premise fails or a denominator
//! is non-positive the bound is reported as vacuous rather than clamped.

pub mod instances;
mod props;
mod thm1;
mod thm2;

pub use props::*;
pub use thm1::*;
pub use thm2::*;

use serde::{Deserialize, Serialize};
use std::fmt;

/// Why a bound could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vacuous(pub String);

impl fmt::Display for Vacuous {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type Outcome<T = f64> = Result<T, Vacuous>;

pub(crate) fn vacuous<T>(why: impl Into<String>) -> Outcome<T> {
    Err(Vacuous(why.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holds {
    Holds,
    Violated,
    Vacuous,
}

/// Direction of the inequality `measured REL bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Premise {
    pub name: String,
    pub ok: bool,
}

impl Premise {
    pub fn new(name: impl Into<String>, ok: bool) -> Self {
        Self { name: name.into(), ok }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub name: String,
    pub bound: Option<f64>,
    pub measured: Option<f64>,
    pub relation: Relation,
    pub premises: Vec<Premise>,
    /// Outcome of the numeric comparison alone, ignoring premises.
    pub inequality_ok: Option<bool>,
    pub holds: Holds,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl BoundEntry {
    /// Builds an entry. It is vacuous iff a premise fails or the bound is
    /// undefined.
    pub fn new(
        name: impl Into<String>,
        bound: Outcome,
        measured: Option<f64>,
        relation: Relation,
        premises: Vec<Premise>,
    ) -> Self {
        let (bound, note) = match bound {
            Ok(v) => (Some(v), None),
            Err(Vacuous(why)) => (None, Some(why)),
        };
        let inequality_ok = match (bound, measured) {
            (Some(b), Some(m)) => Some(match relation {
                Relation::Le => m <= b,
                Relation::Ge => m >= b,
            }),
            _ => None,
        };
        let holds = if premises.iter().any(|p| !p.ok) || inequality_ok.is_none() {
            Holds::Vacuous
        } else if inequality_ok == Some(true) {
            Holds::Holds
        } else {
            Holds::Violated
        };
        Self {
            name: name.into(),
            bound,
            measured,
            relation,
            premises,
            inequality_ok,
            holds,
            note,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        self.note = Some(match self.note.take() {
            Some(prev) => format!("{prev}; {note}"),
            None => note,
        });
        self
    }

    /// Forces the entry to vacuous; used for weak bounds that carry no
    /// information (e.g. a cosine lower bound below -1).
    pub fn mark_vacuous(mut self, why: impl Into<String>) -> Self {
        self.holds = Holds::Vacuous;
        self.with_note(why)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    pub fn push(&mut self, e: BoundEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: BoundReport) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundEntry> {
        self.entries.iter().filter(|e| e.holds == Holds::Violated)
    }

    pub fn count(&self, h: Holds) -> usize {
        self.entries.iter().filter(|e| e.holds == h).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_classification() {
        let ok = BoundEntry::new("a", Ok(2.0), Some(1.0), Relation::Le, vec![]);
        assert_eq!(ok.holds, Holds::Holds);
        let bad = BoundEntry::new("b", Ok(2.0), Some(1.0), Relation::Ge, vec![]);
        assert_eq!(bad.holds, Holds::Violated);
        let prem = BoundEntry::new("c", Ok(2.0), Some(1.0), Relation::Le, vec![Premise::new("p", false)]);
        assert_eq!(prem.holds, Holds::Vacuous);
        assert_eq!(prem.inequality_ok, Some(true));
        let undef = BoundEntry::new("d", vacuous("denominator"), Some(1.0), Relation::Le, vec![]);
        assert_eq!(undef.holds, Holds::Vacuous);
        assert_eq!(undef.note.as_deref(), Some("denominator"));
    }
}
