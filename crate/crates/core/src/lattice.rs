//! The three-policy treatment lattice.
//!
//! Every household falls into exactly one of eight cells according to its
//! (Pronaf, ATER, Seeds) receipt flags. Ten contrasts are defined over the
//! cells: three "total" contrasts that compare recipients of one policy with
//! everyone else, and seven exclusive contrasts that compare one cell with
//! the no-policy baseline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TreatmentCell {
    NoPolicy,
    PronafOnly,
    AterOnly,
    SeedsOnly,
    PronafAter,
    PronafSeeds,
    AterSeeds,
    AllThree,
}

impl TreatmentCell {
    pub const ALL: [TreatmentCell; 8] = [
        TreatmentCell::NoPolicy,
        TreatmentCell::PronafOnly,
        TreatmentCell::AterOnly,
        TreatmentCell::SeedsOnly,
        TreatmentCell::PronafAter,
        TreatmentCell::PronafSeeds,
        TreatmentCell::AterSeeds,
        TreatmentCell::AllThree,
    ];

    /// (pronaf, ater, seeds) membership flags.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            TreatmentCell::NoPolicy => (false, false, false),
            TreatmentCell::PronafOnly => (true, false, false),
            TreatmentCell::AterOnly => (false, true, false),
            TreatmentCell::SeedsOnly => (false, false, true),
            TreatmentCell::PronafAter => (true, true, false),
            TreatmentCell::PronafSeeds => (true, false, true),
            TreatmentCell::AterSeeds => (false, true, true),
            TreatmentCell::AllThree => (true, true, true),
        }
    }

    pub fn has(self, policy: Policy) -> bool {
        let (p, a, s) = self.flags();
        match policy {
            Policy::Pronaf => p,
            Policy::Ater => a,
            Policy::Seeds => s,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TreatmentCell::NoPolicy => "NoPolicy",
            TreatmentCell::PronafOnly => "PronafOnly",
            TreatmentCell::AterOnly => "AterOnly",
            TreatmentCell::SeedsOnly => "SeedsOnly",
            TreatmentCell::PronafAter => "PronafAter",
            TreatmentCell::PronafSeeds => "PronafSeeds",
            TreatmentCell::AterSeeds => "AterSeeds",
            TreatmentCell::AllThree => "AllThree",
        }
    }
}

impl fmt::Display for TreatmentCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TreatmentCell {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        TreatmentCell::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown treatment cell `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    Pronaf,
    Ater,
    Seeds,
}

pub fn classify_cell(pronaf: bool, ater: bool, seeds: bool) -> TreatmentCell {
    match (pronaf, ater, seeds) {
        (false, false, false) => TreatmentCell::NoPolicy,
        (true, false, false) => TreatmentCell::PronafOnly,
        (false, true, false) => TreatmentCell::AterOnly,
        (false, false, true) => TreatmentCell::SeedsOnly,
        (true, true, false) => TreatmentCell::PronafAter,
        (true, false, true) => TreatmentCell::PronafSeeds,
        (false, true, true) => TreatmentCell::AterSeeds,
        (true, true, true) => TreatmentCell::AllThree,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Binary,
    Multinomial,
}

/// A treated-versus-control comparison over lattice cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contrast {
    pub id: u8,
    pub name: String,
    pub treated: Vec<TreatmentCell>,
    pub control: Vec<TreatmentCell>,
    pub model_kind: ModelKind,
}

impl Contrast {
    pub fn is_treated(&self, cell: TreatmentCell) -> bool {
        self.treated.contains(&cell)
    }

    pub fn is_control(&self, cell: TreatmentCell) -> bool {
        self.control.contains(&cell)
    }

    /// The single treated cell of an exclusive contrast.
    pub fn target_cell(&self) -> Option<TreatmentCell> {
        match (self.model_kind, self.treated.as_slice()) {
            (ModelKind::Multinomial, [cell]) => Some(*cell),
            _ => None,
        }
    }

    /// The policy of a total contrast.
    pub fn policy(&self) -> Option<Policy> {
        match self.id {
            1 => Some(Policy::Pronaf),
            2 => Some(Policy::Ater),
            3 => Some(Policy::Seeds),
            _ => None,
        }
    }
}

fn total(id: u8, name: &str, policy: Policy) -> Contrast {
    let (treated, control) = TreatmentCell::ALL.iter().partition(|c| c.has(policy));
    Contrast {
        id,
        name: name.into(),
        treated,
        control,
        model_kind: ModelKind::Binary,
    }
}

fn exclusive(id: u8, name: &str, cell: TreatmentCell) -> Contrast {
    Contrast {
        id,
        name: name.into(),
        treated: vec![cell],
        control: vec![TreatmentCell::NoPolicy],
        model_kind: ModelKind::Multinomial,
    }
}

/// The ten standard contrasts, in id order.
pub fn standard_contrasts() -> Vec<Contrast> {
    use TreatmentCell::*;
    vec![
        total(1, "Pronaf (total)", Policy::Pronaf),
        total(2, "Technical assistance (total)", Policy::Ater),
        total(3, "Seeds (total)", Policy::Seeds),
        exclusive(4, "Pronaf only", PronafOnly),
        exclusive(5, "Technical assistance only", AterOnly),
        exclusive(6, "Seeds only", SeedsOnly),
        exclusive(7, "Pronaf & Technical assistance", PronafAter),
        exclusive(8, "Pronaf & Seeds", PronafSeeds),
        exclusive(9, "Technical assistance & Seeds", AterSeeds),
        exclusive(10, "All policies", AllThree),
    ]
}

/// Looks up a standard contrast by id.
pub fn contrast(id: u8) -> Option<Contrast> {
    standard_contrasts().into_iter().find(|c| c.id == id)
}

/// Splits items into (treated, control) for `contrast`; items in neither
/// set are left out.
pub fn build_contrast_sample<T, F>(
    items: &[T],
    contrast: &Contrast,
    cell_of: F,
) -> Result<(Vec<T>, Vec<T>)>
where
    T: Clone,
    F: Fn(&T) -> TreatmentCell,
{
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for item in items {
        let cell = cell_of(item);
        if contrast.is_treated(cell) {
            treated.push(item.clone());
        } else if contrast.is_control(cell) {
            control.push(item.clone());
        }
    }
    let empty = match (treated.is_empty(), control.is_empty()) {
        (true, true) => Some("no treated and no control units"),
        (true, false) => Some("no treated units"),
        (false, true) => Some("no control units"),
        (false, false) => None,
    };
    match empty {
        Some(reason) => Err(Error::EmptyContrast {
            contrast_id: contrast.id,
            name: contrast.name.clone(),
            reason: reason.into(),
        }),
        None => Ok((treated, control)),
    }
}

/// Count of items per cell, indexed by `TreatmentCell::index`.
pub fn cell_counts<T>(items: &[T], cell_of: impl Fn(&T) -> TreatmentCell) -> [usize; 8] {
    let mut counts = [0; 8];
    for item in items {
        counts[cell_of(item).index()] += 1;
    }
    counts
}

/// Machine-readable contrast definitions.
pub fn contrast_manifest(contrasts: &[Contrast]) -> serde_json::Value {
    serde_json::to_value(contrasts).expect("contrasts serialize")
}
