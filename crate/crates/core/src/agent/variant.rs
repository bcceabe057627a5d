use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which algorithm variant a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain clipped PPO: no vex head training, no filtering.
    PpoBaseline,
    /// Vex head plus median-ratio filtering.
    Sauna,
    /// Vex head trained as an auxiliary task, nothing filtered.
    NoFilterAux,
    /// Vex head trained, transitions dropped at random at a replayed rate.
    RandomFilter,
    /// Filter against the running mean instead of the median.
    MeanInsteadOfMedian,
    /// Filter on the realized variance explained of the last finished episode.
    EmpiricalVexFilter,
    /// Vex head regressed onto the adjusted batch statistic.
    AdjustedVex,
}

/// How the collection loop decides whether a visited state is kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    None,
    Vex,
    Random,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::PpoBaseline,
        Variant::Sauna,
        Variant::NoFilterAux,
        Variant::RandomFilter,
        Variant::MeanInsteadOfMedian,
        Variant::EmpiricalVexFilter,
        Variant::AdjustedVex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PpoBaseline => "ppo_baseline",
            Variant::Sauna => "sauna",
            Variant::NoFilterAux => "no_filter_aux",
            Variant::RandomFilter => "random_filter",
            Variant::MeanInsteadOfMedian => "mean_instead_of_median",
            Variant::EmpiricalVexFilter => "empirical_vex_filter",
            Variant::AdjustedVex => "adjusted_vex",
        }
    }

    pub fn filter(self) -> FilterKind {
        match self {
            Variant::PpoBaseline | Variant::NoFilterAux => FilterKind::None,
            Variant::RandomFilter => FilterKind::Random,
            Variant::Sauna
            | Variant::MeanInsteadOfMedian
            | Variant::EmpiricalVexFilter
            | Variant::AdjustedVex => FilterKind::Vex,
        }
    }

    /// Whether the vex head is trained at all.
    pub fn trains_vex_head(self) -> bool {
        self != Variant::PpoBaseline
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant {s:?}, expected one of {names:?}"))
            })
    }
}
