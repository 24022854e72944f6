use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureFamily;
use crate::rank_rl::Formulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Technique {
    /// Diagnostic upper bound: the optimal order of each cycle.
    Oracle,
    /// Seeded uniform shuffle.
    Random,
    Mart,
    LambdaMart,
    RankBoost,
    RankNet,
    CoordinateAscent,
    DeepOrder,
    Retecs,
    Coleman,
    PgPointwise,
    PgPairwise,
    PgListwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TechniqueKind {
    Builtin,
    Supervised,
    Online,
}

impl Technique {
    pub const ALL: [Technique; 13] = [
        Technique::Oracle,
        Technique::Random,
        Technique::Mart,
        Technique::LambdaMart,
        Technique::RankBoost,
        Technique::RankNet,
        Technique::CoordinateAscent,
        Technique::DeepOrder,
        Technique::Retecs,
        Technique::Coleman,
        Technique::PgPointwise,
        Technique::PgPairwise,
        Technique::PgListwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Oracle => "Oracle",
            Technique::Random => "Random",
            Technique::Mart => "MART",
            Technique::LambdaMart => "L-MART",
            Technique::RankBoost => "RankBoost",
            Technique::RankNet => "RankNet",
            Technique::CoordinateAscent => "CA",
            Technique::DeepOrder => "DeepOrder",
            Technique::Retecs => "RETECS",
            Technique::Coleman => "COLEMAN",
            Technique::PgPointwise => "PG-PO",
            Technique::PgPairwise => "PG-PA",
            Technique::PgListwise => "PG-LI",
        }
    }

    pub fn kind(self) -> TechniqueKind {
        match self {
            Technique::Oracle | Technique::Random => TechniqueKind::Builtin,
            Technique::Mart
            | Technique::LambdaMart
            | Technique::RankBoost
            | Technique::RankNet
            | Technique::CoordinateAscent
            | Technique::DeepOrder => TechniqueKind::Supervised,
            Technique::Retecs | Technique::Coleman | Technique::PgPointwise | Technique::PgPairwise | Technique::PgListwise => {
                TechniqueKind::Online
            }
        }
    }

    /// Feature family the technique is defined on.
    pub fn family(self) -> FeatureFamily {
        match self {
            Technique::DeepOrder => FeatureFamily::Deeporder,
            Technique::Coleman => FeatureFamily::Coleman,
            _ => FeatureFamily::BertolinoRl,
        }
    }

    pub fn formulation(self) -> Option<Formulation> {
        match self {
            Technique::PgPointwise => Some(Formulation::Pointwise),
            Technique::PgPairwise => Some(Formulation::Pairwise),
            Technique::PgListwise => Some(Formulation::Listwise),
            _ => None,
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let want = s.trim();
        Technique::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(want))
            .ok_or_else(|| {
                let known: Vec<&str> = Technique::ALL.iter().map(|t| t.name()).collect();
                Error::Config(format!("unknown technique {want:?}; known: {}", known.join(", ")))
            })
    }
}

impl TryFrom<String> for Technique {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Technique> for String {
    fn from(t: Technique) -> Self {
        t.name().to_string()
    }
}
