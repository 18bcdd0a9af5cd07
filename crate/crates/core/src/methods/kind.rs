use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The benchmark arms: eight comparison methods plus the two identification networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "mt_naive")]
    MtNaive,
    #[serde(rename = "tnet")]
    TNet,
    #[serde(rename = "mtnet")]
    MtNet,
    #[serde(rename = "ipw")]
    Ipw,
    #[serde(rename = "imputation")]
    Imputation,
    #[serde(rename = "kmm")]
    Kmm,
    #[serde(rename = "kliep")]
    Kliep,
    #[serde(rename = "dann")]
    Dann,
}

impl MethodKind {
    pub const ALL: [MethodKind; 10] = [
        MethodKind::Oracle,
        MethodKind::Naive,
        MethodKind::MtNaive,
        MethodKind::TNet,
        MethodKind::MtNet,
        MethodKind::Ipw,
        MethodKind::Imputation,
        MethodKind::Kmm,
        MethodKind::Kliep,
        MethodKind::Dann,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Oracle => "oracle",
            MethodKind::Naive => "naive",
            MethodKind::MtNaive => "mt_naive",
            MethodKind::TNet => "tnet",
            MethodKind::MtNet => "mtnet",
            MethodKind::Ipw => "ipw",
            MethodKind::Imputation => "imputation",
            MethodKind::Kmm => "kmm",
            MethodKind::Kliep => "kliep",
            MethodKind::Dann => "dann",
        }
    }

    /// Identification methods that defer rows judged unrepresentative of the study population.
    pub fn defers(self) -> bool {
        matches!(self, MethodKind::TNet | MethodKind::MtNet)
    }

    /// Methods that fit a selection model and report a selection score per row.
    pub fn has_selection_score(self) -> bool {
        matches!(
            self,
            MethodKind::TNet | MethodKind::MtNet | MethodKind::MtNaive | MethodKind::Dann
        )
    }

    /// Methods that need non-selected rows during fitting.
    pub fn needs_nonselected(self) -> bool {
        !matches!(self, MethodKind::Oracle | MethodKind::Naive)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method `{s}`")))
    }
}
