//! Model identities: class × variant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelClass {
    Linear,
    Quantile,
    Poisson,
    Lvcf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Isolated,
    Neighbors,
    IsolatedUs,
    NeighborsUs,
    GeoPooled,
    /// The only variant of the LVCF class.
    Baseline,
}

impl ModelClass {
    pub const REGRESSION: [ModelClass; 3] = [ModelClass::Linear, ModelClass::Quantile, ModelClass::Poisson];

    pub fn name(self) -> &'static str {
        match self {
            ModelClass::Linear => "linear",
            ModelClass::Quantile => "quantile",
            ModelClass::Poisson => "poisson",
            ModelClass::Lvcf => "lvcf",
        }
    }
}

impl Variant {
    pub const REGRESSION: [Variant; 5] = [
        Variant::Isolated,
        Variant::Neighbors,
        Variant::IsolatedUs,
        Variant::NeighborsUs,
        Variant::GeoPooled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Isolated => "isolated",
            Variant::Neighbors => "neighbors",
            Variant::IsolatedUs => "isolated_us",
            Variant::NeighborsUs => "neighbors_us",
            Variant::GeoPooled => "geo_pooled",
            Variant::Baseline => "baseline",
        }
    }

    pub fn uses_neighbors(self) -> bool {
        matches!(self, Variant::Neighbors | Variant::NeighborsUs)
    }

    pub fn uses_national(self) -> bool {
        matches!(self, Variant::IsolatedUs | Variant::NeighborsUs)
    }
}

impl FromStr for ModelClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "l" => ModelClass::Linear,
            "quantile" | "q" | "median" => ModelClass::Quantile,
            "poisson" | "po" => ModelClass::Poisson,
            "lvcf" => ModelClass::Lvcf,
            other => return Err(Error::Parse(format!("unknown model class {other:?}"))),
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(
            match s.trim().to_ascii_lowercase().replace(['-', '+', ' '], "_").as_str() {
                "isolated" => Variant::Isolated,
                "neighbors" => Variant::Neighbors,
                "isolated_us" => Variant::IsolatedUs,
                "neighbors_us" => Variant::NeighborsUs,
                "geo_pooled" | "geopooled" => Variant::GeoPooled,
                "baseline" => Variant::Baseline,
                other => return Err(Error::Parse(format!("unknown model variant {other:?}"))),
            },
        )
    }
}

/// One of the 16 models: LVCF, or a regression class with a variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    class: ModelClass,
    variant: Variant,
}

impl ModelSpec {
    pub const LVCF: ModelSpec = ModelSpec {
        class: ModelClass::Lvcf,
        variant: Variant::Baseline,
    };

    pub fn new(class: ModelClass, variant: Variant) -> Result<Self> {
        if (class == ModelClass::Lvcf) != (variant == Variant::Baseline) {
            return Err(Error::Domain(format!(
                "{} has no {} variant",
                class.name(),
                variant.name()
            )));
        }
        Ok(Self { class, variant })
    }

    pub fn class(self) -> ModelClass {
        self.class
    }

    pub fn variant(self) -> Variant {
        self.variant
    }

    /// LVCF followed by every class × variant, in a fixed order.
    pub fn all() -> Vec<ModelSpec> {
        let mut out = vec![ModelSpec::LVCF];
        for c in ModelClass::REGRESSION {
            for v in Variant::REGRESSION {
                out.push(ModelSpec { class: c, variant: v });
            }
        }
        out
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.class == ModelClass::Lvcf {
            f.write_str("lvcf")
        } else {
            write!(f, "{}:{}", self.class.name(), self.variant.name())
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;
    /// `lvcf` or `class:variant`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None => {
                let class: ModelClass = s.parse()?;
                ModelSpec::new(class, Variant::Baseline)
            }
            Some((c, v)) => ModelSpec::new(c.parse()?, v.parse()?),
        }
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}
