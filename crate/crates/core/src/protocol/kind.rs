use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pruning method that produced a subnetwork mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Imp,
    Omp,
}

/// Where a subnetwork's starting weights come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// `θ₀ ⊙ m`
    Lottery,
    /// `θ₀′ ⊙ m` with an independent draw
    Random,
    /// `θ_t ⊙ m`, trained for the remaining `T − t` epochs
    Rewind,
    /// dense network of matched parameter count
    SmallDense,
}

/// Every kind of run that lands in the results log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RunKind {
    Pretrain,
    Lt(Method),
    Rr(Method),
    Wr(Method),
    Sdt,
}

impl RunKind {
    pub const ALL: [RunKind; 8] = [
        RunKind::Pretrain,
        RunKind::Lt(Method::Imp),
        RunKind::Lt(Method::Omp),
        RunKind::Rr(Method::Imp),
        RunKind::Rr(Method::Omp),
        RunKind::Wr(Method::Imp),
        RunKind::Wr(Method::Omp),
        RunKind::Sdt,
    ];

    pub fn init(self) -> Option<InitKind> {
        match self {
            RunKind::Pretrain => None,
            RunKind::Lt(_) => Some(InitKind::Lottery),
            RunKind::Rr(_) => Some(InitKind::Random),
            RunKind::Wr(_) => Some(InitKind::Rewind),
            RunKind::Sdt => Some(InitKind::SmallDense),
        }
    }

    pub fn method(self) -> Option<Method> {
        match self {
            RunKind::Lt(m) | RunKind::Rr(m) | RunKind::Wr(m) => Some(m),
            RunKind::Pretrain | RunKind::Sdt => None,
        }
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = |m: &Method| match m {
            Method::Imp => "imp",
            Method::Omp => "omp",
        };
        match self {
            RunKind::Pretrain => f.write_str("pretrain"),
            RunKind::Lt(x) => write!(f, "lt-{}", m(x)),
            RunKind::Rr(x) => write!(f, "rr-{}", m(x)),
            RunKind::Wr(x) => write!(f, "wr-{}", m(x)),
            RunKind::Sdt => f.write_str("sdt"),
        }
    }
}

impl FromStr for RunKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| {
                let names: Vec<String> = RunKind::ALL.iter().map(|k| k.to_string()).collect();
                Error::arg(format!(
                    "unknown protocol {s:?} (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

impl TryFrom<String> for RunKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RunKind> for String {
    fn from(k: RunKind) -> String {
        k.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in RunKind::ALL {
            assert_eq!(k.to_string().parse::<RunKind>().unwrap(), k);
        }
        assert_eq!(RunKind::Wr(Method::Imp).to_string(), "wr-imp");
        assert!("lt".parse::<RunKind>().is_err());
    }
}
