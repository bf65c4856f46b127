use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Navigation policies that can be trained and evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Nearest station by expected travel time; nothing is learned.
    #[serde(rename = "ShortestPath")]
    ShortestPath,
    /// DQN on position and SOC only; the recommendation slice is zero.
    #[serde(rename = "IQL")]
    Iql,
    /// DQN fed the true FCC tensor.
    #[serde(rename = "IQL_Global_FCC")]
    IqlGlobalFcc,
    /// DQN fed the LSTM condition label directly.
    #[serde(rename = "IQL_LSTM_Only")]
    IqlLstmOnly,
    /// DQN fed the CVAE reconstruction; losses summed.
    #[serde(rename = "IQL_CVAE_NoMGDA")]
    IqlCvaeNoMgda,
    /// DQN fed the CVAE reconstruction; losses balanced by MGDA.
    #[serde(rename = "IQL_CVAE_MGDA")]
    IqlCvaeMgda,
}

/// Where the recommendation part of an observation comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiSource {
    Zeros,
    TrueFcc,
    Condition,
    Reconstruction,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::ShortestPath,
        Method::Iql,
        Method::IqlGlobalFcc,
        Method::IqlLstmOnly,
        Method::IqlCvaeNoMgda,
        Method::IqlCvaeMgda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ShortestPath => "ShortestPath",
            Method::Iql => "IQL",
            Method::IqlGlobalFcc => "IQL_Global_FCC",
            Method::IqlLstmOnly => "IQL_LSTM_Only",
            Method::IqlCvaeNoMgda => "IQL_CVAE_NoMGDA",
            Method::IqlCvaeMgda => "IQL_CVAE_MGDA",
        }
    }

    /// `None` for the non-learning baseline.
    pub fn ri_source(self) -> Option<RiSource> {
        match self {
            Method::ShortestPath => None,
            Method::Iql => Some(RiSource::Zeros),
            Method::IqlGlobalFcc => Some(RiSource::TrueFcc),
            Method::IqlLstmOnly => Some(RiSource::Condition),
            Method::IqlCvaeNoMgda | Method::IqlCvaeMgda => Some(RiSource::Reconstruction),
        }
    }

    pub fn learns(self) -> bool {
        self != Method::ShortestPath
    }

    pub fn uses_cvae(self) -> bool {
        matches!(self, Method::IqlCvaeNoMgda | Method::IqlCvaeMgda)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown method {0:?}; expected one of ShortestPath, IQL, IQL_Global_FCC, IQL_LSTM_Only, IQL_CVAE_NoMGDA, IQL_CVAE_MGDA")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("iql_cvae_mgda".parse::<Method>().is_ok());
        assert!("DQN".parse::<Method>().is_err());
    }
}
