use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Confidence method paired with its query strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SoftmaxLeastConfidence,
    SoftmaxEntropy,
    SoftmaxMargin,
    Random,
    InhibitedSoftmax,
    TrustScore,
    Evidential,
    McDropout,
    VoteEntropy,
    KlDivergence,
    TemperatureScaling,
    LabelSmoothing,
    Passive,
}

impl Method {
    pub const ALL: [Method; 13] = [
        Method::SoftmaxLeastConfidence,
        Method::SoftmaxEntropy,
        Method::SoftmaxMargin,
        Method::Random,
        Method::InhibitedSoftmax,
        Method::TrustScore,
        Method::Evidential,
        Method::McDropout,
        Method::VoteEntropy,
        Method::KlDivergence,
        Method::TemperatureScaling,
        Method::LabelSmoothing,
        Method::Passive,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::SoftmaxLeastConfidence => "softmax-lc",
            Method::SoftmaxEntropy => "softmax-ent",
            Method::SoftmaxMargin => "softmax-mm",
            Method::Random => "rand",
            Method::InhibitedSoftmax => "is",
            Method::TrustScore => "trsc",
            Method::Evidential => "evi",
            Method::McDropout => "mc",
            Method::VoteEntropy => "ve",
            Method::KlDivergence => "kld",
            Method::TemperatureScaling => "tesc",
            Method::LabelSmoothing => "ls",
            Method::Passive => "passive",
        }
    }

    /// Methods that rank by a confidence report.
    pub fn is_ranked(self) -> bool {
        !matches!(self, Method::Random | Method::Passive)
    }

    /// Methods whose selection model is an ensemble.
    pub fn is_committee(self) -> bool {
        matches!(self, Method::VoteEntropy | Method::KlDivergence)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the canonical ids plus the short forms `lc`, `ent`, `mm`
    /// and `pass`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let canonical = match s {
            "lc" => "softmax-lc",
            "ent" => "softmax-ent",
            "mm" => "softmax-mm",
            "pass" => "passive",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.id() == canonical)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
