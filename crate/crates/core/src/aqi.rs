//! Six-level PM2.5 AQI classes and misclassification typing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum AqiClass {
    Green = 0,
    Yellow = 1,
    Orange = 2,
    Red = 3,
    Purple = 4,
    Maroon = 5,
}

impl AqiClass {
    pub const ALL: [AqiClass; 6] = [
        AqiClass::Green,
        AqiClass::Yellow,
        AqiClass::Orange,
        AqiClass::Red,
        AqiClass::Purple,
        AqiClass::Maroon,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(o: u8) -> Option<Self> {
        Self::ALL.get(o as usize).copied()
    }

    /// Green and Yellow are healthy; Orange and above are not.
    pub fn is_healthy(self) -> bool {
        self <= AqiClass::Yellow
    }

    pub fn name(self) -> &'static str {
        match self {
            AqiClass::Green => "Good",
            AqiClass::Yellow => "Moderate",
            AqiClass::Orange => "Unhealthy for Sensitive Groups",
            AqiClass::Red => "Unhealthy",
            AqiClass::Purple => "Very Unhealthy",
            AqiClass::Maroon => "Hazardous",
        }
    }
}

pub fn is_healthy(class: AqiClass) -> bool {
    class.is_healthy()
}

/// Upper edges (µg/m³, 24-hour PM2.5) of Green through Purple; anything
/// above the last edge is Maroon. Defaults to the 2012 EPA table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct AqiBreakpoints {
    edges: [f64; 5],
    /// Edges in tenths of µg/m³ for integer comparison.
    tenths: [i64; 5],
}

impl Default for AqiBreakpoints {
    fn default() -> Self {
        AqiBreakpoints::new([12.0, 35.4, 55.4, 150.4, 250.4]).expect("valid defaults")
    }
}

impl AqiBreakpoints {
    pub fn new(edges: [f64; 5]) -> Result<Self> {
        if edges.iter().any(|e| !(e.is_finite() && *e > 0.0)) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("AQI breakpoints must be positive and strictly ascending: {edges:?}")));
        }
        Ok(AqiBreakpoints {
            edges,
            tenths: edges.map(|e| (e * 10.0).round() as i64),
        })
    }

    pub fn edges(&self) -> [f64; 5] {
        self.edges
    }

    /// Truncate to one decimal, then take the first class whose upper edge
    /// is at least the truncated value. Negative readings count as zero.
    pub fn classify(&self, pm25: f64) -> AqiClass {
        let v = if pm25.is_nan() { 0.0 } else { pm25.max(0.0) };
        // The nudge absorbs representation error such as 12.1 * 10 = 120.99999...
        let t = (v * 10.0 + 1e-7).floor();
        let t = if t >= i64::MAX as f64 { i64::MAX } else { t as i64 };
        let k = self.tenths.iter().position(|&e| t <= e).unwrap_or(5);
        AqiClass::ALL[k]
    }
}

impl TryFrom<[f64; 5]> for AqiBreakpoints {
    type Error = Error;
    fn try_from(e: [f64; 5]) -> Result<Self> {
        AqiBreakpoints::new(e)
    }
}

impl From<AqiBreakpoints> for [f64; 5] {
    fn from(b: AqiBreakpoints) -> [f64; 5] {
        b.edges
    }
}

pub fn classify(pm25: f64, breakpoints: &AqiBreakpoints) -> AqiClass {
    breakpoints.classify(pm25)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MisclassKind {
    Correct,
    /// Shown better than truly experienced.
    Under,
    /// Shown worse than truly experienced.
    Over,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Misclass {
    pub kind: MisclassKind,
    pub gap: u8,
}

pub fn misclass(true_class: AqiClass, shown: AqiClass) -> Misclass {
    let (t, s) = (true_class.ordinal(), shown.ordinal());
    let kind = match t.cmp(&s) {
        std::cmp::Ordering::Greater => MisclassKind::Under,
        std::cmp::Ordering::Less => MisclassKind::Over,
        std::cmp::Ordering::Equal => MisclassKind::Correct,
    };
    Misclass { kind, gap: t.abs_diff(s) }
}
