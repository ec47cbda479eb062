//! Radial truncation of the costate argument.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::DriverSplit;

/// Cap profile: identity on [0, cap], cap + 1 on [cap + 2, ∞), and the C¹
/// Hermite blend between (slope 1 at cap, slope 0 at cap + 2). With those
/// end conditions the blend reduces to cap + 2s − s², s = (t − cap)/2.
pub fn cap_profile(t: f64, cap: f64) -> f64 {
    if t <= cap {
        t
    } else if t >= cap + 2.0 {
        cap + 1.0
    } else {
        let s = 0.5 * (t - cap);
        cap + 2.0 * s - s * s
    }
}

/// π(z) = ρ(|z|) z / |z|.
pub fn truncate_into(z: &[f64], cap: f64, out: &mut [f64]) {
    let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= cap {
        out.copy_from_slice(z);
    } else {
        let s = cap_profile(n, cap) / n;
        for (o, v) in out.iter_mut().zip(z) {
            *o = s * v;
        }
    }
}

pub fn truncate(z: &[f64], cap: f64) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    truncate_into(z, cap, &mut out);
    out
}

/// How the truncation cap is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapMode {
    /// M/δ̂ from the condition checks.
    Auto,
    Manual(f64),
    Off,
}

impl fmt::Display for CapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapMode::Auto => write!(f, "auto"),
            CapMode::Off => write!(f, "off"),
            CapMode::Manual(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for CapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(CapMode::Auto),
            "off" => Ok(CapMode::Off),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(CapMode::Manual(v)),
                _ => Err(Error::Config(format!(
                    "cap must be `auto`, `off` or a positive number, got `{other}`"
                ))),
            },
        }
    }
}

impl Serialize for CapMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CapMode::Manual(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for CapMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => CapMode::from_str(&v.to_string()),
            Raw::Str(s) => CapMode::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// f̃(x, z) = f(x, π(z)); `cap = None` leaves the driver untouched.
#[derive(Debug, Clone)]
pub struct TruncatedDriver {
    pub base: DriverSplit,
    pub cap: Option<f64>,
}

impl TruncatedDriver {
    pub fn untruncated(base: DriverSplit) -> Self {
        TruncatedDriver { base, cap: None }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        match self.cap {
            None => self.base.value(x, z),
            Some(cap) if z.len() <= 2 => {
                let mut buf = [0.0; 2];
                let p = &mut buf[..z.len()];
                truncate_into(z, cap, p);
                self.base.value(x, p)
            }
            Some(cap) => self.base.value(x, &truncate(z, cap)),
        }
    }
}

pub fn truncate_driver(driver: DriverSplit, cap: f64) -> Result<TruncatedDriver> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::InvalidInput(format!("cap must be positive, got {cap}")));
    }
    Ok(TruncatedDriver {
        base: driver,
        cap: Some(cap),
    })
}
