use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fine-structure levels of rubidium that the crate knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "5S1/2")]
    S5Half,
    #[serde(rename = "5P1/2")]
    P5Half,
    #[serde(rename = "5P3/2")]
    P5ThreeHalves,
    #[serde(rename = "4D3/2")]
    D4ThreeHalves,
    #[serde(rename = "4D5/2")]
    D4FiveHalves,
    #[serde(rename = "6S1/2")]
    S6Half,
}

impl Level {
    pub const ALL: [Level; 6] = [
        Level::S5Half,
        Level::P5Half,
        Level::P5ThreeHalves,
        Level::D4ThreeHalves,
        Level::D4FiveHalves,
        Level::S6Half,
    ];

    /// Twice the electronic angular momentum J.
    pub fn j_twice(self) -> u32 {
        match self {
            Level::S5Half | Level::P5Half | Level::S6Half => 1,
            Level::P5ThreeHalves | Level::D4ThreeHalves => 3,
            Level::D4FiveHalves => 5,
        }
    }

    pub fn j(self) -> f64 {
        self.j_twice() as f64 / 2.0
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::S5Half => "5S1/2",
            Level::P5Half => "5P1/2",
            Level::P5ThreeHalves => "5P3/2",
            Level::D4ThreeHalves => "4D3/2",
            Level::D4FiveHalves => "4D5/2",
            Level::S6Half => "6S1/2",
        }
    }

    /// Upper levels whose dipole couplings enter the truncated sum over states.
    pub fn sum_partners(self) -> &'static [Level] {
        match self {
            Level::S5Half => &[Level::P5Half, Level::P5ThreeHalves],
            Level::P5ThreeHalves => &[Level::S6Half, Level::D4ThreeHalves, Level::D4FiveHalves],
            _ => &[],
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Level::ALL
            .iter()
            .copied()
            .find(|l| l.label() == s.trim())
            .ok_or_else(|| Error::InvalidLevel(s.to_string()))
    }
}

/// An electronic level with optional hyperfine (F) and Zeeman (m_F) labels.
///
/// For ⁸⁷Rb (I = 3/2) every F attached to a half-integer J is an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelId {
    pub level: Level,
    pub f: Option<u32>,
    pub m_f: Option<i32>,
}

impl LevelId {
    pub fn new(level: Level) -> Self {
        Self {
            level,
            f: None,
            m_f: None,
        }
    }

    /// Attaches a hyperfine label, checking |J − I| ≤ F ≤ J + I.
    pub fn with_f(self, f: u32, nuclear_spin_twice: u32) -> Result<Self> {
        let j2 = self.level.j_twice() as i64;
        let i2 = nuclear_spin_twice as i64;
        let f2 = 2 * f as i64;
        if f2 < (j2 - i2).abs() || f2 > j2 + i2 || (f2 + j2 + i2) % 2 != 0 {
            return Err(Error::InvalidLevel(format!(
                "F={f} is not allowed for {} with 2I={nuclear_spin_twice}",
                self.level
            )));
        }
        Ok(Self {
            f: Some(f),
            m_f: None,
            ..self
        })
    }

    pub fn with_m(self, m_f: i32) -> Result<Self> {
        let f = self
            .f
            .ok_or_else(|| Error::InvalidLevel("m_F given without F".into()))?;
        if m_f.unsigned_abs() > f {
            return Err(Error::InvalidLevel(format!("|m_F|={} exceeds F={f}", m_f.abs())));
        }
        Ok(Self { m_f: Some(m_f), ..self })
    }
}

impl From<Level> for LevelId {
    fn from(level: Level) -> Self {
        LevelId::new(level)
    }
}

impl fmt::Display for LevelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.level)?;
        if let Some(hf) = self.f {
            write!(f, " F={hf}")?;
        }
        if let Some(m) = self.m_f {
            write!(f, " mF={m}")?;
        }
        Ok(())
    }
}

/// The two ground hyperfine manifolds of 5S₁/₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroundManifold {
    F1,
    F2,
}

impl GroundManifold {
    /// Contribution to J_z = (N_F2 − N_F1)/2.
    pub fn jz(self) -> f64 {
        match self {
            GroundManifold::F1 => -0.5,
            GroundManifold::F2 => 0.5,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for level in Level::ALL {
            assert_eq!(level.label().parse::<Level>().unwrap(), level);
        }
        assert!("4D1/2".parse::<Level>().is_err());
    }

    #[test]
    fn hyperfine_labels_are_checked() {
        let p = LevelId::new(Level::P5ThreeHalves);
        for f in 0..=3 {
            assert!(p.with_f(f, 3).is_ok());
        }
        assert!(p.with_f(4, 3).is_err());
        let s = LevelId::new(Level::S5Half);
        assert!(s.with_f(0, 3).is_err());
        assert!(s.with_f(1, 3).is_ok());
        let f3 = p.with_f(3, 3).unwrap();
        assert!(f3.with_m(-3).is_ok());
        assert!(f3.with_m(4).is_err());
        assert!(p.with_m(0).is_err());
    }
}
