use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Ideal,
    Practical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Env {
    Clean,
    Noisy,
}

/// Recording channel and acoustic environment of a test condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub channel: Channel,
    pub env: Env,
}

impl Condition {
    pub const IDEAL_CLEAN: Condition = Condition {
        channel: Channel::Ideal,
        env: Env::Clean,
    };
    pub const IDEAL_NOISY: Condition = Condition {
        channel: Channel::Ideal,
        env: Env::Noisy,
    };
    pub const PRACTICAL_CLEAN: Condition = Condition {
        channel: Channel::Practical,
        env: Env::Clean,
    };
    pub const PRACTICAL_NOISY: Condition = Condition {
        channel: Channel::Practical,
        env: Env::Noisy,
    };
    pub const ALL: [Condition; 4] = [
        Condition::IDEAL_CLEAN,
        Condition::IDEAL_NOISY,
        Condition::PRACTICAL_CLEAN,
        Condition::PRACTICAL_NOISY,
    ];

    pub fn index(self) -> u64 {
        Condition::ALL.iter().position(|&c| c == self).unwrap() as u64
    }

    /// Target SNR of the additive noise in dB.
    pub fn snr_db(self) -> f64 {
        match self.channel {
            Channel::Ideal => 15.0,
            Channel::Practical => 5.0,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Ideal => "ideal",
            Channel::Practical => "practical",
        })
    }
}

impl fmt::Display for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Env::Clean => "clean",
            Env::Noisy => "noisy",
        })
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.channel, self.env)
    }
}

impl FromStr for Condition {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| crate::Error::Input(format!("unknown condition {s:?}; expected ideal-clean, ideal-noisy, practical-clean or practical-noisy")))
    }
}
