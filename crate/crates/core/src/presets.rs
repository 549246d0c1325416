//! The three experiment configurations.
//!
//! | preset           | A settings | B settings | states           | hidden |
//! |------------------|-----------:|-----------:|------------------|-------:|
//! | `epr-2x2`        | 0, π/2     | π/4, 3π/4  | singlet          | 3      |
//! | `epr-8x8`        | kπ/8       | kπ/8       | singlet          | 3      |
//! | `epr-8x8-3state` | kπ/8       | kπ/8       | +−, −+, singlet  | 8      |

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crbm::{ConditioningLayout, LabeledState};
use crate::error::{Error, Result};
use crate::oracle::{DetectorAngle, Outcome, TwoQubitState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "epr-2x2")]
    Epr2x2,
    #[serde(rename = "epr-8x8")]
    Epr8x8,
    #[serde(rename = "epr-8x8-3state")]
    Epr8x8ThreeState,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Epr2x2, Preset::Epr8x8, Preset::Epr8x8ThreeState];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Epr2x2 => "epr-2x2",
            Preset::Epr8x8 => "epr-8x8",
            Preset::Epr8x8ThreeState => "epr-8x8-3state",
        }
    }

    pub fn n_hidden(self) -> usize {
        match self {
            Preset::Epr2x2 | Preset::Epr8x8 => 3,
            Preset::Epr8x8ThreeState => 8,
        }
    }

    pub fn layout(self) -> ConditioningLayout {
        let eighths: Vec<DetectorAngle> = (0..8).map(DetectorAngle::eighths_of_pi).collect();
        let singlet = || LabeledState::new("singlet", TwoQubitState::singlet());
        let (a, b, states) = match self {
            Preset::Epr2x2 => (
                vec![DetectorAngle(0.0), DetectorAngle(FRAC_PI_2)],
                vec![DetectorAngle(FRAC_PI_4), DetectorAngle(3.0 * FRAC_PI_4)],
                vec![singlet()],
            ),
            Preset::Epr8x8 => (eighths.clone(), eighths, vec![singlet()]),
            Preset::Epr8x8ThreeState => (
                eighths.clone(),
                eighths,
                vec![
                    LabeledState::new("+-", TwoQubitState::product(Outcome::Plus, Outcome::Minus)),
                    LabeledState::new("-+", TwoQubitState::product(Outcome::Minus, Outcome::Plus)),
                    singlet(),
                ],
            ),
        };
        ConditioningLayout::new(a, b, states).expect("preset layouts are valid")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown preset '{s}' (expected epr-2x2, epr-8x8 or epr-8x8-3state)")))
    }
}
