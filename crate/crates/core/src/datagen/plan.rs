use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed binary treatment sequence `ā = (a_1, …, a_T)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct InterventionPlan(Vec<u8>);

impl InterventionPlan {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("intervention plan must not be empty".into()));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::Contract("intervention plan must be binary".into()));
        }
        Ok(InterventionPlan(values))
    }

    pub fn zeros(horizon: usize) -> Self {
        InterventionPlan(vec![0; horizon])
    }

    pub fn ones(horizon: usize) -> Self {
        InterventionPlan(vec![1; horizon])
    }

    /// `a_i = 1{start <= i <= end}` for `i = 1..=horizon`.
    pub fn window(horizon: usize, start: usize, end: usize) -> Self {
        InterventionPlan((1..=horizon).map(|i| u8::from(start <= i && i <= end)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// Compact form such as `011110`.
    pub fn to_bits(&self) -> String {
        self.0.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
    }

    pub fn from_bits(bits: &str) -> Result<Self> {
        let values = bits
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Contract(format!("invalid plan character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(values)
    }
}

impl TryFrom<Vec<u8>> for InterventionPlan {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<InterventionPlan> for Vec<u8> {
    fn from(p: InterventionPlan) -> Self {
        p.0
    }
}

impl AsRef<[u8]> for InterventionPlan {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// One comparison `ā` vs `b̄`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    /// 1-based setup number.
    pub id: usize,
    /// Treatment window `(k, ℓ)` of `ā`.
    pub window: (usize, usize),
    pub treated: InterventionPlan,
    pub control: InterventionPlan,
}

/// Window pairs `(k, ℓ)` of the three reference setups at `T = 15`.
pub const SETUP_WINDOWS: [(usize, usize); 3] = [(1, 10), (3, 13), (5, 15)];
const REFERENCE_HORIZON: usize = 15;

/// The three setups: `b̄ = 0` and `ā = 1{k <= i <= ℓ}`.
pub fn intervention_grid(horizon: usize) -> Result<Vec<Setup>> {
    let max_end = SETUP_WINDOWS.iter().map(|w| w.1).max().unwrap_or(0);
    if horizon < max_end {
        return Err(Error::Contract(format!(
            "intervention grid needs T >= {max_end}, got {horizon}; use scaled_intervention_grid"
        )));
    }
    Ok(build(horizon, SETUP_WINDOWS.iter().copied()))
}

/// Setups for shorter horizons with windows rescaled by `T / 15`.
pub fn scaled_intervention_grid(horizon: usize) -> Vec<Setup> {
    let scale = horizon as f64 / REFERENCE_HORIZON as f64;
    let windows = SETUP_WINDOWS.iter().map(|&(k, l)| {
        let k = ((k as f64 * scale).round() as usize).max(1);
        let l = ((l as f64 * scale).round() as usize).clamp(k, horizon);
        (k, l)
    });
    build(horizon, windows)
}

fn build(horizon: usize, windows: impl Iterator<Item = (usize, usize)>) -> Vec<Setup> {
    windows
        .enumerate()
        .map(|(j, (k, l))| Setup {
            id: j + 1,
            window: (k, l),
            treated: InterventionPlan::window(horizon, k, l),
            control: InterventionPlan::zeros(horizon),
        })
        .collect()
}
