//! Statistical and topological memory costs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryFlavor {
    Classical,
    Quantum,
}

/// Steady-state information reported when the classical cost diverges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumDiagnostics {
    /// π_g, the post-event mode distribution.
    pub mode_distribution: Vec<f64>,
    /// μ⁻¹, the mean time between events.
    pub mean_wait: f64,
}

/// `D` (log₂ rank, bits) and `C` (entropy, bits) of a model's steady-state
/// memory. Both are absent when `divergent` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryMeasures {
    pub flavor: MemoryFlavor,
    pub topological: Option<f64>,
    pub statistical: Option<f64>,
    pub divergent: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<ContinuumDiagnostics>,
}

impl MemoryMeasures {
    pub fn classical(topological: f64, statistical: f64) -> Self {
        MemoryMeasures {
            flavor: MemoryFlavor::Classical,
            topological: Some(topological),
            statistical: Some(statistical),
            divergent: false,
            diagnostics: None,
        }
    }

    pub fn classical_divergent(diagnostics: ContinuumDiagnostics) -> Self {
        MemoryMeasures {
            flavor: MemoryFlavor::Classical,
            topological: None,
            statistical: None,
            divergent: true,
            diagnostics: Some(diagnostics),
        }
    }

    pub fn quantum(topological: f64, statistical: f64) -> Self {
        MemoryMeasures {
            flavor: MemoryFlavor::Quantum,
            topological: Some(topological),
            statistical: Some(statistical),
            divergent: false,
            diagnostics: None,
        }
    }
}
