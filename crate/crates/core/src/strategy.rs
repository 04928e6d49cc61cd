use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Order in which the two modalities guide each other inside a cross-modal block.
///
/// `C` is the camera (silhouette) stream, `L` the LiDAR (depth image) stream,
/// and `A←B` means A is modeled with supplementary information from B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// `C←L` only; the LiDAR stream passes through.
    CamFromLidarOnly,
    /// `L←C` only; the camera stream passes through.
    LidarFromCamOnly,
    /// `C←L` and `L←C` from the same inputs, no sequencing.
    Simultaneous,
    /// `C←L`, then `L←F(C←L)`.
    CamFirst,
    /// `L←C`, then `C←F(L←C)`.
    LidarFirst,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::CamFromLidarOnly,
        Strategy::LidarFromCamOnly,
        Strategy::Simultaneous,
        Strategy::LidarFirst,
        Strategy::CamFirst,
    ];

    /// Default ordering for channel attention.
    pub const ACCA_DEFAULT: Strategy = Strategy::LidarFirst;
    /// Default ordering for temporal modeling.
    pub const ICTM_DEFAULT: Strategy = Strategy::CamFirst;

    pub fn key(self) -> &'static str {
        match self {
            Strategy::CamFromLidarOnly => "cl_only",
            Strategy::LidarFromCamOnly => "lc_only",
            Strategy::Simultaneous => "simultaneous",
            Strategy::CamFirst => "cl_then_lc",
            Strategy::LidarFirst => "lc_then_cl",
        }
    }

    /// Row label in guidance-arrow notation.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::CamFromLidarOnly => "C←L only",
            Strategy::LidarFromCamOnly => "L←C only",
            Strategy::Simultaneous => "C←L and L←C simultaneously",
            Strategy::CamFirst => "C←L, then L←F(C←L)",
            Strategy::LidarFirst => "L←C, then C←F(L←C)",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.key() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Strategy::ALL.iter().map(|s| s.key()).collect();
                Error::Config(format!("unknown strategy `{s}` (expected one of {})", valid.join(", ")))
            })
    }
}
