use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Cnn,
    Lstm,
}

/// How covariates enter the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// Time series only.
    None,
    /// Hybrid layers at the bottom of the network.
    ShortFuse,
    /// Separate covariate subnetwork merged before the output layer.
    LateFuse,
    /// Covariates appended to the series as constant sequences.
    Replicate,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Cnn => "cnn",
            Family::Lstm => "lstm",
        }
    }
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::None,
        FusionMode::ShortFuse,
        FusionMode::LateFuse,
        FusionMode::Replicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::ShortFuse => "shortfuse",
            FusionMode::LateFuse => "latefuse",
            FusionMode::Replicate => "replicate",
        }
    }

    pub fn uses_covariates(self) -> bool {
        self != FusionMode::None
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Family::Cnn),
            "lstm" => Ok(Family::Lstm),
            other => Err(Error::config("family", format!("unknown family `{other}`"))),
        }
    }
}

impl FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("fusion", format!("unknown fusion mode `{s}`")))
    }
}

/// Width of the late-fusion covariate subnetwork.
pub const LATE_FUSE_WIDTH: usize = 8;

/// Architecture of one model, with the ranges the grid search may explore.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    pub family: Family,
    pub fusion: FusionMode,
    /// 1 to 10 (CNN only).
    pub num_conv_layers: usize,
    /// 3 to 13 (CNN only).
    pub filters: usize,
    pub kernel_width: usize,
    pub pool_window: usize,
    /// Dense embedding (CNN) or LSTM hidden size, 16 to 64.
    pub hidden_size: usize,
    /// Dropout on the penultimate representation, 0 to 0.5.
    pub dropout: f64,
    /// Covariate dropout on hybrid convolutions, 0 to 0.5.
    pub covariate_dropout: f64,
    pub num_classes: usize,
    /// Use hybrid convolutions in every layer instead of the first only.
    pub hybrid_all_layers: bool,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec {
            family: Family::Cnn,
            fusion: FusionMode::ShortFuse,
            num_conv_layers: 1,
            filters: 8,
            kernel_width: 5,
            pool_window: 4,
            hidden_size: 32,
            dropout: 0.0,
            covariate_dropout: 0.0,
            num_classes: 2,
            hybrid_all_layers: false,
        }
    }
}

fn in_range<T: PartialOrd + fmt::Display>(field: &str, v: T, lo: T, hi: T) -> Result<()> {
    if v < lo || v > hi {
        return Err(Error::config(field, format!("{v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.family == Family::Cnn {
            in_range("num_conv_layers", self.num_conv_layers, 1, 10)?;
            in_range("filters", self.filters, 3, 13)?;
            if self.kernel_width == 0 {
                return Err(Error::config("kernel_width", "must be positive"));
            }
            if self.pool_window == 0 {
                return Err(Error::config("pool_window", "must be positive"));
            }
        }
        in_range("hidden_size", self.hidden_size, 16, 64)?;
        in_range("dropout", self.dropout, 0.0, 0.5)?;
        in_range("covariate_dropout", self.covariate_dropout, 0.0, 0.5)?;
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "need at least two classes"));
        }
        Ok(())
    }

    /// Whether conv layer `l` takes covariates.
    pub fn conv_layer_is_hybrid(&self, l: usize) -> bool {
        self.fusion == FusionMode::ShortFuse && (l == 0 || self.hybrid_all_layers)
    }
}
