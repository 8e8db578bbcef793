use std::path::PathBuf;

use aimdgrid_core::learning::LearningError;
use aimdgrid_core::powerflow::PowerFlowError;
use aimdgrid_core::scenario::ScenarioError;
use aimdgrid_core::topology::{BusId, TopologyError};
use aimdgrid_core::SimError;

/// Process exit status for each error class.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ExitClass {
    Numerical = 2,
    Input = 3,
    Incompatible = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{} node(s) could not be trained: {}", .0.len(), describe_failures(.0))]
    Untrainable(Vec<(BusId, LearningError)>),
    #[error("incompatible artifacts: {0}")]
    Incompatible(String),
}

fn describe_failures(nodes: &[(BusId, LearningError)]) -> String {
    nodes.iter().map(|(n, e)| format!("{n} ({e})")).collect::<Vec<_>>().join(", ")
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Parse { path: path.into(), message: message.to_string() }
    }

    pub fn class(&self) -> ExitClass {
        match self {
            Self::Untrainable(_) => ExitClass::Numerical,
            Self::Incompatible(_) => ExitClass::Incompatible,
            Self::Scenario(ScenarioError::PowerFlow(_) | ScenarioError::Calibration { .. }) => ExitClass::Numerical,
            Self::Sim(e) => match e {
                SimError::PowerFlow { .. } | SimError::Learning(_) => ExitClass::Numerical,
                SimError::Scenario(ScenarioError::PowerFlow(_) | ScenarioError::Calibration { .. }) => ExitClass::Numerical,
                SimError::IncompatibleRuns => ExitClass::Incompatible,
                _ => ExitClass::Input,
            },
            _ => ExitClass::Input,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class() as i32
    }
}

impl From<PowerFlowError> for CliError {
    fn from(e: PowerFlowError) -> Self {
        Self::Sim(SimError::PowerFlow { t_s: 0, source: e })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
