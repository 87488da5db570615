use std::fmt;

use billiards::cells::CellsError;
use billiards::counting::CountingError;
use billiards::dynamics::DynamicsError;
use billiards::polygon::PolygonError;
use billiards::realization::RealizationError;
use billiards::spectrum::SpectrumError;
use billiards::symbolic::SymbolicError;
use serde::Serialize;

/// Process exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitKind {
    Usage,
    Numeric,
    Violation,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        match self {
            Self::Usage => 2,
            Self::Numeric => 3,
            Self::Violation => 4,
        }
    }
}

/// Printed to stderr as `{"schema": 1, "error": {...}}`.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub kind: ExitKind,
}

impl CliError {
    pub fn usage(code: &str, message: impl Into<String>) -> Self {
        Self::new(code, message, ExitKind::Usage)
    }

    pub fn violation(code: &str, message: impl Into<String>) -> Self {
        Self::new(code, message, ExitKind::Violation)
    }

    pub fn numeric(code: &str, message: impl Into<String>) -> Self {
        Self::new(code, message, ExitKind::Numeric)
    }

    fn new(code: &str, message: impl Into<String>, kind: ExitKind) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            kind,
        }
    }

    fn tagged(code: &str, message: String, kind: ExitKind) -> Self {
        Self::new(code, message, kind)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage("Io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::usage("MalformedJson", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::usage("Io", e.to_string())
    }
}

// Wrapper variants are unwrapped so that the code names the failing check,
// while the message keeps the full chain.

impl From<PolygonError> for CliError {
    fn from(e: PolygonError) -> Self {
        use PolygonError::*;
        let (code, kind) = match &e {
            InvalidArcCount(_) => ("InvalidArcCount", ExitKind::Usage),
            InvalidParameter(_) => ("InvalidParameter", ExitKind::Usage),
            NotRational => ("NotRational", ExitKind::Usage),
            ClosureViolation { .. } => ("ClosureViolation", ExitKind::Violation),
            EqualConsecutiveRadii(..) => ("EqualConsecutiveRadii", ExitKind::Violation),
            Discontinuity(..) => ("Discontinuity", ExitKind::Violation),
        };
        Self::tagged(code, e.to_string(), kind)
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        let mut inner = &e;
        while let DynamicsError::AtStep { source, .. } = inner {
            inner = source;
        }
        let code = match inner {
            DynamicsError::DegenerateChord { .. } => "DegenerateChord",
            DynamicsError::NoIntersection { .. } => "NoIntersection",
            DynamicsError::DomainError(_) => "DomainError",
            DynamicsError::AtStep { .. } => unreachable!(),
        };
        Self::tagged(code, e.to_string(), ExitKind::Numeric)
    }
}

impl From<CellsError> for CliError {
    fn from(e: CellsError) -> Self {
        use CellsError::*;
        let (code, kind) = match &e {
            Dynamics(d) => return d.clone().into(),
            EmptyIntersection { .. } => ("EmptyIntersection", ExitKind::Usage),
            InvalidN(_) => ("InvalidN", ExitKind::Usage),
            NotAdmissiblePair { .. } => ("NotAdmissiblePair", ExitKind::Usage),
            GuardBand { .. } => ("GuardBand", ExitKind::Numeric),
        };
        Self::tagged(code, e.to_string(), kind)
    }
}

impl From<SymbolicError> for CliError {
    fn from(e: SymbolicError) -> Self {
        use SymbolicError::*;
        let (code, kind) = match &e {
            Cells(c) => return c.clone().into(),
            WindowTooLarge(_) => ("WindowTooLarge", ExitKind::Usage),
            WrongLength { .. } => ("WrongLength", ExitKind::Usage),
            BelowFloor { .. } => ("BelowFloor", ExitKind::Usage),
            IndexOutOfRange { .. } => ("IndexOutOfRange", ExitKind::Usage),
            CapTooSmall { .. } => ("CapTooSmall", ExitKind::Usage),
            EmptySet { .. } => ("EmptySet", ExitKind::Numeric),
            Unreachable => ("Unreachable", ExitKind::Numeric),
        };
        Self::tagged(code, e.to_string(), kind)
    }
}

impl From<RealizationError> for CliError {
    fn from(e: RealizationError) -> Self {
        use RealizationError::*;
        let (code, kind) = match &e {
            Dynamics(d) => return d.clone().into(),
            Cells(c) => return c.clone().into(),
            Symbolic(s) => return s.clone().into(),
            NotRational => ("NotRational", ExitKind::Usage),
            NotInPolytope(_) => ("NotInPolytope", ExitKind::Usage),
            NotAdmissible => ("NotAdmissible", ExitKind::Usage),
            TooDeep(_) => ("TooDeep", ExitKind::Usage),
            NoConvergence { .. } => ("NoConvergence", ExitKind::Numeric),
            RealizationFailed { .. } => ("RealizationFailed", ExitKind::Numeric),
        };
        Self::tagged(code, e.to_string(), kind)
    }
}

impl From<CountingError> for CliError {
    fn from(e: CountingError) -> Self {
        use CountingError::*;
        let (code, kind) = match &e {
            Cells(c) => return c.clone().into(),
            InvalidPeriod => ("InvalidPeriod", ExitKind::Usage),
            DimensionTooLarge { .. } => ("DimensionTooLarge", ExitKind::Usage),
            EmptyCube(_) => ("EmptyCube", ExitKind::Numeric),
            BoundViolation { .. } => ("BoundViolation", ExitKind::Violation),
        };
        Self::tagged(code, e.to_string(), kind)
    }
}

impl From<SpectrumError> for CliError {
    fn from(e: SpectrumError) -> Self {
        use SpectrumError::*;
        let (code, kind) = match &e {
            Realization(r) => return r.clone().into(),
            TargetOutOfRange { .. } => ("TargetOutOfRange", ExitKind::Usage),
            TooManyArcs(_) => ("TooManyArcs", ExitKind::Usage),
            NotRational => ("NotRational", ExitKind::Usage),
            DegeneratePolytope => ("DegeneratePolytope", ExitKind::Numeric),
            NotSliding => ("NotSliding", ExitKind::Numeric),
            Rounding { .. } => ("Rounding", ExitKind::Numeric),
        };
        Self::tagged(code, e.to_string(), kind)
    }
}
