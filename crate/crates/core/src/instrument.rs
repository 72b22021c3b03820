//! Value-boundary wrappers that apply a [`PrecisionFormat`] to the classifier.
//!
//! Under node instrumentation only stored node bounds are rounded. Under
//! whole instrumentation every floating-point input, constant, random variate
//! and arithmetic result inside the classifier is rounded. Every arithmetic
//! site in the forest calls through [`Instrument`] regardless of mode, and the
//! counters record how many of those calls performed a rounding.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use crate::scalar::Scalar;
use crate::vprec::{rounded_arith, ArithOp, PrecisionFormat, VprecError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstrumentationMode {
    Uninstrumented,
    Node(PrecisionFormat),
    Whole(PrecisionFormat),
}

impl InstrumentationMode {
    pub fn kind(&self) -> ModeKind {
        match self {
            InstrumentationMode::Uninstrumented => ModeKind::Uninstrumented,
            InstrumentationMode::Node(_) => ModeKind::Node,
            InstrumentationMode::Whole(_) => ModeKind::Whole,
        }
    }

    /// Format applied by this mode; binary64 for the uninstrumented baseline.
    pub fn format(&self) -> PrecisionFormat {
        match self {
            InstrumentationMode::Uninstrumented => PrecisionFormat::DOUBLE,
            InstrumentationMode::Node(f) | InstrumentationMode::Whole(f) => *f,
        }
    }

    pub fn from_kind(kind: ModeKind, format: PrecisionFormat) -> Self {
        match kind {
            ModeKind::Uninstrumented => InstrumentationMode::Uninstrumented,
            ModeKind::Node => InstrumentationMode::Node(format),
            ModeKind::Whole => InstrumentationMode::Whole(format),
        }
    }
}

/// Mode without its format, as named on the command line and in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeKind {
    Uninstrumented,
    Node,
    Whole,
}

impl ModeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeKind::Uninstrumented => "uninstrumented",
            ModeKind::Node => "node",
            ModeKind::Whole => "whole",
        }
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uninstrumented" | "none" | "baseline" => Ok(ModeKind::Uninstrumented),
            "node" | "ni" => Ok(ModeKind::Node),
            "whole" | "wi" => Ok(ModeKind::Whole),
            other => Err(format!("unknown instrumentation mode `{other}`")),
        }
    }
}

/// Call tallies, used to audit instrumentation coverage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Arithmetic operations routed through [`Instrument::op`].
    pub ops: u64,
    /// Of those, operations whose result was rounded.
    pub rounded_ops: u64,
    /// Values (inputs, constants, variates) rounded on entry.
    pub rounded_values: u64,
    /// Node bound components rounded on store.
    pub rounded_stores: u64,
}

#[derive(Debug)]
pub struct Instrument {
    mode: InstrumentationMode,
    ops: Cell<u64>,
    rounded_ops: Cell<u64>,
    rounded_values: Cell<u64>,
    rounded_stores: Cell<u64>,
}

#[inline]
fn bump(c: &Cell<u64>) {
    c.set(c.get() + 1);
}

impl Instrument {
    pub fn new(mode: InstrumentationMode) -> Self {
        Self {
            mode,
            ops: Cell::new(0),
            rounded_ops: Cell::new(0),
            rounded_values: Cell::new(0),
            rounded_stores: Cell::new(0),
        }
    }

    pub fn mode(&self) -> InstrumentationMode {
        self.mode
    }

    pub fn counters(&self) -> Counters {
        Counters {
            ops: self.ops.get(),
            rounded_ops: self.rounded_ops.get(),
            rounded_values: self.rounded_values.get(),
            rounded_stores: self.rounded_stores.get(),
        }
    }

    pub fn reset_counters(&self) {
        for c in [&self.ops, &self.rounded_ops, &self.rounded_values, &self.rounded_stores] {
            c.set(0);
        }
    }

    /// Rounds a node bound component under NI and WI.
    pub fn store<F: Scalar>(&self, x: F) -> Result<F, VprecError> {
        match self.mode {
            InstrumentationMode::Uninstrumented => Ok(x),
            InstrumentationMode::Node(f) | InstrumentationMode::Whole(f) => {
                bump(&self.rounded_stores);
                f.round(x)
            }
        }
    }

    /// Rounds a value entering the classifier, under WI only.
    pub fn value<F: Scalar>(&self, x: F) -> Result<F, VprecError> {
        match self.mode {
            InstrumentationMode::Whole(f) => {
                bump(&self.rounded_values);
                f.round(x)
            }
            _ => Ok(x),
        }
    }

    /// `a op b`, rounded under WI.
    pub fn op<F: Scalar>(&self, op: ArithOp, a: F, b: F) -> Result<F, VprecError> {
        bump(&self.ops);
        match self.mode {
            InstrumentationMode::Whole(f) => {
                bump(&self.rounded_ops);
                rounded_arith(op, a, b, f)
            }
            _ => Ok(op.apply(a, b)),
        }
    }

    #[inline]
    pub fn add<F: Scalar>(&self, a: F, b: F) -> Result<F, VprecError> {
        self.op(ArithOp::Add, a, b)
    }

    #[inline]
    pub fn sub<F: Scalar>(&self, a: F, b: F) -> Result<F, VprecError> {
        self.op(ArithOp::Sub, a, b)
    }

    #[inline]
    pub fn mul<F: Scalar>(&self, a: F, b: F) -> Result<F, VprecError> {
        self.op(ArithOp::Mul, a, b)
    }

    #[inline]
    pub fn div<F: Scalar>(&self, a: F, b: F) -> Result<F, VprecError> {
        self.op(ArithOp::Div, a, b)
    }
}

impl Clone for Instrument {
    fn clone(&self) -> Self {
        Self::new(self.mode)
    }
}
