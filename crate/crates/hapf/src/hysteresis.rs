//! Per-phase hysteresis band comparator.
//!
//! Each converter leg toggles only when the current error leaves the band:
//! error above the upper band drives the leg low (pulling the phase current
//! down), error below the lower band drives it high. Inside the band the
//! previous state is held, so the comparator generates no pulses.

use crate::frames::PhaseTriple;

/// Converter leg state; a high leg raises the phase current.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegState {
    High,
    Low,
}

/// One switching state per phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchCommand {
    pub r: LegState,
    pub y: LegState,
    pub b: LegState,
}

impl SwitchCommand {
    pub const ALL_LOW: SwitchCommand = SwitchCommand {
        r: LegState::Low,
        y: LegState::Low,
        b: LegState::Low,
    };

    pub fn as_array(&self) -> [LegState; 3] {
        [self.r, self.y, self.b]
    }
}

/// Symmetric tolerance band around the reference current.
#[derive(Debug, Clone, Copy)]
pub struct HysteresisBand {
    pub half_width: f64,
}

impl HysteresisBand {
    pub fn new(half_width: f64) -> Self {
        assert!(half_width > 0.0, "band half-width must be positive");
        Self { half_width }
    }
}

fn leg(error: f64, half_width: f64, prev: LegState) -> LegState {
    if error > half_width {
        LegState::Low
    } else if error < -half_width {
        LegState::High
    } else {
        prev
    }
}

/// Evaluates the comparator for all three phases.
pub fn update(
    band: HysteresisBand,
    i_actual: PhaseTriple,
    i_ref: PhaseTriple,
    prev: SwitchCommand,
) -> SwitchCommand {
    let hw = band.half_width;
    SwitchCommand {
        r: leg(i_actual.r - i_ref.r, hw, prev.r),
        y: leg(i_actual.y - i_ref.y, hw, prev.y),
        b: leg(i_actual.b - i_ref.b, hw, prev.b),
    }
}
