//! Six-pulse uncontrolled diode rectifier with per-phase front-end
//! inductance and a C parallel R DC side.
//!
//! Diodes are two-state resistors (R_on conducting, R_off blocking, no
//! forward drop). For a fixed conduction pattern the bridge is linear; the
//! pattern is iterated to consistency within each step, flipping to whatever
//! the solved diode voltages demand. A cycle guard falls back to flipping
//! only the most-violated diode so commutation cannot ping-pong forever.

use super::solve::solve;
use super::{CircuitParams, SolverError};
use crate::frames::PhaseTriple;

/// Bridge conduction pattern: `upper[k]` ties phase terminal k to the
/// positive rail, `lower[k]` to the negative rail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiodePattern {
    pub upper: [bool; 3],
    pub lower: [bool; 3],
}

impl DiodePattern {
    pub const ALL_OFF: DiodePattern = DiodePattern {
        upper: [false; 3],
        lower: [false; 3],
    };

    pub fn conducting_count(&self) -> usize {
        self.upper
            .iter()
            .chain(self.lower.iter())
            .filter(|&&on| on)
            .count()
    }
}

/// Rectifier storage states plus the latched conduction pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectifierState {
    /// Phase currents from the PCC into the bridge terminals, through L_L.
    pub i_ac: [f64; 3],
    /// DC-side capacitor voltage.
    pub v_dc: f64,
    pub diodes: DiodePattern,
}

impl RectifierState {
    pub fn quiescent() -> Self {
        Self {
            i_ac: [0.0; 3],
            v_dc: 0.0,
            diodes: DiodePattern::ALL_OFF,
        }
    }

    /// Commits the solved bridge voltages: new phase currents, DC voltage and
    /// pattern. Returns the updated AC currents.
    pub(crate) fn advance(
        &mut self,
        v_pcc: [f64; 3],
        w: [f64; 3],
        rail_p: f64,
        rail_m: f64,
        pattern: DiodePattern,
        g_l: f64,
    ) -> [f64; 3] {
        let mut i_new = [0.0; 3];
        for k in 0..3 {
            i_new[k] = g_l * (v_pcc[k] - w[k]) + self.i_ac[k];
        }
        self.i_ac = i_new;
        self.v_dc = rail_p - rail_m;
        self.diodes = pattern;
        i_new
    }
}

pub(crate) fn diode_conductances(
    pattern: DiodePattern,
    r_on: f64,
    r_off: f64,
) -> ([f64; 3], [f64; 3]) {
    let g = |on: bool| if on { 1.0 / r_on } else { 1.0 / r_off };
    let mut g_up = [0.0; 3];
    let mut g_lo = [0.0; 3];
    for k in 0..3 {
        g_up[k] = g(pattern.upper[k]);
        g_lo[k] = g(pattern.lower[k]);
    }
    (g_up, g_lo)
}

/// Forward voltage of each diode under the solved rail and terminal voltages.
fn diode_forward_voltages(w: [f64; 3], rail_p: f64, rail_m: f64) -> ([f64; 3], [f64; 3]) {
    let mut up = [0.0; 3];
    let mut lo = [0.0; 3];
    for k in 0..3 {
        up[k] = w[k] - rail_p;
        lo[k] = rail_m - w[k];
    }
    (up, lo)
}

/// Pattern demanded by the solved voltages: a diode conducts iff its forward
/// voltage is positive (identical to positive current under the resistor
/// model).
pub(crate) fn consistent_pattern(w: [f64; 3], rail_p: f64, rail_m: f64) -> DiodePattern {
    let (up, lo) = diode_forward_voltages(w, rail_p, rail_m);
    DiodePattern {
        upper: [up[0] > 0.0, up[1] > 0.0, up[2] > 0.0],
        lower: [lo[0] > 0.0, lo[1] > 0.0, lo[2] > 0.0],
    }
}

/// Flips the single diode whose state most contradicts the solved voltages.
fn flip_most_violating(
    pattern: DiodePattern,
    w: [f64; 3],
    rail_p: f64,
    rail_m: f64,
) -> DiodePattern {
    let (up, lo) = diode_forward_voltages(w, rail_p, rail_m);
    let mut worst = 0.0;
    let mut worst_idx = None;
    for k in 0..3 {
        let v_up = if pattern.upper[k] { -up[k] } else { up[k] };
        if v_up > worst {
            worst = v_up;
            worst_idx = Some(k);
        }
        let v_lo = if pattern.lower[k] { -lo[k] } else { lo[k] };
        if v_lo > worst {
            worst = v_lo;
            worst_idx = Some(3 + k);
        }
    }
    let mut next = pattern;
    if let Some(idx) = worst_idx {
        if idx < 3 {
            next.upper[idx] = !next.upper[idx];
        } else {
            next.lower[idx - 3] = !next.lower[idx - 3];
        }
    }
    next
}

/// Iterates the conduction pattern to a fixed point. `solve_for` solves the
/// network under a candidate pattern and returns its payload plus the bridge
/// terminal and rail voltages used for the consistency check.
pub(crate) fn resolve_pattern<T>(
    start: DiodePattern,
    time: f64,
    max_iters: usize,
    mut solve_for: impl FnMut(DiodePattern) -> Result<(T, [f64; 3], f64, f64), SolverError>,
) -> Result<(DiodePattern, T), SolverError> {
    let mut pattern = start;
    let mut visited: Vec<DiodePattern> = Vec::with_capacity(max_iters);
    for _ in 0..max_iters {
        visited.push(pattern);
        let (payload, w, rail_p, rail_m) = solve_for(pattern)?;
        let proposed = consistent_pattern(w, rail_p, rail_m);
        if proposed == pattern {
            return Ok((pattern, payload));
        }
        pattern = if visited.contains(&proposed) {
            flip_most_violating(pattern, w, rail_p, rail_m)
        } else {
            proposed
        };
    }
    Err(SolverError::DiodeNonConvergence { time, max_iters })
}

/// Advances the rectifier one backward-Euler step against a given PCC
/// voltage, iterating the diode pattern internally. Returns the new AC-side
/// phase currents.
pub fn rectifier_step(
    state: &mut RectifierState,
    v_pcc: PhaseTriple,
    params: &CircuitParams,
    dt: f64,
) -> Result<PhaseTriple, SolverError> {
    let v = v_pcc.as_array();
    let g_l = dt / params.l_l;
    let g_dc = params.c_l / dt + 1.0 / params.r_l;
    let dc_hist = params.c_l / dt * state.v_dc;
    let time = 0.0; // standalone stepping carries no absolute time

    let solve_for = |pattern: DiodePattern| {
        let (g_up, g_lo) = diode_conductances(pattern, params.r_on, params.r_off);
        // Unknowns: bridge terminals w0..w2, positive rail, negative rail.
        let mut a = [[0.0; 5]; 5];
        let mut b = [0.0; 5];
        for k in 0..3 {
            a[k][k] = g_l + g_up[k] + g_lo[k];
            a[k][3] = -g_up[k];
            a[k][4] = -g_lo[k];
            b[k] = g_l * v[k] + state.i_ac[k];
            a[3][k] = g_up[k];
            a[4][k] = -g_lo[k];
        }
        let sum_up: f64 = g_up.iter().sum();
        let sum_lo: f64 = g_lo.iter().sum();
        a[3][3] = -(sum_up + g_dc);
        a[3][4] = g_dc;
        b[3] = -dc_hist;
        a[4][3] = -g_dc;
        a[4][4] = sum_lo + g_dc;
        b[4] = -dc_hist;

        let x = solve(a, b).ok_or(SolverError::SingularSystem { time })?;
        Ok((x, [x[0], x[1], x[2]], x[3], x[4]))
    };

    let (pattern, x) = resolve_pattern(state.diodes, time, super::MAX_DIODE_ITERS, solve_for)?;
    let i_new = state.advance(v, [x[0], x[1], x[2]], x[3], x[4], pattern, g_l);
    Ok(PhaseTriple::from_array(i_new))
}
