//! Reference-current estimation: splits load power into average and
//! oscillating parts over a trailing one-period window and synthesizes the
//! per-phase compensation current reference.
//!
//! The reference is built from `p* = -p_osc` and `q* = -q_total`, shifted by
//! the DC-bus loss power `p_ave`, mapped through the inverse power matrix and
//! the inverse Clarke transform. Adding the reference to the load current
//! leaves the source carrying only the average real power plus `p_ave`, with
//! zero imaginary power.

use crate::frames::{
    clarke_inverse, currents_from_power, instantaneous_power, AlphaBeta, PhaseTriple, PowerPair,
    SingularVoltage,
};

/// Average/oscillating decomposition of one power sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    pub p_avg: f64,
    pub p_osc: f64,
    pub q_avg: f64,
    pub q_osc: f64,
}

/// Trailing moving average over a fixed sample window.
///
/// Until the window first fills, the average is taken over the samples seen
/// so far. The running sum is rebuilt from the ring every
/// `SUM_RECOMPUTE_WINDOWS` windows to bound floating-point drift.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    ring: Vec<f64>,
    head: usize,
    filled: usize,
    sum: f64,
    pushes: u64,
}

const SUM_RECOMPUTE_WINDOWS: u64 = 10;

impl MovingAverage {
    /// `window_length` is the fundamental period divided by the step, in samples.
    pub fn new(window_length: usize) -> Self {
        assert!(window_length > 0, "window must hold at least one sample");
        Self {
            ring: vec![0.0; window_length],
            head: 0,
            filled: 0,
            sum: 0.0,
            pushes: 0,
        }
    }

    pub fn window_length(&self) -> usize {
        self.ring.len()
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.ring.len()
    }

    /// Pushes one sample and returns the current trailing average.
    pub fn push(&mut self, x: f64) -> f64 {
        let n = self.ring.len();
        self.sum += x - self.ring[self.head];
        self.ring[self.head] = x;
        self.head = (self.head + 1) % n;
        if self.filled < n {
            self.filled += 1;
        }
        self.pushes += 1;
        if self.pushes.is_multiple_of(SUM_RECOMPUTE_WINDOWS * n as u64) {
            self.sum = self.ring.iter().sum();
        }
        self.sum / self.filled as f64
    }

    pub fn average(&self) -> f64 {
        if self.filled == 0 {
            0.0
        } else {
            self.sum / self.filled as f64
        }
    }
}

/// Stateful separator feeding one moving average per power component.
#[derive(Debug, Clone)]
pub struct PowerSeparator {
    p_mean: MovingAverage,
    q_mean: MovingAverage,
}

impl PowerSeparator {
    pub fn new(window_length: usize) -> Self {
        Self {
            p_mean: MovingAverage::new(window_length),
            q_mean: MovingAverage::new(window_length),
        }
    }

    pub fn is_full(&self) -> bool {
        self.p_mean.is_full()
    }

    /// Consumes one power sample and returns its average/oscillating split.
    /// `p_avg + p_osc` reconstructs the input exactly, likewise for `q`.
    pub fn separate(&mut self, s: PowerPair) -> PowerSplit {
        let p_avg = self.p_mean.push(s.p);
        let q_avg = self.q_mean.push(s.q);
        PowerSplit {
            p_avg,
            p_osc: s.p - p_avg,
            q_avg,
            q_osc: s.q - q_avg,
        }
    }
}

/// Compensation current reference, in both frames.
///
/// The phase components sum to zero by construction of the inverse Clarke map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCurrents {
    pub phase: PhaseTriple,
    pub alpha_beta: AlphaBeta,
}

/// Instantaneous load power from the two-axis voltage and load current.
pub fn load_power(e: AlphaBeta, i_load: AlphaBeta) -> PowerPair {
    instantaneous_power(e, i_load)
}

/// Builds the compensation reference: the current the filter must draw so
/// that the source is left with `(p_avg + p_ave, 0)`.
///
/// `q_total` is the full imaginary power of the load (average plus
/// oscillating), `p_ave` the loss power demanded by the DC-bus controller.
pub fn compensation_reference(
    e: AlphaBeta,
    split: &PowerSplit,
    q_total: f64,
    p_ave: f64,
    eps_sing: f64,
) -> Result<ReferenceCurrents, SingularVoltage> {
    let p_star = -split.p_osc;
    let q_star = -q_total;
    let demand = PowerPair::new(p_star + p_ave, q_star);
    let alpha_beta = currents_from_power(e, demand, eps_sing)?;
    Ok(ReferenceCurrents {
        phase: clarke_inverse(alpha_beta),
        alpha_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::clarke_forward;
    use std::f64::consts::PI;

    #[test]
    fn load_power_matches_power_matrix() {
        assert_eq!(
            load_power(AlphaBeta::new(1.0, 0.0), AlphaBeta::ZERO),
            PowerPair::new(0.0, 0.0)
        );
        assert_eq!(
            load_power(AlphaBeta::new(2.0, 1.0), AlphaBeta::new(3.0, -1.0)),
            PowerPair::new(5.0, -5.0)
        );
        assert_eq!(
            load_power(AlphaBeta::new(1.0, 1.0), AlphaBeta::new(1.0, 1.0)),
            PowerPair::new(2.0, 0.0)
        );
    }

    #[test]
    fn constant_input_splits_to_pure_average() {
        let mut sep = PowerSeparator::new(200);
        let mut last = None;
        for _ in 0..400 {
            last = Some(sep.separate(PowerPair::new(100.0, 0.0)));
        }
        let split = last.unwrap();
        assert!((split.p_avg - 100.0).abs() < 1e-9);
        assert!(split.p_osc.abs() < 1e-9);
    }

    #[test]
    fn integer_harmonic_averages_out_over_one_window() {
        // 300 Hz completes exactly 6 periods in a 20 ms window, so its
        // trailing-window mean is analytically zero.
        let dt = 1e-4;
        let window = 200; // 20 ms
        let mut sep = PowerSeparator::new(window);
        for n in 0..3 * window {
            let t = (n + 1) as f64 * dt;
            let p = 100.0 + 30.0 * (2.0 * PI * 300.0 * t).sin();
            let split = sep.separate(PowerPair::new(p, 0.0));
            if n >= window {
                assert!(
                    (split.p_avg - 100.0).abs() < 1e-6,
                    "p_avg = {}",
                    split.p_avg
                );
                let expect_osc = 30.0 * (2.0 * PI * 300.0 * t).sin();
                assert!((split.p_osc - expect_osc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pure_oscillation_has_zero_average_after_fill() {
        let dt = 1e-4;
        let window = 200;
        let mut sep = PowerSeparator::new(window);
        for n in 0..2 * window {
            let t = (n + 1) as f64 * dt;
            let p = 50.0 * (2.0 * PI * 300.0 * t).sin();
            let split = sep.separate(PowerPair::new(p, p));
            if n >= window {
                assert!(split.p_avg.abs() < 1e-6);
                assert!(split.q_avg.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn split_reconstructs_input_exactly() {
        let mut sep = PowerSeparator::new(37);
        for n in 0..500 {
            let p = (n as f64 * 0.37).sin() * 1234.5;
            let q = (n as f64 * 0.11).cos() * 98.7;
            let split = sep.separate(PowerPair::new(p, q));
            // p_osc = p - p_avg, so reconstruction is exact up to one
            // rounding of the re-addition.
            assert!((split.p_avg + split.p_osc - p).abs() <= 1e-12 * p.abs().max(1.0));
            assert!((split.q_avg + split.q_osc - q).abs() <= 1e-12 * q.abs().max(1.0));
        }
    }

    #[test]
    fn moving_average_tracks_true_window_mean_over_long_runs() {
        // The periodic sum rebuild keeps the running sum drift-free.
        let mut ma = MovingAverage::new(64);
        let mut ring = Vec::new();
        for n in 0..100_000u64 {
            let x = ((n as f64 * 0.618).sin() * 1e6).fract() + 0.1;
            ring.push(x);
            let avg = ma.push(x);
            if n % 9_999 == 0 {
                let lo = ring.len().saturating_sub(64);
                let truth: f64 = ring[lo..].iter().sum::<f64>() / (ring.len() - lo) as f64;
                assert!(
                    (avg - truth).abs() <= 1e-9 * truth.abs().max(1.0),
                    "drift at n={n}: {avg} vs {truth}"
                );
            }
        }
    }

    #[test]
    fn nothing_to_compensate_for_clean_in_phase_load() {
        // Balanced sinusoidal voltage, purely fundamental in-phase current:
        // p is constant, q is zero, so the reference vanishes.
        let dt = 1e-4;
        let window = 200;
        let mut sep = PowerSeparator::new(window);
        let mut worst: f64 = 0.0;
        for n in 0..3 * window {
            let t = (n + 1) as f64 * dt;
            let th = 2.0 * PI * 50.0 * t;
            let e = clarke_forward(PhaseTriple::new(
                311.0 * th.sin(),
                311.0 * (th - 2.0 * PI / 3.0).sin(),
                311.0 * (th + 2.0 * PI / 3.0).sin(),
            ));
            let i = e * (10.0 / 311.0);
            let split = sep.separate(load_power(e, i));
            let reference = compensation_reference(e, &split, 0.0, 0.0, 1e-6).unwrap();
            if n >= window {
                worst = worst
                    .max(reference.phase.r.abs())
                    .max(reference.phase.y.abs())
                    .max(reference.phase.b.abs());
            }
        }
        // Within 1e-6 of the 10 A rated current scale.
        assert!(worst < 1e-6 * 10.0, "residual reference {worst}");
    }

    #[test]
    fn pure_reactive_demand_maps_through_inverse_clarke() {
        let e = AlphaBeta::new(1.0, 0.0);
        let split = PowerSplit {
            p_avg: 0.0,
            p_osc: 0.0,
            q_avg: 0.0,
            q_osc: 0.0,
        };
        let reference = compensation_reference(e, &split, 1.0, 0.0, 1e-9).unwrap();
        // (p*, q*) = (0, -1) and K^-1 = I at e = (1, 0).
        assert!((reference.alpha_beta.alpha - 0.0).abs() < 1e-15);
        assert!((reference.alpha_beta.beta + 1.0).abs() < 1e-15);
        let expect = clarke_inverse(AlphaBeta::new(0.0, -1.0));
        assert!((reference.phase.r - expect.r).abs() < 1e-15);
        assert!((reference.phase.y - expect.y).abs() < 1e-15);
        assert!((reference.phase.b - expect.b).abs() < 1e-15);
        assert!((reference.phase.y + 0.707_106_781_186_547_5).abs() < 1e-12);
    }

    #[test]
    fn loss_power_demand_carries_exactly_that_power() {
        let split = PowerSplit {
            p_avg: 0.0,
            p_osc: 0.0,
            q_avg: 0.0,
            q_osc: 0.0,
        };
        for (e, p_ave) in [
            (AlphaBeta::new(1.0, 0.0), 400.0),
            (AlphaBeta::new(-2.3, 0.7), 123.4),
            (AlphaBeta::new(0.1, -311.0), -55.0),
        ] {
            let reference = compensation_reference(e, &split, 0.0, p_ave, 1e-9).unwrap();
            let s = instantaneous_power(e, reference.alpha_beta);
            assert!((s.p - p_ave).abs() <= 1e-9 * p_ave.abs());
            assert!(s.q.abs() <= 1e-9 * p_ave.abs());
        }
    }

    #[test]
    fn reference_phases_sum_to_zero() {
        let split = PowerSplit {
            p_avg: 10.0,
            p_osc: -3.0,
            q_avg: 2.0,
            q_osc: 0.5,
        };
        let reference =
            compensation_reference(AlphaBeta::new(1.3, -0.2), &split, 2.5, 42.0, 1e-9).unwrap();
        assert!(reference.phase.sum().abs() < 1e-12);
    }

    #[test]
    fn compensation_completeness_identity() {
        // Source-side power after adding the reference to the load current
        // is (p_avg + p_ave, 0), sample for sample.
        let dt = 1e-4;
        let window = 200;
        let mut sep = PowerSeparator::new(window);
        let p_ave = 150.0;
        for n in 0..3 * window {
            let t = (n + 1) as f64 * dt;
            let th = 2.0 * PI * 50.0 * t;
            let e = clarke_forward(PhaseTriple::new(
                311.0 * th.sin(),
                311.0 * (th - 2.0 * PI / 3.0).sin(),
                311.0 * (th + 2.0 * PI / 3.0).sin(),
            ));
            // Distorted load: fundamental plus 5th and 7th harmonics.
            let i = AlphaBeta::new(
                8.0 * th.sin() + 1.5 * (5.0 * th).cos() + 0.9 * (7.0 * th).sin(),
                -8.0 * th.cos() + 1.1 * (5.0 * th).sin(),
            );
            let s = load_power(e, i);
            let split = sep.separate(s);
            let reference = compensation_reference(e, &split, s.q, p_ave, 1e-6).unwrap();
            let source = instantaneous_power(e, i + reference.alpha_beta);
            let scale = split.p_avg.abs().max(p_ave.abs()).max(1.0);
            assert!(
                (source.p - (split.p_avg + p_ave)).abs() <= 1e-9 * scale,
                "p residual at n={n}"
            );
            assert!(source.q.abs() <= 1e-9 * scale, "q residual at n={n}");
        }
    }

    #[test]
    fn reference_scales_inversely_with_voltage() {
        // Doubling e halves the reference for fixed powers.
        let split = PowerSplit {
            p_avg: 0.0,
            p_osc: -120.0,
            q_avg: 0.0,
            q_osc: 30.0,
        };
        let e = AlphaBeta::new(0.9, 0.5);
        let r1 = compensation_reference(e, &split, 30.0, 10.0, 1e-9).unwrap();
        let r2 = compensation_reference(e * 2.0, &split, 30.0, 10.0, 1e-9).unwrap();
        assert!((r2.alpha_beta.alpha * 2.0 - r1.alpha_beta.alpha).abs() < 1e-12);
        assert!((r2.alpha_beta.beta * 2.0 - r1.alpha_beta.beta).abs() < 1e-12);
    }

    #[test]
    fn singular_voltage_propagates() {
        let split = PowerSplit {
            p_avg: 0.0,
            p_osc: 0.0,
            q_avg: 0.0,
            q_osc: 0.0,
        };
        assert!(compensation_reference(AlphaBeta::ZERO, &split, 1.0, 0.0, 1e-9).is_err());
    }
}
