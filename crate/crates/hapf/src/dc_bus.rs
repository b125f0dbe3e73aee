//! Proportional DC-bus voltage controller.
//!
//! The measured capacitor voltage passes through a first-order lag, the error
//! against the reference is multiplied by a gain, and the product is the loss
//! power `p_ave` folded into the compensation reference. Positive output
//! commands a real-power draw that charges the capacitor.

/// Gain-based regulator with a first-order measurement filter.
#[derive(Debug, Clone)]
pub struct DcBusController {
    v_ref: f64,
    gain: f64,
    filter_tau: f64,
    v_filtered: f64,
}

impl DcBusController {
    /// The measurement filter starts at the reference, matching the
    /// pre-charged bus at t = 0.
    pub fn new(v_ref: f64, gain: f64, filter_tau: f64) -> Self {
        assert!(v_ref > 0.0, "v_ref must be positive");
        assert!(gain > 0.0, "gain must be positive");
        assert!(filter_tau > 0.0, "filter time constant must be positive");
        Self {
            v_ref,
            gain,
            filter_tau,
            v_filtered: v_ref,
        }
    }

    pub fn v_ref(&self) -> f64 {
        self.v_ref
    }

    pub fn v_filtered(&self) -> f64 {
        self.v_filtered
    }

    /// Advances the measurement filter one step and returns the loss power
    /// `p_ave = gain * (v_ref - v_filtered)` in watts.
    pub fn regulate(&mut self, v_dc_measured: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let a = dt / self.filter_tau;
        self.v_filtered = (self.v_filtered + a * v_dc_measured) / (1.0 + a);
        self.gain * (self.v_ref - self.v_filtered)
    }
}
