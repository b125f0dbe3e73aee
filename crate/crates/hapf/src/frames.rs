//! Coordinate transforms between the three-phase (r, y, b) frame and the
//! stationary two-axis frame, plus instantaneous power algebra.
//!
//! The forward transform is the power-invariant Clarke map
//! `H = sqrt(2/3) * [[1, -1/2, -1/2], [0, sqrt(3)/2, -sqrt(3)/2]]`;
//! its transpose is the inverse on zero-sum triples. Instantaneous real and
//! imaginary power follow from `[p, q]^T = K [i_alpha, i_beta]^T` with
//! `K = [[e_alpha, e_beta], [-e_beta, e_alpha]]`, and the inverse map
//! `K^-1 = K^T / (e_alpha^2 + e_beta^2)` recovers currents from powers.

use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// One sample of a per-phase quantity (volts or amperes) in r/y/b coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTriple {
    pub r: f64,
    pub y: f64,
    pub b: f64,
}

impl PhaseTriple {
    pub const ZERO: PhaseTriple = PhaseTriple {
        r: 0.0,
        y: 0.0,
        b: 0.0,
    };

    pub fn new(r: f64, y: f64, b: f64) -> Self {
        Self { r, y, b }
    }

    pub fn sum(&self) -> f64 {
        self.r + self.y + self.b
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r, self.y, self.b]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            r: a[0],
            y: a[1],
            b: a[2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.y.is_finite() && self.b.is_finite()
    }
}

impl Add for PhaseTriple {
    type Output = PhaseTriple;
    fn add(self, rhs: PhaseTriple) -> PhaseTriple {
        PhaseTriple::new(self.r + rhs.r, self.y + rhs.y, self.b + rhs.b)
    }
}

impl Sub for PhaseTriple {
    type Output = PhaseTriple;
    fn sub(self, rhs: PhaseTriple) -> PhaseTriple {
        PhaseTriple::new(self.r - rhs.r, self.y - rhs.y, self.b - rhs.b)
    }
}

impl Neg for PhaseTriple {
    type Output = PhaseTriple;
    fn neg(self) -> PhaseTriple {
        PhaseTriple::new(-self.r, -self.y, -self.b)
    }
}

impl Mul<f64> for PhaseTriple {
    type Output = PhaseTriple;
    fn mul(self, k: f64) -> PhaseTriple {
        PhaseTriple::new(self.r * k, self.y * k, self.b * k)
    }
}

/// The same quantity in the stationary two-axis frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

impl AlphaBeta {
    pub const ZERO: AlphaBeta = AlphaBeta {
        alpha: 0.0,
        beta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Squared magnitude, the denominator of the `K^-1` map.
    pub fn norm_sq(&self) -> f64 {
        self.alpha * self.alpha + self.beta * self.beta
    }
}

impl Add for AlphaBeta {
    type Output = AlphaBeta;
    fn add(self, rhs: AlphaBeta) -> AlphaBeta {
        AlphaBeta::new(self.alpha + rhs.alpha, self.beta + rhs.beta)
    }
}

impl Sub for AlphaBeta {
    type Output = AlphaBeta;
    fn sub(self, rhs: AlphaBeta) -> AlphaBeta {
        AlphaBeta::new(self.alpha - rhs.alpha, self.beta - rhs.beta)
    }
}

impl Neg for AlphaBeta {
    type Output = AlphaBeta;
    fn neg(self) -> AlphaBeta {
        AlphaBeta::new(-self.alpha, -self.beta)
    }
}

impl Mul<f64> for AlphaBeta {
    type Output = AlphaBeta;
    fn mul(self, k: f64) -> AlphaBeta {
        AlphaBeta::new(self.alpha * k, self.beta * k)
    }
}

/// Instantaneous real power `p` (watts) and imaginary power `q` (volt-amperes).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerPair {
    pub p: f64,
    pub q: f64,
}

impl PowerPair {
    pub fn new(p: f64, q: f64) -> Self {
        Self { p, q }
    }
}

/// The fixed Clarke matrix and its transpose.
#[derive(Debug, Clone, Copy)]
pub struct ClarkeConstants {
    /// 2x3 forward matrix, rows are the alpha and beta axes.
    pub h: [[f64; 3]; 2],
    /// 3x2 inverse matrix, the transpose of `h`.
    pub h_inv: [[f64; 2]; 3],
}

const SQRT_2_3: f64 = 0.816_496_580_927_726;
const SQRT_3_2: f64 = 0.866_025_403_784_438_6;

/// Power-invariant Clarke constants, `h * h^T = I` on zero-sum inputs.
pub const CLARKE: ClarkeConstants = ClarkeConstants {
    h: [
        [SQRT_2_3, -0.5 * SQRT_2_3, -0.5 * SQRT_2_3],
        [0.0, SQRT_2_3 * SQRT_3_2, -SQRT_2_3 * SQRT_3_2],
    ],
    h_inv: [
        [SQRT_2_3, 0.0],
        [-0.5 * SQRT_2_3, SQRT_2_3 * SQRT_3_2],
        [-0.5 * SQRT_2_3, -SQRT_2_3 * SQRT_3_2],
    ],
};

/// Voltage vector too small to invert the power map.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("singular voltage: |e|^2 = {norm_sq:.3e} below the floor {floor:.3e}")]
pub struct SingularVoltage {
    pub norm_sq: f64,
    pub floor: f64,
}

/// Three-phase to two-axis transform.
pub fn clarke_forward(x: PhaseTriple) -> AlphaBeta {
    let h = &CLARKE.h;
    AlphaBeta {
        alpha: h[0][0] * x.r + h[0][1] * x.y + h[0][2] * x.b,
        beta: h[1][0] * x.r + h[1][1] * x.y + h[1][2] * x.b,
    }
}

/// Two-axis to three-phase transform; left inverse of [`clarke_forward`]
/// on zero-sum triples. The result always sums to zero.
pub fn clarke_inverse(x: AlphaBeta) -> PhaseTriple {
    let hi = &CLARKE.h_inv;
    PhaseTriple {
        r: hi[0][0] * x.alpha + hi[0][1] * x.beta,
        y: hi[1][0] * x.alpha + hi[1][1] * x.beta,
        b: hi[2][0] * x.alpha + hi[2][1] * x.beta,
    }
}

/// Instantaneous power of a voltage/current pair in the two-axis frame:
/// `p = e_a*i_a + e_b*i_b`, `q = -e_b*i_a + e_a*i_b`.
pub fn instantaneous_power(e: AlphaBeta, i: AlphaBeta) -> PowerPair {
    PowerPair {
        p: e.alpha * i.alpha + e.beta * i.beta,
        q: -e.beta * i.alpha + e.alpha * i.beta,
    }
}

/// Current that carries the demanded power pair at voltage `e`:
/// `i = K^T (p, q)^T / |e|^2`. Fails when `|e|^2` is below `eps_sing`.
pub fn currents_from_power(
    e: AlphaBeta,
    s: PowerPair,
    eps_sing: f64,
) -> Result<AlphaBeta, SingularVoltage> {
    let d = e.norm_sq();
    if d < eps_sing {
        return Err(SingularVoltage {
            norm_sq: d,
            floor: eps_sing,
        });
    }
    Ok(AlphaBeta {
        alpha: (e.alpha * s.p - e.beta * s.q) / d,
        beta: (e.beta * s.p + e.alpha * s.q) / d,
    })
}
