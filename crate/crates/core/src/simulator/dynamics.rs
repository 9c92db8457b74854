//! Closed-form dynamics of a current-based LIF neuron with one exponential
//! synaptic current:
//!
//! ```text
//! dv/dt = -v / tau_m + i
//! di/dt = -i / tau_s
//! ```
//!
//! All times are in microseconds. Evaluation order of every expression is
//! fixed so results are bit-reproducible.

/// Time constants and their derived quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub tau_m: f64,
    pub tau_s: f64,
    /// `tau_m * tau_s / (tau_m - tau_s)`; unused when the constants are equal.
    kappa: f64,
    equal: bool,
    /// Peak membrane excursion produced by a unit current step from rest.
    unit_peak: f64,
}

impl Kernel {
    pub fn new(tau_m: f64, tau_s: f64) -> Self {
        let equal = tau_m == tau_s;
        let kappa = if equal { 0.0 } else { tau_m * tau_s / (tau_m - tau_s) };
        let mut k = Kernel { tau_m, tau_s, kappa, equal, unit_peak: 1.0 };
        let t_peak = k.unit_peak_time();
        k.unit_peak = k.propagate(0.0, 1.0, t_peak).0;
        k
    }

    /// Time at which a unit current step from rest peaks.
    pub fn unit_peak_time(&self) -> f64 {
        if self.equal {
            self.tau_m
        } else {
            (self.tau_m / self.tau_s).ln() * self.kappa
        }
    }

    /// Current jump that produces a postsynaptic potential peaking at `weight`.
    pub fn current_for_peak(&self, weight: f64) -> f64 {
        weight / self.unit_peak
    }

    /// State `(v, i)` after `dt` µs without input.
    #[inline]
    pub fn propagate(&self, v: f64, i: f64, dt: f64) -> (f64, f64) {
        let a = (-dt / self.tau_m).exp();
        if self.equal {
            ((v + i * dt) * a, i * a)
        } else {
            let b = (-dt / self.tau_s).exp();
            (v * a + i * self.kappa * (a - b), i * b)
        }
    }

    #[inline]
    pub fn decay_current(&self, i: f64, dt: f64) -> f64 {
        i * (-dt / self.tau_s).exp()
    }

    /// Offset (µs, ≥ 0) of the first instant at which `v` reaches `threshold`
    /// given no further input, or `None` if it never does. Requires
    /// `threshold > 0`.
    pub fn crossing_time(&self, v: f64, i: f64, threshold: f64) -> Option<f64> {
        if v >= threshold {
            return Some(0.0);
        }
        // With non-positive current v only relaxes towards 0 < threshold.
        if i <= 0.0 {
            return None;
        }
        let t_max = self.max_time(v, i)?;
        if self.propagate(v, i, t_max).0 < threshold {
            return None;
        }
        // v rises monotonically on [0, t_max].
        let (mut lo, mut hi) = (0.0f64, t_max);
        for _ in 0..200 {
            if hi - lo <= 1e-6 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.propagate(v, i, mid).0 >= threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }

    /// Time of the membrane maximum for `i > 0`, if it lies ahead.
    fn max_time(&self, v: f64, i: f64) -> Option<f64> {
        let t = if self.equal {
            self.tau_m - v / i
        } else {
            // dv/dt = 0  <=>  exp(t (1/tau_s - 1/tau_m)) = -(B tau_m) / (A tau_s)
            // with v(t) = A e^{-t/tau_m} + B e^{-t/tau_s}
            let a = v + i * self.kappa;
            let b = -i * self.kappa;
            let ratio = -(b * self.tau_m) / (a * self.tau_s);
            if !(ratio.is_finite() && ratio > 0.0) {
                return None;
            }
            ratio.ln() / (1.0 / self.tau_s - 1.0 / self.tau_m)
        };
        (t.is_finite() && t > 0.0).then_some(t)
    }
}
