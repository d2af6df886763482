//! Closed-form transient solution for a plate of height L, insulated at
//! y = 0 and held at T = 1 on y = L from a zero initial state, together with
//! the resulting laterally constrained plane-strain displacement
//! `u_y(y) = (1 + ν)/(1 − ν) · α · ∫₀^y T`.

use std::f64::consts::PI;

/// Partial sum of the Fourier series with a bound on the neglected tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateSeries {
    /// Thermal diffusivity k/(ρc), m²/s.
    pub diffusivity: f64,
    /// Plate height L, m.
    pub height: f64,
    pub terms: usize,
}

/// Number of intervals of the composite Simpson rule for the displacement.
pub const SIMPSON_INTERVALS: usize = 2000;

impl PlateSeries {
    pub fn new(diffusivity: f64, height: f64) -> Self {
        PlateSeries {
            diffusivity,
            height,
            terms: 200,
        }
    }

    fn decay(&self, n: usize, t: f64) -> f64 {
        let m = (2 * n + 1) as f64;
        (-m * m * PI * PI * self.diffusivity * t / (4.0 * self.height * self.height)).exp()
    }

    /// Temperature at height `y` and time `t`.
    pub fn temperature(&self, y: f64, t: f64) -> f64 {
        let l = self.height;
        if y >= l {
            return 1.0;
        }
        if t <= 0.0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for n in 0..self.terms {
            let m = (2 * n + 1) as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign / m * self.decay(n, t) * (m * PI * y / (2.0 * l)).cos();
        }
        1.0 - 4.0 / PI * sum
    }

    /// Upper bound on the magnitude of the terms beyond `self.terms`
    /// (infinite at t = 0, where the series is not used).
    pub fn remainder_bound(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::INFINITY;
        }
        let n = self.terms;
        let first = self.decay(n, t) / (2 * n + 1) as f64;
        // successive decay factors shrink at least geometrically
        let a = PI * PI * self.diffusivity * t / (4.0 * self.height * self.height);
        let ratio = (-8.0 * (n as f64 + 1.0) * a).exp();
        4.0 / PI * first / (1.0 - ratio)
    }

    /// `∫₀^y T` by composite Simpson.
    pub fn integral(&self, y: f64, t: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let n = SIMPSON_INTERVALS;
        let h = y / n as f64;
        let mut s = self.temperature(0.0, t) + self.temperature(y, t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * self.temperature(i as f64 * h, t);
        }
        s * h / 3.0
    }

    /// `∫₀^y T` integrated term by term.
    pub fn integral_termwise(&self, y: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let l = self.height;
        let mut sum = 0.0;
        for n in 0..self.terms {
            let m = (2 * n + 1) as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign / m * self.decay(n, t) * (2.0 * l / (m * PI)) * (m * PI * y / (2.0 * l)).sin();
        }
        y - 4.0 / PI * sum
    }

    /// Vertical displacement of a plate restrained against lateral motion.
    pub fn displacement(&self, y: f64, t: f64, poisson: f64, expansion: f64) -> f64 {
        (1.0 + poisson) / (1.0 - poisson) * expansion * self.integral(y, t)
    }

    /// Steady-state limit of [`displacement`](Self::displacement).
    pub fn steady_displacement(&self, y: f64, poisson: f64, expansion: f64) -> f64 {
        (1.0 + poisson) / (1.0 - poisson) * expansion * y
    }
}
