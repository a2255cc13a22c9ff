//! Dormand-Prince 5(4) embedded Runge-Kutta pair with 4th-order dense output.

use crate::error::{Error, Result};

/// A first-order system `dy/dt = f(t, y)`. The right-hand side may fail
/// (e.g. propellant exhausted); the stepper then retries with a smaller step.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> Result<[f64; N]>;
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseSegment<const N: usize> {
    pub t_start: f64,
    pub h: f64,
    t_stop: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn t_end(&self) -> f64 {
        self.t_stop
    }

    /// Pin the end time to `t` (absorbs round-off in `t_start + h`).
    pub fn snap_end(&mut self, t: f64) {
        debug_assert!((t - self.t_stop).abs() <= 1e-6 * self.h.abs().max(1.0));
        self.t_stop = t;
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end()
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t_start) / self.h;
        let s1 = 1.0 - s;
        let c = &self.coeffs;
        std::array::from_fn(|i| c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i]))))
    }

    pub fn start_state(&self) -> [f64; N] {
        self.coeffs[0]
    }

    pub fn end_state(&self) -> [f64; N] {
        std::array::from_fn(|i| self.coeffs[0][i] + self.coeffs[1][i])
    }
}

/// Result of one attempted step.
pub struct Step<const N: usize> {
    pub y: [f64; N],
    /// Derivative at the end of the step (first stage of the next one).
    pub dy: [f64; N],
    pub error: f64,
    pub dense: DenseSegment<N>,
}

#[derive(Debug, Clone)]
pub struct Dopri5<const N: usize> {
    pub rel_tol: f64,
    pub abs_tol: [f64; N],
    pub max_step: f64,
    pub min_step: f64,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
}

impl<const N: usize> Dopri5<N> {
    /// One step of size `h` from `(t, y)` with `dy = f(t, y)` already known.
    pub fn step<S: OdeSystem<N>>(&self, sys: &S, t: f64, y: &[f64; N], dy: &[f64; N], h: f64) -> Result<Step<N>> {
        let k1 = dy;
        let k2 = sys.rhs(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
        let k3 = sys.rhs(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
        let k4 = sys.rhs(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = sys.rhs(t + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = sys.rhs(t + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
        let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = sys.rhs(t + h, &y1)?;

        let mut sum = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.abs_tol[i] + self.rel_tol * y[i].abs().max(y1[i].abs());
            sum += (e / sc).powi(2);
        }
        let error = (sum / N as f64).sqrt();

        let mut coeffs = [[0.0; N]; 5];
        for i in 0..N {
            let dely = y1[i] - y[i];
            let bspl = h * k1[i] - dely;
            coeffs[0][i] = y[i];
            coeffs[1][i] = dely;
            coeffs[2][i] = bspl;
            coeffs[3][i] = dely - h * k7[i] - bspl;
            coeffs[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Ok(Step { y: y1, dy: k7, error, dense: DenseSegment { t_start: t, h, t_stop: t + h, coeffs } })
    }

    /// Adaptive step: retries until the error estimate is accepted. Returns the
    /// accepted step and the suggested size of the next one. Right-hand-side
    /// failures shrink the step; they surface only below `min_step`.
    pub fn adaptive_step<S: OdeSystem<N>>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64; N],
        dy: &[f64; N],
        h_try: f64,
        t_limit: f64,
    ) -> Result<(Step<N>, f64)> {
        let mut h = h_try.min(self.max_step);
        let mut clipped = false;
        if t + h >= t_limit {
            h = t_limit - t;
            clipped = true;
        }
        loop {
            if h < self.min_step && !clipped {
                return Err(Error::StepUnderflow { time: t });
            }
            match self.step(sys, t, y, dy, h) {
                Ok(step) if step.error <= 1.0 => {
                    let fac = if step.error == 0.0 { 5.0 } else { (0.9 * step.error.powf(-0.2)).clamp(0.2, 5.0) };
                    return Ok((step, (h * fac).min(self.max_step)));
                }
                Ok(step) => {
                    h *= (0.9 * step.error.powf(-0.2)).clamp(0.1, 0.5);
                }
                Err(e) => {
                    if h <= self.min_step {
                        return Err(e);
                    }
                    h *= 0.25;
                }
            }
            clipped = false;
        }
    }
}

/// Rough initial step (Hairer, Norsett & Wanner, II.4).
pub fn initial_step<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    dy: &[f64; N],
    integ: &Dopri5<N>,
) -> Result<f64> {
    let scale = |i: usize| integ.abs_tol[i] + integ.rel_tol * y[i].abs();
    let d0 = (y.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d1 = (dy.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(integ.max_step);
    let y1 = axpy(y, h0, &[(1.0, dy)]);
    let dy1 = sys.rhs(t + h0, &y1)?;
    let d2 = (dy1.iter().zip(dy).enumerate().map(|(i, (a, b))| ((a - b) / scale(i)).powi(2)).sum::<f64>() / N as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(integ.max_step))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;

    impl OdeSystem<2> for Oscillator {
        fn rhs(&self, _t: f64, y: &[f64; 2]) -> Result<[f64; 2]> {
            Ok([y[1], -y[0]])
        }
    }

    fn integ(rel: f64) -> Dopri5<2> {
        Dopri5 { rel_tol: rel, abs_tol: [rel; 2], max_step: 1.0, min_step: 1e-12 }
    }

    fn run(rel: f64, t_end: f64) -> ([f64; 2], Vec<DenseSegment<2>>) {
        let sys = Oscillator;
        let integ = integ(rel);
        let (mut t, mut y) = (0.0, [1.0, 0.0]);
        let mut dy = sys.rhs(t, &y).unwrap();
        let mut h = initial_step(&sys, t, &y, &dy, &integ).unwrap();
        let mut segs = Vec::new();
        while t < t_end {
            let (step, h_next) = integ.adaptive_step(&sys, t, &y, &dy, h, t_end).unwrap();
            t = step.dense.t_end();
            y = step.y;
            dy = step.dy;
            h = h_next;
            segs.push(step.dense);
        }
        (y, segs)
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let (y, _) = run(1e-11, 10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn error_shrinks_with_tolerance() {
        let e = |rel| (run(rel, 10.0).0[0] - 10f64.cos()).abs();
        assert!(e(1e-10) < e(1e-6));
    }

    #[test]
    fn dense_output_interpolates() {
        let (_, segs) = run(1e-11, 10.0);
        for seg in &segs {
            let tm = seg.t_start + 0.37 * seg.h;
            let y = seg.eval(tm);
            assert!((y[0] - tm.cos()).abs() < 1e-8);
            assert_eq!(seg.eval(seg.t_start), seg.start_state());
            let end = seg.eval(seg.t_end());
            assert!((end[0] - seg.end_state()[0]).abs() < 1e-14);
        }
    }
}
