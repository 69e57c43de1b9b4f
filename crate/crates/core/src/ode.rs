//! Adaptive Dormand–Prince 5(4) integrator for small autonomous or
//! non-autonomous systems, with a per-step observer that can stop the run.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct DopriOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for DopriOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, h0: 1e-3, h_max: f64::INFINITY, max_steps: 1_000_000 }
    }
}

/// Observer verdict after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct DopriOutcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub stopped: bool,
    pub steps: usize,
    /// Step size the controller would try next; reuse to continue.
    pub h_next: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (forward only).
///
/// `observe` runs after every accepted step; returning [`Control::Stop`]
/// ends the integration there.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &DopriOptions,
    mut observe: impl FnMut(f64, &[f64; N]) -> Control,
) -> Result<DopriOutcome<N>> {
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h0.min(t_end - t0).min(opts.h_max);
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, &y);
    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::Numeric(alloc::format!("ODE step budget exhausted at t = {t}")));
        }
        if t + h > t_end {
            h = t_end - t;
        }
        let mut ytmp;
        for s in 1..7 {
            ytmp = y;
            for (i, yi) in ytmp.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, kj) in k.iter().take(s).enumerate() {
                    acc += A[s][j] * kj[i];
                }
                *yi += h * acc;
            }
            k[s] = f(t + C[s] * h, &ytmp);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for i in 0..N {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] = y[i] + h * d5;
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            let e = h * (d5 - d4) / sc;
            err = err.max(e.abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            if h < 1e-300 {
                return Err(Error::Numeric("ODE step underflow".into()));
            }
            continue;
        }
        if err <= 1.0 {
            steps += 1;
            t += h;
            y = y5;
            k[0] = k[6];
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let h_next = (h * fac).min(opts.h_max);
            if observe(t, &y) == Control::Stop {
                return Ok(DopriOutcome { t, y, stopped: true, steps, h_next });
            }
            h = h_next;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if h < 1e-300 {
                return Err(Error::Numeric("ODE step underflow".into()));
            }
        }
    }
    Ok(DopriOutcome { t, y, stopped: false, steps, h_next: h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let out = integrate(|_, y| [y[1], -y[0]], 0.0, [1.0, 0.0], 2.0 * core::f64::consts::PI, &DopriOptions::default(), |_, _| {
            Control::Continue
        })
        .unwrap();
        assert!((out.y[0] - 1.0).abs() < 1e-10);
        assert!(out.y[1].abs() < 1e-10);
        assert!(!out.stopped);
    }

    #[test]
    fn exponential_growth() {
        let out = integrate(|_, y| [y[0]], 0.0, [1.0], 3.0, &DopriOptions::default(), |_, _| Control::Continue).unwrap();
        assert!((out.y[0] - 3.0f64.exp()).abs() < 1e-10 * 3.0f64.exp());
    }

    #[test]
    fn observer_stops_at_event() {
        let out = integrate(|_, _| [1.0], 0.0, [0.0], 10.0, &DopriOptions { h_max: 0.1, ..Default::default() }, |_, y| {
            if y[0] > 2.0 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(out.stopped);
        assert!(out.t > 2.0 && out.t < 2.2);
    }
}
