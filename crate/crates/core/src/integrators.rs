//! Time integration of [`DynModel`]s.
//!
//! * stochastic Heun: trapezoidal drift, Euler noise, one shared increment
//!   for predictor and corrector;
//! * classical RK4 with a fixed step;
//! * Dormand–Prince 5(4) with a PI step-size controller.
//!
//! Fixed-step schemes always land exactly on the end time; the last step is
//! shortened when the interval is not a multiple of `dt`.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::{DynModel, Propagator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    StochasticHeun,
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Fixed step, or the initial step for [`Scheme::Rk45`].
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl IntegratorConfig {
    pub fn heun(dt: f64) -> Self {
        IntegratorConfig {
            scheme: Scheme::StochasticHeun,
            dt,
            rtol: 0.0,
            atol: 0.0,
            max_step: dt,
            min_step: 0.0,
        }
    }

    pub fn rk4(dt: f64) -> Self {
        IntegratorConfig {
            scheme: Scheme::Rk4,
            ..IntegratorConfig::heun(dt)
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            scheme: Scheme::Rk45,
            dt: 1e-2,
            rtol,
            atol,
            max_step: f64::INFINITY,
            min_step: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.scheme == Scheme::Rk45 {
            if !(self.rtol > 0.0) || !(self.atol > 0.0) {
                return Err(Error::param("rtol/atol", "must be positive for the adaptive scheme"));
            }
            if !(self.min_step >= 0.0) || !(self.max_step > self.min_step) {
                return Err(Error::param("min_step/max_step", "need 0 <= min_step < max_step"));
            }
        }
        Ok(())
    }
}

fn check_finite(v: &[f64], t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: format!("state during integration at t = {t}"),
        })
    }
}

/// Scratch buffers so the inner loops do not allocate.
#[derive(Debug, Clone)]
pub struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    next: Vec<f64>,
    noise: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            next: vec![0.0; dim],
            noise: vec![0.0; dim],
        }
    }
}

/// One stochastic Heun step of size `dt`, in place.
///
/// With `ΔW ~ N(0, dt·I)`: predictor `x̄ = x + f(x,t)dt + σΔW`, corrector
/// `x' = x + dt/2 (f(x,t) + f(x̄,t+dt)) + σΔW`.
pub fn heun_sde_step<M: DynModel + ?Sized>(
    model: &M,
    x: &mut [f64],
    t: f64,
    dt: f64,
    rng: &mut dyn RngCore,
    ws: &mut Workspace,
) -> Result<()> {
    let mut dw = std::mem::take(&mut ws.noise);
    if model.noise_intensity() > 0.0 {
        let scale = dt.sqrt();
        for w in dw.iter_mut() {
            *w = scale * rng.sample::<f64, _>(StandardNormal);
        }
    } else {
        dw.iter_mut().for_each(|w| *w = 0.0);
    }
    let out = heun_step_with_increment(model, x, t, dt, &dw, ws);
    ws.noise = dw;
    out
}

/// [`heun_sde_step`] with a given Brownian increment `dw` (variance `dt`
/// per component, before scaling by σ).
pub fn heun_step_with_increment<M: DynModel + ?Sized>(
    model: &M,
    x: &mut [f64],
    t: f64,
    dt: f64,
    dw: &[f64],
    ws: &mut Workspace,
) -> Result<()> {
    let sigma = model.noise_intensity();
    let [f0, f1, ..] = &mut ws.k;
    model.drift(x, t, f0);
    for i in 0..x.len() {
        ws.tmp[i] = x[i] + f0[i] * dt + sigma * dw[i];
    }
    model.drift(&ws.tmp, t + dt, f1);
    for i in 0..x.len() {
        x[i] += 0.5 * dt * (f0[i] + f1[i]) + sigma * dw[i];
    }
    check_finite(x, t + dt)
}

fn rk4_step<M: DynModel + ?Sized>(model: &M, x: &mut [f64], t: f64, h: f64, ws: &mut Workspace) -> Result<()> {
    let n = x.len();
    let [k1, k2, k3, k4, ..] = &mut ws.k;
    model.drift(x, t, k1);
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    model.drift(&ws.tmp, t + 0.5 * h, k2);
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    model.drift(&ws.tmp, t + 0.5 * h, k3);
    for i in 0..n {
        ws.tmp[i] = x[i] + h * k3[i];
    }
    model.drift(&ws.tmp, t + h, k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check_finite(x, t + h)
}

// Dormand–Prince 5(4) tableau.
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
// Difference between the 5th and 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

/// Step statistics from an adaptive integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

fn rk45<M: DynModel + ?Sized>(
    model: &M,
    x: &mut [f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    ws: &mut Workspace,
) -> Result<StepStats> {
    let n = x.len();
    let mut stats = StepStats::default();
    let mut t = t0;
    let mut h = cfg.dt.min(cfg.max_step);
    let mut err_prev: f64 = 1e-4;
    let mut rejected_last = false;
    model.drift(x, t, &mut ws.k[0]);
    while t < t1 {
        let remaining = t1 - t;
        let last = h >= remaining;
        let step = if last { remaining } else { h };
        if step < cfg.min_step && !last {
            return Err(Error::StepUnderflow {
                t,
                step,
                min_step: cfg.min_step,
            });
        }
        let [k1, k2, k3, k4, k5, k6, k7] = &mut ws.k;
        for i in 0..n {
            ws.tmp[i] = x[i] + step * A21 * k1[i];
        }
        model.drift(&ws.tmp, t + C2 * step, k2);
        for i in 0..n {
            ws.tmp[i] = x[i] + step * (A31 * k1[i] + A32 * k2[i]);
        }
        model.drift(&ws.tmp, t + C3 * step, k3);
        for i in 0..n {
            ws.tmp[i] = x[i] + step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        model.drift(&ws.tmp, t + C4 * step, k4);
        for i in 0..n {
            ws.tmp[i] = x[i] + step * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        model.drift(&ws.tmp, t + C5 * step, k5);
        for i in 0..n {
            ws.tmp[i] = x[i] + step * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        model.drift(&ws.tmp, t + step, k6);
        for i in 0..n {
            ws.next[i] = x[i] + step * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        model.drift(&ws.next, t + step, k7);

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = cfg.atol + cfg.rtol * x[i].abs().max(ws.next[i].abs());
            err_sq += (e / sc).powi(2);
        }
        let err = (err_sq / n as f64).sqrt();
        if !err.is_finite() {
            if step <= cfg.min_step {
                return Err(Error::NonFinite {
                    context: format!("adaptive step at t = {t}"),
                });
            }
            h = step * MIN_FACTOR;
            stats.rejected += 1;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            t = if last { t1 } else { t + step };
            x.copy_from_slice(&ws.next);
            // First-same-as-last: k7 is the drift at the new point.
            std::mem::swap(k1, k7);
            stats.accepted += 1;
            let mut factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                SAFETY * err.powf(-ALPHA) * err_prev.powf(BETA)
            };
            factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
            if rejected_last {
                factor = factor.min(1.0);
            }
            err_prev = err.max(1e-4);
            rejected_last = false;
            h = (step * factor).min(cfg.max_step);
            check_finite(x, t)?;
        } else {
            let factor = (SAFETY * err.powf(-ALPHA)).max(MIN_FACTOR);
            h = step * factor;
            stats.rejected += 1;
            rejected_last = true;
            if h < cfg.min_step {
                return Err(Error::StepUnderflow {
                    t,
                    step: h,
                    min_step: cfg.min_step,
                });
            }
        }
    }
    Ok(stats)
}

fn fixed_steps<F>(t0: f64, t1: f64, dt: f64, mut step: F) -> Result<()>
where
    F: FnMut(f64, f64) -> Result<()>,
{
    let span = t1 - t0;
    let tol = 1e-9 * dt;
    let mut k: u64 = 0;
    loop {
        let t = t0 + k as f64 * dt;
        let remaining = t1 - t;
        if remaining <= tol {
            break;
        }
        let h = if remaining - dt <= tol { remaining } else { dt };
        step(t, h)?;
        k += 1;
        debug_assert!((k as f64) * dt <= span + dt);
    }
    Ok(())
}

/// Integrates `x` from `t0` to `t1` in place.
pub fn integrate<M: DynModel + ?Sized>(
    model: &M,
    x: &mut [f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    rng: &mut dyn RngCore,
) -> Result<StepStats> {
    cfg.validate()?;
    if !(t1 >= t0) {
        return Err(Error::param("t1", "must not precede t0"));
    }
    if x.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "integrated state",
            expected: model.state_dim(),
            got: x.len(),
        });
    }
    if cfg.scheme != Scheme::StochasticHeun && model.noise_intensity() > 0.0 {
        return Err(Error::param("scheme", "deterministic schemes require sigma = 0"));
    }
    let mut ws = Workspace::new(x.len());
    if t1 == t0 {
        return Ok(StepStats::default());
    }
    match cfg.scheme {
        Scheme::StochasticHeun => {
            let mut stats = StepStats::default();
            fixed_steps(t0, t1, cfg.dt, |t, h| {
                stats.accepted += 1;
                heun_sde_step(model, x, t, h, rng, &mut ws)
            })?;
            Ok(stats)
        }
        Scheme::Rk4 => {
            let mut stats = StepStats::default();
            fixed_steps(t0, t1, cfg.dt, |t, h| {
                stats.accepted += 1;
                rk4_step(model, x, t, h, &mut ws)
            })?;
            Ok(stats)
        }
        Scheme::Rk45 => rk45(model, x, t0, t1, cfg, &mut ws),
    }
}

/// A continuous-time model paired with its integrator settings.
#[derive(Debug, Clone)]
pub struct Integrated<M> {
    pub model: M,
    pub config: IntegratorConfig,
}

impl<M: DynModel> Integrated<M> {
    pub fn new(model: M, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        if config.scheme != Scheme::StochasticHeun && model.noise_intensity() > 0.0 {
            return Err(Error::param("scheme", "deterministic schemes require sigma = 0"));
        }
        Ok(Integrated { model, config })
    }
}

impl<M: DynModel> Propagator for Integrated<M> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn propagate(&self, x: &mut [f64], t0: f64, t1: f64, rng: &mut dyn RngCore) -> Result<()> {
        integrate(&self.model, x, t0, t1, &self.config, rng).map(|_| ())
    }
}
