//! Fluid-limit (mean-field) model of content dissemination between
//! requesters and holders.
//!
//! With `N = r0 + h0` and `x = M·N·t` the expected population evolves as a
//! logistic curve:
//!
//! ```text
//! h(t) = h0·N·e^x / (r0 + h0·e^x)
//! r(t) = r0·N     / (r0 + h0·e^x)
//! ```
//!
//! Both are evaluated through the shared denominator `r0·e^-x + h0`, which
//! never overflows: for long horizons `e^-x` underflows to zero and `r(t)`
//! reaches its limit 0 without producing `inf/inf`.
//!
//! [`ode_oracle`] integrates `dh/dt = M·h·r`, `dr/dt = -M·h·r` with classic
//! RK4 and exists only to cross-check the closed forms.

use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid time {0}: must be finite and non-negative")]
    InvalidTime(f64),
    #[error("invalid step {step} for horizon {t_end}")]
    InvalidStep { step: f64, t_end: f64 },
    #[error("degenerate model: expected delay needs at least one holder (h0 = 0)")]
    Degenerate,
    #[error("empty {0} grid")]
    EmptyGrid(&'static str),
}

/// Initial condition and mean pairwise meeting rate of the fluid model.
///
/// `r0` and `h0` are real-valued; the fluid limit does not require integer
/// populations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub r0: f64,
    pub h0: f64,
    /// Mean meeting rate of one requester/holder pair, in 1/s.
    pub m_lambda: f64,
}

impl FluidParams {
    pub fn new(r0: f64, h0: f64, m_lambda: f64) -> Result<Self, AnalyticError> {
        let params = Self { r0, h0, m_lambda };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(AnalyticError::InvalidParams(format!("r0 = {} must be > 0", self.r0)));
        }
        if !(self.h0.is_finite() && self.h0 >= 0.0) {
            return Err(AnalyticError::InvalidParams(format!("h0 = {} must be >= 0", self.h0)));
        }
        if !(self.m_lambda.is_finite() && self.m_lambda > 0.0) {
            return Err(AnalyticError::InvalidParams(format!(
                "m_lambda = {} must be > 0",
                self.m_lambda
            )));
        }
        Ok(())
    }

    /// Total population `r0 + h0`, conserved by the dynamics.
    pub fn total(&self) -> f64 {
        self.r0 + self.h0
    }
}

/// Maximum time a delay-tolerant content may wait, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Deadline {
    ttl: f64,
}

impl Deadline {
    pub fn new(ttl: f64) -> Result<Self, AnalyticError> {
        check_time(ttl)?;
        Ok(Self { ttl })
    }

    pub fn ttl(&self) -> f64 {
        self.ttl
    }
}

/// Expected holder and requester counts at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationState {
    pub t: f64,
    pub h: f64,
    pub r: f64,
}

fn check_time(t: f64) -> Result<(), AnalyticError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(AnalyticError::InvalidTime(t))
    }
}

/// Closed-form population at `t`. Returns `(h, r)`.
fn population(params: &FluidParams, t: f64) -> Result<(f64, f64), AnalyticError> {
    params.validate()?;
    check_time(t)?;
    let n = params.total();
    if params.h0 == 0.0 {
        return Ok((0.0, params.r0));
    }
    let decay = (-params.m_lambda * n * t).exp();
    let denom = params.r0 * decay + params.h0;
    Ok((params.h0 * n / denom, params.r0 * n * decay / denom))
}

/// Expected number of holders `h(t)`.
pub fn holders_at(params: &FluidParams, t: f64) -> Result<f64, AnalyticError> {
    population(params, t).map(|(h, _)| h)
}

/// Expected number of requesters still waiting, `r(t)`.
pub fn requesters_at(params: &FluidParams, t: f64) -> Result<f64, AnalyticError> {
    population(params, t).map(|(_, r)| r)
}

/// Probability that a requester present at `t = 0+` has received the
/// content by `t`: the fraction of requesters served, `1 - r(t)/r0`.
pub fn delivery_probability(params: &FluidParams, t: f64) -> Result<f64, AnalyticError> {
    let r = requesters_at(params, t)?;
    Ok(1.0 - r / params.r0)
}

/// Expected delivery delay `E[min(T, TTL)]` for `T ~ Exp(M·h0)`:
/// `(1 - e^{-M·h0·TTL}) / (M·h0)`.
///
/// Fails with [`AnalyticError::Degenerate`] when `h0 = 0`.
pub fn expected_delay(params: &FluidParams, deadline: Deadline) -> Result<f64, AnalyticError> {
    params.validate()?;
    if params.h0 == 0.0 {
        return Err(AnalyticError::Degenerate);
    }
    let rate = params.m_lambda * params.h0;
    Ok(-(-rate * deadline.ttl()).exp_m1() / rate)
}

/// RK4 trajectory of the mean-field system on a uniform grid of `step`
/// seconds. When `t_end` is not a multiple of `step` the last step is
/// shortened so the trajectory ends exactly at `t_end`.
pub fn ode_oracle(params: &FluidParams, t_end: f64, step: f64) -> Result<Vec<PopulationState>, AnalyticError> {
    params.validate()?;
    check_time(t_end)?;
    if !(step.is_finite() && step > 0.0) || (t_end > 0.0 && step > t_end) {
        return Err(AnalyticError::InvalidStep { step, t_end });
    }

    let m = params.m_lambda;
    let deriv = |h: f64, r: f64| {
        let flow = m * h * r;
        (flow, -flow)
    };

    let full_steps = (t_end / step).floor() as usize;
    let mut out = Vec::with_capacity(full_steps + 2);
    let (mut h, mut r) = (params.h0, params.r0);
    out.push(PopulationState { t: 0.0, h, r });

    let mut k = 0usize;
    loop {
        let t = k as f64 * step;
        let remaining = t_end - t;
        if remaining <= step * 1e-9 {
            break;
        }
        let dt = remaining.min(step);
        let (k1h, k1r) = deriv(h, r);
        let (k2h, k2r) = deriv(h + 0.5 * dt * k1h, r + 0.5 * dt * k1r);
        let (k3h, k3r) = deriv(h + 0.5 * dt * k2h, r + 0.5 * dt * k2r);
        let (k4h, k4r) = deriv(h + dt * k3h, r + dt * k3r);
        h += dt / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h);
        r += dt / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        k += 1;
        let t_next = if dt < step { t_end } else { k as f64 * step };
        out.push(PopulationState { t: t_next, h, r });
    }
    Ok(out)
}

/// Values of one `(params, t)` cell. `e_delay` treats `t` as the TTL and is
/// `None` for the degenerate `h0 = 0` case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellValues {
    pub holders: f64,
    pub requesters: f64,
    pub p_dlv: f64,
    pub e_delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: FluidParams,
    pub t: f64,
    pub values: Result<CellValues, AnalyticError>,
}

fn evaluate_cell(params: &FluidParams, t: f64) -> Result<CellValues, AnalyticError> {
    let (holders, requesters) = population(params, t)?;
    let e_delay = match expected_delay(params, Deadline::new(t)?) {
        Ok(d) => Some(d),
        Err(AnalyticError::Degenerate) => None,
        Err(e) => return Err(e),
    };
    Ok(CellValues {
        holders,
        requesters,
        p_dlv: 1.0 - requesters / params.r0,
        e_delay,
    })
}

/// Evaluates every `(params, t)` pair, params-major. Invalid cells are kept
/// as error rows rather than aborting the sweep.
pub fn sweep(params_grid: &[FluidParams], times: &[f64]) -> Result<Vec<SweepRow>, AnalyticError> {
    if params_grid.is_empty() {
        return Err(AnalyticError::EmptyGrid("parameter"));
    }
    if times.is_empty() {
        return Err(AnalyticError::EmptyGrid("time"));
    }
    Ok(params_grid
        .iter()
        .flat_map(|p| {
            times.iter().map(move |&t| SweepRow {
                params: *p,
                t,
                values: evaluate_cell(p, t),
            })
        })
        .collect())
}

pub const SWEEP_CSV_HEADER: &str = "r0,h0,m_lambda,t_s,holders,requesters,p_dlv,e_delay_s";

/// Writes sweep rows as CSV. Values that could not be computed are left
/// empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for row in rows {
        let p = &row.params;
        write!(out, "{},{},{},{},", p.r0, p.h0, p.m_lambda, row.t)?;
        match &row.values {
            Ok(v) => {
                let delay = v.e_delay.map(|d| d.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{}", v.holders, v.requesters, v.p_dlv, delay)?;
            }
            Err(_) => writeln!(out, ",,,")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    const M: f64 = 3.3e-5;

    fn p(r0: f64, h0: f64) -> FluidParams {
        FluidParams::new(r0, h0, M).unwrap()
    }

    /// Independent RK4 at 0.1 s, written out by hand so it shares no code
    /// with `ode_oracle`.
    fn reference_rk4(r0: f64, h0: f64, t_end: f64) -> (f64, f64) {
        let dt = 0.1;
        let f = |h: f64, r: f64| M * h * r;
        let (mut h, mut r) = (h0, r0);
        for _ in 0..(t_end / dt).round() as usize {
            let a = f(h, r);
            let b = f(h + 0.5 * dt * a, r - 0.5 * dt * a);
            let c = f(h + 0.5 * dt * b, r - 0.5 * dt * b);
            let d = f(h + dt * c, r - dt * c);
            let inc = dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);
            h += inc;
            r -= inc;
        }
        (h, r)
    }

    #[test]
    fn identity_at_zero() {
        let params = p(50.0, 10.0);
        assert_eq!(holders_at(&params, 0.0).unwrap(), 10.0);
        assert_eq!(requesters_at(&params, 0.0).unwrap(), 50.0);
        assert_eq!(delivery_probability(&params, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn frozen_values_at_ten_minutes() {
        // Frozen from reference_rk4(50, 10, 600): h = 23.770363, r = 36.229637.
        let (h_ref, r_ref) = reference_rk4(50.0, 10.0, 600.0);
        assert_abs_diff_eq!(h_ref, 23.770_363, epsilon = 1e-5);
        assert_abs_diff_eq!(r_ref, 36.229_637, epsilon = 1e-5);

        let params = p(50.0, 10.0);
        assert_abs_diff_eq!(holders_at(&params, 600.0).unwrap(), 23.770_363, epsilon = 1e-5);
        assert_abs_diff_eq!(requesters_at(&params, 600.0).unwrap(), 36.229_637, epsilon = 1e-5);
        assert_abs_diff_eq!(
            delivery_probability(&params, 600.0).unwrap(),
            0.275_407_27,
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(
            delivery_probability(&p(50.0, 30.0), 600.0).unwrap(),
            0.592_320_20,
            epsilon = 1e-7
        );
    }

    #[test]
    fn no_holders_is_a_fixed_point() {
        let params = p(50.0, 0.0);
        for t in [0.0, 600.0, 1e9] {
            assert_eq!(holders_at(&params, t).unwrap(), 0.0);
            assert_eq!(requesters_at(&params, t).unwrap(), 50.0);
        }
        assert_eq!(
            expected_delay(&params, Deadline::new(60.0).unwrap()),
            Err(AnalyticError::Degenerate)
        );
    }

    #[test]
    fn long_horizons_do_not_overflow() {
        let params = FluidParams::new(80.0, 20.0, 1e-3).unwrap();
        let t = 1e12;
        let r = requesters_at(&params, t).unwrap();
        let h = holders_at(&params, t).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(h, 100.0);
        assert_eq!(delivery_probability(&params, t).unwrap(), 1.0);
        assert!(expected_delay(&params, Deadline::new(t).unwrap()).unwrap().is_finite());
    }

    #[test]
    fn expected_delay_values() {
        // Frozen from a 1e6-sample Monte-Carlo of E[min(T, TTL)]:
        // 2107.4 and 452.27, within MC error of the values below.
        let d = |h0, ttl| expected_delay(&p(50.0, h0), Deadline::new(ttl).unwrap()).unwrap();
        assert_eq!(d(10.0, 0.0), 0.0);
        assert_abs_diff_eq!(d(10.0, 3600.0), 2106.5748, epsilon = 1e-3);
        assert_abs_diff_eq!(d(30.0, 600.0), 452.4097, epsilon = 1e-3);
    }

    #[test]
    fn delay_asymptote() {
        let params = p(50.0, 20.0);
        let rate = M * 20.0;
        let d = expected_delay(&params, Deadline::new(100.0 / rate).unwrap()).unwrap();
        assert!(((d - 1.0 / rate) * rate).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(FluidParams::new(0.0, 1.0, M).is_err());
        assert!(FluidParams::new(1.0, -1.0, M).is_err());
        assert!(FluidParams::new(1.0, 1.0, 0.0).is_err());
        assert!(FluidParams::new(f64::NAN, 1.0, M).is_err());
        let params = p(50.0, 10.0);
        assert_eq!(holders_at(&params, -1.0), Err(AnalyticError::InvalidTime(-1.0)));
        assert!(requesters_at(&params, f64::INFINITY).is_err());
        assert!(Deadline::new(-5.0).is_err());
        let bad = FluidParams {
            r0: -1.0,
            h0: 1.0,
            m_lambda: M,
        };
        assert!(matches!(
            delivery_probability(&bad, 1.0),
            Err(AnalyticError::InvalidParams(_))
        ));
    }

    #[test]
    fn ode_oracle_edges() {
        let params = p(50.0, 10.0);
        let single = ode_oracle(&params, 0.0, 1.0).unwrap();
        assert_eq!(
            single,
            vec![PopulationState {
                t: 0.0,
                h: 10.0,
                r: 50.0
            }]
        );

        assert!(ode_oracle(&params, 10.0, 0.0).is_err());
        assert!(ode_oracle(&params, 10.0, -1.0).is_err());
        assert!(ode_oracle(&params, 10.0, 11.0).is_err());

        let flat = ode_oracle(&p(50.0, 0.0), 100.0, 1.0).unwrap();
        assert!(flat.iter().all(|s| s.h == 0.0 && s.r == 50.0));

        let uneven = ode_oracle(&params, 10.5, 1.0).unwrap();
        assert_eq!(uneven.len(), 12);
        assert_eq!(uneven.last().unwrap().t, 10.5);
    }

    #[test]
    fn ode_oracle_matches_closed_form() {
        let params = p(50.0, 10.0);
        let traj = ode_oracle(&params, 600.0, 1.0).unwrap();
        assert_eq!(traj.len(), 601);
        for s in &traj {
            assert!((s.h + s.r - 60.0).abs() <= 1e-9 * 60.0);
            assert_abs_diff_eq!(s.h, holders_at(&params, s.t).unwrap(), epsilon = 1e-6);
            assert_abs_diff_eq!(s.r, requesters_at(&params, s.t).unwrap(), epsilon = 1e-6);
        }
    }

    #[test]
    fn sweep_shapes_and_errors() {
        let grid: Vec<_> = [10.0, 20.0, 30.0].iter().map(|&h| p(50.0, h)).collect();
        let rows = sweep(&grid, &[600.0, 1800.0, 3600.0]).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[1].params.h0, 10.0);
        assert_eq!(rows[1].t, 1800.0);
        assert_abs_diff_eq!(rows[0].values.as_ref().unwrap().p_dlv, 0.2754, epsilon = 1e-4);

        assert_eq!(sweep(&grid, &[]), Err(AnalyticError::EmptyGrid("time")));
        assert_eq!(sweep(&[], &[1.0]), Err(AnalyticError::EmptyGrid("parameter")));

        let mixed = [
            p(50.0, 0.0),
            FluidParams {
                r0: 50.0,
                h0: 10.0,
                m_lambda: -1.0,
            },
        ];
        let rows = sweep(&mixed, &[60.0, -1.0]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].values.as_ref().unwrap().e_delay, None);
        assert!(rows[1].values.is_err());
        assert!(rows[2].values.is_err());

        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines[1], "50,0,0.000033,60,0,50,0,");
        assert_eq!(lines[3], "50,10,-1,60,,,,");
        assert!(text.ends_with('\n'));
    }

    fn params_strategy() -> impl Strategy<Value = FluidParams> {
        (1.0f64..100.0, 0.0f64..50.0, -6.0f64..-3.0).prop_map(|(r0, h0, e)| FluidParams {
            r0,
            h0,
            m_lambda: 10f64.powf(e),
        })
    }

    proptest! {
        #[test]
        fn conservation(params in params_strategy(), t in 0.0f64..1e4) {
            let h = holders_at(&params, t).unwrap();
            let r = requesters_at(&params, t).unwrap();
            let n = params.total();
            prop_assert!(((h + r) - n).abs() / n <= 1e-9);
            prop_assert!(h >= params.h0 - 1e-12 * n && h <= n * (1.0 + 1e-12));
            prop_assert!(r >= 0.0 && r <= params.r0 * (1.0 + 1e-12));
        }

        #[test]
        fn monotone_in_time(params in params_strategy(), a in 0.0f64..1e4, b in 0.0f64..1e4) {
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(holders_at(&params, t1).unwrap() <= holders_at(&params, t2).unwrap() + 1e-12);
            prop_assert!(requesters_at(&params, t1).unwrap() + 1e-12 >= requesters_at(&params, t2).unwrap());
            prop_assert!(
                delivery_probability(&params, t1).unwrap()
                    <= delivery_probability(&params, t2).unwrap() + 1e-15
            );
        }

        #[test]
        fn probability_identity_and_range(params in params_strategy(), t in 0.0f64..1e4) {
            let pd = delivery_probability(&params, t).unwrap();
            prop_assert!((0.0..=1.0).contains(&pd));
            let x = params.m_lambda * params.total() * t;
            let direct = 1.0 - params.total() / (params.r0 + params.h0 * x.exp());
            prop_assert!((pd - direct).abs() <= 1e-12);
        }

        #[test]
        fn probability_monotone_in_holders_and_rate(
            params in params_strategy(), dh in 0.0f64..20.0, scale in 1.0f64..5.0, t in 0.0f64..1e4
        ) {
            let base = delivery_probability(&params, t).unwrap();
            let more_h = FluidParams { h0: params.h0 + dh, ..params };
            let faster = FluidParams { m_lambda: params.m_lambda * scale, ..params };
            prop_assert!(base <= delivery_probability(&more_h, t).unwrap() + 1e-12);
            prop_assert!(base <= delivery_probability(&faster, t).unwrap() + 1e-12);
        }

        #[test]
        fn delay_monotonicity(
            params in params_strategy(), a in 0.0f64..1e5, b in 0.0f64..1e5, dh in 0.0f64..20.0
        ) {
            prop_assume!(params.h0 > 0.0);
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            let d = |p: &FluidParams, t| expected_delay(p, Deadline::new(t).unwrap()).unwrap();
            let d1 = d(&params, t1);
            prop_assert!(d1 <= d(&params, t2) + 1e-9);
            prop_assert!(d1 <= t1 * (1.0 + 1e-12) && d1 <= 1.0 / (params.m_lambda * params.h0) * (1.0 + 1e-12));
            let more_h = FluidParams { h0: params.h0 + dh, ..params };
            prop_assert!(d(&more_h, t1) <= d1 + 1e-9);
        }
    }
}
