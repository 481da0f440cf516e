//! Shedding period from the drag-lift limit cycle.
//!
//! 1. A first guess `T0` is the mean spacing of upward zero crossings of the
//!    lift after removing its mean.
//! 2. For every sample `n` with `t_n + 1.5 T0` inside the window, the return
//!    `m` near `n + T0 / dt` is the local minimum of the distance to sample
//!    `n` in the (drag, lift) plane nearest to `n + T0 / dt`.
//!    Both signals are standardized over the window first, so the result does
//!    not depend on their units or offsets.
//! 3. The return time is refined by the minimizer of the parabola through the
//!    distances at `m - 1, m, m + 1`.
//! 4. The estimate is the mean of the per-sample periods, with the largest
//!    deviation from the mean as its uncertainty.

use thiserror::Error;

/// Default evaluation window of the cylinder benchmark.
pub const PERIOD_WINDOW: (f64, f64) = (280.0, 480.0);

/// Relative tolerance on the sample spacing.
const UNIFORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodEstimate {
    pub period: f64,
    /// Largest absolute deviation of a per-sample estimate from `period`.
    pub deviation: f64,
    /// Whole periods that fit into the window.
    pub cycles: usize,
    pub window: (f64, f64),
    /// Number of per-sample estimates averaged.
    pub samples: usize,
    /// At least two cycles fit into the window.
    pub valid: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NoPeriod {
    #[error("series of lengths {t}, {drag}, {lift} do not match")]
    Length { t: usize, drag: usize, lift: usize },
    #[error("invalid window [{0}, {1}]")]
    Window(f64, f64),
    #[error("series [{first}, {last}] does not cover the window [{start}, {end}]")]
    NotCovered {
        first: f64,
        last: f64,
        start: f64,
        end: f64,
    },
    #[error("non-uniform sampling at t = {0}")]
    NonUniform(f64),
    #[error("no oscillation: fewer than two upward zero crossings of the lift")]
    NoCrossings,
    #[error("window shorter than one and a half periods")]
    TooShort,
}

pub fn estimate_period(
    t: &[f64],
    drag: &[f64],
    lift: &[f64],
    window: (f64, f64),
) -> Result<PeriodEstimate, NoPeriod> {
    if t.len() != drag.len() || t.len() != lift.len() {
        return Err(NoPeriod::Length {
            t: t.len(),
            drag: drag.len(),
            lift: lift.len(),
        });
    }
    let (start, end) = window;
    if !(start < end) || !start.is_finite() || !end.is_finite() {
        return Err(NoPeriod::Window(start, end));
    }
    let not_covered = || NoPeriod::NotCovered {
        first: t.first().copied().unwrap_or(f64::NAN),
        last: t.last().copied().unwrap_or(f64::NAN),
        start,
        end,
    };
    if t.len() < 3 {
        return Err(not_covered());
    }
    let step = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let eps = UNIFORM_TOL * step;
    if !(step > 0.0) || t[0] > start + eps || t[t.len() - 1] < end - eps {
        return Err(not_covered());
    }
    let lo = t.partition_point(|&x| x < start - eps);
    let hi = t.partition_point(|&x| x <= end + eps);
    let (ts, d, l) = (&t[lo..hi], &drag[lo..hi], &lift[lo..hi]);
    let n = ts.len();
    if n < 3 {
        return Err(not_covered());
    }
    let dt = (ts[n - 1] - ts[0]) / (n - 1) as f64;
    for w in ts.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > UNIFORM_TOL * dt {
            return Err(NoPeriod::NonUniform(w[0]));
        }
    }

    let d = standardize(d);
    let l = standardize(l);

    // Upward zero crossings, in index units.
    let crossings: Vec<f64> = (0..n - 1)
        .filter(|&i| l[i] < 0.0 && l[i + 1] >= 0.0)
        .map(|i| i as f64 + l[i] / (l[i] - l[i + 1]))
        .collect();
    if crossings.len() < 2 {
        return Err(NoPeriod::NoCrossings);
    }
    let t0 = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;

    let dist = |a: usize, b: usize| (d[a] - d[b]).powi(2) + (l[a] - l[b]).powi(2);
    let reach = ((0.25 * t0).ceil() as usize).max(2);
    let mut periods = Vec::new();
    for i in 0..n {
        if i as f64 + 1.5 * t0 > (n - 1) as f64 {
            break;
        }
        let centre = (i as f64 + t0).round() as usize;
        let a = centre.saturating_sub(reach).max(i + 2);
        let b = (centre + reach).min(n - 2);
        if a > b {
            continue;
        }
        // Drag oscillates at twice the lift frequency, so the cycle crosses
        // itself and other branches can come as close as the true return.
        // The local minimum nearest the look-ahead centre is taken.
        let local = (a..=b)
            .filter(|&m| dist(i, m) <= dist(i, m - 1) && dist(i, m) <= dist(i, m + 1))
            .min_by_key(|&m| m.abs_diff(centre));
        let Some(m) = local.or_else(|| (a..=b).min_by(|&x, &y| dist(i, x).total_cmp(&dist(i, y)))) else {
            continue;
        };
        let (fm, f0, fp) = (dist(i, m - 1), dist(i, m), dist(i, m + 1));
        let curv = fm - 2.0 * f0 + fp;
        let shift = if curv > 0.0 {
            (0.5 * (fm - fp) / curv).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        periods.push(((m - i) as f64 + shift) * dt);
    }
    if periods.is_empty() {
        return Err(NoPeriod::TooShort);
    }
    let period = periods.iter().sum::<f64>() / periods.len() as f64;
    let deviation = periods.iter().map(|p| (p - period).abs()).fold(0.0, f64::max);
    let cycles = ((ts[n - 1] - ts[0]) / period).floor() as usize;
    Ok(PeriodEstimate {
        period,
        deviation,
        cycles,
        window: (ts[0], ts[n - 1]),
        samples: periods.len(),
        valid: cycles >= 2,
    })
}

/// Zero mean and unit standard deviation; constant signals become zero.
fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { 1.0 / sd } else { 0.0 };
    x.iter().map(|v| (v - mean) * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(
        f: impl Fn(f64) -> (f64, f64),
        dt: f64,
        t_end: f64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = (t_end / dt).round() as usize;
        let t: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let (d, l) = t.iter().map(|&x| f(x)).unzip();
        (t, d, l)
    }

    #[test]
    fn circle_recovers_period() {
        let w = 2.0 * std::f64::consts::PI / 9.0;
        let (t, d, l) = sample(|x| ((w * x).cos(), (w * x).sin()), 0.01, 100.0);
        let est = estimate_period(&t, &d, &l, (0.0, 100.0)).unwrap();
        assert!((est.period - 9.0).abs() <= 1e-4, "{est:?}");
        assert!(est.deviation >= 0.0 && est.valid && est.cycles == 11);
    }

    /// A limit cycle with harmonics, so the phase speed is not constant.
    fn harmonic(per: f64) -> impl Fn(f64) -> (f64, f64) {
        let w = 2.0 * std::f64::consts::PI / per;
        move |x| {
            (
                (w * x).cos() + 0.3 * (2.0 * w * x + 0.4).cos(),
                (w * x).sin() + 0.2 * (3.0 * w * x).sin(),
            )
        }
    }

    #[test]
    fn self_convergence_is_second_order() {
        let est: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&dt| {
                let (t, d, l) = sample(harmonic(9.1234), dt, 100.0);
                estimate_period(&t, &d, &l, (10.0, 90.0)).unwrap().period
            })
            .collect();
        let order = ((est[0] - est[1]) / (est[1] - est[2])).abs().log2();
        assert!((order - 2.0).abs() <= 0.3, "order {order}");
        assert!((est[2] - 9.1234).abs() < 1e-5);
    }

    #[test]
    fn invariant_under_affine_maps_of_signals_and_time() {
        let (t, d, l) = sample(harmonic(8.8), 0.01, 120.0);
        let base = estimate_period(&t, &d, &l, (20.0, 110.0)).unwrap();
        let t2: Vec<f64> = t.iter().map(|x| x + 13.0).collect();
        let d2: Vec<f64> = d.iter().map(|x| 3.0 * x + 2.0).collect();
        let l2: Vec<f64> = l.iter().map(|x| -0.5 * x + 7.0).collect();
        let moved = estimate_period(&t2, &d2, &l2, (33.0, 123.0)).unwrap();
        assert!((base.period - moved.period).abs() <= 1e-12 * base.period);
        assert!((base.deviation - moved.deviation).abs() <= 1e-10);
        assert_eq!(base.cycles, moved.cycles);
    }

    #[test]
    fn drag_at_double_frequency() {
        let w = 2.0 * std::f64::consts::PI / 9.0;
        for phase in [0.0, 0.7] {
            let (t, d, l) = sample(
                |x| (1.4 + 0.05 * (2.0 * w * x + phase).cos(), (w * x).sin()),
                0.01,
                50.0,
            );
            let est = estimate_period(&t, &d, &l, (5.0, 45.0)).unwrap();
            assert!((est.period - 9.0).abs() < 1e-5, "{phase}: {est:?}");
            assert!(est.deviation < 1e-2, "{phase}: {est:?}");
        }
    }

    #[test]
    fn truncated_window_still_counts_cycles() {
        let (t, d, l) = sample(harmonic(9.0), 0.02, 30.0);
        let est = estimate_period(&t, &d, &l, (0.0, 25.0)).unwrap();
        assert_eq!(est.cycles, 2);
        assert!(est.valid);
        let short = estimate_period(&t, &d, &l, (0.0, 15.0)).unwrap();
        assert!(!short.valid);
        assert!(matches!(
            estimate_period(&t, &d, &l, (0.0, 12.0)),
            Err(NoPeriod::TooShort | NoPeriod::NoCrossings)
        ));
    }

    #[test]
    fn failures() {
        let (t, d, l) = sample(harmonic(9.0), 0.01, 50.0);
        assert!(matches!(
            estimate_period(&t, &d, &l, (10.0, 60.0)),
            Err(NoPeriod::NotCovered { .. })
        ));
        assert!(matches!(estimate_period(&t, &d, &l, (10.0, 5.0)), Err(NoPeriod::Window(..))));
        let flat = vec![1.0; t.len()];
        assert_eq!(
            estimate_period(&t, &flat, &flat, (0.0, 50.0)),
            Err(NoPeriod::NoCrossings)
        );
        let mut bumpy = t.clone();
        bumpy[200] += 0.004;
        assert!(matches!(
            estimate_period(&bumpy, &d, &l, (0.0, 50.0)),
            Err(NoPeriod::NonUniform(_))
        ));
        assert!(matches!(
            estimate_period(&t[..10], &d, &l, (0.0, 0.05)),
            Err(NoPeriod::Length { .. })
        ));
    }
}
