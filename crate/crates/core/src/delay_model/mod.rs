//! Involution delay functions: the exp-channel, tabulated pairs, and a
//! closed-form hyperbolic pair.

mod exp;
mod hyperbolic;
mod tabulated;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rootfind::{Bisection, RootError};
use crate::scalar::Real;

pub use exp::ExpChannelParams;
pub use hyperbolic::HyperbolicDelay;
pub use tabulated::{
    estimate_asymptote, read_delay_samples, tabulated_from_samples, write_delay_samples,
    DelaySample, MonotoneCubic, TabulatedDelay,
};

/// Direction of a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Rising,
    Falling,
}

impl Edge {
    /// Edge that brings a signal to `value`.
    pub fn to_value(value: bool) -> Self {
        if value {
            Edge::Rising
        } else {
            Edge::Falling
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Edge::Rising => Edge::Falling,
            Edge::Falling => Edge::Rising,
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Edge::Rising => "rising",
            Edge::Falling => "falling",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DelayError {
    #[error("invalid delay parameters: {0}")]
    InvalidParams(String),
    #[error("T = {t} lies outside the domain of the {edge} delay function (must exceed {bound})")]
    DomainViolation { t: f64, edge: Edge, bound: f64 },
    #[error("no bracket for the root: {0}")]
    NoBracket(String),
    #[error("invalid delay table: {0}")]
    InvalidTable(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which family a delay function belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayKind {
    Exp,
    Tabulated,
    ClosedForm,
}

/// A (δ↑, δ↓) pair. Values are immutable and cheap to share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayFunction<T = f64> {
    Exp(ExpChannelParams<T>),
    Tabulated(TabulatedDelay<T>),
    Hyperbolic(HyperbolicDelay<T>),
}

/// Builds the exp-channel delay pair.
pub fn exp_channel<T: Real>(p: ExpChannelParams<T>) -> Result<DelayFunction<T>, DelayError> {
    p.validate()?;
    Ok(DelayFunction::Exp(p))
}

/// Loads a tabulated pair from a `T,delta_up,delta_down` CSV file.
pub fn load_delay_table(path: &Path) -> Result<DelayFunction<f64>, DelayError> {
    let file = std::fs::File::open(path)?;
    let rows = read_delay_samples(file)?;
    Ok(DelayFunction::Tabulated(tabulated_from_samples(&rows)?))
}

impl<T: Real> DelayFunction<T> {
    pub fn kind(&self) -> DelayKind {
        match self {
            DelayFunction::Exp(_) => DelayKind::Exp,
            DelayFunction::Tabulated(_) => DelayKind::Tabulated,
            DelayFunction::Hyperbolic(_) => DelayKind::ClosedForm,
        }
    }

    /// δ↑(T); −∞ for T ≤ −δ∞↓.
    pub fn up(&self, t: T) -> T {
        match self {
            DelayFunction::Exp(p) => p.up(t),
            DelayFunction::Tabulated(d) => d.up(t),
            DelayFunction::Hyperbolic(h) => h.up(t),
        }
    }

    /// δ↓(T); −∞ for T ≤ −δ∞↑.
    pub fn down(&self, t: T) -> T {
        match self {
            DelayFunction::Exp(p) => p.down(t),
            DelayFunction::Tabulated(d) => d.down(t),
            DelayFunction::Hyperbolic(h) => h.down(t),
        }
    }

    pub fn eval(&self, edge: Edge, t: T) -> T {
        match edge {
            Edge::Rising => self.up(t),
            Edge::Falling => self.down(t),
        }
    }

    pub fn inf_up(&self) -> T {
        match self {
            DelayFunction::Exp(p) => p.inf_up(),
            DelayFunction::Tabulated(d) => d.inf_up(),
            DelayFunction::Hyperbolic(h) => h.a,
        }
    }

    pub fn inf_down(&self) -> T {
        match self {
            DelayFunction::Exp(p) => p.inf_down(),
            DelayFunction::Tabulated(d) => d.inf_down(),
            DelayFunction::Hyperbolic(h) => h.d,
        }
    }

    pub fn inf(&self, edge: Edge) -> T {
        match edge {
            Edge::Rising => self.inf_up(),
            Edge::Falling => self.inf_down(),
        }
    }

    /// Lower end of the open domain of the delay function for `edge`.
    pub fn domain_start(&self, edge: Edge) -> T {
        -self.inf(edge.opposite())
    }

    pub fn is_strictly_causal(&self) -> bool {
        self.up(T::zero()) > T::zero() && self.down(T::zero()) > T::zero()
    }

    pub fn derivative_up(&self, t: T) -> Result<T, DelayError> {
        self.derivative(Edge::Rising, t)
    }

    pub fn derivative_down(&self, t: T) -> Result<T, DelayError> {
        self.derivative(Edge::Falling, t)
    }

    pub fn derivative(&self, edge: Edge, t: T) -> Result<T, DelayError> {
        let lo = self.domain_start(edge);
        if !(t > lo) || !t.is_finite() {
            return Err(DelayError::DomainViolation {
                t: t.to_f64_lossy(),
                edge,
                bound: lo.to_f64_lossy(),
            });
        }
        if let DelayFunction::Exp(p) = self {
            return Ok(match edge {
                Edge::Rising => p.deriv_up(t),
                Edge::Falling => p.deriv_down(t),
            });
        }
        let c = T::lit(1e-7).max(T::epsilon().sqrt());
        let mut h = c.max(c * t.abs());
        let room = (t - lo) / T::lit(2.0);
        if h > room {
            h = room;
        }
        Ok((self.eval(edge, t + h) - self.eval(edge, t - h)) / (h + h))
    }

    /// Unique δ_min with δ↑(−δ_min) = δ_min = δ↓(−δ_min).
    pub fn delta_min(&self) -> Result<T, DelayError> {
        if let DelayFunction::Exp(p) = self {
            // closed form: the curve passes through (−T_p, T_p)
            return Ok(p.t_p);
        }
        self.delta_min_numeric()
    }

    /// Root of δ↑(−d) − d on (0, δ∞↓) by bisection, without kind shortcuts.
    pub fn delta_min_numeric(&self) -> Result<T, DelayError> {
        let up0 = self.up(T::zero());
        if !(up0 > T::zero()) || !(self.down(T::zero()) > T::zero()) {
            return Err(DelayError::NoBracket(format!(
                "delay function is not strictly causal (δ↑(0) = {}, δ↓(0) = {})",
                up0,
                self.down(T::zero())
            )));
        }
        let hi = self.inf_down();
        Bisection::default()
            .solve(|d| self.up(-d) - d, T::zero(), hi)
            .map_err(|e| match e {
                RootError::NoSignChange { .. } | RootError::NotANumber { .. } => {
                    DelayError::NoBracket(e.to_string())
                }
            })
    }

    pub fn map_scalar<U: Real>(&self) -> DelayFunction<U> {
        let m = |x: T| U::lit(x.to_f64_lossy());
        match self {
            DelayFunction::Exp(p) => DelayFunction::Exp(p.map_scalar()),
            DelayFunction::Hyperbolic(h) => DelayFunction::Hyperbolic(HyperbolicDelay {
                a: m(h.a),
                c: m(h.c),
                d: m(h.d),
            }),
            DelayFunction::Tabulated(t) => {
                let conv =
                    |v: Vec<(T, T)>| v.into_iter().map(|(a, b)| (m(a), m(b))).collect::<Vec<_>>();
                DelayFunction::Tabulated(
                    TabulatedDelay::new(
                        &conv(t.up_samples()),
                        &conv(t.down_samples()),
                        m(t.inf_up()),
                        m(t.inf_down()),
                    )
                    .expect("conversion preserves a valid table"),
                )
            }
        }
    }
}

/// Result of an involution-property check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvolutionReport<T = f64> {
    pub max_residual: T,
    pub worst_t: T,
    pub pass: bool,
}

/// Max of |−δ↑(−δ↓(T)) − T| and |−δ↓(−δ↑(T)) − T| over `grid`.
pub fn check_involution<T: Real>(
    df: &DelayFunction<T>,
    grid: &[T],
    tol: T,
) -> Result<InvolutionReport<T>, DelayError> {
    let mut max_residual = T::zero();
    let mut worst_t = T::nan();
    for &t in grid {
        for edge in [Edge::Rising, Edge::Falling] {
            let lo = df.domain_start(edge);
            if !(t > lo) {
                return Err(DelayError::DomainViolation {
                    t: t.to_f64_lossy(),
                    edge,
                    bound: lo.to_f64_lossy(),
                });
            }
        }
        let r1 = (-df.up(-df.down(t)) - t).abs();
        let r2 = (-df.down(-df.up(t)) - t).abs();
        let r = if r1.is_nan() || r2.is_nan() {
            T::infinity()
        } else {
            r1.max(r2)
        };
        if r > max_residual || worst_t.is_nan() {
            max_residual = max_residual.max(r);
            worst_t = t;
        }
    }
    Ok(InvolutionReport {
        max_residual,
        worst_t,
        pass: max_residual <= tol,
    })
}

/// Sampled monotonicity and concavity summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport<T = f64> {
    /// Smallest first difference seen over both functions.
    pub min_step: T,
    /// Largest second difference (normalized to a uniform step) seen.
    pub max_curvature: T,
    pub increasing: bool,
    pub concave: bool,
}

/// Checks strict increase and concavity of δ↑ and δ↓ on an increasing grid.
pub fn check_shape<T: Real>(
    df: &DelayFunction<T>,
    grid: &[T],
    tol: T,
) -> Result<ShapeReport<T>, DelayError> {
    let mut min_step = T::infinity();
    let mut max_curvature = T::neg_infinity();
    for edge in [Edge::Rising, Edge::Falling] {
        let lo = df.domain_start(edge);
        if let Some(&t) = grid.iter().find(|&&t| !(t > lo)) {
            return Err(DelayError::DomainViolation {
                t: t.to_f64_lossy(),
                edge,
                bound: lo.to_f64_lossy(),
            });
        }
        let ys: Vec<T> = grid.iter().map(|&t| df.eval(edge, t)).collect();
        for i in 1..ys.len() {
            min_step = min_step.min(ys[i] - ys[i - 1]);
        }
        for i in 1..ys.len().saturating_sub(1) {
            // divided second difference scaled by the local step
            let h0 = grid[i] - grid[i - 1];
            let h1 = grid[i + 1] - grid[i];
            let s0 = (ys[i] - ys[i - 1]) / h0;
            let s1 = (ys[i + 1] - ys[i]) / h1;
            max_curvature = max_curvature.max((s1 - s0) * (h0 + h1) / T::lit(2.0));
        }
    }
    Ok(ShapeReport {
        min_step,
        max_curvature,
        increasing: min_step > T::zero(),
        concave: !(max_curvature > tol),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> DelayFunction {
        exp_channel(ExpChannelParams::new(1.0, 0.5, 0.5).unwrap()).unwrap()
    }

    // dense near the domain edge so the mirrored branch reaches large T
    fn edge_grid(inf: f64) -> impl Iterator<Item = f64> {
        let near = (1..=704).map(move |k| -inf + 10f64.powf(-k as f64 / 64.0));
        let far = (0..=2000).map(|i| -0.3 + 25.0 * (i as f64 / 2000.0).powi(2));
        let mut g: Vec<f64> = near.chain(far).collect();
        g.sort_by(f64::total_cmp);
        g.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * (*a + inf));
        g.into_iter()
    }

    #[test]
    fn reference_values() {
        let df = reference();
        assert_relative_eq!(df.inf_up(), 1.193147180559945, epsilon = 1e-12);
        assert_relative_eq!(df.inf_down(), 1.193147180559945, epsilon = 1e-12);
        assert_relative_eq!(df.up(-0.5), 0.5, epsilon = 1e-12);
        assert_relative_eq!(df.up(0.0), 0.831796565751186, epsilon = 1e-12);
        assert_relative_eq!(
            df.derivative_up(0.0).unwrap(),
            0.435266598393584,
            epsilon = 1e-12
        );
        assert!(df.derivative_up(0.0).unwrap() > df.derivative_up(1.0).unwrap());
        assert_eq!(df.kind(), DelayKind::Exp);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(ExpChannelParams::new(0.0, 0.5, 0.5).is_err());
        assert!(ExpChannelParams::new(1.0, -0.1, 0.5).is_err());
        assert!(ExpChannelParams::new(1.0, 0.5, 1.0).is_err());
        assert!(exp_channel(ExpChannelParams {
            tau: 1.0,
            t_p: 0.5,
            vth: 0.0
        })
        .is_err());
    }

    #[test]
    fn domain_guard_returns_negative_infinity() {
        let df = reference();
        assert_eq!(df.up(-df.inf_down()), f64::NEG_INFINITY);
        assert_eq!(df.down(-2.0), f64::NEG_INFINITY);
        assert!(matches!(
            df.derivative_up(-2.0),
            Err(DelayError::DomainViolation { .. })
        ));
        assert_eq!(df.up(f64::INFINITY), df.inf_up());
    }

    #[test]
    fn involution_holds_for_reference() {
        let r = check_involution(&reference(), &[-0.4, 0.0, 1.0, 10.0], 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(matches!(
            check_involution(&reference(), &[-1.5], 1e-9),
            Err(DelayError::DomainViolation { .. })
        ));
    }

    #[test]
    fn constant_pair_is_not_an_involution() {
        let pure = DelayFunction::Hyperbolic(HyperbolicDelay {
            a: 1.0,
            c: 0.0,
            d: 1.0,
        });
        let r = check_involution(&pure, &[0.5, 1.0], 1e-9).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn delta_min_of_exp_channels() {
        assert_relative_eq!(reference().delta_min().unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(
            reference().delta_min_numeric().unwrap(),
            0.5,
            epsilon = 1e-10
        );
        let other = exp_channel(ExpChannelParams::new(2.0, 0.3, 0.7).unwrap()).unwrap();
        assert_relative_eq!(other.delta_min_numeric().unwrap(), 0.3, epsilon = 1e-10);
    }

    #[test]
    fn hyperbolic_pair_matches_closed_form() {
        let h = HyperbolicDelay::new(2.0, 0.5, 1.0).unwrap();
        let df = DelayFunction::Hyperbolic(h);
        let expect = h.delta_min_closed_form();
        assert_relative_eq!(df.delta_min().unwrap(), expect, epsilon = 1e-10);
        assert_relative_eq!(df.down(-expect), expect, epsilon = 1e-10);
        let r = check_involution(&df, &[-0.5, 0.0, 3.0, 100.0], 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(df.kind(), DelayKind::ClosedForm);
        let fd = df.derivative_down(0.25).unwrap();
        assert_relative_eq!(fd, 0.5 / (2.25 * 2.25), epsilon = 1e-7);
    }

    #[test]
    fn non_causal_pair_has_no_delta_min() {
        let df = DelayFunction::Hyperbolic(HyperbolicDelay::new(1.0, 2.0, 1.0).unwrap());
        assert!(!df.is_strictly_causal());
        assert!(matches!(df.delta_min(), Err(DelayError::NoBracket(_))));
    }

    #[test]
    fn tabulated_inversion_of_reference() {
        let df = reference();
        let down: Vec<(f64, f64)> = edge_grid(df.inf_up()).map(|t| (t, df.down(t))).collect();
        let tab = DelayFunction::Tabulated(
            TabulatedDelay::from_down_samples(&down, df.inf_up(), df.inf_down()).unwrap(),
        );
        let r = check_involution(&tab, &[-0.4, 0.0, 1.0, 10.0], 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
        assert_relative_eq!(tab.delta_min().unwrap(), 0.5, epsilon = 1e-6);
        let s = check_shape(&tab, &[-0.4, -0.2, 0.0, 0.5, 1.0, 2.0, 5.0], 1e-9).unwrap();
        assert!(s.increasing && s.concave, "{s:?}");
    }

    #[test]
    fn rescaled_table_doubles_delta_min() {
        let df = reference();
        let down: Vec<(f64, f64)> = edge_grid(df.inf_up())
            .map(|t| (2.0 * t, 2.0 * df.down(t)))
            .collect();
        let tab = TabulatedDelay::from_down_samples(&down, 2.0 * df.inf_up(), 2.0 * df.inf_down())
            .unwrap();
        let tab = DelayFunction::Tabulated(tab);
        assert_relative_eq!(tab.delta_min().unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn shape_of_reference() {
        let grid: Vec<f64> = (0..50).map(|i| -1.0 + 0.2 * i as f64).collect();
        let s = check_shape(&reference(), &grid, 1e-9).unwrap();
        assert!(s.increasing && s.concave);
    }

    #[test]
    fn f32_evaluation_tracks_f64() {
        let p = ExpChannelParams::<f32>::new(1.0, 0.5, 0.5).unwrap();
        let df = exp_channel(p).unwrap();
        assert!((df.up(0.0) - 0.831_796_6).abs() < 1e-5);
        assert!((df.delta_min_numeric().unwrap() - 0.5).abs() < 1e-5);
    }

    #[test]
    fn serde_round_trip() {
        let df = reference();
        let s = serde_json::to_string(&df).unwrap();
        assert!(s.contains("\"kind\":\"exp\""));
        let back: DelayFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, df);
    }

    #[test]
    fn table_file_loading() {
        let df = reference();
        let rows: Vec<DelaySample> = (0..60)
            .map(|i| {
                let t = -1.0 + 0.25 * i as f64;
                DelaySample {
                    t,
                    delta_up: Some(df.up(t)),
                    delta_down: Some(df.down(t)),
                }
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_delay_samples(std::fs::File::create(&path).unwrap(), &rows).unwrap();
        let tab = load_delay_table(&path).unwrap();
        assert!((tab.inf_down() - df.inf_down()).abs() < 1e-3);
        assert!((tab.down(0.3) - df.down(0.3)).abs() < 1e-4);
        assert!((tab.up(0.3) - df.up(0.3)).abs() < 1e-4);

        let down_only: Vec<DelaySample> = rows
            .iter()
            .map(|r| DelaySample {
                delta_up: None,
                ..*r
            })
            .collect();
        let tab = DelayFunction::Tabulated(tabulated_from_samples(&down_only).unwrap());
        assert_eq!(
            tab.down(0.3),
            DelayFunction::Tabulated(tabulated_from_samples(&rows).unwrap()).down(0.3)
        );
        assert!(tab.up(2.0) > 0.0 && tab.up(2.0) <= tab.inf_up());
    }
}
