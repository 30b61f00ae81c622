use std::io::Read;

use serde::{Deserialize, Serialize};

use super::DelayError;
use crate::scalar::Real;

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic<T = f64> {
    xs: Vec<T>,
    ys: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> MonotoneCubic<T> {
    /// Builds the interpolant from points with strictly increasing `x` and `y`.
    pub fn new(points: &[(T, T)]) -> Result<Self, DelayError> {
        if points.len() < 2 {
            return Err(DelayError::InvalidTable("need at least two samples".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(DelayError::InvalidTable(format!(
                    "sample abscissae must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            if !(w[1].1 > w[0].1) {
                return Err(DelayError::InvalidTable(format!(
                    "delay samples must increase strictly ({} then {})",
                    w[0].1, w[1].1
                )));
            }
        }
        let xs: Vec<T> = points.iter().map(|p| p.0).collect();
        let ys: Vec<T> = points.iter().map(|p| p.1).collect();
        let n = xs.len();
        let secants: Vec<T> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut slopes = vec![T::zero(); n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        for i in 1..n - 1 {
            // weighted harmonic mean keeps the interpolant monotone
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let w1 = two * h1 + h0;
            let w2 = h1 + two * h0;
            slopes[i] = (w1 + w2) / (w1 / secants[i - 1] + w2 / secants[i]);
        }
        // three-point end slopes, limited to keep monotonicity
        if n > 2 {
            slopes[0] = end_slope(xs[1] - xs[0], xs[2] - xs[1], secants[0], secants[1], three);
            slopes[n - 1] = end_slope(
                xs[n - 1] - xs[n - 2],
                xs[n - 2] - xs[n - 3],
                secants[n - 2],
                secants[n - 3],
                three,
            );
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn first(&self) -> (T, T, T) {
        (self.xs[0], self.ys[0], self.slopes[0])
    }

    pub fn last(&self) -> (T, T, T) {
        let n = self.xs.len() - 1;
        (self.xs[n], self.ys[n], self.slopes[n])
    }

    pub fn points(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Evaluates inside the sample range; linear extension with the end
    /// slopes outside it.
    pub fn eval(&self, x: T) -> T {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.slopes[0] * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.slopes[n - 1] * (x - self.xs[n - 1]);
        }
        let i = self.xs.partition_point(|&xi| xi <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        h00 * self.ys[i]
            + h10 * h * self.slopes[i]
            + h01 * self.ys[i + 1]
            + h11 * h * self.slopes[i + 1]
    }
}

fn end_slope<T: Real>(h0: T, h1: T, d0: T, d1: T, three: T) -> T {
    let two = T::lit(2.0);
    let m = ((two * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        T::zero()
    } else if d0.signum() != d1.signum() && m.abs() > (three * d0).abs() {
        three * d0
    } else {
        m
    }
}

/// Involution pair given by interpolated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDelay<T = f64> {
    up: MonotoneCubic<T>,
    down: MonotoneCubic<T>,
    inf_up: T,
    inf_down: T,
}

impl<T: Real> TabulatedDelay<T> {
    pub fn new(
        up_samples: &[(T, T)],
        down_samples: &[(T, T)],
        inf_up: T,
        inf_down: T,
    ) -> Result<Self, DelayError> {
        let up = MonotoneCubic::new(up_samples)?;
        let down = MonotoneCubic::new(down_samples)?;
        if !(inf_up >= up.last().1) || !(inf_down >= down.last().1) {
            return Err(DelayError::InvalidTable(
                "declared asymptote lies below the sampled delays".into(),
            ));
        }
        Ok(Self {
            up,
            down,
            inf_up,
            inf_down,
        })
    }

    /// Builds δ↓ from samples and δ↑ through the involution
    /// δ↑(−δ↓(T)) = −T.
    pub fn from_down_samples(down: &[(T, T)], inf_up: T, inf_down: T) -> Result<Self, DelayError> {
        let up = mirror(down);
        Self::new(&up, down, inf_up, inf_down)
    }

    /// Builds δ↑ from samples and δ↓ through the involution.
    pub fn from_up_samples(up: &[(T, T)], inf_up: T, inf_down: T) -> Result<Self, DelayError> {
        let down = mirror(up);
        Self::new(up, &down, inf_up, inf_down)
    }

    pub fn inf_up(&self) -> T {
        self.inf_up
    }

    pub fn inf_down(&self) -> T {
        self.inf_down
    }

    pub fn up(&self, t: T) -> T {
        eval_guarded(&self.up, t, self.inf_down, self.inf_up)
    }

    pub fn down(&self, t: T) -> T {
        eval_guarded(&self.down, t, self.inf_up, self.inf_down)
    }

    pub fn up_samples(&self) -> Vec<(T, T)> {
        self.up.points().collect()
    }

    pub fn down_samples(&self) -> Vec<(T, T)> {
        self.down.points().collect()
    }
}

fn mirror<T: Real>(samples: &[(T, T)]) -> Vec<(T, T)> {
    let mut m: Vec<(T, T)> = samples.iter().map(|&(t, d)| (-d, -t)).collect();
    m.reverse();
    m
}

fn eval_guarded<T: Real>(f: &MonotoneCubic<T>, t: T, domain_edge: T, asymptote: T) -> T {
    if !(t > -domain_edge) {
        return T::neg_infinity();
    }
    if t == T::infinity() {
        return asymptote;
    }
    f.eval(t).min(asymptote)
}

/// One row of a delay-sample file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySample {
    #[serde(rename = "T")]
    pub t: f64,
    pub delta_up: Option<f64>,
    pub delta_down: Option<f64>,
}

/// Reads the `T,delta_up,delta_down` CSV format.
pub fn read_delay_samples<R: Read>(input: R) -> Result<Vec<DelaySample>, DelayError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| DelayError::InvalidTable(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["T", "delta_up", "delta_down"] {
        return Err(DelayError::InvalidTable(
            "expected header `T,delta_up,delta_down`".into(),
        ));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e: csv::Error| DelayError::InvalidTable(e.to_string())))
        .collect()
}

/// Writes the `T,delta_up,delta_down` CSV format.
pub fn write_delay_samples<W: std::io::Write>(
    out: W,
    rows: &[DelaySample],
) -> Result<(), DelayError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DelayError::InvalidTable(e.to_string());
    w.write_record(["T", "delta_up", "delta_down"])
        .map_err(io)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in rows {
        w.write_record([format!("{}", r.t), fmt(r.delta_up), fmt(r.delta_down)])
            .map_err(io)?;
    }
    w.flush()
        .map_err(|e| DelayError::InvalidTable(e.to_string()))?;
    Ok(())
}

/// Estimates the limit of a sampled delay curve from its last three points:
/// Aitken extrapolation on equally spaced tails, the last value otherwise.
pub fn estimate_asymptote(samples: &[(f64, f64)]) -> Option<f64> {
    let n = samples.len();
    let last = samples.last()?.1;
    if n < 3 {
        return Some(last);
    }
    let (t0, y0) = samples[n - 3];
    let (t1, y1) = samples[n - 2];
    let (t2, y2) = samples[n - 1];
    let equal = ((t2 - t1) - (t1 - t0)).abs() <= 1e-9 * (t2 - t0).abs().max(1.0);
    let d1 = y1 - y0;
    let d2 = y2 - y1;
    if equal && d1 > 0.0 && d2 > 0.0 && d2 < d1 {
        let lim = y2 - d2 * d2 / (d2 - d1);
        if lim.is_finite() && lim >= last {
            return Some(lim);
        }
    }
    Some(last)
}

/// Builds a tabulated pair from a sample file; a missing column is
/// synthesized from the other through the involution property.
pub fn tabulated_from_samples(rows: &[DelaySample]) -> Result<TabulatedDelay<f64>, DelayError> {
    let up: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.t, r.delta_up?)))
        .collect();
    let down: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.t, r.delta_down?)))
        .collect();
    match (up.len() >= 2, down.len() >= 2) {
        (true, true) => {
            let iu = estimate_asymptote(&up).unwrap_or(f64::NAN);
            let id = estimate_asymptote(&down).unwrap_or(f64::NAN);
            TabulatedDelay::new(&up, &down, iu, id)
        }
        (false, true) => {
            let id = estimate_asymptote(&down).unwrap_or(f64::NAN);
            // δ∞↑ is the domain edge of δ↓: the largest −T for which δ↓ → −∞;
            // with no up samples use the mirrored tail instead
            let mirrored = mirror(&down);
            let iu = estimate_asymptote(&mirrored).unwrap_or(f64::NAN);
            TabulatedDelay::from_down_samples(&down, iu, id)
        }
        (true, false) => {
            let iu = estimate_asymptote(&up).unwrap_or(f64::NAN);
            let mirrored = mirror(&up);
            let id = estimate_asymptote(&mirrored).unwrap_or(f64::NAN);
            TabulatedDelay::from_up_samples(&up, iu, id)
        }
        (false, false) => Err(DelayError::InvalidTable(
            "need at least two samples for one of delta_up/delta_down".into(),
        )),
    }
}
