use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::WaveformError;
use crate::delay_model::{DelaySample, Edge, ExpChannelParams};
use crate::Time;

pub const MIN_SAMPLES: usize = 5;
const VTH_LO: f64 = 0.05;
const VTH_SPAN: f64 = 0.9;
const SCALE_LO: f64 = 1e-3;
const SCALE_HI: f64 = 1e3;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 20,
            seed: 0,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ExpChannelParams,
    pub rms_residual: Time,
    pub sample_count: usize,
    pub residual_count: usize,
    pub starts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResidual {
    pub edge: Edge,
    pub t: Time,
    /// Model minus sample.
    pub residual: Time,
}

/// Residuals of an exp-channel against every present sample column.
pub fn fit_residuals(p: &ExpChannelParams, samples: &[DelaySample]) -> Vec<FitResidual> {
    let mut out = Vec::new();
    for s in samples {
        if let Some(d) = s.delta_up {
            out.push(FitResidual {
                edge: Edge::Rising,
                t: s.t,
                residual: p.up(s.t) - d,
            });
        }
        if let Some(d) = s.delta_down {
            out.push(FitResidual {
                edge: Edge::Falling,
                t: s.t,
                residual: p.down(s.t) - d,
            });
        }
    }
    out
}

pub fn fit_exp_channel(samples: &[DelaySample]) -> Result<FitReport, WaveformError> {
    fit_exp_channel_with(samples, &FitOptions::default())
}

/// Least-squares fit of (τ, T_p, V̄th) by multi-start Levenberg–Marquardt in
/// the coordinates (ln τ, logit V̄th, ln T_p).
pub fn fit_exp_channel_with(
    samples: &[DelaySample],
    opts: &FitOptions,
) -> Result<FitReport, WaveformError> {
    let problem = Problem::new(samples)?;
    let starts = opts.starts.max(1);
    let best = (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
            let x0 = problem.random_start(&mut rng);
            problem.levenberg_marquardt(x0, opts.max_iter)
        })
        .filter(|(_, c)| c.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let Some((x, cost)) = best else {
        return Err(WaveformError::FitDiverged(
            "no start reached a finite residual".into(),
        ));
    };
    let params = problem.params(&x);
    params
        .validate()
        .map_err(|e| WaveformError::FitDiverged(e.to_string()))?;
    Ok(FitReport {
        params,
        rms_residual: (2.0 * cost / problem.n_res as f64).sqrt(),
        sample_count: samples.len(),
        residual_count: problem.n_res,
        starts,
    })
}

struct Problem<'a> {
    samples: &'a [DelaySample],
    n_res: usize,
    scale: f64,
    lo: f64,
    hi: f64,
}

impl<'a> Problem<'a> {
    fn new(samples: &'a [DelaySample]) -> Result<Self, WaveformError> {
        let mut deltas: Vec<f64> = samples
            .iter()
            .flat_map(|s| [s.delta_up, s.delta_down])
            .flatten()
            .collect();
        if deltas.len() < MIN_SAMPLES {
            return Err(WaveformError::InsufficientSamples {
                got: deltas.len(),
                need: MIN_SAMPLES,
            });
        }
        if deltas
            .iter()
            .chain(samples.iter().map(|s| &s.t))
            .any(|v| !v.is_finite())
        {
            return Err(WaveformError::InvalidParams(
                "samples must be finite".into(),
            ));
        }
        deltas.sort_by(f64::total_cmp);
        let scale = deltas[deltas.len() / 2].abs();
        if !(scale > 0.0) {
            return Err(WaveformError::InvalidParams(
                "median delay must be positive".into(),
            ));
        }
        Ok(Self {
            samples,
            n_res: deltas.len(),
            scale,
            lo: (SCALE_LO * scale).ln(),
            hi: (SCALE_HI * scale).ln(),
        })
    }

    fn params(&self, x: &Vector3<f64>) -> ExpChannelParams {
        let s = 1.0 / (1.0 + (-x[1]).exp());
        ExpChannelParams {
            tau: x[0].exp(),
            vth: VTH_LO + VTH_SPAN * s,
            t_p: x[2].exp(),
        }
    }

    fn clamp(&self, mut x: Vector3<f64>) -> Vector3<f64> {
        x[0] = x[0].clamp(self.lo, self.hi);
        x[1] = x[1].clamp(-40.0, 40.0);
        x[2] = x[2].clamp(self.lo, self.hi);
        x
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let tau = self.scale * 10f64.powf(rng.gen_range(-1.0..1.0));
        let vth: f64 = rng.gen_range(0.15..0.85);
        let t_p = self.scale * rng.gen_range(0.05..0.8);
        let s = (vth - VTH_LO) / VTH_SPAN;
        self.clamp(Vector3::new(tau.ln(), (s / (1.0 - s)).ln(), t_p.ln()))
    }

    fn residuals(&self, x: &Vector3<f64>, out: &mut Vec<f64>) {
        let p = self.params(x);
        let penalty = 1e2 * self.scale;
        out.clear();
        out.extend(fit_residuals(&p, self.samples).into_iter().map(|r| {
            if r.residual.is_finite() {
                r.residual
            } else {
                penalty
            }
        }));
    }

    fn cost(&self, x: &Vector3<f64>, buf: &mut Vec<f64>) -> f64 {
        self.residuals(x, buf);
        0.5 * buf.iter().map(|r| r * r).sum::<f64>()
    }

    fn levenberg_marquardt(&self, x0: Vector3<f64>, max_iter: usize) -> (Vector3<f64>, f64) {
        let mut x = x0;
        let mut r = Vec::with_capacity(self.n_res);
        let mut buf = Vec::with_capacity(self.n_res);
        let mut cost = self.cost(&x, &mut r);
        let mut lambda = 1e-3;
        let mut jac = vec![Vector3::zeros(); self.n_res];
        let (mut rp, mut rm) = (Vec::new(), Vec::new());
        for _ in 0..max_iter {
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += FD_STEP;
                xm[k] -= FD_STEP;
                self.residuals(&xp, &mut rp);
                self.residuals(&xm, &mut rm);
                for (i, j) in jac.iter_mut().enumerate() {
                    j[k] = (rp[i] - rm[i]) / (2.0 * FD_STEP);
                }
            }
            let mut a = Matrix3::zeros();
            let mut g = Vector3::zeros();
            for (j, ri) in jac.iter().zip(&r) {
                a += j * j.transpose();
                g += j * *ri;
            }
            if g.amax() <= 1e-30 {
                break;
            }
            let mut improved = false;
            while lambda < 1e12 {
                let mut damped = a;
                for k in 0..3 {
                    damped[(k, k)] += lambda * a[(k, k)].max(1e-12);
                }
                let Some(step) = damped.lu().solve(&(-g)) else {
                    lambda *= 4.0;
                    continue;
                };
                let xn = self.clamp(x + step);
                let cn = self.cost(&xn, &mut buf);
                if cn < cost {
                    let small = (xn - x).amax() < 1e-13 || cost - cn <= 1e-15 * cost;
                    x = xn;
                    cost = cn;
                    std::mem::swap(&mut r, &mut buf);
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = !small;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (x, cost)
    }
}
