//! Weighted Gerchberg-Saxton synthesis of a single SLM phase that
//! approximates several target phase profiles at once.
//!
//! The overlap of an estimate with target `i` is
//! `V_i = (1/B) sum_xy exp(j (est - phi_i))` and the merit is `T = sum_i |V_i|`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OmniError, Result};
use crate::par;
use crate::phase::{superposition_phase, PhaseMap};

/// Below this overlap modulus a target's weight is reset instead of divided.
const TINY_OVERLAP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSet {
    pub values: Vec<Complex64>,
    pub merit: f64,
}

impl OverlapSet {
    pub fn amplitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Standard deviation over mean of `|V_i|`.
    pub fn nonuniformity(&self) -> f64 {
        let a = self.amplitudes();
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        var.sqrt() / mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WgsInit {
    /// Phase of the unweighted superposition of all targets.
    #[default]
    UniformSuperposition,
    /// Uniform random phase drawn from the seed.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WgsParams {
    pub max_iters: usize,
    /// Stop once `|T_k - T_{k-1}|` drops below this.
    pub tolerance: f64,
    pub seed: u64,
    pub init: WgsInit,
}

impl Default for WgsParams {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tolerance: 1e-12,
            seed: 0,
            init: WgsInit::UniformSuperposition,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WgsIteration {
    pub merit: f64,
    pub best_merit: f64,
    pub amplitudes: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WgsTrace {
    /// Merit of the starting estimate.
    pub initial_merit: f64,
    pub iterations: Vec<WgsIteration>,
}

impl WgsTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn best_merit(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.initial_merit, |r| r.best_merit)
    }

    /// True when no iteration beat the starting estimate.
    pub fn stalled(&self) -> bool {
        self.best_merit() <= self.initial_merit
    }

    /// CSV with columns `iteration, T, |V_1|..|V_A|, w_1..w_A`.
    pub fn to_csv(&self) -> Result<String> {
        let targets = self.iterations.first().map_or(0, |r| r.amplitudes.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration".to_string(), "T".to_string()];
        header.extend((1..=targets).map(|i| format!("V{i}")));
        header.extend((1..=targets).map(|i| format!("w{i}")));
        w.write_record(&header)?;
        for (k, row) in self.iterations.iter().enumerate() {
            let mut rec = vec![(k + 1).to_string(), row.merit.to_string()];
            rec.extend(row.amplitudes.iter().map(f64::to_string));
            rec.extend(row.weights.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| OmniError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

fn check_dims(est: &PhaseMap, target: &PhaseMap) -> Result<()> {
    if est.dim() != target.dim() {
        return Err(OmniError::DimensionMismatch {
            expected: est.dim(),
            found: target.dim(),
        });
    }
    Ok(())
}

/// Normalized overlap `V = (1/B) sum exp(j (est - target))`.
pub fn overlap(est: &PhaseMap, target: &PhaseMap) -> Result<Complex64> {
    check_dims(est, target)?;
    let a = est.values.as_slice().expect("standard layout");
    let b = target.values.as_slice().expect("standard layout");
    let n = a.len();
    Ok(par::sum_complex(n, |i| Complex64::cis(a[i] - b[i])) / n as f64)
}

pub fn overlaps(est: &PhaseMap, targets: &[PhaseMap]) -> Result<OverlapSet> {
    if targets.is_empty() {
        return Err(OmniError::InvalidInput("no targets".into()));
    }
    let values = targets
        .iter()
        .map(|t| overlap(est, t))
        .collect::<Result<Vec<_>>>()?;
    let merit = values.iter().map(|v| v.norm()).sum();
    Ok(OverlapSet { values, merit })
}

/// `T = sum_i |V_i|`.
pub fn merit(est: &PhaseMap, targets: &[PhaseMap]) -> Result<f64> {
    Ok(overlaps(est, targets)?.merit)
}

/// Overlaps computed from precomputed unit phasors.
fn phasor_overlaps(est: &Array2<Complex64>, targets: &[Array2<Complex64>]) -> Vec<Complex64> {
    let e = est.as_slice().expect("standard layout");
    let n = e.len();
    targets
        .iter()
        .map(|t| {
            let t = t.as_slice().expect("standard layout");
            par::sum_complex(n, |i| e[i] * t[i].conj()) / n as f64
        })
        .collect()
}

fn initial_estimate(targets: &[PhaseMap], params: &WgsParams) -> Result<PhaseMap> {
    match params.init {
        WgsInit::UniformSuperposition => {
            superposition_phase(targets, &vec![1.0; targets.len()])
        }
        WgsInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let dim = targets[0].dim();
            let values = Array2::from_shape_simple_fn(dim, || rng.gen_range(-PI..PI));
            Ok(PhaseMap {
                values,
                pitch: targets[0].pitch,
            })
        }
    }
}

/// Run weighted Gerchberg-Saxton over `targets`.
///
/// Each iteration re-weights targets by `w_i <- w_i <|V|> / |V_i|` (weights
/// kept at unit mean) and recomposes
/// `est = arg sum_i w_i (V_i / |V_i|) exp(j phi_i)`, which re-phases every
/// target onto the current estimate. Returns the estimate with the highest
/// merit seen, including the starting one.
pub fn wgs_optimize(targets: &[PhaseMap], params: &WgsParams) -> Result<(PhaseMap, WgsTrace)> {
    if targets.is_empty() {
        return Err(OmniError::InvalidInput("no targets".into()));
    }
    if params.max_iters == 0 {
        return Err(OmniError::InvalidInput("max_iters must be >= 1".into()));
    }
    if !(params.tolerance >= 0.0) {
        return Err(OmniError::InvalidInput("tolerance must be >= 0".into()));
    }
    for t in &targets[1..] {
        check_dims(&targets[0], t)?;
    }
    let a = targets.len();
    let phasors: Vec<Array2<Complex64>> = targets.iter().map(PhaseMap::phasors).collect();

    let mut est = initial_estimate(targets, params)?;
    let mut v = phasor_overlaps(&est.phasors(), &phasors);
    let mut last_merit: f64 = v.iter().map(|z| z.norm()).sum();
    let mut trace = WgsTrace {
        initial_merit: last_merit,
        iterations: Vec::with_capacity(params.max_iters),
    };
    let mut best = (last_merit, est.clone());
    let mut weights = vec![1.0; a];

    for _ in 0..params.max_iters {
        update_weights(&mut weights, &v);
        let coeffs: Vec<Complex64> = weights
            .iter()
            .zip(&v)
            .map(|(&w, z)| {
                let m = z.norm();
                if m < TINY_OVERLAP {
                    Complex64::new(w, 0.0)
                } else {
                    w * z / m
                }
            })
            .collect();
        est = recompose(&phasors, &coeffs, est.pitch);
        v = phasor_overlaps(&est.phasors(), &phasors);
        let merit: f64 = v.iter().map(|z| z.norm()).sum();
        if merit > best.0 {
            best = (merit, est.clone());
        }
        trace.iterations.push(WgsIteration {
            merit,
            best_merit: best.0,
            amplitudes: v.iter().map(|z| z.norm()).collect(),
            weights: weights.clone(),
        });
        let converged = (merit - last_merit).abs() < params.tolerance;
        last_merit = merit;
        if converged {
            break;
        }
    }
    Ok((best.1, trace))
}

/// `w_i <- w_i <|V|> / |V_i|`, renormalized to unit mean.
fn update_weights(weights: &mut [f64], v: &[Complex64]) {
    let amps: Vec<f64> = v.iter().map(|z| z.norm()).collect();
    let mean_amp = amps.iter().sum::<f64>() / amps.len() as f64;
    let mean_w = weights.iter().sum::<f64>() / weights.len() as f64;
    for (w, &m) in weights.iter_mut().zip(&amps) {
        *w = if m < TINY_OVERLAP || mean_amp < TINY_OVERLAP {
            mean_w
        } else {
            *w * mean_amp / m
        };
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    weights.iter_mut().for_each(|w| *w /= mean);
}

fn recompose(phasors: &[Array2<Complex64>], coeffs: &[Complex64], pitch: f64) -> PhaseMap {
    let dim = phasors[0].dim();
    let srcs: Vec<&[Complex64]> = phasors
        .iter()
        .map(|p| p.as_slice().expect("standard layout"))
        .collect();
    let mut values = Array2::zeros(dim);
    par::fill_indexed(values.as_slice_mut().expect("standard layout"), |i| {
        let mut z = Complex64::new(0.0, 0.0);
        for (s, c) in srcs.iter().zip(coeffs) {
            z += c * s[i];
        }
        z.arg()
    });
    PhaseMap { values, pitch }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_map(dim: (usize, usize), seed: u64) -> PhaseMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PhaseMap {
            values: Array2::from_shape_simple_fn(dim, || rng.gen_range(-PI..PI)),
            pitch: 1.0,
        }
    }

    #[test]
    fn perfect_and_opposite_overlap() {
        let t = random_map((16, 16), 1);
        let v = overlap(&t, &t).unwrap();
        assert_relative_eq!(v.re, 1.0, epsilon = 1e-12);
        assert!(v.im.abs() < 1e-12);
        let v = overlap(&t.offset(PI), &t).unwrap();
        assert_relative_eq!(v.re, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_offset_rotates_but_keeps_modulus() {
        let t = random_map((16, 16), 2);
        let v = overlap(&t.offset(0.7), &t).unwrap();
        assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(v.arg(), 0.7, epsilon = 1e-12);
        let other = random_map((16, 16), 3);
        let m1 = merit(&other, std::slice::from_ref(&t)).unwrap();
        let m2 = merit(&other.offset(1.3), &[t]).unwrap();
        assert_relative_eq!(m1, m2, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let a = random_map((4, 4), 1);
        let b = random_map((4, 5), 1);
        assert!(overlap(&a, &b).is_err());
        assert!(merit(&a, &[]).is_err());
    }

    #[test]
    fn identical_targets_give_merit_a() {
        let t = random_map((8, 8), 4);
        let m = merit(&t, &[t.clone(), t.clone(), t.clone()]).unwrap();
        assert_relative_eq!(m, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_target_converges_in_one_iteration() {
        let t = random_map((32, 32), 5);
        let (est, trace) = wgs_optimize(std::slice::from_ref(&t), &WgsParams::default()).unwrap();
        assert_eq!(trace.len(), 1);
        assert_relative_eq!(trace.best_merit(), 1.0, epsilon = 1e-12);
        let v = overlap(&est, &t).unwrap();
        assert_relative_eq!(v.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_targets_zero_and_pi() {
        // any constant estimate matches both up to a global offset
        let a = PhaseMap::zeros((8, 8), 1.0);
        let b = a.offset(PI);
        let (est, _) = wgs_optimize(&[a.clone(), b.clone()], &WgsParams::default()).unwrap();
        let set = overlaps(&est, &[a, b]).unwrap();
        for amp in set.amplitudes() {
            assert_relative_eq!(amp, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn random_init_is_seeded() {
        let t = vec![random_map((16, 16), 6), random_map((16, 16), 7)];
        let p = WgsParams {
            init: WgsInit::Random,
            seed: 42,
            ..WgsParams::default()
        };
        let (e1, t1) = wgs_optimize(&t, &p).unwrap();
        let (e2, t2) = wgs_optimize(&t, &p).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(t1, t2);
        let (e3, _) = wgs_optimize(&t, &WgsParams { seed: 43, ..p }).unwrap();
        assert_ne!(e1, e3);
    }

    #[test]
    fn best_so_far_is_monotone_and_weights_bounded() {
        let t: Vec<_> = (0..3).map(|s| random_map((64, 64), 10 + s)).collect();
        let (_, trace) = wgs_optimize(&t, &WgsParams { max_iters: 20, ..Default::default() }).unwrap();
        assert!(trace.len() <= 20);
        let mut prev = trace.initial_merit;
        for row in &trace.iterations {
            assert!(row.best_merit >= prev);
            prev = row.best_merit;
            let mean = row.weights.iter().sum::<f64>() / row.weights.len() as f64;
            assert!((0.5..=2.0).contains(&mean));
        }
    }

    #[test]
    fn trace_csv_columns() {
        let t: Vec<_> = (0..2).map(|s| random_map((16, 16), 20 + s)).collect();
        let (_, trace) = wgs_optimize(&t, &WgsParams { max_iters: 3, tolerance: 0.0, ..Default::default() }).unwrap();
        let csv = trace.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iteration,T,V1,V2,w1,w2");
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn rejects_bad_params() {
        let t = vec![random_map((4, 4), 1)];
        assert!(wgs_optimize(&t, &WgsParams { max_iters: 0, ..Default::default() }).is_err());
        assert!(wgs_optimize(&t, &WgsParams { tolerance: -1.0, ..Default::default() }).is_err());
        assert!(wgs_optimize(&[], &WgsParams::default()).is_err());
    }
}
