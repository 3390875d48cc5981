//! Many independent trajectories on a worker pool, reduced in trajectory-id
//! order so the aggregates do not depend on scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::cumulant::CumulantSeries;
use crate::diagnostics::default_max_entropy;
use crate::error::{Error, Result};
use crate::hilbert::{build_operators, standard_initial_state, QuantumState};
use crate::noise::NoiseStream;
use crate::params::{BasisSpec, ModelParams};
use crate::sse::{run_trajectory, Observation, SseConfig, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_traj: u64,
    pub base_seed: u64,
    pub params: ModelParams,
    pub basis: BasisSpec,
    pub sse: SseConfig,
    pub t_final: f64,
    pub sample_stride: u64,
    /// Brownian sub-increments per step (see [`NoiseStream::with_substeps`]).
    pub substeps: u32,
    /// Worker count; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// Entropy normalization for the peak-entropy statistic; `None` means
    /// `ln(2J + 1)`.
    pub entropy_norm: Option<f64>,
}

impl EnsembleSpec {
    pub fn new(
        params: ModelParams,
        basis: BasisSpec,
        sse: SseConfig,
        n_traj: u64,
        base_seed: u64,
        t_final: f64,
    ) -> Self {
        EnsembleSpec {
            n_traj,
            base_seed,
            params,
            basis,
            sse,
            t_final,
            sample_stride: 10,
            substeps: 1,
            threads: None,
            entropy_norm: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidParams("n_traj must be at least 1".into()));
        }
        if self.basis.spin != self.params.spin {
            return Err(Error::ParameterMismatch(format!(
                "basis spin {} differs from model spin {}",
                self.basis.spin.value(),
                self.params.spin.value()
            )));
        }
        if self.entropy_norm.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParams("entropy normalization must be positive".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidParams(format!("t_final = {} must be positive", self.t_final)));
        }
        Ok(())
    }
}

/// Pointwise mean and unbiased variance across trajectories.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl SeriesStats {
    /// Accumulate columns in the order given.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let n = columns.len();
        let len = columns.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; len];
        let mut variance = vec![0.0; len];
        for i in 0..len {
            let m = columns.iter().map(|c| c[i]).sum::<f64>() / n as f64;
            mean[i] = m;
            if n > 1 {
                variance[i] = columns.iter().map(|c| (c[i] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            }
        }
        SeriesStats { mean, variance }
    }

    pub fn standard_error(&self, n: usize) -> Vec<f64> {
        self.variance.iter().map(|v| (v / n.max(1) as f64).sqrt()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Aggregates {
    pub times: Vec<f64>,
    pub z: SeriesStats,
    pub p: SeriesStats,
    pub jz: SeriesStats,
    pub entropy: SeriesStats,
    pub n_traj: u64,
    /// Trajectories that reached `t_final` and enter every statistic.
    pub n_complete: u64,
    pub failed: Vec<u64>,
    /// Fraction of complete trajectories ending with `<J_z> > 0`.
    pub up_fraction: f64,
    /// Mean over complete trajectories of the peak entropy divided by the
    /// entropy normalization.
    pub mean_max_entropy: f64,
}

impl Aggregates {
    /// True when some trajectories were excluded.
    pub fn is_partial(&self) -> bool {
        !self.failed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    /// Indexed by trajectory id.
    pub records: Vec<TrajectoryRecord>,
    pub aggregates: Aggregates,
}

impl EnsembleResult {
    pub fn complete(&self) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records.iter().filter(|r| r.is_complete())
    }

    /// Fraction of complete trajectories whose final `|<J_z>|` exceeds
    /// `threshold`.
    pub fn collapsed_fraction(&self, threshold: f64) -> f64 {
        let (mut hit, mut n) = (0usize, 0usize);
        for r in self.complete() {
            n += 1;
            if r.obs.last().is_some_and(|o| o.jz.abs() > threshold) {
                hit += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            hit as f64 / n as f64
        }
    }
}

/// Run from the standard initial state.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    spec.validate()?;
    let initial = standard_initial_state(&spec.params, &spec.basis)?;
    run_ensemble_from(spec, &initial)
}

pub fn run_ensemble_from(spec: &EnsembleSpec, initial: &QuantumState) -> Result<EnsembleResult> {
    spec.validate()?;
    let ops = build_operators(&spec.params, &spec.basis)?;
    let threads = spec.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
    log::info!("running {} trajectories on {threads} workers", spec.n_traj);
    let records: Vec<Result<TrajectoryRecord>> = pool.install(|| {
        (0..spec.n_traj)
            .into_par_iter()
            .map(|id| {
                let mut noise = NoiseStream::new(spec.base_seed, id).with_substeps(spec.substeps);
                run_trajectory(initial, &ops, &spec.sse, &mut noise, spec.t_final, spec.sample_stride)
            })
            .collect()
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let e0 = spec.entropy_norm.unwrap_or_else(|| default_max_entropy(spec.params.spin));
    let aggregates = aggregate(&records, e0)?;
    Ok(EnsembleResult { records, aggregates })
}

/// Reduce records in the order given; failed or truncated records are
/// excluded and listed. Peak entropies are divided by `e0`.
pub fn aggregate(records: &[TrajectoryRecord], e0: f64) -> Result<Aggregates> {
    let complete: Vec<&TrajectoryRecord> = records.iter().filter(|r| r.is_complete()).collect();
    let failed: Vec<u64> = records.iter().filter(|r| !r.is_complete()).map(|r| r.trajectory_id).collect();
    for r in &failed {
        log::warn!("trajectory {r} excluded from aggregates");
    }
    let mut agg =
        Aggregates { n_traj: records.len() as u64, n_complete: complete.len() as u64, failed, ..Default::default() };
    let Some(first) = complete.first() else {
        return Ok(agg);
    };
    if let Some(bad) = complete.iter().find(|r| r.times != first.times) {
        return Err(Error::GridMismatch(format!(
            "trajectory {} sampled on a different grid than trajectory {}",
            bad.trajectory_id, first.trajectory_id
        )));
    }
    agg.times = first.times.clone();
    let col = |f: &dyn Fn(&Observation) -> f64| -> Vec<Vec<f64>> {
        complete.iter().map(|r| r.obs.iter().map(f).collect()).collect()
    };
    agg.z = SeriesStats::from_columns(&col(&|o| o.z));
    agg.p = SeriesStats::from_columns(&col(&|o| o.p));
    agg.jz = SeriesStats::from_columns(&col(&|o| o.jz));
    agg.entropy = SeriesStats::from_columns(&complete.iter().map(|r| r.entropy.clone()).collect::<Vec<_>>());
    let n = complete.len() as f64;
    agg.up_fraction = complete.iter().filter(|r| r.obs.last().is_some_and(|o| o.jz > 0.0)).count() as f64 / n;
    agg.mean_max_entropy = complete.iter().map(|r| r.entropy.iter().copied().fold(0.0, f64::max) / e0).sum::<f64>() / n;
    Ok(agg)
}

/// Closure and ensemble side by side at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub t: f64,
    /// `C_zz, C_pp, C_JzJz` from the moment closure.
    pub closure: [f64; 3],
    /// Ensemble mean of the conditional covariances.
    pub ensemble: [f64; 3],
    pub ensemble_se: [f64; 3],
    /// `|closure - ensemble|` over the ensemble value, with the variance
    /// floored at the ground-state scale (`(hbar/2)^2` for `J_z`).
    pub relative: [f64; 3],
    /// Ensemble mean of [`Observation::max_standardized_third`].
    pub third: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub max_relative: [f64; 3],
    pub max_third: f64,
}

impl ConvergenceReport {
    /// Closure judged adequate: covariances within `rel_tol`, third
    /// cumulants below `third_tol`.
    pub fn closure_valid(&self, rel_tol: f64, third_tol: f64) -> bool {
        self.max_relative.iter().all(|&r| r <= rel_tol) && self.max_third <= third_tol
    }
}

fn variance_floors(p: &ModelParams) -> [f64; 3] {
    [p.z_g().powi(2), p.p_g().powi(2), (p.hbar / 2.0).powi(2)]
}

/// Compare closure covariances with the ensemble-averaged conditional
/// covariances of the complete trajectories.
pub fn convergence_report(
    result: &EnsembleResult,
    params: &ModelParams,
    series: &CumulantSeries,
) -> Result<ConvergenceReport> {
    if series.params != *params {
        return Err(Error::ParameterMismatch("cumulant series was integrated with different parameters".into()));
    }
    let complete: Vec<&TrajectoryRecord> = result.complete().collect();
    let Some(first) = complete.first() else {
        return Err(Error::EmptySeries);
    };
    if first.times.len() != series.times.len()
        || first.times.iter().zip(&series.times).any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0))
    {
        return Err(Error::GridMismatch(format!(
            "ensemble has {} samples, closure {}",
            first.times.len(),
            series.times.len()
        )));
    }
    let floors = variance_floors(params);
    let n = complete.len();
    let mut rows = Vec::with_capacity(first.times.len());
    for (i, &t) in first.times.iter().enumerate() {
        let c = &series.cov[i];
        let closure = [c[(0, 0)], c[(1, 1)], c[(2, 2)]];
        let pick = |o: &Observation| [o.czz, o.cpp, o.cjzjz];
        let mut ensemble = [0.0; 3];
        let mut ensemble_se = [0.0; 3];
        for k in 0..3 {
            let xs: Vec<f64> = complete.iter().map(|r| pick(&r.obs[i])[k]).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            ensemble[k] = m;
            if n > 1 {
                let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                ensemble_se[k] = (v / n as f64).sqrt();
            }
        }
        let relative: [f64; 3] =
            std::array::from_fn(|k| (closure[k] - ensemble[k]).abs() / ensemble[k].abs().max(floors[k]));
        let third = complete.iter().map(|r| r.obs[i].max_standardized_third(params)).sum::<f64>() / n as f64;
        rows.push(ConvergenceRow { t, closure, ensemble, ensemble_se, relative, third });
    }
    let max_relative = std::array::from_fn(|k| rows.iter().map(|r| r.relative[k]).fold(0.0, f64::max));
    let max_third = rows.iter().map(|r| r.third).fold(0.0, f64::max);
    Ok(ConvergenceReport { rows, max_relative, max_third })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Spin;

    fn small_spec(n_traj: u64, threads: usize) -> EnsembleSpec {
        let spin = Spin::new(0.5).unwrap();
        let params = ModelParams::dimensionless(spin, 2.0, 0.05, 2.0).unwrap();
        let basis = BasisSpec::new(params.weighted_n_max(1.0), spin);
        let mut spec = EnsembleSpec::new(params, basis, SseConfig::default(), n_traj, 99, 1.0);
        spec.threads = Some(threads);
        spec
    }

    #[test]
    fn single_trajectory_aggregates_equal_the_record() {
        let res = run_ensemble(&small_spec(1, 1)).unwrap();
        let r = &res.records[0];
        assert_eq!(res.aggregates.z.mean, r.z_mean());
        assert!(res.aggregates.z.variance.iter().all(|&v| v == 0.0));
        assert_eq!(res.aggregates.entropy.mean, r.entropy);
        assert_eq!(res.aggregates.n_complete, 1);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let a = run_ensemble(&small_spec(6, 1)).unwrap();
        let b = run_ensemble(&small_spec(6, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_excluded_and_counted() {
        let mut spec = small_spec(3, 1);
        spec.basis = BasisSpec::new(30, spec.params.spin);
        // all weight at the top of the Fock ladder fails the first tail check
        let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); spec.basis.dim()];
        amps[spec.basis.index(29, 0)] = num_complex::Complex64::new(1.0, 0.0);
        let shifted = QuantumState::new(amps);
        let res = run_ensemble_from(&spec, &shifted).unwrap();
        assert_eq!(res.aggregates.n_complete, 0);
        assert_eq!(res.aggregates.failed, vec![0, 1, 2]);
        assert!(res.aggregates.is_partial());
    }

    #[test]
    fn noise_streams_are_pairwise_uncorrelated() {
        let steps = 20_000u64;
        let dt = 1e-3;
        let streams: Vec<Vec<f64>> = (0..8)
            .map(|id| {
                let mut n = NoiseStream::new(5, id);
                (0..steps).map(|s| n.increment(s, dt)).collect()
            })
            .collect();
        let bound = 4.0 / (steps as f64).sqrt();
        for a in 0..streams.len() {
            for b in a + 1..streams.len() {
                let sab: f64 = streams[a].iter().zip(&streams[b]).map(|(x, y)| x * y).sum();
                let saa: f64 = streams[a].iter().map(|x| x * x).sum();
                let sbb: f64 = streams[b].iter().map(|x| x * x).sum();
                let rho = sab / (saa * sbb).sqrt();
                assert!(rho.abs() < bound, "streams {a},{b}: {rho}");
            }
        }
    }

    #[test]
    fn series_stats_use_unbiased_variance() {
        let s = SeriesStats::from_columns(&[vec![1.0, 2.0], vec![3.0, 2.0]]);
        assert_eq!(s.mean, vec![2.0, 2.0]);
        assert_eq!(s.variance, vec![2.0, 0.0]);
        assert_eq!(s.standard_error(2), vec![1.0, 0.0]);
    }
}
