//! Seeded batch evaluation.

use serde::{Deserialize, Serialize};

use super::episode::{run_episode, EpisodeConfig, EpisodeReport, EpisodeSummary};
use super::runtime::{SimEvent, SimOptions};
use super::scene::SceneConfig;
use super::SimError;
use crate::kinematics::ChainModel;
use crate::mission::PrimitiveLibrary;
use crate::par::{map_range, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub samples: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl ErrorStats {
    pub fn from_samples(mut v: Vec<f64>) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        v.sort_by(f64::total_cmp);
        let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
        Self {
            samples: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: at(0.5),
            p90: at(0.9),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IkStats {
    pub solves: u32,
    pub converged: u32,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub seed: u64,
    pub grasp_success: usize,
    pub load_success: usize,
    pub unload_success: usize,
    pub timeouts: usize,
    pub mean_time_to_grasp: Option<f64>,
    pub mean_time_to_load: Option<f64>,
    pub perception_axis_error_deg: ErrorStats,
    pub perception_center_error_m: ErrorStats,
    pub ik: IkStats,
}

/// Episode `i` runs scene `scenes[i % len]` (or a freshly spawned one when
/// `scenes` is empty) with seed `seed + i`.
pub fn run_batch(
    scenes: &[SceneConfig],
    n: usize,
    seed: u64,
    model: &ChainModel,
    lib: &PrimitiveLibrary,
    opts: &SimOptions,
    cfg: &EpisodeConfig,
    exec: Exec,
) -> Result<(EvalSummary, Vec<EpisodeReport>), SimError> {
    let reports = map_range(exec, n, |i| {
        let s = seed.wrapping_add(i as u64);
        let scene = if scenes.is_empty() {
            SceneConfig::spawn_in_workspace(s)
        } else {
            SceneConfig {
                seed: s,
                ..scenes[i % scenes.len()].clone()
            }
        };
        run_episode(&scene, model, lib, opts, cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok((summarize(seed, &reports), reports))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(seed: u64, reports: &[EpisodeReport]) -> EvalSummary {
    let sums: Vec<&EpisodeSummary> = reports.iter().map(|r| &r.summary).collect();
    let (mut axis, mut center, mut iters) = (Vec::new(), Vec::new(), Vec::new());
    let mut ik = IkStats::default();
    for e in reports.iter().flat_map(|r| &r.events) {
        match *e {
            SimEvent::Perception {
                axis_error_deg: Some(a),
                center_error: Some(c),
                ..
            } => {
                axis.push(a);
                center.push(c);
            }
            SimEvent::IkSolve { converged, iterations, .. } => {
                ik.solves += 1;
                ik.converged += converged as u32;
                iters.push(iterations as f64);
            }
            _ => {}
        }
    }
    ik.mean_iterations = mean(&iters).unwrap_or(0.0);
    let ttg: Vec<f64> = sums.iter().filter_map(|s| s.time_to_grasp).collect();
    let ttl: Vec<f64> = sums.iter().filter_map(|s| s.time_to_load).collect();
    EvalSummary {
        n: reports.len(),
        seed,
        grasp_success: sums.iter().filter(|s| s.grasp_successes > 0).count(),
        load_success: sums.iter().filter(|s| s.loaded > 0).count(),
        unload_success: sums
            .iter()
            .filter(|s| s.unload.is_some_and(|u| u.basket_deg > 0.0 && u.door_deg > 0.0))
            .count(),
        timeouts: sums.iter().filter(|s| s.timed_out).count(),
        mean_time_to_grasp: mean(&ttg),
        mean_time_to_load: mean(&ttl),
        perception_axis_error_deg: ErrorStats::from_samples(axis),
        perception_center_error_m: ErrorStats::from_samples(center),
        ik,
    }
}
