use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use litterbot_core::ik::{ik_solve, IkConfig};
use litterbot_core::kinematics::ready_pose;
use litterbot_core::mission::PrimitiveLibrary;
use litterbot_core::par::map_range;
use litterbot_core::sim::{render_depth, run_batch, EpisodeConfig, PlanarPose, RobotState, SceneConfig, SimOptions};
use litterbot_core::{ChainModel, Exec, Frame};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn render(c: &mut Criterion) {
    let model = ChainModel::nominal();
    let state = RobotState::ready(PlanarPose::default());
    let mut g = c.benchmark_group("render");
    for (w, h) in [(160u32, 120u32), (640, 480)] {
        let mut scene = SceneConfig::spawn_in_workspace(1);
        scene.camera.intrinsics = scene.camera.intrinsics.scaled(w, h);
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, format!("{w}x{h}")), &scene, |b, s| {
                b.iter(|| render_depth(black_box(s), &state, &model, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn ik_batch(c: &mut Criterion) {
    let model = ChainModel::nominal();
    let cfg = IkConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let targets: Vec<_> = (0..64)
        .map(|_| {
            let q = model.sample_configuration(&mut rng);
            model.forward_kinematics(&q, Frame::EndEffector).unwrap()
        })
        .collect();
    let mut g = c.benchmark_group("ik_batch_64");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                map_range(exec, targets.len(), |i| {
                    let p = cfg.problem(&model, targets[i], ready_pose()).unwrap();
                    ik_solve(&p, &ready_pose()).unwrap().converged
                })
            })
        });
    }
    g.finish();
}

fn episodes(c: &mut Criterion) {
    let model = ChainModel::nominal();
    let lib = PrimitiveLibrary::nominal();
    let opts = SimOptions {
        exec: Exec::Sequential,
        ..SimOptions::default()
    };
    let cfg = EpisodeConfig::default();
    let mut g = c.benchmark_group("episodes_4");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| run_batch(&[], 4, 7, &model, &lib, &opts, &cfg, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, render, ik_batch, episodes);
criterion_main!(benches);
