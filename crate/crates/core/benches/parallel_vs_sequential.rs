use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tgvc_core::ddim_sim::{self, Scene};
use tgvc_core::guidance::GuidanceConfig;
use tgvc_core::hdbscan::{hdbscan, HdbscanParams};
use tgvc_core::motion::{trajectory_features, ClusterConfig};
use tgvc_core::tracker::{track_forward, TrackerConfig};
use tgvc_core::{par, synth};

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn run<R: Send>(sequential: bool, f: impl FnOnce() -> R + Send) -> R {
    if sequential {
        par::run_sequential(f)
    } else {
        f()
    }
}

fn tracking(c: &mut Criterion) {
    let clip = synth::shifted_clip(128, 128, 8, 2, 1, 3);
    let cfg = TrackerConfig {
        grid_size: 32,
        ..TrackerConfig::default()
    };
    let mut g = c.benchmark_group("track_forward");
    g.sample_size(10);
    for (name, seq) in modes() {
        g.bench_function(BenchmarkId::new(name, par::current_threads()), |b| {
            b.iter(|| run(seq, || track_forward(&clip, &cfg).unwrap()))
        });
    }
    g.finish();
}

fn clustering(c: &mut Criterion) {
    let set = synth::opposing_translations(24, 24, 16, 4.0, 10.0, 0.1, 1);
    let cfg = ClusterConfig::for_frame(96, 96);
    let data: Vec<Vec<f64>> = set
        .trajectories
        .iter()
        .map(|t| cfg.scale(&trajectory_features(t).unwrap()))
        .collect();
    let params = HdbscanParams {
        min_cluster_size: 16,
        min_samples: 8,
    };
    let mut g = c.benchmark_group("hdbscan_576");
    g.sample_size(10);
    for (name, seq) in modes() {
        g.bench_function(name, |b| b.iter(|| run(seq, || hdbscan(&data, params))));
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let setup = ddim_sim::make_scene(Scene::TwoBlob, 21).unwrap();
    let cfg = GuidanceConfig::default();
    let mut g = c.benchmark_group("simulate_16_seeds");
    g.sample_size(10);
    for (name, seq) in modes() {
        g.bench_function(name, |b| {
            b.iter(|| {
                run(seq, || {
                    par::map_range(16, |s| ddim_sim::simulate(&setup, 10, &cfg, s as u64).unwrap().1)
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, tracking, clustering, simulation);
criterion_main!(benches);
