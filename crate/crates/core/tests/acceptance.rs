//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tgvc_core::bitstream::{decode, encode, HEADER_LEN};
use tgvc_core::ddim_sim::{self, generate_clip, make_scene, make_schedule, plan_generation, Scene, ToyDenoiser};
use tgvc_core::guidance::{gradient_check, GuidanceConfig, Guides, LatentSequence, WeightMode};
use tgvc_core::motion::{self, ClusterConfig};
use tgvc_core::pipeline::{self, metrics_table, Config, Manifest, ManifestClip};
use tgvc_core::sampler::{
    keypoint_budget, BudgetConfig, CellPoint, LatentGrid, SparseInstance, SparseTrajectory, SparseTrajectorySet,
};
use tgvc_core::tracker::{self, TrackerConfig};
use tgvc_core::video::HistogramSimilarity;
use tgvc_core::{synth, tracker::grid_points};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_set(rng: &mut ChaCha8Rng) -> SparseTrajectorySet {
    let frames = rng.random_range(1..=30u16);
    let (w, h) = (rng.random_range(1..=512u16), rng.random_range(1..=512u16));
    let instances = (0..rng.random_range(0..=20))
        .map(|_| SparseInstance {
            trajectories: (0..rng.random_range(0..=15))
                .map(|_| SparseTrajectory {
                    points: (0..frames)
                        .map(|_| CellPoint {
                            x: rng.random_range(0..w),
                            y: rng.random_range(0..h),
                        })
                        .collect(),
                    visible: (0..frames).map(|_| rng.random_bool(0.8)).collect(),
                })
                .collect(),
        })
        .collect();
    SparseTrajectorySet {
        frames,
        latent_w: w,
        latent_h: h,
        instances,
    }
}

fn bitstream_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 1000;
    let mut bytes = 0usize;
    for i in 0..cases {
        let s = random_set(&mut rng);
        let b = encode(&s).map_err(|e| format!("case {i}: encode failed: {e}"))?;
        bytes += b.len();
        let back = decode(&b.bytes).map_err(|e| format!("case {i}: decode failed: {e}"))?;
        ensure(back == s, || format!("case {i}: round trip differs"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("{cases} random sets, {bytes} bytes total, {secs:.2}s"))
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (l, h, w, c) = (6usize, 4usize, 4usize, 2usize);
    let mut worst = 0.0f64;
    let configs = 50;
    for i in 0..configs {
        let mut rand_latents = || {
            LatentSequence::new(
                l,
                h,
                w,
                c,
                (0..l * h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
        };
        let z = rand_latents().unwrap();
        let eps = rand_latents().unwrap();
        let alpha = rng.random_range(0.05..0.95);
        let sparse = SparseTrajectorySet {
            frames: l as u16,
            latent_w: w as u16,
            latent_h: h as u16,
            instances: (0..rng.random_range(1..=3))
                .map(|_| SparseInstance {
                    trajectories: (0..rng.random_range(1..=3))
                        .map(|_| SparseTrajectory {
                            points: (0..l)
                                .map(|_| CellPoint {
                                    x: rng.random_range(0..w as u16),
                                    y: rng.random_range(0..h as u16),
                                })
                                .collect(),
                            visible: (0..l).map(|_| rng.random_bool(0.85)).collect(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let mode = if i % 2 == 0 {
            WeightMode::Linear
        } else {
            WeightMode::Uniform
        };
        let check = gradient_check(&z, &eps, alpha, &Guides::from_sparse(&sparse), mode, 1e-4)
            .map_err(|e| format!("config {i}: {e}"))?;
        worst = worst.max(check.max_rel_error);
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("{configs} configurations, max relative error {worst:.3e}"))
}

fn guidance_efficacy() -> Outcome {
    let start = Instant::now();
    let setup = make_scene(Scene::TwoBlob, 16).map_err(|e| e.to_string())?;
    let cfg = GuidanceConfig::default();
    let (mut off, mut on) = (0.0, 0.0);
    let seeds = 20;
    for seed in 0..seeds {
        let (_, r) = ddim_sim::simulate(&setup, 10, &cfg, seed).map_err(|e| e.to_string())?;
        off += r.misalignment_unguided;
        on += r.misalignment_guided;
    }
    let (off, on) = (off / seeds as f64, on / seeds as f64);
    let ratio = on / off;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("misalignment unguided {off:.6}, guided {on:.6}, ratio {ratio:.4} (need <= 0.5), {secs:.1}s");
    ensure(ratio <= 0.5 && secs < 60.0, || detail.clone())?;
    Ok(detail)
}

fn zero_guidance_equivalence() -> Outcome {
    let setup = make_scene(Scene::TwoBlob, 21).map_err(|e| e.to_string())?;
    let plan = plan_generation(21).map_err(|e| e.to_string())?;
    let schedule = make_schedule(10).map_err(|e| e.to_string())?;
    let denoiser = ToyDenoiser {
        target: setup.target.clone(),
    };
    let zero = GuidanceConfig {
        scale_coeff: 0.0,
        ..GuidanceConfig::default()
    };
    for seed in 0..5 {
        let run = |g: Option<&GuidanceConfig>| {
            generate_clip(setup.keys(), &setup.sparse, &plan, &schedule, g, &denoiser, seed)
        };
        let a = run(Some(&zero)).map_err(|e| e.to_string())?;
        let b = run(None).map_err(|e| e.to_string())?;
        let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same, || format!("seed {seed}: outputs differ"))?;
    }
    Ok("5 seeds bit-identical".to_string())
}

fn variable_length() -> Outcome {
    let schedule = make_schedule(10).map_err(|e| e.to_string())?;
    for l in 2..=30usize {
        let setup = make_scene(Scene::Blob, l).map_err(|e| e.to_string())?;
        let plan = plan_generation(l).map_err(|e| e.to_string())?;
        ensure(plan.stages.len() == if l > 16 { 2 } else { 1 }, || {
            format!("L={l}: {} stages", plan.stages.len())
        })?;
        for s in &plan.stages {
            let m = &s.markers;
            ensure(
                m.windows(2).all(|w| w[0] < w[1]) && m[0] == 0 && m[m.len() - 1] == 15,
                || format!("L={l}: bad markers {m:?}"),
            )?;
        }
        if plan.stages.len() == 2 {
            ensure(plan.stages[0].last == plan.stages[1].first, || {
                format!("L={l}: stages do not share a frame")
            })?;
        }
        ensure(plan.emitted() == l, || format!("L={l}: plan emits {}", plan.emitted()))?;
        let out = generate_clip(
            setup.keys(),
            &setup.sparse,
            &plan,
            &schedule,
            None,
            &ToyDenoiser {
                target: setup.target.clone(),
            },
            l as u64,
        )
        .map_err(|e| format!("L={l}: {e}"))?;
        ensure(out.frames() == l, || format!("L={l}: emitted {} frames", out.frames()))?;
        // Each emitted frame matches its own target frame, so the boundary is not duplicated.
        let err = out.max_abs_diff(&setup.target);
        ensure(err < 1e-6, || format!("L={l}: frames misplaced, max error {err:.2e}"))?;
    }
    let p = plan_generation(21).map_err(|e| e.to_string())?;
    let spans: Vec<(usize, usize)> = p.stages.iter().map(|s| (s.first, s.last)).collect();
    ensure(spans == [(0, 11), (11, 20)], || format!("L=21 stages {spans:?}"))?;
    Ok(format!("L=2..=30 all exact; L=21 stages {spans:?}"))
}

fn clustering_separation() -> Outcome {
    let cfg = ClusterConfig::for_frame(64, 64);
    let grid = LatentGrid::for_frame(64, 64, 8).map_err(|e| e.to_string())?;
    let mut counts = Vec::new();
    for seed in 0..10 {
        let set = synth::opposing_translations(10, 10, 16, 6.4, 10.0, 0.1, seed);
        let (_, _, instances) = motion::instantiate(&set, &cfg, &grid).map_err(|e| e.to_string())?;
        counts.push(instances.len());
    }
    ensure(counts.iter().all(|&c| c == 2), || format!("instance counts {counts:?}"))?;

    let clip = synth::static_clip(64, 64, 8, 3);
    let config = Config {
        grid_size: 16,
        ..Config::default()
    };
    let coded = pipeline::encode_clip(&clip, 0, 0, None, &config, &HistogramSimilarity::default())
        .map_err(|e| e.to_string())?;
    let selected = coded.instances.iter().filter(|i| i.selected).count();
    let max_inter = coded.instances.iter().map(|i| i.s_inter).fold(0.0, f64::max);
    ensure(selected == 0 && max_inter == 0.0, || {
        format!("static clip: {selected} selected, max S_inter {max_inter}")
    })?;
    Ok(format!(
        "2 instances on all 10 seeds; static clip {} instances, 0 selected",
        coded.instances.len()
    ))
}

fn keypoint_budget_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 10_000;
    for i in 0..draws {
        let cfg = BudgetConfig {
            alpha: rng.random_range(0.0..1.0),
            beta: rng.random_range(0.0..1.0),
            k_max: 15,
            score_norm: rng.random_range(0.1..10.0),
        };
        let total = rng.random_range(1..5000usize);
        let n = rng.random_range(0..=total);
        let s = rng.random_range(0.0..20.0);
        let k = keypoint_budget(s, n, total, &cfg);
        ensure((1..=15).contains(&k), || format!("draw {i}: K = {k}"))?;
        let ks = keypoint_budget(s + rng.random_range(0.0..5.0), n, total, &cfg);
        let kn = keypoint_budget(s, (n + rng.random_range(0..100)).min(total), total, &cfg);
        ensure(ks >= k && kn >= k, || {
            format!("draw {i}: not monotone ({k}, {ks}, {kn})")
        })?;
        let sat = BudgetConfig {
            alpha: 1.0,
            beta: 1.0,
            ..cfg
        };
        let k_sat = keypoint_budget(cfg.score_norm * 2.0, total, total, &sat);
        ensure(k_sat == 15, || format!("draw {i}: saturated K = {k_sat}"))?;
    }
    Ok(format!("{draws} draws: bounds, monotonicity and clamp at 15 hold"))
}

fn quantization() -> Outcome {
    let pts = grid_points(512, 320, 64).map_err(|e| e.to_string())?;
    ensure(pts.len() == 4096, || format!("{} grid points", pts.len()))?;
    ensure((pts[1].x - pts[0].x - 8.0).abs() < 1e-12, || {
        format!("x spacing {}", pts[1].x - pts[0].x)
    })?;
    let grid = LatentGrid::for_frame(512, 320, 8).map_err(|e| e.to_string())?;
    ensure((grid.width, grid.height) == (64, 40), || {
        format!("latent grid {}x{}", grid.width, grid.height)
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let (x, y) = (rng.random_range(-50.0..600.0), rng.random_range(-50.0..400.0));
        let c = grid.quantize(x, y);
        ensure(c.x < 64 && c.y < 40, || format!("({x}, {y}) -> {c:?}"))?;
        let (cx, cy) = grid.dequantize_center(c);
        ensure(grid.quantize(cx, cy) == c, || format!("cell {c:?} not idempotent"))?;
    }
    for p in &pts {
        let c = grid.quantize(p.x, p.y);
        ensure(c.x < 64 && c.y < 40, || format!("grid point {p:?} -> {c:?}"))?;
    }
    Ok("4096 points, spacing 8, cells within 64x40, idempotent".to_string())
}

fn tracker_sanity() -> Outcome {
    let (dx, dy) = (2i64, 1i64);
    let clip = synth::shifted_clip(64, 64, 8, dx, dy, 11);
    let cfg = TrackerConfig {
        grid_size: 16,
        ..TrackerConfig::default()
    };
    let fwd = tracker::track_forward(&clip, &cfg).map_err(|e| e.to_string())?;
    let margin = (cfg.block_radius + cfg.search_radius) as f64;
    let span = 7.0;
    let mut checked = 0;
    for t in &fwd.trajectories {
        let p0 = t.points[0];
        let interior = p0.x >= margin
            && p0.y >= margin
            && p0.x + dx as f64 * span < 64.0 - margin
            && p0.y + dy as f64 * span < 64.0 - margin;
        if !interior {
            continue;
        }
        checked += 1;
        for f in 1..t.points.len() {
            let (ux, uy) = (t.points[f].x - t.points[f - 1].x, t.points[f].y - t.points[f - 1].y);
            ensure((ux - dx as f64).abs() <= 0.5 && (uy - dy as f64).abs() <= 0.5, || {
                format!("origin {:?} frame {f}: displacement ({ux}, {uy})", t.origin)
            })?;
        }
    }
    ensure(checked > 0, || "no interior points".to_string())?;

    let square = synth::sliding_square_clip(48, 32, 8, 12, 4, 10, 3);
    for c in [&clip, &square] {
        let back = tracker::track_backward(c, &cfg).map_err(|e| e.to_string())?;
        let rev = tracker::track_forward(&c.reversed(), &cfg).map_err(|e| e.to_string())?;
        ensure(back == rev, || {
            "track_backward differs from track_forward of the reversed clip".to_string()
        })?;
    }
    Ok(format!(
        "{checked} interior points within 0.5 px; reversal identity exact"
    ))
}

fn rate_accounting() -> Outcome {
    let set = SparseTrajectorySet {
        frames: 2,
        latent_w: 64,
        latent_h: 40,
        instances: vec![SparseInstance {
            trajectories: vec![SparseTrajectory {
                points: vec![CellPoint { x: 3, y: 4 }, CellPoint { x: 2, y: 5 }],
                visible: vec![true, true],
            }],
        }],
    };
    let b = encode(&set).map_err(|e| e.to_string())?.bytes;
    let expected: Vec<u8> = [
        b"TGVC".as_slice(),
        &[1, 2, 0, 64, 0, 40, 0, 1, 0],
        &[1, 0, 3, 4, 0b0000_0011, 1, 2],
    ]
    .concat();
    ensure(b == expected, || format!("bytes {b:?}"))?;
    ensure(b.len() == HEADER_LEN + 7, || format!("{} bytes", b.len()))?;

    let manifest = Manifest {
        width: 512,
        height: 320,
        channels: 3,
        total_frames: 2,
        keyframes: vec![0, 1],
        config_digest: Config::default().digest(),
        clips: vec![ManifestClip {
            index: 0,
            frame_range: [0, 1],
            keyframes: [0, 1],
            stream: pipeline::stream_name(0),
            byte_length: b.len(),
            instance_count: 1,
            instance_k: vec![1],
        }],
    };
    let rows = metrics_table(&manifest, 1000).map_err(|e| e.to_string())?;
    let total = &rows[1].rate;
    // 20 bytes of motion and two keyframes of 1000 bits over 512 x 320 x 2 pixels.
    let with = 2160.0 / 327_680.0;
    let without = 2000.0 / 327_680.0;
    ensure(total.motion_bits == 160, || {
        format!("motion bits {}", total.motion_bits)
    })?;
    ensure(
        total.bpp_with_motion == with && total.bpp_without_motion == without,
        || format!("bpp {} / {}", total.bpp_with_motion, total.bpp_without_motion),
    )?;
    let empty = encode(&SparseTrajectorySet::empty(96, 64, 40)).map_err(|e| e.to_string())?;
    let r = tgvc_core::bitstream::rate_report(empty.len(), 512, 320, 96, 0).map_err(|e| e.to_string())?;
    ensure(r.bpp_with_motion == 104.0 / 15_728_640.0, || {
        format!("header-only bpp {}", r.bpp_with_motion)
    })?;
    Ok(format!("bytes {expected:?}; bpp with {with:e}, without {without:e}"))
}

fn main() -> ExitCode {
    let criteria: [Check; 10] = [
        ("bitstream round-trip", bitstream_round_trip),
        ("gradient correctness", gradient_correctness),
        ("guidance efficacy", guidance_efficacy),
        ("zero-guidance equivalence", zero_guidance_equivalence),
        ("variable-length correctness", variable_length),
        ("clustering separation", clustering_separation),
        ("keypoint budget", keypoint_budget_properties),
        ("quantization", quantization),
        ("tracker sanity", tracker_sanity),
        ("rate accounting", rate_accounting),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
