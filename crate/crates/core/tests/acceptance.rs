//! Acceptance gate. Prints one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the verdict lines always reach the test log.
//! Failures are reported, not raised; set `GVS_ACCEPTANCE_STRICT=1` to make
//! any FAIL a nonzero exit.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;

use gvs::baselines::{ar_sample, stochsync_sample, ArConfig, StochSyncConfig};
use gvs::config::{RunConfig, SamplerKind};
use gvs::denoiser::{denoise, Conditioning, WindowInput};
use gvs::grid::{run_grid, ExperimentGrid};
use gvs::io::{encode_f32, schedule_dump};
use gvs::metrics::{cov_error, f2fc_proxy, hf_energy, lrc_proxy, LrcConfig};
use gvs::rng::{NoiseKey, NoiseStream, Purpose};
use gvs::sampler::{build_gvs_schedule, gvs_sample, Execution, GvsConfig};
use gvs::schedule::{NoiseSchedule, ScheduleKind, Stochasticity};
use gvs::trajectory::{generate_trajectory, Benchmark, Pose, Trajectory};
use gvs::video::Video;
use gvs::window::WindowConfig;
use gvs::world::{OracleDenoiser, ViewMap, World, WorldVariant};

// tolerances and budgets
const ROUND_TRIP_TOL: f64 = 1e-10;
const MAX_SIGMA_TOL: f64 = 1e-12;
const MARGINAL_DRAWS: usize = 100_000;
const MARGINAL_REL_TOL: f64 = 0.02;
const C1_BUDGET: Duration = Duration::from_secs(10);
const POSTERIOR_DRAWS: usize = 1_000_000;
const POSTERIOR_REL_TOL: f64 = 0.02;
const C2_BUDGET: Duration = Duration::from_secs(120);
const COV_SAMPLES: usize = 2000;
const COV_TOL: f64 = 0.1;
const C4_BUDGET: Duration = Duration::from_secs(600);
const TREND_SEEDS: u64 = 20;
const SIGN_TEST_MIN: usize = 16;
const LOOP_RATIO: f64 = 0.5;
const GVS_SCALING_RATIO: f64 = 1.5;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Setup {
    traj: Trajectory,
    world: Arc<World>,
    schedule: Arc<NoiseSchedule>,
    denoiser: OracleDenoiser,
}

impl Setup {
    fn new(name: Benchmark, frames: usize, steps: usize) -> Self {
        let traj = generate_trajectory(name, frames, Default::default()).unwrap();
        let world = Arc::new(World::for_trajectory(&Default::default(), &traj).unwrap());
        let schedule = Arc::new(NoiseSchedule::build(1000, ScheduleKind::Cosine, steps).unwrap());
        let denoiser = OracleDenoiser::new(Arc::clone(&world), Arc::clone(&schedule), 8);
        Self {
            traj,
            world,
            schedule,
            denoiser,
        }
    }

    fn gvs(&self, cfg: &GvsConfig, seed: u64) -> Video {
        let windows = build_gvs_schedule(&self.traj, &self.world, cfg).unwrap();
        gvs_sample(&self.denoiser, &self.traj, &windows, &self.schedule, cfg, seed).unwrap().video
    }

    fn gvs_seeds(&self, cfg: &GvsConfig, seeds: u64) -> Vec<Video> {
        (0..seeds).into_par_iter().map(|s| self.gvs(cfg, s)).collect()
    }

    fn lrc(&self, v: &Video) -> f64 {
        lrc_proxy(v, &self.traj, &self.world, &LrcConfig::default()).expect("trajectory has loop pairs")
    }

    fn f2fc(&self, v: &Video) -> f64 {
        f2fc_proxy(v, &self.traj, &self.world)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn paired_median(a: &[f64], b: &[f64]) -> f64 {
    median(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

fn c1_ddim() -> Verdict {
    let start = Instant::now();
    let schedule = NoiseSchedule::build(1000, ScheduleKind::Cosine, 50).unwrap();
    let stream = NoiseStream::new(1);
    let mut round_trip: f64 = 0.0;
    for k in 0..schedule.levels() {
        let x0 = stream.normals(NoiseKey::new(Purpose::Perturb, k, 0), 16);
        let eps = stream.normals(NoiseKey::new(Purpose::Perturb, k, 1), 16);
        let xk = schedule.forward_noise(&x0, k, &eps).unwrap();
        let back = schedule.predict_clean(&xk, &eps, k).unwrap();
        round_trip = x0.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(round_trip, f64::max);
    }

    // maximal sigma: the update is sqrt(a')·x0_hat + sigma·z with no eps_hat direction
    let mut max_sigma_err: f64 = 0.0;
    let levels = schedule.inference_levels();
    for (i, w) in levels.windows(2).enumerate() {
        let (k, kp) = (w[0], w[1]);
        let xk = stream.normals(NoiseKey::new(Purpose::Perturb, i, 2), 8);
        let eps = stream.normals(NoiseKey::new(Purpose::Perturb, i, 3), 8);
        let z = stream.normals(NoiseKey::new(Purpose::Perturb, i, 4), 8);
        let sigma = schedule.sigma(Stochasticity::new(1.0).unwrap(), kp);
        let got = schedule.ddim_step(&xk, &eps, k, kp, sigma, &z).unwrap();
        let x0 = schedule.predict_clean(&xk, &eps, k).unwrap();
        let a = schedule.alpha_bar(kp).sqrt();
        for j in 0..8 {
            max_sigma_err = max_sigma_err.max((got[j] - (a * x0[j] + sigma * z[j])).abs());
        }
    }

    // with the true eps, one step maps q(x_k | x0) onto q(x_k' | x0)
    let var0: f64 = 4.0;
    let mut worst: f64 = 0.0;
    for &(k, kp) in &[(900usize, 700usize), (500, 300), (120, 40)] {
        for eta in [0.0, 0.5, 1.0] {
            let sigma = schedule.sigma(Stochasticity::new(eta).unwrap(), kp);
            let (mut s_cond, mut s_marg) = (0.0, 0.0);
            let x0s = stream.normals(NoiseKey::new(Purpose::Perturb, k, 10), MARGINAL_DRAWS);
            let eps = stream.normals(NoiseKey::new(Purpose::Perturb, k, 11), MARGINAL_DRAWS);
            let zs = stream.normals(NoiseKey::new(Purpose::Perturb, k, 12), MARGINAL_DRAWS);
            let ap = schedule.alpha_bar(kp);
            for n in 0..MARGINAL_DRAWS {
                let x0 = var0.sqrt() * x0s[n];
                let xk = schedule.forward_noise(&[x0], k, &[eps[n]]).unwrap();
                let next = schedule.ddim_step(&xk, &[eps[n]], k, kp, sigma, &[zs[n]]).unwrap()[0];
                s_cond += (next - ap.sqrt() * x0).powi(2);
                s_marg += next * next;
            }
            let n = MARGINAL_DRAWS as f64;
            let cond_rel = (s_cond / n / (1.0 - ap) - 1.0).abs();
            let marg_rel = (s_marg / n / (ap * var0 + 1.0 - ap) - 1.0).abs();
            worst = worst.max(cond_rel).max(marg_rel);
        }
    }
    let elapsed = start.elapsed();
    Verdict {
        id: 1,
        name: "DDIM exactness",
        pass: round_trip < ROUND_TRIP_TOL && max_sigma_err < MAX_SIGMA_TOL && worst < MARGINAL_REL_TOL && elapsed < C1_BUDGET,
        detail: format!(
            "round trip {round_trip:.1e} (<{ROUND_TRIP_TOL:.0e}), max-sigma residual {max_sigma_err:.1e}, worst variance error {:.2}% (<2%), {:.1}s",
            100.0 * worst,
            elapsed.as_secs_f64()
        ),
    }
}

fn c2_oracle() -> Verdict {
    let start = Instant::now();
    // M=8 grid, D=2 rays, three slots
    let world = World::new(WorldVariant::Panorama, 8, 2, 1.5, ViewMap::Yaw).unwrap();
    let schedule = NoiseSchedule::build(1000, ScheduleKind::Cosine, 50).unwrap();
    let k = (0..1000).min_by(|&a, &b| (schedule.alpha_bar(a) - 0.5).abs().total_cmp(&(schedule.alpha_bar(b) - 0.5).abs())).unwrap();
    let a = schedule.alpha_bar(k);
    let pose = |c: f64| Pose {
        position: [0.0; 3],
        yaw: c * std::f64::consts::TAU / 8.0,
        fov: std::f64::consts::TAU * 2.0 / 8.0,
        arc: 0.0,
    };
    let poses = [pose(0.0), pose(1.0), pose(3.0)];
    let maps: Vec<_> = poses.iter().map(|p| world.render_map(p)).collect();
    let scene = world.sample_scene(12345);
    let stream = NoiseStream::new(5);
    let values: Vec<Vec<f64>> = maps
        .iter()
        .enumerate()
        .map(|(i, m)| schedule.forward_noise(&m.apply(&scene), k, &stream.normals(NoiseKey::new(Purpose::Perturb, 0, i as i64), 2)).unwrap())
        .collect();
    let input = WindowInput {
        values: values.clone(),
        noise_levels: vec![k; 3],
        conditioning: poses.iter().map(|&p| Conditioning::Pose(p)).collect(),
        target_mask: vec![true; 3],
    };
    let (mean, _) = world.posterior(&schedule, &input).unwrap();
    let exact: Vec<f64> = mean.concat();

    // self-normalized importance sampling with the prior as proposal
    let y: Vec<f64> = values.concat();
    let (num, den) = (0..POSTERIOR_DRAWS as u64)
        .into_par_iter()
        .fold(
            || (vec![0.0; 6], 0.0),
            |(mut num, den), s| {
                let scene = world.sample_scene(1_000_000 + s);
                let x: Vec<f64> = maps.iter().flat_map(|m| m.apply(&scene)).collect();
                let r2: f64 = x.iter().zip(&y).map(|(x, y)| (y - a.sqrt() * x).powi(2)).sum();
                let w = (-r2 / (2.0 * (1.0 - a))).exp();
                num.iter_mut().zip(&x).for_each(|(n, x)| *n += w * x);
                (num, den + w)
            },
        )
        .reduce(
            || (vec![0.0; 6], 0.0),
            |(mut a, da), (b, db)| {
                a.iter_mut().zip(&b).for_each(|(a, b)| *a += b);
                (a, da + db)
            },
        );
    let mc: Vec<f64> = num.iter().map(|n| n / den).collect();
    let diff = DVector::from_vec(mc.iter().zip(&exact).map(|(m, e)| m - e).collect());
    let rel = diff.norm() / DVector::from_vec(exact.clone()).norm();

    // oracle vs null oracle on coupled 8-frame windows
    let s = Setup::new(Benchmark::Panorama1Loop, 24, 50);
    let (mut oracle_mse, mut null_mse) = (0.0, 0.0);
    let trials = 400;
    for trial in 0..trials {
        let video = s.world.ground_truth_video(&s.traj, trial);
        let k = 100 + (trial as usize * 37) % 800;
        let base = (trial as usize * 5) % 16;
        let frames: Vec<usize> = (base..base + 8).collect();
        let eps: Vec<Vec<f64>> = frames.iter().map(|&f| stream.normals(NoiseKey::new(Purpose::Perturb, trial as usize, f as i64), 8)).collect();
        let input = WindowInput {
            values: frames.iter().zip(&eps).map(|(&f, e)| s.schedule.forward_noise(video.frame(f), k, e).unwrap()).collect(),
            noise_levels: vec![k; 8],
            conditioning: frames.iter().map(|&f| Conditioning::Pose(s.traj.poses[f])).collect(),
            target_mask: vec![true; 8],
        };
        let sq = |p: &[Vec<f64>]| p.iter().flatten().zip(eps.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        oracle_mse += sq(&s.world.oracle_eps(&s.schedule, &input).unwrap());
        null_mse += sq(&s.world.null_oracle_eps(&s.schedule, &input).unwrap());
    }
    let norm = (trials * 64) as f64;
    let (oracle_mse, null_mse) = (oracle_mse / norm, null_mse / norm);
    let elapsed = start.elapsed();
    Verdict {
        id: 2,
        name: "Oracle correctness",
        pass: rel < POSTERIOR_REL_TOL && oracle_mse < null_mse && elapsed < C2_BUDGET,
        detail: format!(
            "posterior mean vs {POSTERIOR_DRAWS} draws: {:.2}% (<2%) at alpha_bar {a:.3}; eps MSE oracle {oracle_mse:.4} < null {null_mse:.4}; {:.1}s",
            100.0 * rel,
            elapsed.as_secs_f64()
        ),
    }
}

fn bits(v: &Video) -> Vec<u64> {
    v.as_slice().iter().map(|x| x.to_bits()).collect()
}

fn c3_degenerate() -> Verdict {
    let s = Setup::new(Benchmark::StraightLine, 4, 50);
    let mut cfg = GvsConfig::with_eta_gamma(0.7, 0.0);
    cfg.windows = WindowConfig {
        overlap: 0,
        loop_closing: false,
        ..WindowConfig::default()
    };
    let stoch = Stochasticity::new(cfg.eta).unwrap();
    let mut identical = true;
    for seed in 0..5 {
        let stitched = s.gvs(&cfg, seed);
        // plain DDIM over the whole 4-frame sequence
        let stream = NoiseStream::new(seed);
        let mut x: Vec<Vec<f64>> = (0..4).map(|t| stream.normals(NoiseKey::new(Purpose::Init, 0, t), 8)).collect();
        let levels = s.schedule.inference_levels();
        for (i, w) in levels.windows(2).enumerate() {
            let (k, kp) = (w[0], w[1]);
            let input = WindowInput {
                values: x.clone(),
                noise_levels: vec![k; 4],
                conditioning: s.traj.poses.iter().map(|&p| Conditioning::Pose(p)).collect(),
                target_mask: vec![true; 4],
            };
            let eps = denoise(&s.denoiser, &input).unwrap();
            let sigma = s.schedule.sigma(stoch, kp);
            x = (0..4)
                .map(|t| {
                    if i + 2 == levels.len() {
                        s.schedule.predict_clean(&x[t], &eps[t], k).unwrap()
                    } else {
                        let z = stream.normals(NoiseKey::new(Purpose::Stochastic, i, t as i64), 8);
                        s.schedule.ddim_step(&x[t], &eps[t], k, kp, sigma, &z).unwrap()
                    }
                })
                .collect();
        }
        identical &= bits(&stitched) == bits(&Video::from_frames(x));
    }

    let mut modes_equal = 0;
    for name in Benchmark::ALL {
        let s = Setup::new(name, 120, 50);
        let par = s.gvs(&GvsConfig::default(), 3);
        let seq = s.gvs(
            &GvsConfig {
                execution: Execution::Sequential,
                ..GvsConfig::default()
            },
            3,
        );
        modes_equal += usize::from(bits(&par) == bits(&seq));
    }
    Verdict {
        id: 3,
        name: "Degenerate equivalence",
        pass: identical && modes_equal == Benchmark::ALL.len(),
        detail: format!(
            "single window == plain DDIM over 5 seeds: {identical}; parallel == sequential bitwise on {modes_equal}/{} benchmarks",
            Benchmark::ALL.len()
        ),
    }
}

fn c4_distribution() -> Verdict {
    let start = Instant::now();
    let s = Setup::new(Benchmark::Panorama1Loop, 24, 50);
    let cfg = GvsConfig::with_eta_gamma(1.0, 0.0);
    let samples: Vec<Vec<f64>> = s.gvs_seeds(&cfg, COV_SAMPLES as u64).iter().map(|v| v.as_slice().to_vec()).collect();
    let analytic = s.world.video_covariance(&s.traj.poses);
    let err = cov_error(&samples, &analytic);
    let prior: Vec<Vec<f64>> = (0..COV_SAMPLES as u64)
        .map(|i| s.world.ground_truth_video(&s.traj, 10_000 + i).as_slice().to_vec())
        .collect();
    let calib = cov_error(&prior, &analytic);
    // reported only: one window covering the whole sequence, so no stitching
    let single = Setup::new(Benchmark::StraightLine, 8, 50);
    let one: Vec<Vec<f64>> = single.gvs_seeds(&cfg, COV_SAMPLES as u64).iter().map(|v| v.as_slice().to_vec()).collect();
    let single_err = cov_error(&one, &single.world.video_covariance(&single.traj.poses));
    let elapsed = start.elapsed();
    Verdict {
        id: 4,
        name: "Distributional fidelity",
        pass: err < COV_TOL && elapsed < C4_BUDGET,
        detail: format!(
            "cov_error {err:.4} (<{COV_TOL}); direct prior sampling at N={COV_SAMPLES}: {calib:.4}; single unstitched window: {single_err:.4}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

struct LineTable {
    /// f2fc and hf per (eta index, gamma index), per seed
    f2fc: Vec<Vec<Vec<f64>>>,
    hf: Vec<Vec<Vec<f64>>>,
    gt_hf: f64,
}

const ETAS: [f64; 4] = [0.0, 0.5, 0.9, 1.0];

fn line_table() -> LineTable {
    let s = Setup::new(Benchmark::StraightLine, 120, 50);
    let mut f2fc = vec![vec![Vec::new(); 2]; 4];
    let mut hf = vec![vec![Vec::new(); 2]; 4];
    for (e, &eta) in ETAS.iter().enumerate() {
        for (g, gamma) in [0.0, 1.0].into_iter().enumerate() {
            let vids = s.gvs_seeds(&GvsConfig::with_eta_gamma(eta, gamma), TREND_SEEDS);
            f2fc[e][g] = vids.iter().map(|v| s.f2fc(v)).collect();
            hf[e][g] = vids.iter().map(hf_energy).collect();
        }
    }
    LineTable {
        f2fc,
        hf,
        gt_hf: 2.0 * (1.0 - s.world.kernel(1.0)),
    }
}

fn c5_stochasticity(t: &LineTable) -> Verdict {
    let n = TREND_SEEDS as usize;
    let decreasing = (0..n).filter(|&i| (0..3).all(|e| t.f2fc[e + 1][0][i] < t.f2fc[e][0][i])).count();
    let medians: Vec<String> = (0..4).map(|e| format!("{:.2e}", median(t.f2fc[e][0].clone()))).collect();
    Verdict {
        id: 5,
        name: "Stochasticity trend",
        pass: decreasing >= SIGN_TEST_MIN,
        detail: format!(
            "strictly decreasing f2fc over eta 0/0.5/0.9/1 in {decreasing}/{n} seeds (need {SIGN_TEST_MIN}); medians {}",
            medians.join(" / ")
        ),
    }
}

fn c6_guidance(t: &LineTable) -> Verdict {
    let diffs: Vec<f64> = (0..3).map(|e| paired_median(&t.f2fc[e][1], &t.f2fc[e][0])).collect();
    let cells: Vec<String> = (0..3)
        .map(|e| {
            format!(
                "eta {}: {:.2e} vs {:.2e}{}",
                ETAS[e],
                median(t.f2fc[e][1].clone()),
                median(t.f2fc[e][0].clone()),
                if diffs[e] < 0.0 { "" } else { " (worse)" }
            )
        })
        .collect();
    Verdict {
        id: 6,
        name: "Omni Guidance trend",
        pass: diffs.iter().all(|&d| d < 0.0),
        detail: format!("f2fc gamma=1 vs gamma=0, paired median: {}", cells.join("; ")),
    }
}

fn c7_oversmoothing(t: &LineTable) -> Verdict {
    let drop = paired_median(&t.hf[3][1], &t.hf[2][1]);
    let guided = median(t.hf[2][1].clone());
    let smooth = median(t.hf[3][0].clone());
    let closer = (guided - t.gt_hf).abs() < (smooth - t.gt_hf).abs();
    Verdict {
        id: 7,
        name: "Oversmoothing trend",
        pass: drop < 0.0 && closer,
        detail: format!(
            "hf(eta 1, g 1) - hf(eta 0.9, g 1) paired median {drop:+.4} (need <0); hf(0.9, g1) {guided:.4} vs hf(1, g0) {smooth:.4}, ground truth {:.4}: closer {closer}",
            t.gt_hf
        ),
    }
}

fn c8_loop_closing() -> Verdict {
    let s = Setup::new(Benchmark::Panorama1Loop, 120, 50);
    let run = |gamma: f64, lc: bool| -> Vec<f64> {
        let mut cfg = GvsConfig::with_eta_gamma(0.9, gamma);
        cfg.windows.loop_closing = lc;
        s.gvs_seeds(&cfg, TREND_SEEDS).iter().map(|v| s.lrc(v)).collect()
    };
    let off = median(run(0.0, false));
    let on = median(run(0.0, true));
    let on_guided = median(run(1.0, true));
    let ratio_ok = on <= LOOP_RATIO * off;
    let guided_ok = on_guided < on;
    Verdict {
        id: 8,
        name: "Loop-closing ablation",
        pass: ratio_ok && guided_ok,
        detail: format!(
            "lrc off {off:.4}, on {on:.2e} (ratio {:.1}x, need >=2x: {ratio_ok}); on + gamma 1 {on_guided:.2e} (need < on: {guided_ok})",
            off / on
        ),
    }
}

fn c9_baselines() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in [Benchmark::Panorama1Loop, Benchmark::Circle1Loop] {
        let s = Setup::new(name, 120, 50);
        let gvs = s.gvs_seeds(&GvsConfig::default(), TREND_SEEDS);
        let ar: Vec<Video> = (0..TREND_SEEDS)
            .into_par_iter()
            .map(|seed| ar_sample(&s.denoiser, &s.traj, &s.world, &s.schedule, &ArConfig::default(), seed).unwrap().video)
            .collect();
        let ss: Vec<Video> = (0..TREND_SEEDS)
            .into_par_iter()
            .map(|seed| stochsync_sample(&s.denoiser, &s.traj, &s.schedule, &StochSyncConfig::default(), seed).unwrap())
            .collect();
        let (g_lrc, a_lrc) = (median(gvs.iter().map(|v| s.lrc(v)).collect()), median(ar.iter().map(|v| s.lrc(v)).collect()));
        let (g_f, s_f) = (median(gvs.iter().map(|v| s.f2fc(v)).collect()), median(ss.iter().map(|v| s.f2fc(v)).collect()));
        ok &= g_lrc < a_lrc && g_f < s_f;
        parts.push(format!(
            "{}: lrc gvs {g_lrc:.2e} vs ar {a_lrc:.3}, f2fc gvs {g_f:.2e} vs stochsync {s_f:.2e}",
            name.as_str()
        ));
    }
    let mut ar_f = Vec::new();
    let mut gvs_f = Vec::new();
    for frames in [40, 80, 120] {
        let s = Setup::new(Benchmark::Panorama1Loop, frames, 50);
        let ar: Vec<f64> = (0..TREND_SEEDS)
            .into_par_iter()
            .map(|seed| s.f2fc(&ar_sample(&s.denoiser, &s.traj, &s.world, &s.schedule, &ArConfig::default(), seed).unwrap().video))
            .collect();
        ar_f.push(median(ar));
        gvs_f.push(median(s.gvs_seeds(&GvsConfig::default(), TREND_SEEDS).iter().map(|v| s.f2fc(v)).collect()));
    }
    let ar_grows = ar_f[1] > ar_f[0] && ar_f[2] > ar_f[1];
    let gvs_stable = gvs_f[1] <= GVS_SCALING_RATIO * gvs_f[0] && gvs_f[2] <= GVS_SCALING_RATIO * gvs_f[0];
    ok &= ar_grows && gvs_stable;
    parts.push(format!(
        "f2fc over T=40/80/120: ar {:.3e}/{:.3e}/{:.3e} (grows: {ar_grows}), gvs {:.2e}/{:.2e}/{:.2e} (within 1.5x: {gvs_stable})",
        ar_f[0], ar_f[1], ar_f[2], gvs_f[0], gvs_f[1], gvs_f[2]
    ));
    Verdict {
        id: 9,
        name: "Baseline ordering",
        pass: ok,
        detail: parts.join("; "),
    }
}

fn c10_golden() -> Verdict {
    let wrap = vec![(0, 29)];
    let two_loop: Vec<(usize, usize)> = {
        let mut v: Vec<(usize, usize)> = (0..15).map(|t| (t, t + 15)).collect();
        v.push((0, 29));
        v.sort();
        v
    };
    let expected: [(Benchmark, Vec<(usize, usize)>); 7] = [
        (Benchmark::Panorama1Loop, wrap.clone()),
        (Benchmark::Panorama2Loop, two_loop.clone()),
        (Benchmark::Circle1Loop, wrap.clone()),
        (Benchmark::Circle2Loop, two_loop),
        (Benchmark::StraightLine, vec![]),
        (Benchmark::Stairs, vec![]),
        (Benchmark::StaircaseCircuit, wrap),
    ];
    let cfg = RunConfig::default();
    let mut matched = 0;
    for (name, pairs) in &expected {
        let traj = generate_trajectory(*name, 120, Default::default()).unwrap();
        let world = World::for_trajectory(&Default::default(), &traj).unwrap();
        let schedule = build_gvs_schedule(&traj, &world, &cfg.gvs).unwrap();
        let dump = schedule_dump(&cfg, &traj, &schedule);
        let mut got = dump.spatial_pairs.clone();
        got.sort();
        let cycles_ok = dump.per_chunk.iter().enumerate().all(|(t, ids)| {
            let partners = pairs.iter().filter(|&&(a, b)| a == t || b == t).count();
            ids.len() == 1 + partners
        });
        if dump.chunks == 30 && dump.temporal_windows == 30 && dump.spatial_windows == 2 * pairs.len() && got == *pairs && cycles_ok {
            matched += 1;
        }
    }

    // the overridden loop-closing segment must be a straight line in height
    let traj = generate_trajectory(Benchmark::ImpossibleStaircase, 120, Default::default()).unwrap();
    let mut straight = !traj.overrides.is_empty();
    for ov in &traj.overrides {
        let mut order: Vec<(usize, f64)> = ov.frames.iter().zip(&ov.poses).map(|(&f, p)| (f, p.position[2])).collect();
        // the segment runs from the end of the path into its start
        order.sort_by_key(|&(f, _)| if f >= traj.len() / 2 { f as i64 - traj.len() as i64 } else { f as i64 });
        let steps: Vec<f64> = order.windows(2).map(|w| w[1].1 - w[0].1).collect();
        straight &= steps.iter().all(|d| (d - steps[0]).abs() < 1e-9);
        let raw_jump = traj.poses[0].position[2] - traj.poses[traj.len() - 1].position[2];
        straight &= steps[0].abs() < raw_jump.abs();
    }
    Verdict {
        id: 10,
        name: "Schedule golden tests",
        pass: matched == expected.len() && straight,
        detail: format!("{matched}/{} benchmarks match window counts and pairings; staircase override is a straight segment: {straight}", expected.len()),
    }
}

fn c11_determinism() -> Verdict {
    let mut grid = ExperimentGrid::default();
    grid.samplers = vec![SamplerKind::Gvs, SamplerKind::Ar, SamplerKind::StochSync];
    grid.trajectories = Benchmark::ALL.to_vec();
    grid.base.trajectory.frames = 40;
    grid.gammas = vec![1.0];
    grid.seeds = vec![17];
    let serial = run_grid(&grid, 1).unwrap().to_csv();
    let parallel = run_grid(&grid, 8).unwrap().to_csv();
    let again = run_grid(&grid, 8).unwrap().to_csv();
    let grid_ok = serial == parallel && parallel == again;

    let mut dumps_ok = 0;
    let mut total = 0;
    for sampler in [SamplerKind::Gvs, SamplerKind::Ar, SamplerKind::StochSync] {
        for name in Benchmark::ALL {
            let mut cfg = RunConfig::default();
            cfg.sampler = sampler;
            cfg.trajectory.name = name;
            cfg.trajectory.frames = 40;
            let a = encode_f32(&cfg.prepare().unwrap().sample(5).unwrap().video);
            let b = encode_f32(&cfg.prepare().unwrap().sample(5).unwrap().video);
            total += 1;
            dumps_ok += usize::from(a == b);
        }
    }
    Verdict {
        id: 11,
        name: "Determinism",
        pass: grid_ok && dumps_ok == total,
        detail: format!(
            "grid CSV identical across --jobs 1 / 8 / rerun ({} rows): {grid_ok}; byte-identical dumps {dumps_ok}/{total}",
            serial.lines().count() - 1
        ),
    }
}

fn main() {
    let strict = std::env::var("GVS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut verdicts = Vec::new();
    let mut report = |v: Verdict| {
        println!("{} [{:>2}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
        verdicts.push(v.pass);
    };
    report(c1_ddim());
    report(c2_oracle());
    report(c3_degenerate());
    report(c4_distribution());
    let table = line_table();
    report(c5_stochasticity(&table));
    report(c6_guidance(&table));
    report(c7_oversmoothing(&table));
    report(c8_loop_closing());
    report(c9_baselines());
    report(c10_golden());
    report(c11_determinism());
    let passed = verdicts.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", verdicts.len());
    if strict && passed != verdicts.len() {
        std::process::exit(1);
    }
}
