//! End-to-end acceptance checks, one line per criterion.

use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use sbc_core::ae::eval::{completion_accuracy, reconstruction_error, swap_accuracy};
use sbc_core::ae::{
    loss_common, loss_different, loss_self, train, Activation, AeModel, ChannelSource, DeskScale, LossOutput,
    Mlp, PairBatch, SyntheticAttributeDataset, TrainConfig, DESK_FADING,
};
use sbc_core::net::{receive, serve, FeatureFrame, FrameReader, FrameType, PayloadMode, ReceiveConfig, ServeConfig};
use sbc_core::noise::{noise_variance, sample_noise};
use sbc_core::rdp::{solve, AllocationProblem, GaussianSourceSet};
use sbc_core::region::{kl_to_equivalent_gaussian, region_curve, superposition_rate_check};
use sbc_core::sim::{simulate, GainPolicy, LatentChannel, SimConfig};
use sbc_core::{BroadcastChannelParams, InterestSet, LatentSchema, NoiseModel, PdfTable, RngSeed};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- allocation

fn oracle_rate(s: f64, d: f64) -> f64 {
    0.5 * (s / d).ln()
}

fn oracle_perception(s: f64, d: f64) -> f64 {
    let u = d / s;
    0.5 * (-(1.0 - u).ln() - u)
}

/// Exhaustive search over a `step` grid of per-source distortions. For each
/// `(D1, D2)` the best `D3` is the largest feasible grid value, since the rate
/// falls and both constraints grow with `D3`.
fn grid_search(vars: [f64; 3], total_d: f64, total_p: f64, step: f64) -> f64 {
    let tables: Vec<(Vec<f64>, Vec<f64>)> = vars
        .iter()
        .map(|&s| {
            let ds: Vec<f64> = (1..).map(|k| k as f64 * step).take_while(|&d| d < s).collect();
            (
                ds.iter().map(|&d| oracle_rate(s, d)).collect(),
                ds.iter().map(|&d| oracle_perception(s, d)).collect(),
            )
        })
        .collect();
    let (r1, p1) = &tables[0];
    let (r2, p2) = &tables[1];
    let (r3, p3) = &tables[2];
    (0..r1.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            let d1 = (i + 1) as f64 * step;
            for j in 0..r2.len() {
                let d2 = (j + 1) as f64 * step;
                let left_d = total_d - d1 - d2;
                let left_p = total_p - p1[i] - p2[j];
                if left_d < step || left_p < 0.0 {
                    break;
                }
                let by_d = ((left_d / step) + 1e-9).floor() as usize;
                let by_p = p3.partition_point(|&v| v <= left_p);
                let k = by_d.min(by_p).min(r3.len());
                if k >= 1 {
                    best = best.min(r1[i] + r2[j] + r3[k - 1]);
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn allocation_vs_grid() -> Check {
    let mut rng = RngSeed(2024).rng();
    let mut worst: f64 = 0.0;
    for n in 0..20 {
        let vars = [0.0; 3].map(|_| rng.gen_range(0.1..=4.0));
        let total: f64 = vars.iter().sum();
        let d = rng.gen_range(0.0..total).max(1e-3);
        let p = rng.gen_range(0.01..=1.0);
        let problem = AllocationProblem::new(GaussianSourceSet::new(vars.to_vec()).unwrap(), d, p).unwrap();
        let sol = solve(&problem, 1e-10).map_err(|e| format!("instance {n}: {e}"))?;
        let grid = grid_search(vars, d, p, 1e-3);
        let diff = (sol.total_rate - grid).abs();
        worst = worst.max(diff);
        ensure(diff < 5e-3, || {
            format!("instance {n} vars {vars:?} D {d} P {p}: solver {} grid {grid}", sol.total_rate)
        })?;
    }
    Ok(format!("max |solver - grid| = {worst:.2e} nats over 20 instances"))
}

fn distortion_order() -> Check {
    let vars = [0.25, 0.5, 0.75, 1.0];
    let sources = GaussianSourceSet::new(vars.to_vec()).unwrap();
    let d_grid: Vec<f64> = (1..=50).map(|k| 2.5 * k as f64 / 50.0).collect();
    let p_grid = [0.01, 0.05, 0.2, 0.5, 1.0];
    let mut checked = 0;
    for &d in &d_grid {
        for &p in &p_grid {
            let sol = solve(&AllocationProblem::new(sources.clone(), d, p).unwrap(), 1e-10)
                .map_err(|e| format!("D {d} P {p}: {e}"))?;
            for w in sol.distortions.windows(2) {
                ensure(w[0] <= w[1] + 1e-12, || format!("D {d} P {p}: distortions {:?}", sol.distortions))?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} grid points, distortions non-decreasing in variance"))
}

/// Water level by sorting: `sum_i min(theta, s_i) = D`.
fn water_level(vars: &[f64], d: f64) -> f64 {
    let mut s = vars.to_vec();
    s.sort_by(f64::total_cmp);
    let mut below = 0.0;
    for (k, &v) in s.iter().enumerate() {
        let theta = (d - below) / (s.len() - k) as f64;
        if theta <= v {
            return theta;
        }
        below += v;
    }
    f64::INFINITY
}

fn water_filling_limit() -> Check {
    let mut rng = RngSeed(77).rng();
    let mut worst: f64 = 0.0;
    for n in 0..10 {
        let k = rng.gen_range(2..=6);
        let vars: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..4.0)).collect();
        let total: f64 = vars.iter().sum();
        let d = rng.gen_range(0.05..0.95) * total;
        let sol = solve(&AllocationProblem::new(GaussianSourceSet::new(vars.clone()).unwrap(), d, 1e3).unwrap(), 1e-12)
            .map_err(|e| e.to_string())?;
        let theta = water_level(&vars, d);
        let mut rate = 0.0;
        for (&s, &got) in vars.iter().zip(&sol.distortions) {
            let want = theta.min(s);
            if want < s {
                rate += 0.5 * (s / want).ln();
            }
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() < 1e-6, || format!("instance {n}: D_i {got} vs water level {want}"))?;
        }
        worst = worst.max((sol.total_rate - rate).abs());
        ensure((sol.total_rate - rate).abs() < 1e-6, || format!("instance {n}: rate {} vs {rate}", sol.total_rate))?;
    }
    Ok(format!("max deviation {worst:.2e}"))
}

// ------------------------------------------------------------- rate region

fn laplace_table() -> PdfTable {
    let b = 0.5f64.sqrt();
    PdfTable::from_fn(-20.0, 20.0, 65_537, |x| (-x.abs() / b).exp() / (2.0 * b)).unwrap()
}

/// `KL(p || N(mean, var))` from `n` samples of `p`: mean and standard error.
fn monte_carlo_kl(model: &NoiseModel, n: usize, seed: u64) -> (f64, f64) {
    let xs = sample_noise(model, n, RngSeed(seed)).unwrap();
    let (mu, var) = (model.mean(), noise_variance(model).unwrap());
    let log_ratio = |x: f64| {
        let log_phi = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mu) * (x - mu) / (2.0 * var);
        model.density(x).ln() - log_phi
    };
    let (s, s2) = xs
        .par_iter()
        .map(|&x| {
            let v = log_ratio(x);
            (v, v * v)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean) * n as f64 / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn rate_region() -> Check {
    let g = NoiseModel::gaussian(1.0).unwrap();
    let gauss = region_curve(&BroadcastChannelParams::new((1.0, 0.5), (g.clone(), g), 10.0).unwrap(), 101)
        .map_err(|e| e.to_string())?;
    ensure(gauss.points.len() == 101, || "expected 101 points".into())?;
    ensure(gauss.max_gap() < 1e-8, || format!("gaussian gap {:.3e}", gauss.max_gap()))?;

    let mut notes = vec![format!("gaussian gap {:.1e}", gauss.max_gap())];
    let mut failures = Vec::new();
    for model in [NoiseModel::q1(), NoiseModel::q2_normalized(), NoiseModel::tabulated(laplace_table()).unwrap()] {
        let quad = kl_to_equivalent_gaussian(&model).map_err(|e| e.to_string())?;
        let (mc, se) = monte_carlo_kl(&model, 10_000_000, 11);
        let z = (quad - mc).abs() / se;
        notes.push(format!("KL quad {quad:.4e} vs MC {mc:.4e} ({z:.1} SE)"));
        if z > 3.0 {
            failures.push(format!("KL quadrature {quad:.6e} vs Monte Carlo {mc:.6e} +- {se:.1e}"));
        }
    }

    let curve = |n1: NoiseModel, n2: NoiseModel| {
        region_curve(&BroadcastChannelParams::new((1.0, 0.5), (n1, n2), 10.0).unwrap(), 101).map(|c| c.max_gap())
    };
    let q1 = curve(NoiseModel::q1(), NoiseModel::q1()).map_err(|e| e.to_string())?;
    let q2 = curve(NoiseModel::q2_published(), NoiseModel::q2_published()).map_err(|e| e.to_string())?;
    let q2n = curve(NoiseModel::q2_normalized(), NoiseModel::q2_normalized()).map_err(|e| e.to_string())?;
    notes.push(format!("max gap q1 {q1:.4e}, q2 {q2:.4e}, q2 normalized {q2n:.4e} bits"));
    if !(q2 < q1) {
        failures.push(format!(
            "max gap(q2) = {q2:.4e} is not below max gap(q1) = {q1:.4e} bits (normalized q2: {q2n:.4e})"
        ));
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{} [{}]", failures.join("; "), notes.join("; ")))
    }
}

fn sic_simulator() -> Check {
    let g = NoiseModel::gaussian(1.0).unwrap();
    let params = BroadcastChannelParams::new((1.0, 0.5), (g.clone(), g), 10.0).unwrap();
    let mut quiet = SimConfig::new(0.3, 100_000, RngSeed(5));
    quiet.noiseless = true;
    let r = simulate(&params, &quiet).map_err(|e| e.to_string())?;
    ensure(r.max_x1_error < 1e-10, || format!("noiseless x1 error {:.3e}", r.max_x1_error))?;
    let mut worst: f64 = 0.0;
    for (k, alpha) in [0.1, 0.3, 0.5, 0.8].into_iter().enumerate() {
        let report = simulate(&params, &SimConfig::new(alpha, 1_000_000, RngSeed(100 + k as u64))).map_err(|e| e.to_string())?;
        let check = superposition_rate_check(&params, alpha, &report).map_err(|e| format!("alpha {alpha}: {e}"))?;
        worst = worst.max(check.relative_error[0]).max(check.relative_error[1]);
    }
    Ok(format!("noiseless x1 error {:.1e}; worst SINR relative error {worst:.2e}", r.max_x1_error))
}

// --------------------------------------------------------------- gradients

fn micro_model(seed: u64) -> AeModel {
    let schema = Arc::new(LatentSchema::uniform(2, 1).unwrap());
    let mut rng = RngSeed(seed).rng();
    let enc = Mlp::random(3, 2, 2, Activation::Tanh, &mut rng);
    let decs = (0..2).map(|_| Mlp::random(2, 2, 3, Activation::Tanh, &mut rng)).collect();
    let mut m = AeModel::from_parts(schema, enc, decs).unwrap();
    for t in m.param_tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    m
}

fn micro_pairs(seed: u64, share: bool) -> PairBatch {
    let mut rng = RngSeed(seed).rng();
    let mut v = || (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let left: Vec<Vec<f64>> = (0..3).map(|_| v()).collect();
    let right: Vec<Vec<f64>> = (0..3).map(|_| v()).collect();
    PairBatch {
        attribute: 1,
        left,
        right,
        left_labels: vec![vec![0, 1]; 3],
        right_labels: vec![vec![2, if share { 1 } else { 3 }]; 3],
    }
}

fn gradient_check() -> Check {
    type LossFn = fn(&AeModel, &PairBatch, &mut ChannelSource) -> sbc_core::Result<LossOutput>;
    fn self_on_left(m: &AeModel, b: &PairBatch, c: &mut ChannelSource) -> sbc_core::Result<LossOutput> {
        loss_self(m, &b.left, c)
    }
    let losses: [(&str, LossFn, bool); 3] = [
        ("self", self_on_left, true),
        ("common", loss_common, true),
        ("different", loss_different, false),
    ];
    let g = NoiseModel::gaussian(1.0).unwrap();
    let channels: Vec<(&str, Option<LatentChannel>)> = vec![
        ("noiseless", None),
        ("awgn", Some(LatentChannel::new(GainPolicy::Fixed { gain: 0.8 }, 4.0, &g).unwrap())),
        ("fading", Some(LatentChannel::new(DESK_FADING, 4.0, &NoiseModel::q1()).unwrap())),
    ];
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (name, f, share) in losses {
        for (cname, ch) in &channels {
            let mut model = micro_model(3);
            ensure(model.param_count() <= 50, || format!("micro-model has {} parameters", model.param_count()))?;
            let batch = micro_pairs(4, share);
            let mut rng = RngSeed(5).rng();
            let (out, tape) = match ch {
                Some(c) => {
                    let mut src = ChannelSource::live(c, &mut rng);
                    let out = f(&model, &batch, &mut src).map_err(|e| e.to_string())?;
                    (out, src.into_tape())
                }
                None => (f(&model, &batch, &mut ChannelSource::Noiseless).map_err(|e| e.to_string())?, Vec::new()),
            };
            let eval = |m: &AeModel| -> f64 {
                let mut src = if ch.is_some() { ChannelSource::replay(&tape) } else { ChannelSource::Noiseless };
                f(m, &batch, &mut src).unwrap().loss
            };
            let analytic = out.grads.clone().flatten();
            let mut k = 0;
            let tensors = model.param_tensors_mut().len();
            for t in 0..tensors {
                let len = model.param_tensors_mut()[t].len();
                for i in 0..len {
                    let orig = model.param_tensors_mut()[t][i];
                    model.param_tensors_mut()[t][i] = orig + eps;
                    let up = eval(&model);
                    model.param_tensors_mut()[t][i] = orig - eps;
                    let down = eval(&model);
                    model.param_tensors_mut()[t][i] = orig;
                    let numeric = (up - down) / (2.0 * eps);
                    let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                    ensure(rel < 1e-4, || {
                        format!("{name}/{cname} parameter {k}: analytic {} numeric {numeric}", analytic[k])
                    })?;
                    k += 1;
                }
            }
        }
    }
    Ok(format!("3 losses x 3 channels, max relative error {worst:.2e}"))
}

// --------------------------------------------------------- disentanglement

const SWAP_ACCURACY_THRESHOLD: f64 = 0.95;
const DESK_SEED: RngSeed = RngSeed(7);

struct Trained {
    desk: DeskScale,
    test: SyntheticAttributeDataset,
    plain: AeModel,
    robust: AeModel,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let desk = DeskScale::default();
        let (train_set, test) = desk.datasets(DESK_SEED).unwrap();
        let mut plain = desk.model(DESK_SEED).unwrap();
        let mut robust = plain.clone();
        let config = TrainConfig {
            seed: DESK_SEED,
            ..TrainConfig::desk_scale()
        };
        train(&mut plain, &train_set, &config).unwrap();
        train(&mut robust, &train_set, &config.clone().robust(DESK_FADING, 4.0)).unwrap();
        Trained {
            desk,
            test,
            plain,
            robust,
        }
    })
}

/// Accuracy of a classifier that outputs uniformly random tuples.
fn random_classifier_baseline(data: &SyntheticAttributeDataset, block: usize, draws: usize) -> (f64, f64) {
    let cards = &data.space.config().cardinalities;
    let mut rng = RngSeed(31).rng();
    let (mut full, mut part) = (0, 0);
    for _ in 0..draws {
        let i = rng.gen_range(0..data.len());
        let j = data.partner_differing(i, block, &mut rng);
        let mut want = data.labels[i].clone();
        want[block] = data.labels[j][block];
        let guess: Vec<usize> = cards.iter().map(|&c| rng.gen_range(0..c)).collect();
        full += usize::from(guess == want);
        part += usize::from(guess[block] == want[block]);
    }
    (full as f64 / draws as f64, part as f64 / draws as f64)
}

fn disentanglement() -> Check {
    let t = trained();
    let mut notes = Vec::new();
    let untrained = t.desk.model(RngSeed(99)).unwrap();
    for block in 0..t.plain.schema.num_blocks() {
        let r = swap_accuracy(&t.plain, &t.test, block, RngSeed(1)).map_err(|e| e.to_string())?;
        ensure(r.accuracy >= SWAP_ACCURACY_THRESHOLD, || format!("block {block} swap accuracy {:.3}", r.accuracy))?;
        let u = swap_accuracy(&untrained, &t.test, block, RngSeed(1)).map_err(|e| e.to_string())?;
        let (chance_full, chance_part) = random_classifier_baseline(&t.test, block, 200_000);
        ensure((u.accuracy - chance_full).abs() <= 0.1, || {
            format!("untrained block {block}: {:.3} vs chance {chance_full:.3}", u.accuracy)
        })?;
        ensure((u.swapped_attribute_accuracy - chance_part).abs() <= 0.1, || {
            format!("untrained block {block}: attribute {:.3} vs chance {chance_part:.3}", u.swapped_attribute_accuracy)
        })?;
        notes.push(format!("block {block} {:.3} (untrained {:.3})", r.accuracy, u.accuracy));
    }
    let noise = NoiseModel::gaussian(1.0).unwrap();
    let err = |m: &AeModel, snr: f64| {
        reconstruction_error(m, &t.test, &LatentChannel::new(DESK_FADING, snr, &noise).unwrap(), RngSeed(3)).unwrap()
    };
    for snr in [0.0, 1.0, 2.0, 3.0, 4.0] {
        let (r, p) = (err(&t.robust, snr), err(&t.plain, snr));
        ensure(r < p, || format!("{snr} dB: robust {r:.4} not below non-robust {p:.4}"))?;
    }
    for snr in [15.0, 20.0, 25.0] {
        let (r, p) = (err(&t.robust, snr), err(&t.plain, snr));
        ensure(p < r, || format!("{snr} dB: non-robust {p:.4} not below robust {r:.4}"))?;
    }
    notes.push(format!(
        "mse at 0 dB robust {:.3} / plain {:.3}, at 20 dB robust {:.3} / plain {:.3}",
        err(&t.robust, 0.0),
        err(&t.plain, 0.0),
        err(&t.robust, 20.0),
        err(&t.plain, 20.0)
    ));
    Ok(notes.join("; "))
}

fn feature_completion() -> Check {
    let t = trained();
    let blocks = t.plain.schema.num_blocks();
    let mut worst: f64 = 1.0;
    for (k, set) in [vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2]].iter().enumerate() {
        let interest = InterestSet::new(set, blocks).unwrap();
        for user in 0..t.plain.users() {
            let acc = completion_accuracy(&t.plain, &t.test, &interest, user, RngSeed(40 + k as u64)).map_err(|e| e.to_string())?;
            worst = worst.min(acc);
            ensure(acc >= 0.95, || format!("interest {set:?} user {user}: {acc:.3}"))?;
        }
    }
    Ok(format!("lowest agreement {worst:.3}"))
}

// ----------------------------------------------------------------- network

fn run_session(model: &AeModel, samples: &[Vec<f64>], donor: &[f64], mode: PayloadMode) -> Result<(f64, f64, u64), String> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let blocks = model.schema.num_blocks();
    std::thread::scope(|s| {
        let server = s.spawn(|| {
            serve(
                &listener,
                &ServeConfig {
                    model,
                    samples,
                    users: 2,
                    mode,
                    pacing: Some(1.25e6),
                },
            )
        });
        let clients: Vec<_> = (0..2u8)
            .map(|u| {
                s.spawn(move || {
                    receive(
                        addr,
                        &ReceiveConfig {
                            user_id: u,
                            interest: InterestSet::new(&[usize::from(u)], blocks).unwrap(),
                            model,
                            donor,
                            truth: Some(samples),
                        },
                    )
                })
            })
            .collect();
        let mut crc = 0;
        for c in clients {
            let r = c.join().unwrap().map_err(|e| e.to_string())?;
            ensure(r.frames as usize == samples.len(), || format!("user {} got {} frames", r.user_id, r.frames))?;
            crc += r.crc_failures + r.malformed;
        }
        let report = server.join().unwrap().map_err(|e| e.to_string())?;
        ensure(report.dropped.is_empty(), || format!("dropped sessions: {:?}", report.dropped))?;
        let wall = report.sessions.iter().map(|m| m.wall_ms).fold(0.0, f64::max);
        let ratio = report.sessions.iter().map(|m| m.compression_ratio).fold(f64::INFINITY, f64::min);
        Ok((wall, ratio, crc))
    })
}

fn network_harness() -> Check {
    let t = trained();
    let samples = t.test.space.sample_set(1000, RngSeed(8)).map_err(|e| e.to_string())?.samples;
    let donor = &t.test.samples[0];

    for (k, x) in samples.iter().enumerate() {
        let interest = InterestSet::new(&[k % 3], 3).unwrap();
        let code = t.plain.encode(x).unwrap();
        let frame = FeatureFrame {
            frame_type: FrameType::Features,
            user_id: (k % 3) as u8,
            interest_bitmap: interest.bitmap(),
            payload: sbc_core::schema::select(&code, &interest).unwrap().iter().map(|&v| v as f32).collect(),
        };
        let bytes = frame.encode();
        let (back, used) = FeatureFrame::decode(&bytes).map_err(|e| e.to_string())?;
        ensure(used == bytes.len() && back.encode() == bytes, || format!("frame {k} did not round-trip"))?;
    }

    let (sem_ms, sem_ratio, sem_crc) = run_session(&t.plain, &samples, donor, PayloadMode::Semantic)?;
    let (raw_ms, raw_ratio, raw_crc) = run_session(&t.plain, &samples, donor, PayloadMode::Raw)?;
    ensure(sem_crc == 0 && raw_crc == 0, || format!("crc/malformed counts {sem_crc} {raw_crc}"))?;
    let n = t.plain.input_dim() as f64;
    let w = t.desk.block_width as f64;
    ensure(sem_ratio == n / w, || format!("semantic ratio {sem_ratio} != {}", n / w))?;
    ensure(raw_ratio == 1.0, || format!("raw ratio {raw_ratio}"))?;
    ensure(sem_ms < raw_ms, || format!("semantic {sem_ms:.1} ms not below raw {raw_ms:.1} ms"))?;

    let frames: Vec<FeatureFrame> = (0..10)
        .map(|k| FeatureFrame {
            frame_type: FrameType::Features,
            user_id: 0,
            interest_bitmap: 1,
            payload: vec![k as f32; 4],
        })
        .collect();
    let mut stream = Vec::new();
    for (k, f) in frames.iter().enumerate() {
        let mut b = f.encode();
        if k == 3 {
            b[22] ^= 0x40;
        }
        if k == 6 {
            stream.extend_from_slice(b"\x00garbage SBC1\x01\x09 noise");
        }
        stream.extend(b);
    }
    let mut reader = FrameReader::new(&stream[..]);
    let mut got = Vec::new();
    while let Some(f) = reader.next_frame().map_err(|e| e.to_string())? {
        got.push(f);
    }
    let want: Vec<FeatureFrame> = frames.iter().enumerate().filter(|(k, _)| *k != 3).map(|(_, f)| f.clone()).collect();
    ensure(got == want, || format!("resync recovered {} of 9 frames", got.len()))?;
    ensure(reader.stats.crc_failures == 1, || format!("crc failures {}", reader.stats.crc_failures))?;

    Ok(format!(
        "1000 frames x 2 users: semantic {sem_ms:.1} ms vs raw {raw_ms:.1} ms, ratio {sem_ratio}; resync recovered 9/9 clean frames"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("allocation matches exhaustive grid search", allocation_vs_grid),
        ("distortion grows with source variance", distortion_order),
        ("reverse water-filling limit", water_filling_limit),
        ("rate region bounds and KL quadrature", rate_region),
        ("superposition and SIC simulator", sic_simulator),
        ("loss gradients match finite differences", gradient_check),
        ("disentanglement and robustness", disentanglement),
        ("feature completion", feature_completion),
        ("loopback network harness", network_harness),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[{}] PASS {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("[{}] FAIL {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
