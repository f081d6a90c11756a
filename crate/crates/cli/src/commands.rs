use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context as _};
use serde::Serialize;

use crate::args::*;
use crate::config::ConfigFile;
use crate::Failure;
use sbc_core::ae::checkpoint;
use sbc_core::ae::eval::{completion_accuracy, psnr_sweep, reconstruction_error, swap_accuracy};
use sbc_core::ae::{train, AeModel, DeskScale, TrainChannel, TrainConfig};
use sbc_core::net::{receive, serve, PayloadMode, ReceiveConfig, ServeConfig};
use sbc_core::rdp::{sweep, write_sweep_csv, GaussianSourceSet, RateUnit};
use sbc_core::region::{analytic_sinr, region_curve};
use sbc_core::sim::{simulate, GainPolicy, LatentChannel, SicReference, SimConfig, SymbolAlphabet};
use sbc_core::{BroadcastChannelParams, Fading, FadingMode, InterestSet, LatentSchema, NoiseModel, RngSeed};

pub struct Context {
    pub seed: RngSeed,
    pub out: PathBuf,
    pub config_path: Option<PathBuf>,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.path(name);
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(anyhow::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("`{key}`: {msg}"))
}

pub fn dispatch(ctx: &Context, file: &ConfigFile, command: Command) -> Result<(), Failure> {
    let section = command.section();
    macro_rules! merged {
        ($a:expr) => {
            file.merge(section, &$a)?
        };
    }
    match command {
        Command::Allocate(a) => {
            let a = merged!(a);
            manifest(ctx, section, &a)?;
            allocate(ctx, &a)
        }
        Command::Region(a) => {
            let a = merged!(a);
            manifest(ctx, section, &a)?;
            region(ctx, &a)
        }
        Command::Simulate(a) => {
            let a = merged!(a);
            manifest(ctx, section, &a)?;
            simulate_cmd(ctx, &a)
        }
        Command::Train(a) => {
            let a = merged!(a);
            manifest(ctx, section, &a)?;
            train_cmd(ctx, &a)
        }
        Command::Eval(a) => {
            let a = merged!(a);
            manifest(ctx, section, &a)?;
            eval_cmd(ctx, &a)
        }
        Command::PsnrSweep(a) => {
            let a = merged!(a);
            manifest(ctx, section, &a)?;
            psnr_cmd(ctx, &a)
        }
        Command::Serve(a) => {
            let a = merged!(a);
            manifest(ctx, section, &a)?;
            serve_cmd(ctx, &a)
        }
        Command::Recv(a) => {
            let a = merged!(a);
            manifest(ctx, section, &a)?;
            recv_cmd(ctx, &a)
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a, T> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    subcommand: &'a str,
    seed: u64,
    out: &'a Path,
    config_file: Option<&'a Path>,
    settings: &'a T,
}

fn manifest<T: Serialize>(ctx: &Context, subcommand: &str, settings: &T) -> Result<(), Failure> {
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    ctx.write_json(
        "manifest.json",
        &Manifest {
            tool: "sbc",
            version: env!("CARGO_PKG_VERSION"),
            core_version: sbc_core::VERSION,
            subcommand,
            seed: ctx.seed.0,
            out: &ctx.out,
            config_file: ctx.config_path.as_deref(),
            settings,
        },
    )
}

/// `FROM:TO:STEP`, inclusive of both ends.
fn parse_range(key: &str, spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| config_err(key, format!("{spec:?}: {e}")))?;
    let [from, to, step] = parts[..] else {
        return Err(config_err(key, format!("{spec:?} is not FROM:TO:STEP")));
    };
    if !(step > 0.0) || to < from {
        return Err(config_err(key, format!("{spec:?} needs STEP > 0 and TO >= FROM")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| from + k as f64 * step).collect())
}

fn parse_noise(key: &str, spec: &str) -> Result<NoiseModel, Failure> {
    NoiseModel::from_spec(spec).map_err(|e| match e {
        sbc_core::Error::Io(_) | sbc_core::Error::Parse { .. } => Failure::Compute(e.into()),
        other => config_err(key, other),
    })
}

fn parse_bitmap(key: &str, s: &str) -> Result<u64, Failure> {
    let t = s.trim();
    let r = if let Some(b) = t.strip_prefix("0b") {
        u64::from_str_radix(b, 2)
    } else if let Some(h) = t.strip_prefix("0x") {
        u64::from_str_radix(h, 16)
    } else {
        t.parse()
    };
    r.map_err(|e| config_err(key, format!("{s:?}: {e}")))
}

fn policy(p: PolicyArg) -> GainPolicy {
    match p {
        PolicyArg::Identity => GainPolicy::Identity,
        PolicyArg::Awgn => GainPolicy::Fixed { gain: 1.0 },
        PolicyArg::Rayleigh => sbc_core::ae::DESK_FADING,
        PolicyArg::RayleighEq => GainPolicy::Rayleigh {
            variance: 1.0,
            signed: false,
            equalize: true,
        },
    }
}

fn allocate(ctx: &Context, a: &AllocateArgs) -> Result<(), Failure> {
    let d_values = parse_range("d-grid", &a.d_grid)?;
    let sources = GaussianSourceSet::new(a.variances.clone()).map_err(|e| config_err("variances", e))?;
    let rows = sweep(&sources, &d_values, &a.p_kl, a.tol)?;
    let unit = match a.units {
        Units::Nats => RateUnit::Nats,
        Units::Bits => RateUnit::Bits,
    };
    let mut w = ctx.create("allocation.csv")?;
    write_sweep_csv(&rows, sources.len(), unit, &mut w)?;
    w.flush()?;
    println!("{} allocations written to {}", rows.len(), ctx.path("allocation.csv").display());
    Ok(())
}

fn channel_params(g1: f64, g2: f64, n1: &str, n2: &str, power: f64) -> Result<BroadcastChannelParams, Failure> {
    Ok(BroadcastChannelParams::new(
        (g1, g2),
        (parse_noise("noise1", n1)?, parse_noise("noise2", n2)?),
        power,
    )?)
}

fn region(ctx: &Context, a: &RegionArgs) -> Result<(), Failure> {
    let params = channel_params(a.g1, a.g2, &a.noise1, &a.noise2, a.power)?;
    let curve = region_curve(&params, a.points)?;
    for w in &curve.warnings {
        eprintln!("warning: {w}");
    }
    let mut w = ctx.create("region.csv")?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    println!("max outer-inner gap {:.6e} bits over {} points", curve.max_gap(), curve.points.len());
    Ok(())
}

fn simulate_cmd(ctx: &Context, a: &SimulateArgs) -> Result<(), Failure> {
    let mut params = channel_params(a.g1, a.g2, &a.noise1, &a.noise2, a.power)?;
    let mode = match a.fading {
        FadingArg::None => FadingMode::None,
        FadingArg::Slow => FadingMode::Slow,
        FadingArg::Fast => FadingMode::Fast,
    };
    if mode != FadingMode::None {
        params = params.with_fading(Fading::new(mode, (a.fading_var1, a.fading_var2), a.signed_gains)?);
    }
    let sic = match (a.sic, a.alphabet) {
        (SicMode::Genie, _) => SicReference::Genie,
        (SicMode::Hard, Alphabet::Bpsk) => SicReference::HardDecision(vec![-1.0, 1.0]),
        (SicMode::Hard, Alphabet::Gaussian) => {
            return Err(config_err("sic", "hard-decision cancellation needs the bpsk alphabet"))
        }
    };
    let mut w = csv::Writer::from_writer(ctx.create("simulate.csv")?);
    w.write_record([
        "alpha",
        "sinr1",
        "sinr2",
        "analytic_sinr1",
        "analytic_sinr2",
        "rate1_bits",
        "rate2_bits",
        "residual_interference",
        "max_x1_error",
    ])
    .map_err(anyhow::Error::from)?;
    for (k, &alpha) in a.alpha.iter().enumerate() {
        let config = SimConfig {
            frame_len: a.frame_len,
            noiseless: a.noiseless,
            alphabet: match a.alphabet {
                Alphabet::Gaussian => SymbolAlphabet::Gaussian,
                Alphabet::Bpsk => SymbolAlphabet::Bpsk,
            },
            sic: sic.clone(),
            ..SimConfig::new(alpha, a.symbols, ctx.seed.derive_index("alpha", k as u64))
        };
        let r = simulate(&params, &config)?;
        let (s1, s2) = analytic_sinr(&params, alpha)?;
        w.write_record([
            alpha.to_string(),
            r.sinr[0].to_string(),
            r.sinr[1].to_string(),
            s1.to_string(),
            s2.to_string(),
            r.rate_proxy[0].to_string(),
            r.rate_proxy[1].to_string(),
            r.residual_interference_power.to_string(),
            r.max_x1_error.to_string(),
        ])
        .map_err(anyhow::Error::from)?;
    }
    w.flush()?;
    println!("{} power splits simulated", a.alpha.len());
    Ok(())
}

fn desk(hidden: usize, users: usize, train: usize, test: usize) -> DeskScale {
    DeskScale {
        hidden,
        users,
        train_samples: train,
        test_samples: test,
        ..DeskScale::default()
    }
}

fn train_cmd(ctx: &Context, a: &TrainArgs) -> Result<(), Failure> {
    let d = desk(a.hidden, a.users, a.train_samples, a.test_samples);
    let (train_set, test_set) = d.datasets(ctx.seed)?;
    let mut model = d.model(ctx.seed)?;
    let config = TrainConfig {
        steps: a.steps,
        learning_rate: a.lr.unwrap_or(sbc_core::ae::train::DESK_LEARNING_RATE),
        momentum: a.momentum,
        batch_size: a.batch,
        channel: match a.snr_train {
            Some(snr) => Some(TrainChannel {
                policy: policy(a.policy),
                snr_db: snr,
                noise: parse_noise("noise", &a.noise)?,
            }),
            None => None,
        },
        seed: ctx.seed,
    };
    config.validate().map_err(|e| config_err("train", e))?;
    eprintln!("training {} parameters for {} steps", model.param_count(), config.steps);
    let started = Instant::now();
    let history = train(&mut model, &train_set, &config)?;
    eprintln!("trained in {:.1} s", started.elapsed().as_secs_f64());

    checkpoint::save(&model, ctx.path(&a.checkpoint))?;
    ctx.write_json("schema.json", model.schema.as_ref())?;
    let mut donor = ctx.create("donor.txt")?;
    let line: Vec<String> = test_set.samples[0].iter().map(f64::to_string).collect();
    writeln!(donor, "{}", line.join(" "))?;
    donor.flush()?;

    let mut w = csv::Writer::from_writer(ctx.create("history.csv")?);
    w.write_record(["step", "phase", "attribute", "loss"]).map_err(anyhow::Error::from)?;
    for e in &history.entries {
        let phase = match e.phase {
            sbc_core::ae::Phase::SelfReconstruction => "self",
            sbc_core::ae::Phase::Common => "common",
            sbc_core::ae::Phase::Different => "different",
        };
        w.write_record([e.step.to_string(), phase.into(), e.attribute.to_string(), e.loss.to_string()])
            .map_err(anyhow::Error::from)?;
    }
    w.flush()?;
    let swaps = (0..model.schema.num_blocks())
        .map(|b| swap_accuracy(&model, &test_set, b, ctx.seed.derive("swap-eval")))
        .collect::<Result<Vec<_>, _>>()?;
    for s in &swaps {
        println!("block {} swap accuracy {:.3}", s.block, s.accuracy);
    }
    Ok(())
}

fn load_model(key: &str, path: Option<&Path>) -> Result<AeModel, Failure> {
    let p = path.ok_or_else(|| config_err(key, "a checkpoint path is required"))?;
    checkpoint::load(p)
        .with_context(|| format!("loading {}", p.display()))
        .map_err(Failure::Compute)
}

fn desk_for(model: &AeModel, train: usize, test: usize) -> Result<DeskScale, Failure> {
    let d = desk(64, model.users(), train, test);
    if model.input_dim() != d.space.input_dim || model.schema.num_blocks() != d.space.cardinalities.len() {
        return Err(Failure::Compute(anyhow!(
            "checkpoint has input width {} and {} blocks; the synthetic task needs {} and {}",
            model.input_dim(),
            model.schema.num_blocks(),
            d.space.input_dim,
            d.space.cardinalities.len()
        )));
    }
    Ok(d)
}

#[derive(Serialize)]
struct EvalReport {
    swap_accuracy: Vec<sbc_core::ae::eval::SwapReport>,
    completion: Vec<CompletionRow>,
    reconstruction_mse: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct CompletionRow {
    user: usize,
    interest: Vec<usize>,
    accuracy: f64,
}

fn eval_cmd(ctx: &Context, a: &EvalArgs) -> Result<(), Failure> {
    let model = load_model("checkpoint", a.checkpoint.as_deref())?;
    let d = desk_for(&model, a.train_samples, a.test_samples)?;
    let (_, test) = d.datasets(ctx.seed)?;
    let noise = parse_noise("noise", &a.noise)?;
    let swap_accuracy = (0..model.schema.num_blocks())
        .map(|b| swap_accuracy(&model, &test, b, ctx.seed.derive("swap-eval")))
        .collect::<Result<Vec<_>, _>>()?;
    let task_schema = d.schema()?;
    let mut completion = Vec::new();
    for user in 0..model.users() {
        let interest = task_schema
            .interest(user)
            .cloned()
            .unwrap_or_else(|| InterestSet::all(model.schema.num_blocks()));
        completion.push(CompletionRow {
            user,
            interest: interest.blocks().to_vec(),
            accuracy: completion_accuracy(&model, &test, &interest, user, ctx.seed.derive("completion"))?,
        });
    }
    let mut reconstruction_mse = Vec::new();
    for (k, &snr) in a.snr.iter().enumerate() {
        let ch = LatentChannel::new(policy(a.policy), snr, &noise)?;
        reconstruction_mse.push((snr, reconstruction_error(&model, &test, &ch, ctx.seed.derive_index("snr-point", k as u64))?));
    }
    for s in &swap_accuracy {
        println!("block {} swap accuracy {:.3}", s.block, s.accuracy);
    }
    ctx.write_json(
        "eval.json",
        &EvalReport {
            swap_accuracy,
            completion,
            reconstruction_mse,
        },
    )
}

fn psnr_cmd(ctx: &Context, a: &PsnrSweepArgs) -> Result<(), Failure> {
    if a.models.is_empty() {
        return Err(config_err("model", "give at least one NAME=PATH"));
    }
    let mut loaded = Vec::new();
    for spec in &a.models {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| config_err("model", format!("{spec:?} is not NAME=PATH")))?;
        loaded.push((name.to_string(), load_model("model", Some(Path::new(path)))?));
    }
    let d = desk_for(&loaded[0].1, a.train_samples, a.test_samples)?;
    let (_, test) = d.datasets(ctx.seed)?;
    let snrs = parse_range("snr-from/snr-to/step", &format!("{}:{}:{}", a.snr_from, a.snr_to, a.step))?;
    let models: Vec<(&str, &AeModel)> = loaded.iter().map(|(n, m)| (n.as_str(), m)).collect();
    let sweep = psnr_sweep(&models, &test, &snrs, policy(a.policy), &parse_noise("noise", &a.noise)?, ctx.seed)?;
    let mut w = ctx.create("psnr.csv")?;
    sweep.write_csv(&mut w)?;
    w.flush()?;
    println!("{} SNR points written to {}", sweep.rows.len(), ctx.path("psnr.csv").display());
    Ok(())
}

fn serve_samples(ctx: &Context, model: &AeModel, frames: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let d = desk_for(model, 0, 0)?;
    let space = d.attribute_space(ctx.seed)?;
    Ok(space.sample_set(frames.max(space.num_tuples() * 10), ctx.seed.derive("serve-samples"))?.samples[..frames].to_vec())
}

fn serve_cmd(ctx: &Context, a: &ServeArgs) -> Result<(), Failure> {
    let model = load_model("checkpoint", a.checkpoint.as_deref())?;
    if let Some(p) = &a.schema {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let schema: LatentSchema = serde_json::from_str(&text).map_err(|e| config_err("schema", e))?;
        if schema.blocks() != model.schema.blocks() {
            return Err(Failure::Compute(anyhow!("schema {} does not match the checkpoint", p.display())));
        }
    }
    let samples = serve_samples(ctx, &model, a.frames)?;
    let listener = TcpListener::bind(&a.bind).with_context(|| format!("binding {}", a.bind))?;
    eprintln!("listening on {} for {} receivers", listener.local_addr()?, a.users);
    let report = serve(
        &listener,
        &ServeConfig {
            model: &model,
            samples: &samples,
            users: a.users,
            mode: match a.mode {
                ModeArg::Semantic => PayloadMode::Semantic,
                ModeArg::Raw => PayloadMode::Raw,
            },
            pacing: a.rate_mbps.map(|r| r * 1e6 / 8.0),
        },
    )?;
    for reason in &report.dropped {
        eprintln!("dropped connection: {reason}");
    }
    ctx.write_json("serve_metrics.json", &report)
}

fn read_vector(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("{}: bad number {t:?}", path.display())))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(Failure::Compute)
}

fn recv_cmd(ctx: &Context, a: &RecvArgs) -> Result<(), Failure> {
    let model = load_model("checkpoint", a.checkpoint.as_deref())?;
    let bitmap = parse_bitmap("interest", &a.interest)?;
    let interest = InterestSet::from_bitmap(bitmap, model.schema.num_blocks()).map_err(|e| config_err("interest", e))?;
    let donor = read_vector(a.donor.as_deref().ok_or_else(|| config_err("donor", "a donor file is required"))?)?;
    let truth = if a.truth_from_seed {
        Some(serve_samples(ctx, &model, a.frames)?)
    } else {
        None
    };
    let config = ReceiveConfig {
        user_id: a.user,
        interest,
        model: &model,
        donor: &donor,
        truth: truth.as_deref(),
    };
    let deadline = Instant::now() + Duration::from_secs_f64(a.connect_timeout.max(0.0));
    let report = loop {
        match receive(a.connect.as_str(), &config) {
            Err(sbc_core::Error::Io(e)) if e.kind() == std::io::ErrorKind::ConnectionRefused && Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(50));
            }
            other => break other?,
        }
    };
    if let Some(p) = report.mean_psnr_db {
        println!("user {}: {} frames, mean PSNR {p:.2} dB", report.user_id, report.frames);
    } else {
        println!("user {}: {} frames", report.user_id, report.frames);
    }
    ctx.write_json(&format!("recv_user{}.json", a.user), &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_includes_both_ends() {
        let v = parse_range("k", "0.1:2.5:0.05").unwrap();
        assert_eq!(v.len(), 49);
        assert!((v[48] - 2.5).abs() < 1e-12);
        assert_eq!(parse_range("k", "0:20:2").unwrap().len(), 11);
        assert!(parse_range("k", "1:0:1").is_err());
        assert!(parse_range("k", "0:1:0").is_err());
        assert!(parse_range("k", "0:1").is_err());
    }

    #[test]
    fn bitmaps_in_three_notations() {
        assert_eq!(parse_bitmap("k", "0b101").unwrap(), 5);
        assert_eq!(parse_bitmap("k", "0x6").unwrap(), 6);
        assert_eq!(parse_bitmap("k", "3").unwrap(), 3);
        assert!(parse_bitmap("k", "0b2").is_err());
    }
}
