use sbc_core::noise::{sample_noise, NoiseSampler};
use sbc_core::{NoiseModel, PdfTable, RngSeed};

#[test]
fn table_file_round_trip_is_bit_exact() {
    let t = PdfTable::from_fn(-8.0, 8.0, 1025, |x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()).unwrap();
    let path = std::env::temp_dir().join(format!("sbc-table-{}.txt", std::process::id()));
    t.write(std::fs::File::create(&path).unwrap()).unwrap();
    let back = PdfTable::read_path(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(back, t);
}

/// Kolmogorov-Smirnov distance between samples and the sampler's CDF.
fn ks(model: &NoiseModel, n: usize) -> f64 {
    let sampler = NoiseSampler::new(model).unwrap();
    let mut xs = sample_noise(model, n, RngSeed(3)).unwrap();
    xs.sort_by(f64::total_cmp);
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = sampler.cdf(x);
            (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn samplers_follow_their_cdfs() {
    let n = 200_000;
    // 99.9% critical value of the KS statistic
    let crit = 1.95 / (n as f64).sqrt();
    for model in [NoiseModel::gaussian(2.0).unwrap(), NoiseModel::q1(), NoiseModel::angc()] {
        let d = ks(&model, n);
        assert!(d < crit, "{:?}: KS {d} >= {crit}", model.kind());
    }
}

#[test]
fn erf_mixture_sample_moments() {
    let xs = sample_noise(&NoiseModel::q1(), 1_000_000, RngSeed(4)).unwrap();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    assert!(mean.abs() < 5e-3);
    assert!((var - 1.0).abs() < 1e-2);
}
