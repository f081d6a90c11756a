use std::sync::Arc;

use sbc_core::ae::checkpoint::{load, save};
use sbc_core::ae::eval::swap_accuracy;
use sbc_core::ae::{
    train, Activation, AeModel, AttributeSpace, AttributeSpaceConfig, DeskScale, Mixing, Mlp, Phase, TrainConfig,
};
use sbc_core::{exchange, Error, LatentSchema, RngSeed};

fn small_setup() -> (DeskScale, sbc_core::ae::SyntheticAttributeDataset) {
    let desk = DeskScale {
        hidden: 16,
        train_samples: 640,
        ..DeskScale::default()
    };
    let (train_set, _) = desk.datasets(RngSeed(1)).unwrap();
    (desk, train_set)
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (desk, data) = small_setup();
    let mut m = desk.model(RngSeed(2)).unwrap();
    let before = m.clone();
    let cfg = TrainConfig {
        steps: 30,
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let h = train(&mut m, &data, &cfg).unwrap();
    assert_eq!(m, before);
    assert_eq!(h.entries.len(), 30);
    assert_eq!(h.entries[0].phase, Phase::SelfReconstruction);
    assert_eq!(h.entries[1].phase, Phase::Common);
    assert_eq!(h.entries[2].phase, Phase::Different);
}

#[test]
fn training_is_bit_reproducible() {
    let (desk, data) = small_setup();
    let cfg = TrainConfig {
        steps: 60,
        seed: RngSeed(5),
        ..TrainConfig::desk_scale()
    }
    .robust(sbc_core::ae::DESK_FADING, 4.0);
    let mut a = desk.model(RngSeed(3)).unwrap();
    let mut b = a.clone();
    let ha = train(&mut a, &data, &cfg).unwrap();
    let hb = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn divergence_reports_the_step() {
    let (desk, data) = small_setup();
    let mut m = desk.model(RngSeed(2)).unwrap();
    let cfg = TrainConfig {
        steps: 500,
        learning_rate: 0.9,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&mut m, &data, &cfg), Err(Error::Diverged { .. })));
}

#[test]
fn invalid_learning_rate_is_rejected() {
    let (desk, data) = small_setup();
    let mut m = desk.model(RngSeed(2)).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1.5,
        ..TrainConfig::default()
    };
    assert!(train(&mut m, &data, &cfg).is_err());
}

#[test]
fn encode_is_deterministic_and_schema_wide() {
    let (desk, data) = small_setup();
    let m = desk.model(RngSeed(2)).unwrap();
    let a = m.encode(&data.samples[0]).unwrap();
    assert_eq!(a, m.encode(&data.samples[0]).unwrap());
    assert_eq!(a.values().len(), m.schema.total_width());
    let x = m.decode(1, a.values()).unwrap();
    assert_eq!(x.len(), data.samples[0].len());
    assert!(x.iter().all(|v| v.is_finite()));
    assert!(m.encode(&[0.0; 3]).is_err());
}

#[test]
fn checkpoint_file_round_trip() {
    let (desk, _) = small_setup();
    let m = desk.model(RngSeed(4)).unwrap();
    let path = std::env::temp_dir().join(format!("sbc-ckpt-{}.smae", std::process::id()));
    save(&m, &path).unwrap();
    let back = load(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(back.schema.blocks(), m.schema.blocks());
    for (x, y) in back.encoder.w2.iter().zip(&m.encoder.w2) {
        assert_eq!(*x, *y as f32 as f64);
    }
}

fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                for j in 0..n {
                    a[r][j] -= f * a[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

/// Linear block-diagonal autoencoder for separable data: block `j` of the
/// code holds the embedding coordinates of attribute `j`'s slice.
fn block_diagonal(space: &AttributeSpace) -> AeModel {
    let cards = &space.config().cardinalities;
    let w = space.input_dim() / cards.len();
    let k = cards[0];
    let latent = k * cards.len();
    let n = space.input_dim();
    let schema = Arc::new(LatentSchema::uniform(cards.len(), k).unwrap());
    let mut enc = Mlp::zeros(n, n, latent, Activation::Identity);
    let mut dec = Mlp::zeros(latent, latent, n, Activation::Identity);
    for i in 0..n {
        enc.w1[i * n + i] = 1.0;
    }
    for i in 0..latent {
        dec.w1[i * latent + i] = 1.0;
    }
    for j in 0..cards.len() {
        // embedding columns of attribute j, from prototypes varying only a_j
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|v| {
                let mut labels = vec![0; cards.len()];
                labels[j] = v;
                space.prototype(&labels)[j * w..(j + 1) * w].to_vec()
            })
            .collect();
        let gram: Vec<Vec<f64>> = (0..k)
            .map(|a| (0..k).map(|b| cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum()).collect())
            .collect();
        let ginv = invert(gram);
        // z_j = G^-1 E^T x_j, x_j = E z_j
        for a in 0..k {
            for i in 0..w {
                let coef: f64 = (0..k).map(|b| ginv[a][b] * cols[b][i]).sum();
                enc.w2[(j * k + a) * n + j * w + i] = coef;
                dec.w2[(j * w + i) * latent + j * k + a] = cols[a][i];
            }
        }
    }
    AeModel::from_parts(schema, enc, vec![dec]).unwrap()
}

#[test]
fn hand_built_block_diagonal_model_swaps_perfectly() {
    let space = Arc::new(
        AttributeSpace::new(
            AttributeSpaceConfig {
                mixing: Mixing::Separable,
                jitter: 0.01,
                ..AttributeSpaceConfig::default()
            },
            RngSeed(8),
        )
        .unwrap(),
    );
    let model = block_diagonal(&space);
    let data = space.sample_set(256, RngSeed(9)).unwrap();
    for block in 0..3 {
        let r = swap_accuracy(&model, &data, block, RngSeed(1)).unwrap();
        assert_eq!(r.accuracy, 1.0, "block {block}");
    }
    let a = model.encode(&data.samples[0]).unwrap();
    let b = model.encode(&data.samples[1]).unwrap();
    let (sa, sb) = exchange(&a, &b, 1).unwrap();
    assert_eq!(exchange(&sa, &sb, 1).unwrap(), (a, b));
}
