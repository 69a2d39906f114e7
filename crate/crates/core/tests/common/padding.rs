//! Units whose receptive field lies entirely in sentence-end padding must be
//! exact zeros at every layer, whatever the weights and biases.

use super::{activation, scramble, sentence};
use arcmatch::conv::encode;
use arcmatch::{
    Arc2Config, Arc2Model, ConvLayerSpec, MatchModel, Rng, SentenceModelConfig, SentenceModelParams,
};

const MODELS: usize = 100;

fn conv_mask(pad: &[bool], k: usize) -> Vec<bool> {
    (0..pad.len() + 1 - k)
        .map(|i| pad[i..i + k].iter().all(|&p| p))
        .collect()
}

fn pool_mask(pad: &[bool]) -> Vec<bool> {
    (0..pad.len().div_ceil(2))
        .map(|i| pad[2 * i] && pad.get(2 * i + 1).copied().unwrap_or(true))
        .collect()
}

fn conv_mask_2d(pad: &[Vec<bool>], k: usize) -> Vec<Vec<bool>> {
    let (h, w) = (pad.len(), pad[0].len());
    (0..h + 1 - k)
        .map(|i| {
            (0..w + 1 - k)
                .map(|j| (0..k).all(|di| (0..k).all(|dj| pad[i + di][j + dj])))
                .collect()
        })
        .collect()
}

fn pool_mask_2d(pad: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let (h, w) = (pad.len(), pad[0].len());
    let at = |r: usize, c: usize| r >= h || c >= w || pad[r][c];
    (0..h.div_ceil(2))
        .map(|i| {
            (0..w.div_ceil(2))
                .map(|j| {
                    at(2 * i, 2 * j)
                        && at(2 * i, 2 * j + 1)
                        && at(2 * i + 1, 2 * j)
                        && at(2 * i + 1, 2 * j + 1)
                })
                .collect()
        })
        .collect()
}

pub fn sentence_stack_padding_is_exactly_zero() {
    let mut rng = Rng::new(21);
    let mut built = 0;
    let mut padded_units = 0;
    while built < MODELS {
        let depth = rng.between(1, 3);
        let cfg = SentenceModelConfig {
            dim: rng.between(1, 4),
            l_max: rng.between(6, 24),
            layers: (0..depth)
                .map(|_| ConvLayerSpec::new(rng.between(2, 3), rng.between(1, 4)))
                .collect(),
            activation: activation(&mut rng),
            global_pool: false,
        };
        if cfg.stage_lengths().is_err() {
            continue;
        }
        built += 1;
        let mut p = SentenceModelParams::<f64>::init(&cfg, &mut rng).unwrap();
        for t in p.tensors_mut() {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform_range(-2.0, 2.0));
        }
        for length in 1..=cfg.l_max {
            let s = sentence(length, cfg.l_max, cfg.dim, &mut rng);
            let (_, trace) = encode(&s, &p, &cfg).unwrap();
            let mut pad: Vec<bool> = (0..cfg.l_max).map(|r| r >= length).collect();
            for (l, rec) in trace.layers.iter().enumerate() {
                let conv_pad = conv_mask(&pad, cfg.layers[l].window);
                for (i, &is_pad) in conv_pad.iter().enumerate() {
                    if is_pad {
                        padded_units += 1;
                        assert!(
                            !rec.gates[i],
                            "layer {l} row {i} gated on (length {length}, {cfg:?})"
                        );
                        assert!(
                            rec.conv.row(i).iter().all(|&v| v == 0.0),
                            "layer {l} conv row {i} nonzero"
                        );
                    }
                }
                pad = pool_mask(&conv_pad);
                for (i, &is_pad) in pad.iter().enumerate() {
                    if is_pad {
                        assert!(
                            rec.pooled.row(i).iter().all(|&v| v == 0.0),
                            "layer {l} pooled row {i} nonzero"
                        );
                    }
                }
            }
        }
    }
    assert!(
        padded_units > 1000,
        "only {padded_units} padding units exercised"
    );
}

pub fn interaction_stack_padding_is_exactly_zero() {
    let mut rng = Rng::new(22);
    let mut built = 0;
    let mut padded_cells = 0;
    while built < MODELS {
        let depth = rng.between(1, 2);
        let config = Arc2Config {
            dim: rng.between(1, 3),
            l_max: rng.between(6, 20),
            window: rng.between(1, 3),
            features: rng.between(1, 3),
            conv2d: (0..depth)
                .map(|_| ConvLayerSpec::new(rng.between(1, 3), rng.between(1, 3)))
                .collect(),
            activation: activation(&mut rng),
            hidden: vec![3],
            dropout: 0.0,
        };
        if config.stage_extents().is_err() {
            continue;
        }
        built += 1;
        let mut m = Arc2Model::<f64>::new(config.clone(), &mut rng).unwrap();
        scramble(&mut m, 2.0, &mut rng);
        for _ in 0..6 {
            let (lx, ly) = (rng.between(1, config.l_max), rng.between(1, config.l_max));
            let sx = sentence(lx, config.l_max, config.dim, &mut rng);
            let sy = sentence(ly, config.l_max, config.dim, &mut rng);
            let (_, trace) = m.forward(&sx, &sy, None).unwrap();
            let n = config.n();
            let mut pad: Vec<Vec<bool>> = (0..n)
                .map(|i| (0..n).map(|j| i >= lx && j >= ly).collect())
                .collect();
            for (l, (conv, (pooled, _))) in trace.convs.iter().zip(&trace.pools).enumerate() {
                if l > 0 {
                    pad = conv_mask_2d(&pad, config.conv2d[l - 1].window);
                }
                assert_eq!((conv.rows(), conv.cols()), (pad.len(), pad[0].len()));
                for (i, row) in pad.iter().enumerate() {
                    for (j, &is_pad) in row.iter().enumerate() {
                        if is_pad {
                            padded_cells += 1;
                            assert!(
                                !conv.gates[i * conv.cols() + j],
                                "conv {l} cell ({i},{j}) gated on"
                            );
                            assert!(
                                conv.cell(i, j).iter().all(|&v| v == 0.0),
                                "conv {l} cell ({i},{j}) nonzero"
                            );
                        }
                    }
                }
                pad = pool_mask_2d(&pad);
                for (i, row) in pad.iter().enumerate() {
                    for (j, &is_pad) in row.iter().enumerate() {
                        if is_pad {
                            assert!(
                                pooled.cell(i, j).iter().all(|&v| v == 0.0),
                                "pool {l} cell ({i},{j}) nonzero"
                            );
                        }
                    }
                }
            }
        }
    }
    assert!(
        padded_cells > 1000,
        "only {padded_cells} padding cells exercised"
    );
}
