//! Every model against a naive loop implementation written from the layer
//! definitions, on random small configurations.

use super::{act, activation, rows, scramble, sentence};
use arcmatch::conv::encode;
use arcmatch::{
    Activation, Arc1Model, Arc2Config, Arc2Model, ConvLayerSpec, MatchModel, MlpHead, Rng,
    SenMlpModel, SentenceModelConfig, SentenceModelParams, Tensor, WordEmbedModel,
};

const TOL: f64 = 1e-10;
const CONFIGS: usize = 50;

type Grid = Vec<Vec<Vec<f64>>>;

fn conv1d(
    z: &[Vec<f64>],
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    k: usize,
    a: Activation,
) -> Vec<Vec<f64>> {
    let f_in = z[0].len();
    let f_out = b.len();
    (0..z.len() + 1 - k)
        .map(|i| {
            let padding = (0..k).all(|t| z[i + t].iter().all(|&v| v == 0.0));
            (0..f_out)
                .map(|f| {
                    if padding {
                        return 0.0;
                    }
                    let mut s = b.data()[f];
                    for t in 0..k {
                        for c in 0..f_in {
                            s += w.at2(f, t * f_in + c) * z[i + t][c];
                        }
                    }
                    act(a, s)
                })
                .collect()
        })
        .collect()
}

fn pool1d(z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let f = z[0].len();
    (0..z.len().div_ceil(2))
        .map(|i| {
            (0..f)
                .map(|c| {
                    let other = if 2 * i + 1 < z.len() {
                        z[2 * i + 1][c]
                    } else {
                        0.0
                    };
                    z[2 * i][c].max(other)
                })
                .collect()
        })
        .collect()
}

fn global_pool(z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let f = z[0].len();
    vec![(0..f)
        .map(|c| z.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max))
        .collect()]
}

fn ref_encode(
    x: &Tensor<f64>,
    p: &SentenceModelParams<f64>,
    cfg: &SentenceModelConfig,
) -> Vec<f64> {
    let mut z = rows(x);
    for (l, layer) in p.layers.iter().enumerate() {
        let c = conv1d(&z, &layer.w, &layer.b, cfg.layers[l].window, cfg.activation);
        z = if cfg.global_pool {
            global_pool(&c)
        } else {
            pool1d(&c)
        };
    }
    z.concat()
}

fn ref_mlp(input: &[f64], head: &MlpHead<f64>) -> f64 {
    let mut v = input.to_vec();
    let last = head.layers.len() - 1;
    for (l, p) in head.layers.iter().enumerate() {
        v = (0..p.b.len())
            .map(|o| {
                let s = p.b.data()[o]
                    + v.iter()
                        .enumerate()
                        .map(|(i, x)| p.w.at2(o, i) * x)
                        .sum::<f64>();
                if l == last {
                    s
                } else {
                    act(head.activation, s)
                }
            })
            .collect();
    }
    v[0]
}

fn pool2d(z: &Grid) -> Grid {
    let (h, w, f) = (z.len(), z[0].len(), z[0][0].len());
    let at = |r: usize, c: usize, ch: usize| if r < h && c < w { z[r][c][ch] } else { 0.0 };
    (0..h.div_ceil(2))
        .map(|i| {
            (0..w.div_ceil(2))
                .map(|j| {
                    (0..f)
                        .map(|ch| {
                            at(2 * i, 2 * j, ch)
                                .max(at(2 * i, 2 * j + 1, ch))
                                .max(at(2 * i + 1, 2 * j, ch))
                                .max(at(2 * i + 1, 2 * j + 1, ch))
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn conv2d(z: &Grid, w: &Tensor<f64>, b: &Tensor<f64>, k: usize, a: Activation) -> Grid {
    let (h, wd, f_in) = (z.len(), z[0].len(), z[0][0].len());
    (0..h + 1 - k)
        .map(|i| {
            (0..wd + 1 - k)
                .map(|j| {
                    let mut patch = Vec::new();
                    for di in 0..k {
                        for dj in 0..k {
                            patch.extend_from_slice(&z[i + di][j + dj]);
                        }
                    }
                    let padding = patch.iter().all(|&v| v == 0.0);
                    (0..b.len())
                        .map(|f| {
                            if padding {
                                return 0.0;
                            }
                            let s = b.data()[f]
                                + (0..k * k * f_in)
                                    .map(|q| w.at2(f, q) * patch[q])
                                    .sum::<f64>();
                            act(a, s)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn ref_arc2(x: &Tensor<f64>, y: &Tensor<f64>, m: &Arc2Model<f64>) -> f64 {
    let c = &m.config;
    let (xr, yr) = (rows(x), rows(y));
    let (k, d) = (c.window, c.dim);
    let n = c.l_max + 1 - k;
    let zero_seg = |r: &[Vec<f64>], i: usize| (0..k).all(|t| r[i + t].iter().all(|&v| v == 0.0));
    let (w1, b1) = (&m.params.w1, &m.params.b1);
    let mut z: Grid = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let padding = zero_seg(&xr, i) && zero_seg(&yr, j);
                    (0..c.features)
                        .map(|f| {
                            if padding {
                                return 0.0;
                            }
                            let mut s = b1.data()[f];
                            for t in 0..k {
                                for e in 0..d {
                                    s += w1.at2(f, t * d + e) * xr[i + t][e];
                                    s += w1.at2(f, k * d + t * d + e) * yr[j + t][e];
                                }
                            }
                            act(c.activation, s)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    z = pool2d(&z);
    for (l, p) in m.params.conv2d.iter().enumerate() {
        z = pool2d(&conv2d(&z, &p.w, &p.b, c.conv2d[l].window, c.activation));
    }
    let flat: Vec<f64> = z.into_iter().flatten().flatten().collect();
    ref_mlp(&flat, &m.params.head)
}

fn random_sentence_config(rng: &mut Rng) -> SentenceModelConfig {
    loop {
        let global = rng.bernoulli(0.2);
        let depth = if global { 1 } else { rng.between(1, 3) };
        let cfg = SentenceModelConfig {
            dim: rng.between(1, 4),
            l_max: rng.between(3, 20),
            layers: (0..depth)
                .map(|_| ConvLayerSpec::new(rng.between(2, 3), rng.between(1, 4)))
                .collect(),
            activation: activation(rng),
            global_pool: global,
        };
        if cfg.stage_lengths().is_ok() {
            return cfg;
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * (1.0 + b.abs())
}

pub fn encode_matches_naive_loops() {
    let mut rng = Rng::new(11);
    for trial in 0..CONFIGS {
        let cfg = random_sentence_config(&mut rng);
        let mut p = SentenceModelParams::<f64>::init(&cfg, &mut rng).unwrap();
        for t in p.tensors_mut() {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform_range(-1.0, 1.0));
        }
        let s = sentence(rng.between(1, cfg.l_max), cfg.l_max, cfg.dim, &mut rng);
        let (got, _) = encode(&s, &p, &cfg).unwrap();
        let want = ref_encode(&s.x, &p, &cfg);
        assert_eq!(got.len(), want.len(), "trial {trial}: {cfg:?}");
        for (g, w) in got.data().iter().zip(&want) {
            assert!(close(*g, *w), "trial {trial}: {g} vs {w} for {cfg:?}");
        }
    }
}

pub fn arc1_score_matches_naive_loops() {
    let mut rng = Rng::new(12);
    for trial in 0..CONFIGS {
        let cx = random_sentence_config(&mut rng);
        let tie = rng.bernoulli(0.5);
        let cy = if tie {
            cx.clone()
        } else {
            let mut c = random_sentence_config(&mut rng);
            c.activation = cx.activation;
            c
        };
        let hidden: Vec<usize> = (0..rng.between(0, 2)).map(|_| rng.between(1, 5)).collect();
        let mut m =
            Arc1Model::<f64>::new(cx.clone(), cy.clone(), tie, &hidden, 0.0, &mut rng).unwrap();
        scramble(&mut m, 1.0, &mut rng);
        let sx = sentence(rng.between(1, cx.l_max), cx.l_max, cx.dim, &mut rng);
        let sy = sentence(rng.between(1, cy.l_max), cy.l_max, cy.dim, &mut rng);
        let mut joint = ref_encode(&sx.x, &m.params_x, &cx);
        joint.extend(ref_encode(&sy.x, m.encoder_y(), &cy));
        let want = ref_mlp(&joint, &m.head);
        let got = m.score(&sx, &sy).unwrap();
        assert!(close(got, want), "trial {trial}: {got} vs {want}");
    }
}

pub fn arc2_score_matches_naive_loops() {
    let mut rng = Rng::new(13);
    let mut done = 0;
    while done < CONFIGS {
        let depth = rng.between(1, 2);
        let config = Arc2Config {
            dim: rng.between(1, 3),
            l_max: rng.between(4, 16),
            window: rng.between(1, 3),
            features: rng.between(1, 3),
            conv2d: (0..depth)
                .map(|_| ConvLayerSpec::new(rng.between(1, 2), rng.between(1, 3)))
                .collect(),
            activation: activation(&mut rng),
            hidden: (0..rng.between(0, 2)).map(|_| rng.between(1, 4)).collect(),
            dropout: 0.0,
        };
        if config.stage_extents().is_err() {
            continue;
        }
        let mut m = Arc2Model::<f64>::new(config.clone(), &mut rng).unwrap();
        scramble(&mut m, 1.0, &mut rng);
        let sx = sentence(
            rng.between(1, config.l_max),
            config.l_max,
            config.dim,
            &mut rng,
        );
        let sy = sentence(
            rng.between(1, config.l_max),
            config.l_max,
            config.dim,
            &mut rng,
        );
        let got = m.score(&sx, &sy).unwrap();
        let want = ref_arc2(&sx.x, &sy.x, &m);
        assert!(
            close(got, want),
            "config {done}: {got} vs {want} for {config:?}"
        );
        done += 1;
    }
}

pub fn baselines_match_naive_loops() {
    let mut rng = Rng::new(14);
    for trial in 0..CONFIGS {
        let (dim, lx, ly) = (rng.between(1, 4), rng.between(2, 9), rng.between(2, 9));
        let hidden: Vec<usize> = (0..rng.between(0, 2)).map(|_| rng.between(1, 5)).collect();
        let a = activation(&mut rng);
        let sx = sentence(rng.between(1, lx), lx, dim, &mut rng);
        let sy = sentence(rng.between(1, ly), ly, dim, &mut rng);

        let mut we = WordEmbedModel::<f64>::new(dim, lx, ly, &hidden, a, 0.0, &mut rng).unwrap();
        scramble(&mut we, 1.0, &mut rng);
        let col_sum = |t: &Tensor<f64>| {
            (0..dim)
                .map(|c| rows(t).iter().map(|r| r[c]).sum::<f64>())
                .collect::<Vec<f64>>()
        };
        let want = ref_mlp(&[col_sum(&sx.x), col_sum(&sy.x)].concat(), &we.head);
        let got = we.score(&sx, &sy).unwrap();
        assert!(close(got, want), "wordembed trial {trial}: {got} vs {want}");

        let mut sm = SenMlpModel::<f64>::new(dim, lx, ly, &hidden, a, 0.0, &mut rng).unwrap();
        scramble(&mut sm, 1.0, &mut rng);
        let want = ref_mlp(
            &[rows(&sx.x).concat(), rows(&sy.x).concat()].concat(),
            &sm.head,
        );
        let got = sm.score(&sx, &sy).unwrap();
        assert!(close(got, want), "senmlp trial {trial}: {got} vs {want}");
    }
}
