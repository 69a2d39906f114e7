//! An ARC-I model embedded into ARC-II reproduces its encoders inside the
//! interaction grid.

use super::{activation, scramble, sentence};
use arcmatch::arc2::InteractionTensor;
use arcmatch::{
    embed_arc1_as_arc2, Arc1Model, ConvLayerSpec, MatchModel, Rng, SentenceModelConfig, Tensor,
};

const TRIALS: usize = 20;

/// Largest 2×2 minor of channel `ch`; zero iff the map has rank at most one.
fn max_minor(z: &InteractionTensor<f64>, ch: usize) -> f64 {
    let m = |i: usize, j: usize| z.cell(i, j)[ch];
    let mut worst: f64 = 0.0;
    for i in 0..z.rows() {
        for i2 in i + 1..z.rows() {
            for j in 0..z.cols() {
                for j2 in j + 1..z.cols() {
                    worst = worst.max((m(i, j) * m(i2, j2) - m(i, j2) * m(i2, j)).abs());
                }
            }
        }
    }
    worst
}

/// Largest gap between a grid's channel block and a sentence-layer output
/// broadcast along the other sentence's axis.
fn broadcast_gap(
    grid: &InteractionTensor<f64>,
    offset: usize,
    layer: &Tensor<f64>,
    along_rows: bool,
) -> f64 {
    let f = layer.shape()[1];
    let mut worst: f64 = 0.0;
    for i in 0..grid.rows() {
        for j in 0..grid.cols() {
            let pos = if along_rows { i } else { j };
            for c in 0..f {
                worst = worst.max((grid.cell(i, j)[offset + c] - layer.at2(pos, c)).abs());
            }
        }
    }
    worst
}

pub fn arc1_embeds_into_arc2() {
    let mut rng = Rng::new(31);
    let mut done = 0;
    let mut with_last = 0;
    while done < TRIALS {
        let layers = vec![
            ConvLayerSpec::new(rng.between(2, 3), rng.between(1, 4)),
            ConvLayerSpec::new(rng.between(2, 3), rng.between(1, 4)),
        ];
        let cfg = SentenceModelConfig {
            dim: rng.between(1, 4),
            l_max: rng.between(8, 20),
            layers,
            activation: activation(&mut rng),
            global_pool: false,
        };
        if cfg.stage_lengths().is_err() {
            continue;
        }
        let tie = rng.bernoulli(0.5);
        let mut arc1 =
            Arc1Model::<f64>::new(cfg.clone(), cfg.clone(), tie, &[4], 0.0, &mut rng).unwrap();
        scramble(&mut arc1, 1.0, &mut rng);
        let last = rng
            .bernoulli(0.5)
            .then(|| ConvLayerSpec::new(1, 2 * rng.between(1, 2)));
        let Ok(arc2) = embed_arc1_as_arc2(&arc1, last, &[3], &mut rng) else {
            continue;
        };
        // A ReLU layer can emit an all-zero row inside the sentence; ARC-I
        // gates it off while the pair patch still sees the other sentence.
        // The equivalence is stated for inputs where that does not happen.
        let Some((sx, sy, t1)) = (0..20).find_map(|_| {
            let sx = sentence(cfg.l_max, cfg.l_max, cfg.dim, &mut rng);
            let sy = sentence(cfg.l_max, cfg.l_max, cfg.dim, &mut rng);
            let (_, t1) = arc1.forward(&sx, &sy, None).unwrap();
            let all_on = t1
                .trace_x
                .layers
                .iter()
                .chain(&t1.trace_y.layers)
                .all(|r| r.gates.iter().all(|&g| g));
            all_on.then_some((sx, sy, t1))
        }) else {
            continue;
        };
        done += 1;
        with_last += usize::from(last.is_some());

        let (_, t2) = arc2.forward(&sx, &sy, None).unwrap();
        let (f1, f2) = (cfg.layers[0].features, cfg.layers[1].features);

        for ch in 0..2 * f1 {
            let minor = max_minor(&t2.convs[0], ch);
            assert!(
                minor < 1e-8,
                "trial {done}: first-layer channel {ch} not rank one ({minor:e})"
            );
        }

        let (x0, y0) = (&t1.trace_x.layers[0], &t1.trace_y.layers[0]);
        let (x1, y1) = (&t1.trace_x.layers[1], &t1.trace_y.layers[1]);
        let checks = [
            ("conv1 x", broadcast_gap(&t2.convs[0], 0, &x0.conv, true)),
            ("conv1 y", broadcast_gap(&t2.convs[0], f1, &y0.conv, false)),
            (
                "pool1 x",
                broadcast_gap(&t2.pools[0].0, 0, &x0.pooled, true),
            ),
            (
                "pool1 y",
                broadcast_gap(&t2.pools[0].0, f1, &y0.pooled, false),
            ),
            ("conv2 x", broadcast_gap(&t2.convs[1], 0, &x1.conv, true)),
            ("conv2 y", broadcast_gap(&t2.convs[1], f2, &y1.conv, false)),
            (
                "pool2 x",
                broadcast_gap(&t2.pools[1].0, 0, &x1.pooled, true),
            ),
            (
                "pool2 y",
                broadcast_gap(&t2.pools[1].0, f2, &y1.pooled, false),
            ),
        ];
        for (stage, gap) in checks {
            assert!(gap < 1e-6, "trial {done}: {stage} differs by {gap:e}");
        }
    }
    assert!(with_last > 0);
}

pub fn mismatched_encoders_are_rejected() {
    let mut rng = Rng::new(32);
    let cx = SentenceModelConfig::uniform(3, 16, 2, 3, 4);
    let cy = SentenceModelConfig::uniform(3, 16, 2, 3, 5);
    let arc1 = Arc1Model::<f64>::new(cx.clone(), cy, false, &[4], 0.0, &mut rng).unwrap();
    assert!(embed_arc1_as_arc2(&arc1, None, &[3], &mut rng).is_err());
    let shallow = SentenceModelConfig::uniform(3, 16, 1, 3, 4);
    let arc1 = Arc1Model::<f64>::new(shallow.clone(), shallow, true, &[4], 0.0, &mut rng).unwrap();
    assert!(embed_arc1_as_arc2(&arc1, None, &[3], &mut rng).is_err());
}
