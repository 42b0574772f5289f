//! Independent oracles shared by the property tests and the acceptance suite.
//!
//! Everything here is written against plain `Vec<f64>` rows and literal loops so
//! that it shares no code path with the tape-based implementations under test.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssvmr_core::autodiff::{Tape, Var};
use ssvmr_core::backbone::{embed_music, embed_videos, BranchVars, Dims, ParamVars};
use ssvmr_core::losses::{mix_loss, rdrop_loss, triplet_loss, LossWeights, MixInputs, MixWeightConvention, StructureSign, TripleSampling};
use ssvmr_core::Tensor;

pub type Rows = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut impl Rng, n: usize, d: usize, scale: f64) -> Rows {
    (0..n).map(|_| (0..d).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()).collect()
}

pub fn tensor(rows: &Rows) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

pub fn rows_of(t: &Tensor) -> Rows {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-anchor triplet terms by literal enumeration of every `(i, j)` and `(i, j, k)`.
pub fn triplet_literal(v: &Rows, m: &Rows, iv: &Rows, im: &Rows, w: &LossWeights) -> Vec<f64> {
    let b = v.len();
    let s = w.structure_sign.factor();
    let structure = |x: &Rows, raw: &Rows, i: usize| -> f64 {
        let mut acc = 0.0;
        for j in 0..b {
            for k in 0..b {
                if j == i || k == i || k == j {
                    continue;
                }
                let (gij, gik) = (dot(&x[i], &x[j]), dot(&x[i], &x[k]));
                let (tij, tik) = (dot(&raw[i], &raw[j]), dot(&raw[i], &raw[k]));
                let c = sgn(gik - gij) - sgn(tik - tij);
                acc += s * c * (gij - gik);
            }
        }
        acc
    };
    (0..b)
        .map(|i| {
            let mut l1 = 0.0;
            let mut l2 = 0.0;
            for j in 0..b {
                if j == i {
                    continue;
                }
                l1 += (w.margin + dot(&v[i], &m[j]) - dot(&v[i], &m[i])).max(0.0);
                l2 += (w.margin + dot(&m[i], &v[j]) - dot(&m[i], &v[i])).max(0.0);
            }
            w.lambda1 * l1 + w.lambda2 * l2 + w.lambda3 * structure(v, iv, i) + w.lambda4 * structure(m, im, i)
        })
        .collect()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

/// `sum_r (KL(p1_r || p2_r) + KL(p2_r || p1_r)) / 2` over the listed rows.
pub fn rdrop_literal(l1: &Rows, l2: &Rows, rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&r| {
            let (p, q) = (softmax(&l1[r]), softmax(&l2[r]));
            (kl(&p, &q) + kl(&q, &p)) / 2.0
        })
        .sum()
}

pub struct MixCase {
    pub vhat: Rows,
    pub m1: Rows,
    pub m2: Rows,
    pub iv: Rows,
    pub im1: Rows,
    pub im2: Rows,
    pub lambdas: Vec<f64>,
}

pub fn mix_literal(c: &MixCase, w: &LossWeights, convention: MixWeightConvention) -> f64 {
    let a = triplet_literal(&c.vhat, &c.m1, &c.iv, &c.im1, w);
    let b = triplet_literal(&c.vhat, &c.m2, &c.iv, &c.im2, w);
    let mut total = 0.0;
    for i in 0..c.lambdas.len() {
        let lam = match convention {
            MixWeightConvention::Paper => c.lambdas[i],
            MixWeightConvention::Swapped => 1.0 - c.lambdas[i],
        };
        total += lam * a[i] + (1.0 - lam) * b[i];
    }
    total
}

pub fn random_weights(rng: &mut impl Rng) -> LossWeights {
    LossWeights {
        lambda1: rng.random_range(0.1..4.0),
        lambda2: rng.random_range(0.1..4.0),
        lambda3: rng.random_range(0.0..1.0),
        lambda4: rng.random_range(0.0..1.0),
        margin: rng.random_range(0.0..3.0),
        structure_sign: if rng.random::<bool>() { StructureSign::Corrective } else { StructureSign::AsPrinted },
    }
}

/// Worst absolute gap between the tape losses and the literal oracles over `cases` random batches.
pub fn loss_oracle_gaps(cases: usize, seed: u64) -> [f64; 3] {
    let mut r = rng(seed);
    let mut worst = [0.0f64; 3];
    let sampling = TripleSampling::default();
    for _ in 0..cases {
        let b = r.random_range(3..=6);
        let d = r.random_range(1..=4);
        let w = random_weights(&mut r);
        let (v, m) = (random_rows(&mut r, b, d, 1.5), random_rows(&mut r, b, d, 1.5));
        let (iv, im) = (random_rows(&mut r, b, 5, 1.0), random_rows(&mut r, b, 3, 1.0));

        let mut tape = Tape::new();
        let (vv, mv) = (tape.param(tensor(&v)), tape.param(tensor(&m)));
        let out = triplet_loss(&mut tape, vv, mv, &tensor(&iv), &tensor(&im), &w, &sampling).unwrap();
        let lit = triplet_literal(&v, &m, &iv, &im, &w);
        let got = tape.value(out.per_sample).data().to_vec();
        for (g, l) in got.iter().zip(&lit) {
            worst[0] = worst[0].max((g - l).abs());
        }
        worst[0] = worst[0].max((tape.value(out.total).item().unwrap() - lit.iter().sum::<f64>()).abs());

        let (l1, l2) = (random_rows(&mut r, b, d + 1, 3.0), random_rows(&mut r, b, d + 1, 3.0));
        let rows: Vec<usize> = (0..b).filter(|_| r.random::<bool>()).collect();
        let (a1, a2) = (tape.param(tensor(&l1)), tape.param(tensor(&l2)));
        let rd = rdrop_loss(&mut tape, a1, a2, &rows).unwrap();
        worst[1] = worst[1].max((tape.value(rd).item().unwrap() - rdrop_literal(&l1, &l2, &rows)).abs());

        let case = MixCase {
            vhat: v.clone(),
            m1: m.clone(),
            m2: random_rows(&mut r, b, d, 1.5),
            iv: iv.clone(),
            im1: im.clone(),
            im2: random_rows(&mut r, b, 3, 1.0),
            lambdas: (0..b).map(|_| r.random_range(0.05..0.95)).collect(),
        };
        let convention = if r.random::<bool>() { MixWeightConvention::Paper } else { MixWeightConvention::Swapped };
        let (x, y1, y2) = (tape.param(tensor(&case.vhat)), tape.param(tensor(&case.m1)), tape.param(tensor(&case.m2)));
        let inputs = MixInputs {
            mixed_video: x,
            music1: y1,
            music2: y2,
            intra_mixed: &tensor(&case.iv),
            intra_music1: &tensor(&case.im1),
            intra_music2: &tensor(&case.im2),
            lambdas: &case.lambdas,
        };
        let ml = mix_loss(&mut tape, &inputs, &w, &sampling, convention).unwrap();
        worst[2] = worst[2].max((tape.value(ml).item().unwrap() - mix_literal(&case, &w, convention)).abs());
    }
    worst
}

/// 0-based rank of `truth` after sorting by descending score, ties to the smaller index.
pub fn brute_rank(scores: &[f64], truth: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&i| i == truth).unwrap()
}

pub fn brute_recall(scores: &Rows, truth: &[usize], k: usize) -> f64 {
    let hits = scores.iter().zip(truth).filter(|(s, &t)| brute_rank(s, t) < k).count();
    hits as f64 / scores.len() as f64
}

/// `max(min(round_half_up(tenths / 10 * len_v1), len_v2), 1)` capped at `len_v1`,
/// in exact integer arithmetic.
pub fn span_length_direct(len_v1: usize, len_v2: usize, tenths: usize) -> usize {
    let rounded = (2 * tenths * len_v1 + 10) / 20;
    rounded.min(len_v2).max(1).min(len_v1.max(1))
}

/// Start of the window of length `len` with the smallest (or largest) sum, ties to the smallest start.
pub fn best_window(s: &[f64], len: usize, lowest: bool) -> usize {
    let mut best = 0;
    let mut best_sum = s[0..len].iter().sum::<f64>();
    for start in 1..=s.len() - len {
        let sum: f64 = s[start..start + len].iter().sum();
        if (lowest && sum < best_sum) || (!lowest && sum > best_sum) {
            best = start;
            best_sum = sum;
        }
    }
    best
}

type Forward = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

/// A randomly shaped differentiable network with its parameter values.
pub struct NetCase {
    pub name: &'static str,
    pub params: Vec<Tensor>,
    pub forward: Forward,
}

impl NetCase {
    pub fn loss(&self, params: &[Tensor]) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let out = (self.forward)(&mut tape, &vars);
        tape.value(out).item().unwrap()
    }

    pub fn analytic(&self) -> Vec<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let out = (self.forward)(&mut tape, &vars);
        let g = tape.backward(out).unwrap();
        vars.iter().map(|&v| g.get(v)).collect()
    }

    /// Normwise relative error `max|g - n| / max(max|g|, max|n|)` between the tape
    /// gradient `g` and central differences `n`, over every parameter entry.
    pub fn max_relative_error(&self, h: f64) -> f64 {
        let analytic = self.analytic();
        let (mut diff, mut scale) = (0.0f64, 1e-12f64);
        for (p, a) in analytic.iter().enumerate() {
            for (e, &g) in a.data().iter().enumerate() {
                let shifted = |delta: f64| {
                    let mut ps = self.params.clone();
                    let t = &ps[p];
                    let mut data = t.data().to_vec();
                    data[e] += delta;
                    ps[p] = Tensor::new(t.rows(), t.cols(), data).unwrap();
                    self.loss(&ps)
                };
                let n = (shifted(h) - shifted(-h)) / (2.0 * h);
                diff = diff.max((g - n).abs());
                scale = scale.max(g.abs()).max(n.abs());
            }
        }
        diff / scale
    }
}

fn rand_tensor(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    tensor(&random_rows(r, rows, cols, scale))
}

/// One of several network families, shapes and values drawn from `seed`.
pub fn random_net(seed: u64) -> NetCase {
    let mut r = rng(seed);
    let n = r.random_range(3..=5);
    let d = r.random_range(2..=4);
    let h = r.random_range(2..=4);
    let c = r.random_range(2..=4);
    match seed % 6 {
        0 => {
            // tanh MLP with a log-softmax cross-entropy head
            let target =
                Tensor::from_rows(&(0..n).map(|i| (0..c).map(|j| f64::from(u8::from(j == i % c))).collect::<Vec<_>>()).collect::<Vec<_>>())
                    .unwrap();
            let params = vec![
                rand_tensor(&mut r, n, d, 1.0),
                rand_tensor(&mut r, d, h, 1.0),
                rand_tensor(&mut r, 1, h, 0.5),
                rand_tensor(&mut r, h, c, 1.0),
            ];
            NetCase {
                name: "tanh-mlp/log-softmax",
                params,
                forward: Box::new(move |t, p| {
                    let x = t.matmul(p[0], p[1]).unwrap();
                    let x = t.add_row(x, p[2]).unwrap();
                    let x = t.tanh(x).unwrap();
                    let o = t.matmul(x, p[3]).unwrap();
                    let lp = t.log_softmax(o).unwrap();
                    let picked = t.mul_const(lp, target.clone()).unwrap();
                    let s = t.sum_all(picked).unwrap();
                    t.scale(s, -1.0).unwrap()
                }),
            }
        }
        1 => {
            // relu layer, softmax, normalized output
            let params = vec![
                rand_tensor(&mut r, n, d, 1.0),
                rand_tensor(&mut r, d, h, 1.0),
                rand_tensor(&mut r, h, c, 1.0),
                rand_tensor(&mut r, n, c, 1.0),
            ];
            NetCase {
                name: "relu/softmax/l2",
                params,
                forward: Box::new(|t, p| {
                    let x = t.matmul(p[0], p[1]).unwrap();
                    let x = t.relu(x).unwrap();
                    let o = t.matmul(x, p[2]).unwrap();
                    let s = t.softmax(o).unwrap();
                    let m = t.mul(s, p[3]).unwrap();
                    let nrm = t.l2_norm(m).unwrap();
                    let extra = t.dot(p[3], p[3]).unwrap();
                    let extra = t.scale(extra, 0.1).unwrap();
                    t.add(nrm, extra).unwrap()
                }),
            }
        }
        2 => {
            // row reductions, column broadcasts, exp and log
            let params = vec![rand_tensor(&mut r, n, d, 0.8), rand_tensor(&mut r, n, 1, 0.8), rand_tensor(&mut r, 1, d, 0.8)];
            NetCase {
                name: "reductions/exp/log",
                params,
                forward: Box::new(|t, p| {
                    let x = t.sub_col(p[0], p[1]).unwrap();
                    let x = t.add_row(x, p[2]).unwrap();
                    let e = t.exp(x).unwrap();
                    let e = t.add_scalar(e, 1.0).unwrap();
                    let l = t.log(e).unwrap();
                    let rows = t.sum_cols(l).unwrap();
                    let mean = t.mean_rows(x).unwrap();
                    let q = t.dot(mean, p[2]).unwrap();
                    let s = t.sum_all(rows).unwrap();
                    let m = t.max_with_zero(x).unwrap();
                    let m = t.sum_all(m).unwrap();
                    let s = t.add(s, q).unwrap();
                    t.add(s, m).unwrap()
                }),
            }
        }
        3 => {
            // row selection and reassembly
            let idx: Vec<usize> = (0..n + 2).map(|_| r.random_range(0..n)).collect();
            let start = r.random_range(0..n - 1);
            let params = vec![rand_tensor(&mut r, n, d, 1.0), rand_tensor(&mut r, n, d, 1.0)];
            NetCase {
                name: "gather/slice/concat/transpose",
                params,
                forward: Box::new(move |t, p| {
                    let g = t.gather_rows(p[0], idx.clone()).unwrap();
                    let sl = t.slice_rows(p[1], start, 2).unwrap();
                    let cat = t.concat_rows(&[g, sl]).unwrap();
                    let tr = t.transpose(cat).unwrap();
                    let gram = t.matmul(cat, tr).unwrap();
                    let gram = t.tanh(gram).unwrap();
                    let diff = t.sub(p[0], p[1]).unwrap();
                    let sq = t.mul(diff, diff).unwrap();
                    let a = t.sum_all(gram).unwrap();
                    let b = t.sum_all(sq).unwrap();
                    t.add(a, b).unwrap()
                }),
            }
        }
        4 => {
            // triplet, R-Drop and mix objectives on free embeddings
            let (iv, im) = (rand_tensor(&mut r, n, 3, 1.0), rand_tensor(&mut r, n, 3, 1.0));
            let w = random_weights(&mut r);
            let lambdas: Vec<f64> = (0..n).map(|_| r.random_range(0.1..0.9)).collect();
            let rows: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
            let params = vec![rand_tensor(&mut r, n, d, 1.0), rand_tensor(&mut r, n, d, 1.0), rand_tensor(&mut r, n, d, 1.0)];
            NetCase {
                name: "triplet/rdrop/mix",
                params,
                forward: Box::new(move |t, p| {
                    let s = TripleSampling::default();
                    let tl = triplet_loss(t, p[0], p[1], &iv, &im, &w, &s).unwrap();
                    let rd = rdrop_loss(t, p[1], p[2], &rows).unwrap();
                    let inputs = MixInputs {
                        mixed_video: p[0],
                        music1: p[1],
                        music2: p[2],
                        intra_mixed: &iv,
                        intra_music1: &im,
                        intra_music2: &iv,
                        lambdas: &lambdas,
                    };
                    let ml = mix_loss(t, &inputs, &w, &s, MixWeightConvention::Paper).unwrap();
                    let a = t.add(tl.total, rd).unwrap();
                    t.add(a, ml).unwrap()
                }),
            }
        }
        _ => {
            // both embedding branches with a fixed dropout mask, then the triplet loss
            let dims = Dims { d_v: d, d_m: d + 1, hidden: h, d_e: c };
            let frames: Vec<Tensor> = (0..n)
                .map(|_| {
                    let f = r.random_range(1..=3);
                    rand_tensor(&mut r, f, d, 1.0)
                })
                .collect();
            let music = rand_tensor(&mut r, n, d + 1, 1.0);
            let (iv, im) = (rand_tensor(&mut r, n, d, 1.0), music.clone());
            let mask_seed: u64 = r.random();
            let w = random_weights(&mut r);
            let params = vec![
                rand_tensor(&mut r, d, h, 1.0),
                rand_tensor(&mut r, 1, h, 0.3),
                rand_tensor(&mut r, h, c, 1.0),
                rand_tensor(&mut r, 1, c, 0.3),
                rand_tensor(&mut r, d + 1, h, 1.0),
                rand_tensor(&mut r, 1, h, 0.3),
                rand_tensor(&mut r, h, c, 1.0),
                rand_tensor(&mut r, 1, c, 0.3),
            ];
            NetCase {
                name: "backbone/triplet",
                params,
                forward: Box::new(move |t, p| {
                    let vars = ParamVars {
                        video: BranchVars { w1: p[0], b1: p[1], w2: p[2], b2: p[3] },
                        music: BranchVars { w1: p[4], b1: p[5], w2: p[6], b2: p[7] },
                        dims,
                    };
                    let mut mask = rng(mask_seed);
                    let refs: Vec<&Tensor> = frames.iter().collect();
                    let v = embed_videos(t, &vars, &refs, 0.3, &mut mask, false).unwrap();
                    let m = embed_music(t, &vars, &music, 0.3, &mut mask).unwrap();
                    triplet_loss(t, v.embedding, m, &iv, &im, &w, &TripleSampling::default()).unwrap().total
                }),
            }
        }
    }
}
