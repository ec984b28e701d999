//! Independent scalar loss for finite-difference checks.
//!
//! Everything is recomputed from first principles (double-sum DCT, inline
//! color formulas). Rounding is replaced by
//! `round(u) + (u − round u)³ − δ`, with `δ = (u₀ − round u₀)³` frozen at the
//! base point, so the value equals true rounding at the base and the slope
//! is the cubic surrogate's.

use std::f64::consts::PI;
use std::sync::OnceLock;

pub type Coeffs = [f64; 64];

#[derive(Clone)]
pub struct Problem {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, one entry per pixel.
    pub rgb: Vec<[f64; 3]>,
    /// Effective tables: `[luma, chroma]`, index `v·8 + u`.
    pub tables: [Coeffs; 2],
    /// Per-block logits `[luma, chroma]`, or `None` for `A ≡ 1`.
    pub logits: Option<[Vec<Coeffs>; 2]>,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Result of one evaluation.
pub struct Eval {
    pub loss: f64,
    /// Clamped reconstruction, interleaved RGB over the unpadded area.
    pub samples: Vec<f64>,
    /// Attention weights `[luma, chroma]` flattened over blocks.
    pub attention: [Vec<f64>; 2],
    /// `u` per channel and block.
    pub pre_round: [Vec<Coeffs>; 3],
    /// Which reconstructed RGB samples were clamped.
    pub clamped: Vec<bool>,
}

fn basis(k: usize, n: usize) -> f64 {
    static TABLE: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|k| {
            let c = if k == 0 { (0.5f64).sqrt() } else { 1.0 };
            std::array::from_fn(|n| 0.5 * c * (((2 * n + 1) as f64) * (k as f64) * PI / 16.0).cos())
        })
    })[k][n]
}

fn round_away(x: f64) -> f64 {
    if x >= 0.0 {
        (x + 0.5).floor()
    } else {
        -((-x + 0.5).floor())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Problem {
    fn blocks(&self) -> (usize, usize) {
        (self.height.div_ceil(8), self.width.div_ceil(8))
    }

    fn sample(&self, c: usize, x: usize, y: usize) -> f64 {
        let [r, g, b] = self.rgb[y.min(self.height - 1) * self.width + x.min(self.width - 1)];
        let v = match c {
            0 => 0.299 * r + 0.587 * g + 0.114 * b,
            1 => 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
            _ => 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b,
        };
        v.clamp(0.0, 255.0)
    }

    pub fn attention(&self, kind: usize, block: usize, k: usize) -> f64 {
        self.logits.as_ref().map_or(1.0, |l| sigmoid(l[kind][block][k]))
    }

    /// Loss with rounding residual offsets `frozen` (per channel, block, coefficient);
    /// `None` uses the offsets of this very point.
    pub fn eval(&self, frozen: Option<&[Vec<Coeffs>; 3]>) -> Eval {
        let (by, bx) = self.blocks();
        let (pw, ph) = (bx * 8, by * 8);
        let mut recon = vec![[0.0f64; 3]; pw * ph];
        let mut pre_round: [Vec<Coeffs>; 3] = Default::default();
        for c in 0..3 {
            let kind = usize::from(c > 0);
            for b in 0..by * bx {
                let (x0, y0) = ((b % bx) * 8, (b / bx) * 8);
                let mut u = [0.0; 64];
                let mut deq = [0.0; 64];
                for v in 0..8 {
                    for h in 0..8 {
                        let mut f = 0.0;
                        for y in 0..8 {
                            for x in 0..8 {
                                f += basis(v, y) * basis(h, x) * (self.sample(c, x0 + x, y0 + y) - 128.0);
                            }
                        }
                        let k = v * 8 + h;
                        let q = self.tables[kind][k];
                        let uk = f * self.attention(kind, b, k) / q;
                        let r = round_away(uk);
                        let offset = match frozen {
                            Some(fz) => fz[c][b][k],
                            None => (uk - r).powi(3),
                        };
                        u[k] = uk;
                        deq[k] = (r + (uk - r).powi(3) - offset) * q;
                    }
                }
                for y in 0..8 {
                    for x in 0..8 {
                        let mut s = 0.0;
                        for v in 0..8 {
                            for h in 0..8 {
                                s += basis(v, y) * basis(h, x) * deq[v * 8 + h];
                            }
                        }
                        recon[(y0 + y) * pw + x0 + x][c] = s + 128.0;
                    }
                }
                pre_round[c].push(u);
            }
        }
        let mut clamped = Vec::with_capacity(self.width * self.height * 3);
        let mut samples = Vec::with_capacity(self.width * self.height * 3);
        let mut sq = 0.0;
        for y in 0..self.height {
            for x in 0..self.width {
                let [yy, cb, cr] = recon[y * pw + x];
                let (cb, cr) = (cb - 128.0, cr - 128.0);
                let out = [yy + 1.402 * cr, yy - 0.344136 * cb - 0.714136 * cr, yy + 1.772 * cb];
                let orig = self.rgb[y * self.width + x];
                for c in 0..3 {
                    clamped.push(!(0.0..=255.0).contains(&out[c]));
                    samples.push(out[c].clamp(0.0, 255.0));
                    let d = out[c].clamp(0.0, 255.0) - orig[c];
                    sq += d * d;
                }
            }
        }
        let mse = sq / (self.width * self.height * 3) as f64;
        let recip: f64 = self.tables.iter().flatten().map(|q| 1.0 / q).sum();
        let attention: [Vec<f64>; 2] = std::array::from_fn(|kind| {
            (0..by * bx)
                .flat_map(|b| (0..64).map(move |k| (b, k)))
                .map(|(b, k)| self.attention(kind, b, k))
                .collect()
        });
        let mean = |a: &Vec<f64>| a.iter().sum::<f64>() / a.len() as f64;
        let loss = self.lambda * mse + self.alpha * recip + self.beta * (mean(&attention[0]) + mean(&attention[1]));
        Eval {
            loss,
            samples,
            attention,
            pre_round,
            clamped,
        }
    }
}

/// Distance of `u` to the nearest rounding tie `m + 0.5`.
pub fn tie_distance(u: f64) -> f64 {
    ((u.abs() - u.abs().floor()) - 0.5).abs()
}

/// A perturbable scalar of the problem.
#[derive(Clone, Copy, Debug)]
pub enum Coord {
    Table { kind: usize, k: usize },
    Logit { kind: usize, block: usize, k: usize },
}

impl Coord {
    pub fn nudge(self, p: &mut Problem, delta: f64) {
        match self {
            Coord::Table { kind, k } => p.tables[kind][k] += delta,
            Coord::Logit { kind, block, k } => p.logits.as_mut().expect("logits")[kind][block][k] += delta,
        }
    }

    /// Pre-round values this coordinate feeds.
    pub fn affected(self, pre: &[Vec<Coeffs>; 3]) -> Vec<f64> {
        let channels: &[usize] = match self {
            Coord::Table { kind: 0, .. } | Coord::Logit { kind: 0, .. } => &[0],
            _ => &[1, 2],
        };
        let mut out = Vec::new();
        for &c in channels {
            match self {
                Coord::Table { k, .. } => out.extend(pre[c].iter().map(|b| b[k])),
                Coord::Logit { block, k, .. } => out.push(pre[c][block][k]),
            }
        }
        out
    }
}

/// Outcome of one central difference.
pub enum Difference {
    Value(f64),
    /// Too close to a rounding tie or a clamp boundary.
    Excluded,
}

/// Central differences around a fixed base point.
pub struct Checker {
    base: Problem,
    reference: Eval,
    offsets: [Vec<Coeffs>; 3],
}

impl Checker {
    pub fn new(base: Problem) -> Self {
        let reference = base.eval(None);
        let offsets = reference
            .pre_round
            .clone()
            .map(|ch| ch.into_iter().map(|b| b.map(|u| (u - round_away(u)).powi(3))).collect());
        Self {
            base,
            reference,
            offsets,
        }
    }

    pub fn loss(&self) -> f64 {
        self.reference.loss
    }

    /// Central difference along `coord` with step `h`; excluded when an
    /// affected pre-round value lies within `tie_margin` of a rounding tie or
    /// the step changes which samples clamp.
    pub fn difference(&self, coord: Coord, h: f64, tie_margin: f64) -> Difference {
        if coord
            .affected(&self.reference.pre_round)
            .iter()
            .any(|&u| tie_distance(u) < tie_margin)
        {
            return Difference::Excluded;
        }
        let mut up = self.base.clone();
        coord.nudge(&mut up, h);
        let mut down = self.base.clone();
        coord.nudge(&mut down, -h);
        let (eu, ed) = (up.eval(Some(&self.offsets)), down.eval(Some(&self.offsets)));
        if eu.clamped != self.reference.clamped || ed.clamped != self.reference.clamped {
            return Difference::Excluded;
        }
        // L(up) − L(down) summed term by term so cancellation stays local
        let b = &self.base;
        let n = eu.samples.len() as f64;
        let distortion: f64 = eu
            .samples
            .iter()
            .zip(&ed.samples)
            .enumerate()
            .map(|(i, (a, d))| {
                let orig = b.rgb[i / 3][i % 3];
                (a - d) * (a + d - 2.0 * orig)
            })
            .sum::<f64>()
            / n;
        let rate_q: f64 = up
            .tables
            .iter()
            .flatten()
            .zip(down.tables.iter().flatten())
            .map(|(p, m)| (m - p) / (p * m))
            .sum();
        let rate_a: f64 = (0..2)
            .map(|kind| {
                let (a, d) = (&eu.attention[kind], &ed.attention[kind]);
                a.iter().zip(d).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64
            })
            .sum();
        let delta = b.lambda * distortion + b.alpha * rate_q + b.beta * rate_a;
        Difference::Value(delta / (2.0 * h))
    }
}
