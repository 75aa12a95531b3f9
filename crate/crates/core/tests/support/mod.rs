//! Independent re-implementations used as test oracles.
//!
//! Nothing here calls into the model's forward or backward code: parameters are
//! read through the public flat layout (W1, b1, then W2, b2 for the autoencoder)
//! and every pass is written out again from scratch.

#![allow(dead_code)]

use gradstop_core::{Activation, ModelKind, ModelParams, Rng};

/// Unevaluated sum `hi + lo` with |lo| ≤ ulp(hi)/2, about 32 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.3190468138462996e-17,
    };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        Dd::norm(s1, s2 + t2)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn mul_f(self, f: f64) -> Dd {
        self.mul(Dd::new(f))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.hi / o.hi;
        let (a, b) = quick_two_sum(q1, q2);
        Dd { hi: a, lo: b }.add(Dd::new(q3))
    }

    /// Exact scaling by a power of two.
    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd { hi: self.hi * s, lo: self.lo * s }
    }

    pub fn exp(self) -> Dd {
        assert!(self.hi.abs() < 700.0, "exp argument out of range");
        let k = (self.hi / Self::LN2.hi).round();
        let r = self.sub(Self::LN2.mul_f(k)).ldexp(-10);
        // |r| < 4e-4: 12 Taylor terms are far below the double-double ulp
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=12 {
            term = term.mul(r).div(Dd::new(n as f64));
            sum = sum.add(term);
        }
        for _ in 0..10 {
            sum = sum.mul(sum);
        }
        sum.ldexp(k as i32)
    }

    pub fn tanh(self) -> Dd {
        let neg = self.hi < 0.0;
        let z = if neg { self.neg() } else { self };
        if z.hi > 40.0 {
            return Dd::new(if neg { -1.0 } else { 1.0 });
        }
        let e = z.mul_f(2.0).exp();
        let t = e.sub(Dd::ONE).div(e.add(Dd::ONE));
        if neg {
            t.neg()
        } else {
            t
        }
    }

    pub fn relu(self) -> Dd {
        if self.hi > 0.0 {
            self
        } else {
            Dd::ZERO
        }
    }
}

/// Flat parameter layout shared with the crate's documented canonical order.
pub struct Layout {
    pub kind: ModelKind,
    pub activation: Activation,
    pub d: usize,
    pub h: usize,
}

impl Layout {
    pub fn of(p: &ModelParams) -> Self {
        Layout {
            kind: p.kind(),
            activation: p.activation(),
            d: p.input_dim(),
            h: p.hidden(),
        }
    }

    fn act(&self, z: Dd) -> Dd {
        match self.activation {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.relu(),
        }
    }

    /// Per-sample loss in double-double, with `theta` given in double-double.
    pub fn loss_dd(&self, theta: &[Dd], center: &[f64], x: &[f64]) -> Dd {
        let (d, h) = (self.d, self.h);
        let mut a = Vec::with_capacity(h);
        for i in 0..h {
            let mut z = theta[h * d + i];
            for j in 0..d {
                z = z.add(theta[i * d + j].mul_f(x[j]));
            }
            a.push(self.act(z));
        }
        match self.kind {
            ModelKind::Ae => {
                let w2 = h * d + h;
                let b2 = w2 + d * h;
                let mut total = Dd::ZERO;
                for j in 0..d {
                    let mut y = theta[b2 + j];
                    for (i, ai) in a.iter().enumerate() {
                        y = y.add(theta[w2 + j * h + i].mul(*ai));
                    }
                    let r = y.sub(Dd::new(x[j]));
                    total = total.add(r.mul(r));
                }
                total.div(Dd::new(d as f64))
            }
            ModelKind::Dsvdd => {
                let mut total = Dd::ZERO;
                for (ai, c) in a.iter().zip(center) {
                    let r = ai.sub(Dd::new(*c));
                    total = total.add(r.mul(r));
                }
                total
            }
        }
    }

    /// Encoder pre-activations in plain f64.
    pub fn preactivations(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.d, self.h);
        (0..h)
            .map(|i| theta[h * d + i] + (0..d).map(|j| theta[i * d + j] * x[j]).sum::<f64>())
            .collect()
    }
}

/// Double-double forward state at fixed parameters, reused to evaluate the
/// loss with one parameter moved. A single parameter touches one hidden unit
/// (encoder) or one output (decoder), so each evaluation costs O(d).
pub struct Cached<'a> {
    layout: &'a Layout,
    theta: Vec<Dd>,
    x: &'a [f64],
    center: &'a [f64],
    z: Vec<Dd>,
    a: Vec<Dd>,
    y: Vec<Dd>,
}

impl<'a> Cached<'a> {
    pub fn new(layout: &'a Layout, theta: &[f64], center: &'a [f64], x: &'a [f64]) -> Self {
        let (d, h) = (layout.d, layout.h);
        let theta: Vec<Dd> = theta.iter().map(|&t| Dd::new(t)).collect();
        let z: Vec<Dd> = (0..h)
            .map(|i| (0..d).fold(theta[h * d + i], |acc, j| acc.add(theta[i * d + j].mul_f(x[j]))))
            .collect();
        let a: Vec<Dd> = z.iter().map(|&v| layout.act(v)).collect();
        let y = match layout.kind {
            ModelKind::Ae => {
                let (w2, b2) = (h * d + h, 2 * h * d + h);
                (0..d)
                    .map(|j| (0..h).fold(theta[b2 + j], |acc, i| acc.add(theta[w2 + j * h + i].mul(a[i]))))
                    .collect()
            }
            ModelKind::Dsvdd => Vec::new(),
        };
        Cached { layout, theta, x, center, z, a, y }
    }

    fn loss_from(&self, a: &[Dd], y: &[Dd]) -> Dd {
        match self.layout.kind {
            ModelKind::Ae => {
                let total = y.iter().zip(self.x).fold(Dd::ZERO, |acc, (v, xj)| {
                    let r = v.sub(Dd::new(*xj));
                    acc.add(r.mul(r))
                });
                total.div(Dd::new(self.layout.d as f64))
            }
            ModelKind::Dsvdd => a.iter().zip(self.center).fold(Dd::ZERO, |acc, (v, c)| {
                let r = v.sub(Dd::new(*c));
                acc.add(r.mul(r))
            }),
        }
    }

    /// Loss with parameter `k` moved by `delta`.
    pub fn loss_moved(&self, k: usize, delta: f64) -> Dd {
        let (d, h) = (self.layout.d, self.layout.h);
        let delta = Dd::new(delta);
        let (w2, b2) = (h * d + h, 2 * h * d + h);
        let mut a = self.a.clone();
        let mut y = self.y.clone();
        if k < w2 {
            let (i, dz) = if k < h * d {
                (k / d, delta.mul_f(self.x[k % d]))
            } else {
                (k - h * d, delta)
            };
            a[i] = self.layout.act(self.z[i].add(dz));
            if self.layout.kind == ModelKind::Ae {
                let da = a[i].sub(self.a[i]);
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj = yj.add(self.theta[w2 + j * h + i].mul(da));
                }
            }
        } else if k < b2 {
            let (j, i) = ((k - w2) / h, (k - w2) % h);
            y[j] = y[j].add(delta.mul(self.a[i]));
        } else {
            y[k - b2] = y[k - b2].add(delta);
        }
        self.loss_from(&a, &y)
    }
}

/// Central differences with step `step`, each side evaluated in double-double
/// with the parameter moved exactly. `xs` are averaged, matching a batch mean.
pub fn finite_difference(p: &ModelParams, xs: &[&[f64]], step: f64) -> Vec<f64> {
    let layout = Layout::of(p);
    let cached: Vec<Cached> = xs.iter().map(|x| Cached::new(&layout, p.trainable(), p.center(), x)).collect();
    let n = Dd::new(xs.len() as f64);
    (0..p.trainable_count())
        .map(|k| {
            let side = |delta: f64| cached.iter().fold(Dd::ZERO, |acc, c| acc.add(c.loss_moved(k, delta))).div(n);
            side(step).sub(side(-step)).div(Dd::new(2.0 * step)).to_f64()
        })
        .collect()
}

/// Worst per-coordinate relative error over coordinates with |g| above
/// `floor`, and worst absolute error over the rest.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], floor: f64) -> (f64, f64) {
    let mut rel: f64 = 0.0;
    let mut abs: f64 = 0.0;
    for (g, f) in analytic.iter().zip(numeric) {
        if g.abs() > floor {
            rel = rel.max((g - f).abs() / g.abs());
        } else {
            abs = abs.max((g - f).abs());
        }
    }
    (rel, abs)
}

/// Random parameters with weights in ±`scale`; for ReLU, inputs are redrawn
/// until no pre-activation sits within `kink_margin` of zero.
pub fn random_pair(
    kind: ModelKind,
    d: usize,
    h: usize,
    scale: f64,
    rng: &mut Rng,
) -> (ModelParams, Vec<f64>) {
    let activation = kind.default_activation();
    let n = gradstop_core::model::trainable_count(kind, d, h);
    let theta: Vec<f64> = (0..n).map(|_| rng.uniform(-scale, scale)).collect();
    let center: Vec<f64> = match kind {
        ModelKind::Ae => vec![],
        ModelKind::Dsvdd => (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    };
    let p = ModelParams::from_parts(kind, activation, d, h, theta, center).unwrap();
    let layout = Layout::of(&p);
    loop {
        let x: Vec<f64> = (0..d).map(|_| 1.5 * rng.normal()).collect();
        let kinked = activation == Activation::Relu
            && layout
                .preactivations(p.trainable(), &x)
                .iter()
                .any(|z| z.abs() < 1e-4);
        if !kinked {
            return (p, x);
        }
    }
}

/// Straight-line f64 forward pass, written independently of the crate.
pub fn loss_f64(p: &ModelParams, x: &[f64]) -> f64 {
    let (d, h) = (p.input_dim(), p.hidden());
    let t = p.trainable();
    let mut a = vec![0.0; h];
    for i in 0..h {
        let mut z = t[h * d + i];
        for j in 0..d {
            z += t[i * d + j] * x[j];
        }
        a[i] = match p.activation() {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        };
    }
    match p.kind() {
        ModelKind::Ae => {
            let mut s = 0.0;
            for j in 0..d {
                let mut y = t[2 * h * d + h + j];
                for i in 0..h {
                    y += t[h * d + h + j * h + i] * a[i];
                }
                s += (y - x[j]) * (y - x[j]);
            }
            s / d as f64
        }
        ModelKind::Dsvdd => a.iter().zip(p.center()).map(|(v, c)| (v - c) * (v - c)).sum(),
    }
}

/// Top-k / last-k by brute force: repeatedly take the extreme remaining norm.
pub fn brute_force_select(norms: &[f64], k: usize) -> (Vec<usize>, Vec<usize>) {
    let pick = |largest: bool| -> Vec<usize> {
        let mut taken = vec![false; norms.len()];
        let mut out = Vec::new();
        for _ in 0..k {
            let mut best: Option<usize> = None;
            for i in 0..norms.len() {
                if taken[i] {
                    continue;
                }
                best = match best {
                    None => Some(i),
                    // ascending (value, index) order: among equal values the
                    // smallest set takes the lowest index, the largest set the highest
                    Some(b) if (largest && norms[i] >= norms[b]) || (!largest && norms[i] < norms[b]) => Some(i),
                    keep => keep,
                };
            }
            let b = best.unwrap();
            taken[b] = true;
            out.push(b);
        }
        out
    };
    (pick(true), pick(false))
}

/// O(n²) pairwise AUC; ties weigh `tie` (0 or 0.5).
pub fn pairwise_auc(scores: &[f64], labels: &[u8], tie: f64) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += tie;
            }
        }
    }
    num / pairs
}
