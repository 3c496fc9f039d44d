//! Fully connected networks with ReLU hidden layers, backpropagation and Adam.
//!
//! Batches are matrices with one sample per column.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SIMSWMLP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    /// `(tanh(x) + 1) / 2`, onto `[0, 1]`.
    UnitTanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::UnitTanh => 0.5 * (x.tanh() + 1.0),
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::UnitTanh => {
                let t = 2.0 * y - 1.0;
                0.5 * (1.0 - t * t)
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::UnitTanh => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::UnitTanh),
            _ => Err(Error::Model(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `weights[l]` is out x in.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub output: Activation,
}

/// Parameter-shaped gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = self.weights.iter().map(|w| w.norm_squared()).sum::<f64>()
            + self.biases.iter().map(|b| b.norm_squared()).sum::<f64>();
        s.sqrt()
    }

    pub fn scale(&mut self, f: f64) {
        self.weights.iter_mut().for_each(|w| *w *= f);
        self.biases.iter_mut().for_each(|b| *b *= f);
    }

    /// Rescale to global norm at most `max`; returns the norm before clipping.
    pub fn clip(&mut self, max: f64) -> f64 {
        let n = self.norm();
        if n > max {
            self.scale(max / n);
        }
        n
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input to each layer, then the network output.
    acts: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl Cache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.acts.last().expect("non-empty cache")
    }
}

impl Mlp {
    /// `sizes` lists input, hidden and output widths. Hidden layers use He
    /// uniform initialization; the output layer starts near zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == layers { 3e-3 } else { (6.0 / fan_in as f64).sqrt() };
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..bound)));
            biases.push(DVector::zeros(fan_out));
        }
        Self { weights, biases, output }
    }

    pub fn zeros(sizes: &[usize], output: Activation) -> Self {
        let layers = sizes.len() - 1;
        Self {
            weights: (0..layers).map(|l| DMatrix::zeros(sizes[l + 1], sizes[l])).collect(),
            biases: (0..layers).map(|l| DVector::zeros(sizes[l + 1])).collect(),
            output,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].ncols()];
        s.extend(self.weights.iter().map(|w| w.nrows()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.nrows())
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output
        } else {
            Activation::Relu
        }
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Cache {
        let mut acts = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * acts.last().expect("input present");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            let act = self.activation(l);
            acts.push(z.map(|v| act.apply(v)));
            pre.push(z);
        }
        Cache { acts, pre }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_cached(x).acts.pop().expect("output present")
    }

    /// Output for a single sample.
    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&DMatrix::from_column_slice(x.len(), 1, x)).as_slice().to_vec()
    }

    /// Parameter and input gradients of a loss whose gradient with respect to
    /// the output batch is `grad_out`.
    pub fn backward(&self, cache: &Cache, grad_out: &DMatrix<f64>) -> (Gradients, DMatrix<f64>) {
        let layers = self.weights.len();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out.clone();
        for l in (0..layers).rev() {
            let act = self.activation(l);
            let z = &cache.pre[l];
            let y = &cache.acts[l + 1];
            for ((d, &zv), &yv) in delta.iter_mut().zip(z.iter()).zip(y.iter()) {
                *d *= act.derivative(zv, yv);
            }
            grads.weights[l] = &delta * cache.acts[l].transpose();
            grads.biases[l] = delta.column_sum();
            delta = self.weights[l].transpose() * &delta;
        }
        (grads, delta)
    }

    /// Polyak averaging toward `src`: `θ ← τ θ_src + (1 − τ) θ`.
    pub fn soft_update(&mut self, src: &Mlp, tau: f64) {
        for (w, s) in self.weights.iter_mut().zip(&src.weights) {
            *w = s * tau + &*w * (1.0 - tau);
        }
        for (b, s) in self.biases.iter_mut().zip(&src.biases) {
            *b = s * tau + &*b * (1.0 - tau);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Binary format: magic, version, output activation, layer count, sizes,
    /// then per layer the row-major weights and the bias, all little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.output.code()])?;
        let sizes = self.sizes();
        w.write_all(&(sizes.len() as u32).to_le_bytes())?;
        for s in &sizes {
            w.write_all(&(*s as u64).to_le_bytes())?;
        }
        for (wm, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..wm.nrows() {
                for c in 0..wm.ncols() {
                    w.write_all(&wm[(r, c)].to_le_bytes())?;
                }
            }
            for v in b.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Model("bad magic bytes".into()));
        }
        let mut u4 = [0u8; 4];
        r.read_exact(&mut u4)?;
        let version = u32::from_le_bytes(u4);
        if version != VERSION {
            return Err(Error::Model(format!("unsupported version {version}")));
        }
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let output = Activation::from_code(code[0])?;
        r.read_exact(&mut u4)?;
        let count = u32::from_le_bytes(u4) as usize;
        if count < 2 {
            return Err(Error::Model(format!("{count} layer sizes")));
        }
        let mut u8b = [0u8; 8];
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut u8b)?;
            let s = u64::from_le_bytes(u8b);
            if s == 0 || s > 1 << 24 {
                return Err(Error::Model(format!("layer size {s}")));
            }
            sizes.push(s as usize);
        }
        let mut net = Mlp::zeros(&sizes, output);
        let mut next = || -> Result<f64> {
            r.read_exact(&mut u8b)?;
            Ok(f64::from_le_bytes(u8b))
        };
        for l in 0..count - 1 {
            for row in 0..sizes[l + 1] {
                for col in 0..sizes[l] {
                    net.weights[l][(row, col)] = next()?;
                }
            }
            for i in 0..sizes[l + 1] {
                net.biases[l][i] = next()?;
            }
        }
        Ok(net)
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// Clip `grads` to global norm `clip`, then take one descent step.
    /// Returns the norm before clipping.
    pub fn step(&mut self, net: &mut Mlp, mut grads: Gradients, clip: f64) -> Result<f64> {
        if !grads.is_finite() {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        let norm = grads.clip(clip);
        if self.lr == 0.0 {
            return Ok(norm);
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            for i in 0..net.weights[l].len() {
                update(
                    &mut net.weights[l].as_mut_slice()[i],
                    grads.weights[l].as_slice()[i],
                    &mut self.m.weights[l].as_mut_slice()[i],
                    &mut self.v.weights[l].as_mut_slice()[i],
                );
            }
            for i in 0..net.biases[l].len() {
                update(
                    &mut net.biases[l][i],
                    grads.biases[l][i],
                    &mut self.m.biases[l][i],
                    &mut self.v.biases[l][i],
                );
            }
        }
        if !net.is_finite() {
            return Err(Error::Diverged("non-finite parameters after update".into()));
        }
        Ok(norm)
    }
}

/// Largest relative error between backpropagated parameter and input
/// gradients and central finite differences, on a random 3-layer network
/// with a `[0, 1]` output and a random linear loss.
pub fn max_gradient_error(seed: u64) -> f64 {
    let mut rng = crate::rng::substream(seed, &[]);
    let mut net = Mlp::new(&[3, 5, 4, 2], Activation::UnitTanh, &mut rng);
    net.weights[2] *= 300.0;
    let x = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
    let loss = |n: &Mlp, x: &DMatrix<f64>| n.forward(x).component_mul(&c).sum();
    let cache = net.forward_cached(&x);
    let (g, gx) = net.backward(&cache, &c);
    let h = 1e-6;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let fd = |plus: &Mlp, minus: &Mlp, xp: &DMatrix<f64>, xm: &DMatrix<f64>| (loss(plus, xp) - loss(minus, xm)) / (2.0 * h);
    let mut worst: f64 = 0.0;
    for l in 0..net.weights.len() {
        for i in 0..net.weights[l].len() {
            let (mut p, mut q) = (net.clone(), net.clone());
            p.weights[l].as_mut_slice()[i] += h;
            q.weights[l].as_mut_slice()[i] -= h;
            worst = worst.max(rel(fd(&p, &q, &x, &x), g.weights[l].as_slice()[i]));
        }
        for i in 0..net.biases[l].len() {
            let (mut p, mut q) = (net.clone(), net.clone());
            p.biases[l][i] += h;
            q.biases[l][i] -= h;
            worst = worst.max(rel(fd(&p, &q, &x, &x), g.biases[l][i]));
        }
    }
    for i in 0..x.len() {
        let (mut p, mut q) = (x.clone(), x.clone());
        p.as_mut_slice()[i] += h;
        q.as_mut_slice()[i] -= h;
        worst = worst.max(rel(fd(&net, &net, &p, &q), gx.as_slice()[i]));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn zero_net_outputs_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2], Activation::Identity);
        net.biases[1] = DVector::from_vec(vec![0.25, -1.5]);
        assert_eq!(net.infer(&[1.0, -2.0, 3.0]), vec![0.25, -1.5]);
    }

    #[test]
    fn unit_tanh_output_in_range() {
        let mut rng = substream(2, &[]);
        let mut net = Mlp::new(&[2, 8, 3], Activation::UnitTanh, &mut rng);
        net.weights[1] *= 1e4;
        let y = net.forward(&DMatrix::from_fn(2, 50, |_, _| rng.random_range(-5.0..5.0)));
        assert!(y.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let worst = max_gradient_error(4);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut rng = substream(5, &[]);
        let net = Mlp::new(&[4, 6, 2], Activation::Identity, &mut rng);
        let mut g = Gradients::zeros_like(&net);
        g.weights[0].fill(3.0);
        let before = g.clip(0.5);
        assert!(before > 0.5);
        assert!(g.norm() <= 0.5 + 1e-9);
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let mut rng = substream(6, &[]);
        let mut net = Mlp::new(&[2, 3, 1], Activation::Relu, &mut rng);
        let before = net.clone();
        let mut opt = Adam::new(&net, 0.0);
        let mut g = Gradients::zeros_like(&net);
        g.weights[0].fill(1.0);
        opt.step(&mut net, g, 0.5).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_reduces_quadratic_loss() {
        let mut rng = substream(7, &[]);
        let mut net = Mlp::new(&[1, 16, 1], Activation::Identity, &mut rng);
        let x = DMatrix::from_fn(1, 32, |_, c| c as f64 / 16.0 - 1.0);
        let y = x.map(|v| v * v);
        let mse = |n: &Mlp| (n.forward(&x) - &y).norm_squared() / 32.0;
        let start = mse(&net);
        let mut opt = Adam::new(&net, 1e-2);
        for _ in 0..500 {
            let cache = net.forward_cached(&x);
            let g_out = (cache.output() - &y) * (2.0 / 32.0);
            let (g, _) = net.backward(&cache, &g_out);
            opt.step(&mut net, g, 0.5).unwrap();
        }
        assert!(mse(&net) < 0.1 * start);
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut rng = substream(8, &[]);
        let mut net = Mlp::new(&[1, 2, 1], Activation::Identity, &mut rng);
        let mut g = Gradients::zeros_like(&net);
        g.biases[0][0] = f64::NAN;
        assert!(matches!(Adam::new(&net, 1e-3).step(&mut net, g, 0.5), Err(Error::Diverged(_))));
    }

    #[test]
    fn binary_round_trip() {
        let mut rng = substream(9, &[]);
        let net = Mlp::new(&[3, 7, 5, 2], Activation::UnitTanh, &mut rng);
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"SIMSWMLP");
        assert_eq!(buf.len(), 8 + 4 + 1 + 4 + 4 * 8 + net.param_count() * 8);
        assert_eq!(Mlp::read_from(&mut buf.as_slice()).unwrap(), net);
        buf[0] = b'X';
        assert!(Mlp::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn soft_update_interpolates() {
        let a = Mlp::zeros(&[1, 1], Activation::Identity);
        let mut b = a.clone();
        b.weights[0][(0, 0)] = 1.0;
        let mut t = a.clone();
        t.soft_update(&b, 0.25);
        assert_eq!(t.weights[0][(0, 0)], 0.25);
    }
}
