use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::rng::{rng_from_seed, standard_normal_vec, uniform_in};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Weights and biases start uniform in `±init_scale / √fan_in`.
    pub init_scale: f64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec { hidden: vec![32, 32], activation: Activation::Tanh, init_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FunctionSpec {
    Tabular,
    /// `f(s, a) = ⟨φ(s, a), θ⟩` with `features[(s * A + a) * dim + j]`.
    Linear {
        dim: usize,
        features: Vec<f64>,
    },
    /// State features in, one output per action.
    Mlp {
        spec: MlpSpec,
        input_dim: usize,
        inputs: Vec<f64>,
        widths: Vec<usize>,
    },
}

/// A parametrized function `f^θ : S × A → R` living in the dual space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxFunction {
    n_states: usize,
    n_actions: usize,
    spec: FunctionSpec,
    theta: Vec<f64>,
}

fn one_hot(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

impl ApproxFunction {
    /// One parameter per state-action pair, initialised at zero.
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        ApproxFunction { n_states, n_actions, spec: FunctionSpec::Tabular, theta: vec![0.0; n_states * n_actions] }
    }

    /// Linear in the given features, `θ = 0` initially.
    pub fn linear(n_states: usize, n_actions: usize, dim: usize, features: Vec<f64>) -> Result<Self> {
        check_len(n_states * n_actions * dim, features.len())?;
        if dim == 0 {
            return Err(Error::config("linear feature dimension must be positive"));
        }
        Ok(ApproxFunction { n_states, n_actions, spec: FunctionSpec::Linear { dim, features }, theta: vec![0.0; dim] })
    }

    /// One-hot state-action features: equivalent to the tabular class.
    pub fn linear_one_hot(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        Self::linear(n_states, n_actions, n, one_hot(n)).expect("consistent dimensions")
    }

    /// Gaussian features scaled by `1/√dim`, drawn from `seed`.
    pub fn linear_random(n_states: usize, n_actions: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let features =
            standard_normal_vec(&mut rng, n_states * n_actions * dim).into_iter().map(|v| v * scale).collect();
        Self::linear(n_states, n_actions, dim, features)
    }

    /// MLP over one-hot state encodings.
    pub fn mlp(n_states: usize, n_actions: usize, spec: MlpSpec, seed: u64) -> Result<Self> {
        Self::mlp_with_inputs(n_states, n_actions, n_states, one_hot(n_states), spec, seed)
    }

    /// MLP over arbitrary state features `inputs[s * input_dim + j]`.
    pub fn mlp_with_inputs(
        n_states: usize,
        n_actions: usize,
        input_dim: usize,
        inputs: Vec<f64>,
        spec: MlpSpec,
        seed: u64,
    ) -> Result<Self> {
        check_len(n_states * input_dim, inputs.len())?;
        if input_dim == 0 || spec.hidden.contains(&0) {
            return Err(Error::config("MLP layer widths must be positive"));
        }
        let mut widths = vec![input_dim];
        widths.extend(&spec.hidden);
        widths.push(n_actions);
        let mut rng = rng_from_seed(seed);
        let mut theta = Vec::new();
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = spec.init_scale / (fan_in as f64).sqrt();
            for _ in 0..fan_out * fan_in + fan_out {
                theta.push(uniform_in(&mut rng, -bound, bound));
            }
        }
        Ok(ApproxFunction { n_states, n_actions, spec: FunctionSpec::Mlp { spec, input_dim, inputs, widths }, theta })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn spec(&self) -> &FunctionSpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        check_len(self.theta.len(), theta.len())?;
        self.theta = theta;
        Ok(())
    }

    /// Whether every table `S × A → R` is representable (and [`Self::fit_exact`] works).
    pub fn is_tabular(&self) -> bool {
        match &self.spec {
            FunctionSpec::Tabular => true,
            FunctionSpec::Linear { dim, features } => {
                *dim == self.n_states * self.n_actions && *features == one_hot(*dim)
            }
            FunctionSpec::Mlp { .. } => false,
        }
    }

    /// Sets θ so that `f` reproduces `values` exactly (tabular classes only).
    pub fn fit_exact(&mut self, values: &[f64]) -> Result<()> {
        check_len(self.n_states * self.n_actions, values.len())?;
        if !self.is_tabular() {
            return Err(Error::config("exact actor fitting needs a tabular function class"));
        }
        self.theta = values.to_vec();
        Ok(())
    }

    pub fn eval(&self, s: usize, a: usize) -> Result<f64> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::Index(format!("(s={s}, a={a}) outside {}×{}", self.n_states, self.n_actions)));
        }
        Ok(match &self.spec {
            FunctionSpec::Tabular => self.theta[s * self.n_actions + a],
            FunctionSpec::Linear { dim, features } => {
                let i = (s * self.n_actions + a) * dim;
                crate::dot(&features[i..i + dim], &self.theta)
            }
            FunctionSpec::Mlp { .. } => self.mlp_forward(s).0.last().expect("output layer")[a],
        })
    }

    /// All values, flat `[s * A + a]`.
    pub fn eval_all(&self) -> Vec<f64> {
        match &self.spec {
            FunctionSpec::Tabular => self.theta.clone(),
            FunctionSpec::Linear { dim, features } => {
                features.chunks(*dim).map(|phi| crate::dot(phi, &self.theta)).collect()
            }
            FunctionSpec::Mlp { .. } => {
                (0..self.n_states).flat_map(|s| self.mlp_forward(s).0.pop().expect("output layer")).collect()
            }
        }
    }

    /// Vector-Jacobian product: `Σ_{s,a} upstream[s,a] ∂f(s,a)/∂θ`.
    pub fn vjp(&self, upstream: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_states * self.n_actions, upstream.len())?;
        Ok(match &self.spec {
            FunctionSpec::Tabular => upstream.to_vec(),
            FunctionSpec::Linear { dim, features } => {
                let mut g = vec![0.0; *dim];
                for (phi, u) in features.chunks(*dim).zip(upstream) {
                    if *u != 0.0 {
                        g.iter_mut().zip(phi).for_each(|(gj, p)| *gj += u * p);
                    }
                }
                g
            }
            FunctionSpec::Mlp { .. } => {
                let mut g = vec![0.0; self.theta.len()];
                for s in 0..self.n_states {
                    let up = &upstream[s * self.n_actions..(s + 1) * self.n_actions];
                    if up.iter().any(|&u| u != 0.0) {
                        self.mlp_backward(s, up, &mut g);
                    }
                }
                g
            }
        })
    }

    /// Returns (activations per layer incl. input and output, pre-activations per layer).
    fn mlp_forward(&self, s: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let FunctionSpec::Mlp { spec, input_dim, inputs, widths } = &self.spec else {
            unreachable!("mlp_forward on a non-MLP function")
        };
        let mut acts = vec![inputs[s * input_dim..(s + 1) * input_dim].to_vec()];
        let mut pres = Vec::new();
        let mut offset = 0;
        let n_layers = widths.len() - 1;
        for (l, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.theta[offset..offset + fan_in * fan_out];
            let bias = &self.theta[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let prev = acts.last().expect("input layer");
            let z: Vec<f64> =
                (0..fan_out).map(|o| crate::dot(&weights[o * fan_in..(o + 1) * fan_in], prev) + bias[o]).collect();
            let a = if l + 1 < n_layers { z.iter().map(|&v| spec.activation.apply(v)).collect() } else { z.clone() };
            pres.push(z);
            acts.push(a);
        }
        (acts, pres)
    }

    fn mlp_backward(&self, s: usize, upstream: &[f64], grad: &mut [f64]) {
        let FunctionSpec::Mlp { spec, widths, .. } = &self.spec else {
            unreachable!("mlp_backward on a non-MLP function")
        };
        let (acts, pres) = self.mlp_forward(s);
        let mut offsets = vec![0];
        for w in widths.windows(2) {
            offsets.push(offsets.last().unwrap() + w[0] * w[1] + w[1]);
        }
        let mut delta = upstream.to_vec();
        for l in (0..widths.len() - 1).rev() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                row.iter_mut().zip(prev).for_each(|(g, a)| *g += d * a);
                grad[off + fan_in * fan_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &self.theta[off..off + fan_in * fan_out];
            let z_prev = &pres[l - 1];
            delta = (0..fan_in)
                .map(|i| {
                    let back: f64 = (0..fan_out).map(|o| weights[o * fan_in + i] * delta[o]).sum();
                    back * spec.activation.derivative(z_prev[i])
                })
                .collect();
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ApproxFunction = serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
        let expected = match &f.spec {
            FunctionSpec::Tabular => f.n_states * f.n_actions,
            FunctionSpec::Linear { dim, features } => {
                check_len(f.n_states * f.n_actions * dim, features.len())?;
                *dim
            }
            FunctionSpec::Mlp { input_dim, inputs, widths, .. } => {
                check_len(f.n_states * input_dim, inputs.len())?;
                widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
            }
        };
        check_len(expected, f.theta.len())?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &ApproxFunction, upstream: &[f64]) {
        let g = f.vjp(upstream).unwrap();
        let h = 1e-6;
        for i in 0..f.n_params() {
            let mut p = f.clone();
            let mut th = f.theta().to_vec();
            th[i] += h;
            p.set_theta(th.clone()).unwrap();
            let up = crate::dot(&p.eval_all(), upstream);
            th[i] -= 2.0 * h;
            p.set_theta(th).unwrap();
            let down = crate::dot(&p.eval_all(), upstream);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn eval_examples() {
        let f = ApproxFunction::tabular(3, 2);
        assert!(f.eval_all().iter().all(|&v| v == 0.0));
        let t: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect();
        let mut lin = ApproxFunction::linear_one_hot(3, 2);
        lin.set_theta(t.clone()).unwrap();
        assert_eq!(lin.eval_all(), t);
        assert!(lin.is_tabular());
        assert!(matches!(lin.eval(3, 0), Err(Error::Index(_))));
        let a = ApproxFunction::mlp(4, 3, MlpSpec::default(), 9).unwrap();
        let b = ApproxFunction::mlp(4, 3, MlpSpec::default(), 9).unwrap();
        assert_eq!(a.eval_all(), b.eval_all());
        assert_eq!(a.eval(2, 1).unwrap(), a.eval_all()[2 * 3 + 1]);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let up: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mut lin = ApproxFunction::linear_random(4, 3, 5, 1).unwrap();
        lin.set_theta(vec![0.3, -0.2, 0.1, 0.5, -0.4]).unwrap();
        fd_check(&lin, &up);
        for act in [Activation::Tanh, Activation::Relu] {
            let spec = MlpSpec { hidden: vec![6, 5], activation: act, init_scale: 1.0 };
            let inputs: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
            let f = ApproxFunction::mlp_with_inputs(4, 3, 2, inputs, spec, 3).unwrap();
            fd_check(&f, &up);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let f = ApproxFunction::mlp(3, 2, MlpSpec::default(), 4).unwrap();
        let back = ApproxFunction::from_json(&f.to_json()).unwrap();
        assert_eq!(f, back);
        let lin = ApproxFunction::linear_random(3, 2, 4, 2).unwrap();
        assert_eq!(ApproxFunction::from_json(&lin.to_json()).unwrap(), lin);
        assert!(ApproxFunction::from_json("{}").is_err());
    }

    #[test]
    fn fit_exact_requires_tabular_class() {
        let mut f = ApproxFunction::mlp(2, 2, MlpSpec::default(), 0).unwrap();
        assert!(f.fit_exact(&[0.0; 4]).is_err());
        let mut t = ApproxFunction::tabular(2, 2);
        t.fit_exact(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.eval(1, 0).unwrap(), 3.0);
    }
}
