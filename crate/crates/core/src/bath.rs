//! Chain representation of the bosonic bath.
//!
//! A bath with spectral measure `w(omega) d omega` is unitarily equivalent to
//! a semi-infinite nearest-neighbour chain whose site energies and hoppings
//! are the recurrence coefficients of the monic orthogonal polynomials of the
//! measure. Truncating after `M` sites reproduces the first `2M` moments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tridiagonal chain: site energies `eps`, hoppings `hop` and the coupling
/// `h_sys` of the system to site 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub eps: Vec<f64>,
    pub hop: Vec<f64>,
    pub h_sys: f64,
}

impl ChainSpec {
    pub fn new(eps: Vec<f64>, hop: Vec<f64>, h_sys: f64) -> Result<Self> {
        let spec = ChainSpec { eps, hop, h_sys };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::invalid("chain needs at least one site"));
        }
        if self.hop.len() + 1 != self.eps.len() {
            return Err(Error::invalid(format!(
                "chain of {} sites needs {} hoppings, got {}",
                self.eps.len(),
                self.eps.len() - 1,
                self.hop.len()
            )));
        }
        if let Some(h) = self.hop.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
            return Err(Error::invalid(format!("hoppings must be positive and finite, got {h}")));
        }
        if !self.h_sys.is_finite() || self.eps.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("chain coefficients must be finite"));
        }
        Ok(())
    }

    /// Number of sites `M`.
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn max_hop(&self) -> f64 {
        self.hop.iter().copied().fold(0.0, f64::max)
    }

    /// Dense one-particle Hamiltonian `H_1` (real symmetric tridiagonal).
    pub fn one_particle_hamiltonian(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut h = DMatrix::zeros(m, m);
        for (k, &e) in self.eps.iter().enumerate() {
            h[(k, k)] = e;
        }
        for (k, &t) in self.hop.iter().enumerate() {
            h[(k, k + 1)] = t;
            h[(k + 1, k)] = t;
        }
        h
    }

    /// `y = H_1 x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = self.len();
        for k in 0..m {
            let mut acc = self.eps[k] * x[k];
            if k > 0 {
                acc += self.hop[k - 1] * x[k - 1];
            }
            if k + 1 < m {
                acc += self.hop[k] * x[k + 1];
            }
            y[k] = acc;
        }
    }

    /// The chain truncated (or kept) at its first `m` sites.
    pub fn truncated(&self, m: usize) -> Result<ChainSpec> {
        if m == 0 || m > self.len() {
            return Err(Error::invalid(format!("cannot truncate a {}-site chain to {m}", self.len())));
        }
        Ok(ChainSpec {
            eps: self.eps[..m].to_vec(),
            hop: self.hop[..m - 1].to_vec(),
            h_sys: self.h_sys,
        })
    }

    /// Gauss quadrature of the chain's Jacobi matrix: the discrete spectral
    /// measure whose first `M` recurrence coefficients are this chain.
    pub fn jacobi_measure(&self) -> SpectralDensity {
        let eig = self.one_particle_hamiltonian().symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..self.len())
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], self.h_sys * self.h_sys * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let lo = nodes[0];
        let hi = nodes[nodes.len() - 1];
        SpectralDensity {
            support: (lo, hi),
            nodes,
            weights,
        }
    }
}

/// Constant-coefficient chain of `m` sites.
pub fn uniform_chain(eps: f64, hop: f64, h_sys: f64, m: usize) -> Result<ChainSpec> {
    if m < 1 {
        return Err(Error::invalid("chain length must be at least 1"));
    }
    if !(hop > 0.0) {
        return Err(Error::invalid(format!("hopping must be positive, got {hop}")));
    }
    ChainSpec::new(vec![eps; m], vec![hop; m - 1], h_sys)
}

/// Chain length that keeps a Lieb-Robinson front of speed `2 max(h_n)` away
/// from the far end over `horizon`.
pub fn auto_chain_length(max_hop: f64, horizon: f64) -> usize {
    (2.0 * max_hop * horizon).ceil() as usize + 50
}

/// Discretized spectral measure: `weights[i]` already includes the quadrature
/// weight, i.e. `weights[i] ~ w(nodes[i]) * d omega_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub support: (f64, f64),
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(support: (f64, f64), nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let sd = SpectralDensity { support, nodes, weights };
        sd.validate()?;
        Ok(sd)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("bad support [{lo}, {hi}]")));
        }
        if self.nodes.is_empty() || self.nodes.len() != self.weights.len() {
            return Err(Error::invalid("nodes and weights must be nonempty and of equal length"));
        }
        let tol = 1e-12 * (hi - lo).abs().max(1.0);
        if self.nodes.iter().any(|x| !x.is_finite() || *x < lo - tol || *x > hi + tol) {
            return Err(Error::invalid("quadrature nodes must lie in the support"));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be nonnegative and finite"));
        }
        if !(self.total_weight() > 0.0) {
            return Err(Error::invalid("measure has zero total weight"));
        }
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Sample `w` on an `n`-point Gauss-Legendre grid over `support`.
    pub fn from_fn(support: (f64, f64), n: usize, w: impl Fn(f64) -> f64) -> Result<Self> {
        let (lo, hi) = support;
        if n == 0 || !(hi > lo) {
            return Err(Error::invalid("need n >= 1 nodes on a nondegenerate interval"));
        }
        let (x, q) = gauss_legendre(n);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let nodes: Vec<f64> = x.iter().map(|t| mid + half * t).collect();
        let weights = nodes.iter().zip(&q).map(|(&om, &qk)| half * qk * w(om)).collect();
        SpectralDensity::new(support, nodes, weights)
    }

    /// Tabulated `(omega, w(omega))` samples integrated with the trapezoid
    /// rule. Samples must be strictly increasing in `omega`.
    pub fn from_samples(omega: &[f64], w: &[f64]) -> Result<Self> {
        if omega.len() < 2 || omega.len() != w.len() {
            return Err(Error::invalid("need at least two (omega, w) samples"));
        }
        if omega.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::invalid("omega samples must be strictly increasing"));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("w(omega) must be nonnegative and finite"));
        }
        let n = omega.len();
        let mut weights = vec![0.0; n];
        for k in 0..n - 1 {
            let h = 0.5 * (omega[k + 1] - omega[k]);
            weights[k] += h * w[k];
            weights[k + 1] += h * w[k + 1];
        }
        // Zero-weight nodes carry no information; dropping them keeps the
        // Lanczos start vector well defined.
        let (nodes, weights): (Vec<f64>, Vec<f64>) =
            omega.iter().copied().zip(weights).filter(|(_, q)| *q > 0.0).unzip();
        SpectralDensity::new((omega[0], omega[n - 1]), nodes, weights)
    }

    /// Normalized moments `int omega^k w / int w` for `k = 0..=order`.
    pub fn moments(&self, order: usize) -> Vec<f64> {
        let total = self.total_weight();
        (0..=order)
            .map(|k| {
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(x, q)| q * x.powi(k as i32))
                    .sum::<f64>()
                    / total
            })
            .collect()
    }
}

/// Read two-column `omega,w` samples. An optional header row, `#` comments,
/// blank lines and surrounding whitespace are accepted.
pub fn parse_spectral_csv(text: &str) -> Result<SpectralDensity> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut omega = Vec::new();
    let mut w = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(csv_error(format!("line {line}: expected 2 columns, found {}", rec.len())));
        }
        let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match parsed {
            (Ok(x), Ok(y)) => {
                omega.push(x);
                w.push(y);
            }
            // A first row that is not numeric is a header.
            _ if i == 0 => continue,
            _ => return Err(csv_error(format!("line {line}: `{},{}` is not a pair of numbers", &rec[0], &rec[1]))),
        }
    }
    SpectralDensity::from_samples(&omega, &w).map_err(|e| csv_error(e.to_string()))
}

fn csv_error(message: String) -> Error {
    Error::Format { what: "spectral density CSV", message }
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Largest tolerated deviation of the Lanczos basis from orthonormality.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Stieltjes procedure on the discretized measure: Lanczos on `diag(nodes)`
/// from the start vector `sqrt(weights)`, with full reorthogonalization.
pub fn chain_from_spectral_density(sd: &SpectralDensity, m: usize) -> Result<ChainSpec> {
    sd.validate()?;
    if m == 0 {
        return Err(Error::invalid("chain length must be at least 1"));
    }
    let n = sd.nodes.len();
    let support = sd.weights.iter().filter(|w| **w > 0.0).count();
    if n < m || support < m {
        return Err(Error::MeasureTooNarrow {
            support: support.min(n),
            requested: m,
        });
    }
    let total = sd.total_weight();
    let x = DVector::from_column_slice(&sd.nodes);
    let mut q = DMatrix::<f64>::zeros(n, m);
    q.set_column(0, &DVector::from_iterator(n, sd.weights.iter().map(|w| (w / total).sqrt())));
    let scale = sd.nodes.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);

    let mut eps = Vec::with_capacity(m);
    let mut hop = Vec::with_capacity(m.saturating_sub(1));
    for k in 0..m {
        let qk = q.column(k).into_owned();
        let xq = x.component_mul(&qk);
        let alpha = qk.dot(&xq);
        eps.push(alpha);
        if k + 1 == m {
            break;
        }
        let mut r = xq - &qk * alpha;
        if k > 0 {
            r -= q.column(k - 1) * hop[k - 1];
        }
        for _ in 0..2 {
            for i in 0..=k {
                let qi = q.column(i);
                let proj = qi.dot(&r);
                r -= qi * proj;
            }
        }
        let beta = r.norm();
        if beta <= 1e-13 * scale {
            return Err(Error::MeasureTooNarrow {
                support: k + 1,
                requested: m,
            });
        }
        hop.push(beta);
        q.set_column(k + 1, &(r / beta));
    }

    let gram = q.transpose() * &q;
    let deviation = (gram - DMatrix::<f64>::identity(m, m)).amax();
    if deviation > ORTHOGONALITY_TOL {
        return Err(Error::OrthogonalityLoss { deviation });
    }
    ChainSpec::new(eps, hop, total.sqrt())
}

/// `<e_0| H_1^k |e_0>` for `k = 0..=order`.
pub fn chain_moments(spec: &ChainSpec, order: usize) -> Vec<f64> {
    let m = spec.len();
    let mut v = vec![0.0; m];
    v[0] = 1.0;
    let mut w = vec![0.0; m];
    let mut out = Vec::with_capacity(order + 1);
    out.push(1.0);
    for _ in 0..order {
        spec.apply(&v, &mut w);
        std::mem::swap(&mut v, &mut w);
        out.push(v[0]);
    }
    out
}
