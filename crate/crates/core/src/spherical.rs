//! von Mises-Fisher distributions and mixtures on the circle and the sphere.
//!
//! Directions are stored as `[f64; 3]`; planar directions keep a zero
//! z-component so the same dot products serve both dimensions. Densities are
//! with respect to arc length on S^1 or solid angle on S^2.
//!
//! Besides plain mixtures this module provides the two variants the walk
//! sampler needs on Neumann boundaries: the *reflected* mixture, which folds
//! mass from the invalid hemisphere onto the valid one, and the one-sample
//! MIS combination of the guided and uniform techniques.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{dot3, norm3, orthonormal_basis, reflect3, Dir};
use crate::special::{bessel_i0e, bessel_ratio_i1_i0};

/// Concentrations produced by the output mapping are clamped into this range.
pub const KAPPA_MIN: f64 = 1e-6;
pub const KAPPA_MAX: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
}

impl Dim {
    pub fn n(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Measure of the unit sphere S^{d-1}.
    pub fn sphere_measure(self) -> f64 {
        match self {
            Dim::Two => 2.0 * PI,
            Dim::Three => 4.0 * PI,
        }
    }

    pub fn uniform_pdf(self) -> f64 {
        1.0 / self.sphere_measure()
    }
}

/// One vMF lobe with its mixture weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VmfComponent {
    pub mu: Dir,
    pub kappa: f64,
    pub lambda: f64,
    dim: Dim,
    /// `ln C(kappa) + kappa`, so that `pdf = exp(kappa (mu.nu - 1) + log_scaled_norm)`.
    log_scaled_norm: f64,
}

fn log_scaled_norm(kappa: f64, dim: Dim) -> f64 {
    match dim {
        Dim::Two => -(2.0 * PI).ln() - bessel_i0e(kappa).ln(),
        // kappa / (4 pi sinh kappa) = e^{-kappa} kappa / (2 pi (1 - e^{-2 kappa}))
        Dim::Three => -(2.0 * PI).ln() - (-(-2.0 * kappa).exp_m1() / kappa).ln(),
    }
}

impl VmfComponent {
    /// `mu` must be a unit vector in the given dimension (z = 0 for `Dim::Two`).
    pub fn new(mu: Dir, kappa: f64, lambda: f64, dim: Dim) -> Self {
        debug_assert!(kappa >= 0.0);
        let log_scaled_norm = if kappa == 0.0 {
            0.0
        } else {
            log_scaled_norm(kappa, dim)
        };
        VmfComponent {
            mu,
            kappa,
            lambda,
            dim,
            log_scaled_norm,
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Density at the unit direction `nu`.
    #[inline]
    pub fn pdf(&self, nu: &Dir) -> f64 {
        if self.kappa == 0.0 {
            return self.dim.uniform_pdf();
        }
        (self.kappa * (dot3(&self.mu, nu) - 1.0) + self.log_scaled_norm).exp()
    }

    /// `d ln v / d kappa` at `nu`.
    fn dlog_dkappa(&self, nu: &Dir) -> f64 {
        let t = dot3(&self.mu, nu);
        match self.dim {
            Dim::Two => t - bessel_ratio_i1_i0(self.kappa),
            Dim::Three => {
                let k = self.kappa;
                // 1/k - coth k, written to avoid cancellation for small k
                let tail = if k < 1e-3 {
                    -k / 3.0 + k * k * k / 45.0
                } else {
                    1.0 / k - 1.0 / k.tanh()
                };
                t + tail
            }
        }
    }

    /// Draws a direction from this lobe.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dir {
        match self.dim {
            Dim::Two => {
                let theta = sample_von_mises_angle(rng, self.kappa);
                let (s, c) = theta.sin_cos();
                [
                    c * self.mu[0] - s * self.mu[1],
                    s * self.mu[0] + c * self.mu[1],
                    0.0,
                ]
            }
            Dim::Three => {
                let u: f64 = rng.gen();
                let w = if self.kappa < 1e-8 {
                    1.0 - 2.0 * u
                } else {
                    // inverse CDF of cos(theta): 1 + ln(u + (1-u) e^{-2k}) / k
                    let k = self.kappa;
                    let w = 1.0 + (u + (1.0 - u) * (-2.0 * k).exp()).ln() / k;
                    w.clamp(-1.0, 1.0)
                };
                let phi = 2.0 * PI * rng.gen::<f64>();
                let r = (1.0 - w * w).max(0.0).sqrt();
                let (t1, t2) = orthonormal_basis(&self.mu);
                let (s, c) = phi.sin_cos();
                let mut v = [0.0; 3];
                for i in 0..3 {
                    v[i] = w * self.mu[i] + r * (c * t1[i] + s * t2[i]);
                }
                v
            }
        }
    }
}

/// Angle offset from the mean direction of a von Mises variate (Best & Fisher 1979).
pub fn sample_von_mises_angle<R: Rng + ?Sized>(rng: &mut R, kappa: f64) -> f64 {
    if kappa < 1e-12 {
        return PI * (2.0 * rng.gen::<f64>() - 1.0);
    }
    let s = (1.0 + 4.0 * kappa * kappa).sqrt();
    let a = 1.0 + s;
    // b = (a - sqrt(2a)) / (2 kappa), rewritten without cancellation for small kappa
    let b = 2.0 * kappa * a / ((s + 1.0) * (a + (2.0 * a).sqrt()));
    let r = (1.0 + b * b) / (2.0 * b);
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let u3: f64 = rng.gen();
        let z = (PI * u1).cos();
        let f = ((1.0 + r * z) / (r + z)).clamp(-1.0, 1.0);
        let c = kappa * (r - f);
        let accept = c * (2.0 - c) - u2 > 0.0 || ((c / u2).ln() + 1.0 - c >= 0.0);
        if accept {
            let theta = f.acos();
            return if u3 > 0.5 { theta } else { -theta };
        }
    }
}

/// Uniform direction on the sphere.
pub fn sample_uniform_dir<R: Rng + ?Sized>(rng: &mut R, dim: Dim) -> Dir {
    match dim {
        Dim::Two => {
            let phi = 2.0 * PI * rng.gen::<f64>();
            let (s, c) = phi.sin_cos();
            [c, s, 0.0]
        }
        Dim::Three => {
            let z = 1.0 - 2.0 * rng.gen::<f64>();
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            let (s, c) = phi.sin_cos();
            [r * c, r * s, z]
        }
    }
}

/// Uniform direction on the open hemisphere `nu . n > 0` (reflect, redraw ties).
pub fn sample_uniform_hemisphere<R: Rng + ?Sized>(rng: &mut R, n: &Dir, dim: Dim) -> Dir {
    loop {
        let v = sample_uniform_dir(rng, dim);
        let c = dot3(&v, n);
        if c > 0.0 {
            return v;
        }
        if c < 0.0 {
            return reflect3(&v, n);
        }
    }
}

/// Density of uniform directional sampling; hemispherical (doubled) when a
/// boundary normal is given.
pub fn uniform_dir_pdf(nu: &Dir, normal: Option<&Dir>, dim: Dim) -> f64 {
    match normal {
        None => dim.uniform_pdf(),
        Some(n) => {
            if dot3(nu, n) > 0.0 {
                2.0 * dim.uniform_pdf()
            } else {
                0.0
            }
        }
    }
}

/// Normalized mixture parameters plus the MIS selection probability `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub components: Vec<VmfComponent>,
    pub c: f64,
    pub dim: Dim,
}

impl MixtureParams {
    pub fn new(components: Vec<VmfComponent>, c: f64, dim: Dim) -> Self {
        debug_assert!(!components.is_empty());
        MixtureParams { components, c, dim }
    }

    /// A single uniform (kappa = 0) component.
    pub fn uniform(dim: Dim, c: f64) -> Self {
        let mu = [1.0, 0.0, 0.0];
        MixtureParams::new(vec![VmfComponent::new(mu, 0.0, 1.0, dim)], c, dim)
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// `V(nu | Theta) = sum_i lambda_i v(nu | mu_i, kappa_i)`.
    #[inline]
    pub fn pdf(&self, nu: &Dir) -> f64 {
        self.components.iter().map(|c| c.lambda * c.pdf(nu)).sum()
    }

    /// Ancestral sampling: pick a lobe by weight, then sample it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dir {
        let comp = if self.components.len() == 1 {
            &self.components[0]
        } else {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = self.components.last().unwrap();
            for c in &self.components {
                acc += c.lambda;
                if u < acc {
                    chosen = c;
                    break;
                }
            }
            chosen
        };
        comp.sample(rng)
    }

    /// Mixture folded onto the valid hemisphere of `n`: `V(nu) + V(reflect(nu))`
    /// where `nu . n > 0`, zero elsewhere.
    #[inline]
    pub fn reflected_pdf(&self, nu: &Dir, n: &Dir) -> f64 {
        if dot3(nu, n) <= 0.0 {
            return 0.0;
        }
        self.pdf(nu) + self.pdf(&reflect3(nu, n))
    }

    /// Samples the mixture and reflects invalid draws across the tangent plane.
    pub fn reflected_sample<R: Rng + ?Sized>(&self, rng: &mut R, n: &Dir) -> Dir {
        loop {
            let v = self.sample(rng);
            let c = dot3(&v, n);
            if c > 0.0 {
                return v;
            }
            if c < 0.0 {
                return reflect3(&v, n);
            }
        }
    }

    /// Guided-technique density, with or without reflection on a boundary.
    #[inline]
    pub fn guided_pdf(&self, nu: &Dir, normal: Option<&Dir>, reflection: bool) -> f64 {
        match normal {
            None => self.pdf(nu),
            Some(n) if reflection => self.reflected_pdf(nu, n),
            Some(n) => {
                if dot3(nu, n) > 0.0 {
                    self.pdf(nu)
                } else {
                    0.0
                }
            }
        }
    }

    /// One-sample balance-heuristic density `c p_g + (1 - c) p_u`.
    pub fn mis_pdf(&self, nu: &Dir, normal: Option<&Dir>) -> f64 {
        self.mis_pdfs(nu, normal, true).mis
    }

    pub fn mis_pdfs(&self, nu: &Dir, normal: Option<&Dir>, reflection: bool) -> DirPdfs {
        let guided = if self.c > 0.0 {
            self.guided_pdf(nu, normal, reflection)
        } else {
            0.0
        };
        let uniform = uniform_dir_pdf(nu, normal, self.dim);
        DirPdfs {
            mis: combine(self.c, guided, uniform),
            guided,
            uniform,
            c: self.c,
        }
    }

    /// Picks the guided technique with probability `c`, otherwise samples uniformly.
    ///
    /// Without reflection, a guided draw may land in the invalid hemisphere of a
    /// boundary; it is returned with `valid == false` and all densities zero.
    pub fn mis_sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        normal: Option<&Dir>,
        reflection: bool,
    ) -> MisSample {
        let u: f64 = rng.gen();
        let (nu, technique) = if u < self.c {
            let nu = match normal {
                None => self.sample(rng),
                Some(n) if reflection => self.reflected_sample(rng, n),
                Some(_) => self.sample(rng),
            };
            (nu, Technique::Guided)
        } else {
            let nu = match normal {
                None => sample_uniform_dir(rng, self.dim),
                Some(n) => sample_uniform_hemisphere(rng, n, self.dim),
            };
            (nu, Technique::Uniform)
        };
        let pdfs = self.mis_pdfs(&nu, normal, reflection);
        MisSample {
            nu,
            valid: pdfs.mis > 0.0,
            pdfs,
            technique,
        }
    }
}

#[inline]
fn combine(c: f64, guided: f64, uniform: f64) -> f64 {
    if c >= 1.0 {
        guided
    } else if c <= 0.0 {
        uniform
    } else {
        c * guided + (1.0 - c) * uniform
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Technique {
    Guided,
    Uniform,
}

/// Densities of a direction under the combined sampler and its two techniques.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirPdfs {
    pub mis: f64,
    pub guided: f64,
    pub uniform: f64,
    pub c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MisSample {
    pub nu: Dir,
    pub pdfs: DirPdfs,
    pub technique: Technique,
    pub valid: bool,
}

/// Free functions mirroring the methods, for callers that think in terms of operations.
pub fn vmf_pdf(nu: &Dir, comp: &VmfComponent) -> f64 {
    comp.pdf(nu)
}

pub fn mixture_pdf(nu: &Dir, params: &MixtureParams) -> f64 {
    params.pdf(nu)
}

pub fn reflected_pdf(nu: &Dir, params: &MixtureParams, n: &Dir) -> f64 {
    params.reflected_pdf(nu, n)
}

pub fn mis_pdf(nu: &Dir, params: &MixtureParams, n: Option<&Dir>) -> f64 {
    params.mis_pdf(nu, n)
}

/// Raw network outputs: `[mu' (K*d) | kappa' (K) | lambda' (K) | c']`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnnormParams {
    pub dim: Dim,
    pub k: usize,
    pub values: Vec<f64>,
}

pub fn output_len(dim: Dim, k: usize) -> usize {
    (2 + dim.n()) * k + 1
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl UnnormParams {
    pub fn new(dim: Dim, k: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), output_len(dim, k));
        UnnormParams { dim, k, values }
    }

    pub fn zeros(dim: Dim, k: usize) -> Self {
        UnnormParams::new(dim, k, vec![0.0; output_len(dim, k)])
    }

    pub fn mu_raw(&self, i: usize) -> &[f64] {
        let d = self.dim.n();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn kappa_index(&self, i: usize) -> usize {
        self.k * self.dim.n() + i
    }

    pub fn lambda_index(&self, i: usize) -> usize {
        self.k * (self.dim.n() + 1) + i
    }

    pub fn c_index(&self) -> usize {
        self.k * (self.dim.n() + 2)
    }

    pub fn c_raw(&self) -> f64 {
        self.values[self.c_index()]
    }

    fn mu_of(&self, i: usize) -> (Dir, f64) {
        let raw = self.mu_raw(i);
        let mut m = [0.0; 3];
        m[..raw.len()].copy_from_slice(raw);
        let len = norm3(&m);
        if len > 0.0 && len.is_finite() {
            ([m[0] / len, m[1] / len, m[2] / len], len)
        } else {
            ([1.0, 0.0, 0.0], 0.0)
        }
    }

    fn kappa_of(&self, i: usize) -> (f64, bool) {
        let k = self.values[self.kappa_index(i)].exp();
        if k < KAPPA_MIN {
            (KAPPA_MIN, true)
        } else if k > KAPPA_MAX || k.is_nan() {
            (KAPPA_MAX, true)
        } else {
            (k, false)
        }
    }

    /// Applies the output mappings: unit-normalize, exponentiate, softmax, sigmoid.
    pub fn decode(&self) -> MixtureParams {
        let lo = self.lambda_index(0);
        let logits = &self.values[lo..lo + self.k];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let components = (0..self.k)
            .map(|i| {
                let (mu, _) = self.mu_of(i);
                let (kappa, _) = self.kappa_of(i);
                VmfComponent::new(mu, kappa, exps[i] / total, self.dim)
            })
            .collect();
        MixtureParams::new(components, sigmoid(self.c_raw()), self.dim)
    }

    /// Decodes with a fixed selection probability instead of the learned one.
    pub fn decode_with_c(&self, c: f64) -> MixtureParams {
        let mut m = self.decode();
        m.c = c;
        m
    }
}

/// Accumulates `scale * dV(nu)/dTheta'` into `out` (same layout as `UnnormParams`).
///
/// `decoded` must be `unnorm.decode()`; it is passed in to avoid re-decoding.
pub fn mixture_grad_into(
    nu: &Dir,
    unnorm: &UnnormParams,
    decoded: &MixtureParams,
    scale: f64,
    out: &mut [f64],
) {
    let d = unnorm.dim.n();
    let v_total = decoded.pdf(nu);
    for (i, comp) in decoded.components.iter().enumerate() {
        let v = comp.pdf(nu);
        // softmax: dV/dlambda'_i = lambda_i (v_i - V)
        out[unnorm.lambda_index(i)] += scale * comp.lambda * (v - v_total);
        // exp with clamp: dV/dkappa'_i = lambda_i v_i kappa_i dln v/dkappa
        let (_, clamped) = unnorm.kappa_of(i);
        if !clamped {
            out[unnorm.kappa_index(i)] +=
                scale * comp.lambda * v * comp.kappa * comp.dlog_dkappa(nu);
        }
        // normalization: dmu/dmu' = (I - mu mu^T) / |mu'|
        let (mu, len) = unnorm.mu_of(i);
        if len > 0.0 {
            let t = dot3(&mu, nu);
            let f = scale * comp.lambda * v * comp.kappa / len;
            for j in 0..d {
                out[i * d + j] += f * (nu[j] - t * mu[j]);
            }
        }
    }
}

/// Gradient of `V(nu | Theta(Theta'))` with respect to every raw output.
pub fn mixture_grad(nu: &Dir, unnorm: &UnnormParams) -> Vec<f64> {
    let mut out = vec![0.0; unnorm.values.len()];
    mixture_grad_into(nu, unnorm, &unnorm.decode(), 1.0, &mut out);
    out
}
