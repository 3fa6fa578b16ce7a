//! Mode analysis of bilinear problems `L = xᵀBy`.
//!
//! With `B = Σ λᵢ uᵢ vᵢᵀ`, the coordinates `x̂ᵢ = uᵢᵀx`, `ŷᵢ = vᵢᵀy` evolve as
//! independent planar rotations with an order-dependent damping.

use serde::Serialize;

use crate::dta::Algorithm;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

#[derive(Clone, Debug, Serialize)]
pub struct ModeDecomposition {
    pub singular_values: Vec<f64>,
    /// Left singular vectors as columns (`n × p`).
    pub u: Matrix,
    /// Right singular vectors as columns (`m × p`).
    pub v: Matrix,
    pub rank_cutoff: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OrderTag {
    /// Gradient flow.
    Gf,
    /// First-order ODE shared by PPM and EGM.
    Os,
    /// Second-order ODE of PPM.
    Os2Ppm,
    /// Second-order ODE of EGM.
    Os2Egm,
    /// First-order ODE of GDA.
    GdaOs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeSolution {
    pub amplitude: f64,
    pub phase: f64,
    /// Exponent `a` of the envelope `e^{a t}`.
    pub decay_rate: f64,
    pub frequency: f64,
    pub tag: OrderTag,
}

/// SVD of `B` keeping singular values above `rank_cutoff · σ_max`.
pub fn bilinear_modes(b: &Matrix, rank_cutoff: f64) -> Result<ModeDecomposition> {
    if b.is_empty() || b.amax() == 0.0 {
        return Err(Error::InvalidProblem("coupling matrix is zero".into()));
    }
    let svd = b.clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let top = svd.singular_values.max();
    let mut keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rank_cutoff * top)
        .collect();
    keep.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(ModeDecomposition {
        singular_values: keep.iter().map(|&i| svd.singular_values[i]).collect(),
        u: Matrix::from_fn(b.nrows(), keep.len(), |r, c| u[(r, keep[c])]),
        v: Matrix::from_fn(b.ncols(), keep.len(), |r, c| vt[(keep[c], r)]),
        rank_cutoff,
    })
}

impl ModeDecomposition {
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn m(&self) -> usize {
        self.v.nrows()
    }

    /// `Σ λᵢ uᵢ vᵢᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&Vector::from_column_slice(&self.singular_values)) * self.v.transpose()
    }

    /// Planar coordinates `(x̂ᵢ, ŷᵢ)` of every retained mode.
    pub fn project(&self, z: &Vector) -> Vec<(f64, f64)> {
        let (n, m) = (self.n(), self.m());
        let xh = self.u.transpose() * z.rows(0, n);
        let yh = self.v.transpose() * z.rows(n, m);
        xh.iter().copied().zip(yh.iter().copied()).collect()
    }

    /// Orthonormal map from interleaved mode coordinates `(x̂₁, ŷ₁, x̂₂, …)` to `z`.
    pub fn basis(&self) -> Matrix {
        let (n, m, p) = (self.n(), self.m(), self.len());
        let mut out = Matrix::zeros(n + m, 2 * p);
        for i in 0..p {
            out.view_mut((0, 2 * i), (n, 1)).copy_from(&self.u.column(i));
            out.view_mut((n, 2 * i + 1), (m, 1)).copy_from(&self.v.column(i));
        }
        out
    }

    /// Largest entry of `Pᵀ G P` outside the 2×2 mode blocks.
    pub fn cross_mode_coupling(&self, generator: &Matrix) -> f64 {
        let p = self.basis();
        let t = p.transpose() * generator * &p;
        let mut worst: f64 = 0.0;
        for r in 0..t.nrows() {
            for c in 0..t.ncols() {
                if r / 2 != c / 2 {
                    worst = worst.max(t[(r, c)].abs());
                }
            }
        }
        worst
    }

    pub fn solutions(&self, tag: OrderTag, s: f64, z0: &Vector) -> Vec<ModeSolution> {
        self.project(z0)
            .into_iter()
            .zip(&self.singular_values)
            .map(|((x, y), &lambda)| ModeSolution {
                amplitude: x.hypot(y),
                phase: y.atan2(x),
                decay_rate: decay_rate(tag, s, lambda),
                frequency: frequency(tag, s, lambda),
                tag,
            })
            .collect()
    }
}

fn decay_rate(tag: OrderTag, s: f64, lambda: f64) -> f64 {
    let base = 0.5 * s * lambda * lambda;
    match tag {
        OrderTag::Gf => 0.0,
        OrderTag::Os | OrderTag::Os2Ppm | OrderTag::Os2Egm => -base,
        OrderTag::GdaOs => base,
    }
}

fn frequency(tag: OrderTag, s: f64, lambda: f64) -> f64 {
    match tag {
        OrderTag::Os2Ppm => lambda - s * s * lambda.powi(3) / 3.0,
        OrderTag::Os2Egm => lambda + 2.0 * s * s * lambda.powi(3) / 3.0,
        _ => lambda,
    }
}

/// Closed-form state at time `t`; components outside every mode stay fixed.
pub fn closed_form_state(modes: &ModeDecomposition, tag: OrderTag, s: f64, z0: &Vector, t: f64) -> Vector {
    let (n, m) = (modes.n(), modes.m());
    let x0 = z0.rows(0, n);
    let y0 = z0.rows(n, m);
    let mut x = x0 - &modes.u * (modes.u.transpose() * x0);
    let mut y = y0 - &modes.v * (modes.v.transpose() * y0);
    for (i, sol) in modes.solutions(tag, s, z0).iter().enumerate() {
        let r = sol.amplitude * (sol.decay_rate * t).exp();
        let angle = sol.frequency * t + sol.phase;
        x.axpy(r * angle.cos(), &modes.u.column(i), 1.0);
        y.axpy(r * angle.sin(), &modes.v.column(i), 1.0);
    }
    crate::saddle::stack(&x, &y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rotation {
    /// Factor on the mode radius per step.
    pub contraction: f64,
    /// Rotation angle per step.
    pub angle: f64,
}

/// Exact per-step radius factor and angle of an algorithm on one mode.
pub fn dta_exact_rotation(alg: Algorithm, s: f64, lambda: f64) -> Result<Rotation> {
    let q = s * lambda;
    match alg {
        Algorithm::Gda => Ok(Rotation { contraction: (1.0 + q * q).sqrt(), angle: q.atan2(1.0) }),
        Algorithm::Ppm => Ok(Rotation { contraction: 1.0 / (1.0 + q * q).sqrt(), angle: q.atan2(1.0) }),
        Algorithm::Egm => {
            let re = 1.0 - q * q;
            Ok(Rotation { contraction: (re * re + q * q).sqrt(), angle: q.atan2(re) })
        }
        Algorithm::Jm => Err(Error::Unsupported("the Jacobian method does not rotate modes".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyFit {
    pub omega: f64,
    /// Standard deviation of the per-half-period estimates.
    pub spread: f64,
    pub crossings: usize,
}

/// Angular frequency from zero crossings of `x(t)·e^{−a t}`.
pub fn fit_frequency(times: &[f64], values: &[f64], decay_rate: f64) -> Result<FrequencyFit> {
    if times.len() != values.len() {
        return Err(Error::Dimension(format!("{} times vs {} values", times.len(), values.len())));
    }
    let signal: Vec<f64> = times.iter().zip(values).map(|(t, v)| v * (-decay_rate * t).exp()).collect();
    let mut crossings = Vec::new();
    for k in 0..signal.len().saturating_sub(1) {
        let (a, b) = (signal[k], signal[k + 1]);
        if a == 0.0 {
            if crossings.last() != Some(&times[k]) {
                crossings.push(times[k]);
            }
        } else if a * b < 0.0 {
            crossings.push(times[k] + (times[k + 1] - times[k]) * a / (a - b));
        }
    }
    if crossings.len() < 3 {
        return Err(Error::TooFewCrossings(crossings.len()));
    }
    let per: Vec<f64> = crossings.windows(2).map(|w| std::f64::consts::PI / (w[1] - w[0])).collect();
    let span = crossings[crossings.len() - 1] - crossings[0];
    let omega = std::f64::consts::PI * (crossings.len() - 1) as f64 / span;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    let spread = (per.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / per.len() as f64).sqrt();
    Ok(FrequencyFit { omega, spread, crossings: crossings.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_counts() {
        let one = bilinear_modes(&Matrix::from_element(1, 1, 1.0), 1e-10).unwrap();
        assert_eq!(one.singular_values, vec![1.0]);
        let diag = bilinear_modes(&Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5])), 1e-10).unwrap();
        assert_eq!(diag.singular_values, vec![2.0, 0.5]);
        let nil = bilinear_modes(&Matrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]), 1e-10).unwrap();
        assert_eq!(nil.len(), 1);
        assert!((nil.singular_values[0] - 3.0).abs() < 1e-14);
        assert!(bilinear_modes(&Matrix::zeros(2, 2), 1e-10).is_err());
    }

    #[test]
    fn closed_form_radii() {
        let modes = bilinear_modes(&Matrix::from_element(1, 1, 1.0), 1e-10).unwrap();
        let z0 = Vector::from_vec(vec![1.0, 1.0]);
        assert!((closed_form_state(&modes, OrderTag::Os, 0.3, &z0, 0.0) - &z0).amax() < 1e-15);
        let t = 2.0 * std::f64::consts::PI;
        let z = closed_form_state(&modes, OrderTag::Os, 0.3, &z0, t);
        assert!((z.norm() / z0.norm() - (-0.15 * t).exp()).abs() < 1e-12);
        assert!(((-0.15 * t).exp() - 0.389661).abs() < 1e-6);
        assert!((z[0] - z[1]).abs() < 1e-12);
        let g = closed_form_state(&modes, OrderTag::GdaOs, 0.3, &z0, t);
        assert!((g.norm() / z0.norm() - 2.566332).abs() < 1e-6);
    }

    #[test]
    fn exact_rotations() {
        let p = dta_exact_rotation(Algorithm::Ppm, 0.3, 1.0).unwrap();
        assert!((p.contraction - 0.957826).abs() < 1e-6);
        assert!((p.angle - 0.2914568).abs() < 1e-7);
        let e = dta_exact_rotation(Algorithm::Egm, 0.3, 1.0).unwrap();
        assert!((e.angle - 0.3184502).abs() < 1e-7);
        let g = dta_exact_rotation(Algorithm::Gda, 0.3, 1.0).unwrap();
        assert!((g.contraction - 1.09f64.sqrt()).abs() < 1e-15);
        assert!(dta_exact_rotation(Algorithm::Jm, 0.3, 1.0).is_err());
    }

    #[test]
    fn synthetic_frequency() {
        let ts: Vec<f64> = (0..=400).map(|k| k as f64 * 0.05).collect();
        let xs: Vec<f64> = ts.iter().map(|t| (0.97 * t).cos()).collect();
        let fit = fit_frequency(&ts, &xs, 0.0).unwrap();
        assert!((fit.omega - 0.97).abs() < 0.005);
        assert!(matches!(fit_frequency(&ts[..20], &xs[..20], 0.0), Err(Error::TooFewCrossings(_))));
    }
}
