//! Linear and radial kernels restricted to a feature mask.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Radial { gamma: f64 },
}

/// A kernel together with the feature mask it is evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub mask: Vec<bool>,
}

impl KernelSpec {
    pub fn linear(mask: Vec<bool>) -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            mask,
        }
    }

    pub fn radial(gamma: f64, mask: Vec<bool>) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("radial gamma must be positive, got {gamma}")));
        }
        Ok(KernelSpec {
            kind: KernelKind::Radial { gamma },
            mask,
        })
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    /// Indices of the selected features.
    pub fn active(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(k, &on)| on.then_some(k))
            .collect()
    }

    pub fn eval(&self, x: ArrayView1<f64>, x2: ArrayView1<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(x2.len())?;
        Ok(self.eval_on(&self.active(), x, x2))
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.mask.len() {
            return Err(Error::Dimension {
                expected: self.mask.len(),
                got,
            });
        }
        Ok(())
    }

    #[inline]
    fn eval_on(&self, active: &[usize], x: ArrayView1<f64>, x2: ArrayView1<f64>) -> f64 {
        match self.kind {
            KernelKind::Linear => active.iter().map(|&k| x[k] * x2[k]).sum(),
            KernelKind::Radial { gamma } => {
                let d2: f64 = active
                    .iter()
                    .map(|&k| {
                        let d = x[k] - x2[k];
                        d * d
                    })
                    .sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel function on two equal-length vectors, `kernels::eval_kernel` form.
pub fn eval_kernel(spec: &KernelSpec, x: ArrayView1<f64>, x2: ArrayView1<f64>) -> Result<f64> {
    spec.eval(x, x2)
}

/// Dense symmetric kernel matrix over the rows of a sample.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    n: usize,
    data: Vec<f64>,
    spec: KernelSpec,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// Builds a Gram matrix from explicit entries. Used by tests and by
    /// callers that already hold a kernel matrix.
    pub fn from_dense(n: usize, data: Vec<f64>, spec: KernelSpec) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(GramMatrix { n, data, spec })
    }

    /// Principal submatrix on `idx`.
    pub fn select(&self, idx: &[usize]) -> GramMatrix {
        let m = idx.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in idx {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        GramMatrix {
            n: m,
            data,
            spec: self.spec.clone(),
        }
    }
}

pub fn gram(spec: &KernelSpec, x: ArrayView2<f64>) -> Result<GramMatrix> {
    spec.check_dim(x.ncols())?;
    let n = x.nrows();
    let active = spec.active();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let xi = x.row(i);
        for j in i..n {
            let v = spec.eval_on(&active, xi, x.row(j));
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(GramMatrix {
        n,
        data,
        spec: spec.clone(),
    })
}

/// Kernel values between every row of `a` and every row of `b`,
/// row-major `a.nrows() x b.nrows()`.
pub fn cross_kernel(spec: &KernelSpec, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Vec<f64>> {
    spec.check_dim(a.ncols())?;
    spec.check_dim(b.ncols())?;
    let active = spec.active();
    let mut out = Vec::with_capacity(a.nrows() * b.nrows());
    for ra in a.rows() {
        for rb in b.rows() {
            out.push(spec.eval_on(&active, ra, rb));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radial_with_empty_mask_is_one() {
        let spec = KernelSpec::radial(3.0, vec![false, false]).unwrap();
        let v = spec.eval(array![1.0, 5.0].view(), array![-2.0, 0.5].view()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn radial_unit_distance() {
        let spec = KernelSpec::radial(1.0, vec![true, true]).unwrap();
        let v = spec.eval(array![0.0, 0.0].view(), array![1.0, 0.0].view()).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367_879).abs() < 1e-6);
    }

    #[test]
    fn linear_self_product_is_squared_norm() {
        let spec = KernelSpec::linear(vec![true; 3]);
        let x = array![1.0, -2.0, 0.5];
        assert_eq!(spec.eval(x.view(), x.view()).unwrap(), 5.25);
    }

    #[test]
    fn dimension_mismatch() {
        let spec = KernelSpec::linear(vec![true; 3]);
        assert!(spec.eval(array![1.0].view(), array![1.0, 2.0, 3.0].view()).is_err());
        assert!(KernelSpec::radial(0.0, vec![true]).is_err());
    }

    #[test]
    fn single_row_radial_gram() {
        let spec = KernelSpec::radial(0.7, vec![true, true]).unwrap();
        let g = gram(&spec, array![[0.3, 0.4]].view()).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.get(0, 0), 1.0);
    }

    #[test]
    fn full_mask_matches_plain_rbf() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let spec = KernelSpec::radial(0.5, vec![true; 3]).unwrap();
        let g = gram(&spec, x.view()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let d2: f64 = (0..3).map(|k| (x[[i, k]] - x[[j, k]]).powi(2)).sum();
                assert!((g.get(i, j) - (-0.5 * d2).exp()).abs() < 1e-15);
            }
        }
    }
}
