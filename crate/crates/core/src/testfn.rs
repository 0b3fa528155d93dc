//! The fixture class of test functions: each supplies its value, its
//! coordinate (Euclidean) gradient, and boundedness/Lipschitz certificates
//! used by the estimators to enforce their preconditions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    Constant(f64),
    Coordinate(usize),
    /// `|x|^2`
    Norm2,
    /// `exp(-|x - center|^2 / (2 width^2))`
    GaussianBump { center: Vec<f64>, width: f64 },
    /// `clamp(slope (x_axis - center), -cap, cap)`: Lipschitz, bounded,
    /// constant outside a compact slab.
    LipCap { axis: usize, center: f64, slope: f64, cap: f64 },
    /// `exp(lambda |x|^2)`
    ExpRadial { lambda: f64 },
}

impl TestFunction {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Coordinate(i) => x[*i],
            TestFunction::Norm2 => x.iter().map(|c| c * c).sum(),
            TestFunction::GaussianBump { center, width } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            TestFunction::LipCap { axis, center, slope, cap } => {
                (slope * (x[*axis] - center)).clamp(-cap, *cap)
            }
            TestFunction::ExpRadial { lambda } => {
                (lambda * x.iter().map(|c| c * c).sum::<f64>()).exp()
            }
        }
    }

    /// Euclidean coordinate gradient.
    pub fn euclid_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        match self {
            TestFunction::Constant(_) => {}
            TestFunction::Coordinate(i) => g[*i] = 1.0,
            TestFunction::Norm2 => {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = 2.0 * xi;
                }
            }
            TestFunction::GaussianBump { center, width } => {
                let v = self.value(x);
                let w2 = width * width;
                for ((gi, xi), ci) in g.iter_mut().zip(x).zip(center) {
                    *gi = -(xi - ci) / w2 * v;
                }
            }
            TestFunction::LipCap { axis, center, slope, cap } => {
                if (slope * (x[*axis] - center)).abs() < *cap {
                    g[*axis] = *slope;
                }
            }
            TestFunction::ExpRadial { lambda } => {
                let v = self.value(x);
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = 2.0 * lambda * xi * v;
                }
            }
        }
        g
    }

    /// Supremum norm, when finite.
    pub fn sup_norm(&self) -> Option<f64> {
        match self {
            TestFunction::Constant(c) => Some(c.abs()),
            TestFunction::GaussianBump { .. } => Some(1.0),
            TestFunction::LipCap { cap, .. } => Some(*cap),
            _ => None,
        }
    }

    /// Global Lipschitz constant of the Euclidean representative.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            TestFunction::Constant(_) => Some(0.0),
            TestFunction::Coordinate(_) => Some(1.0),
            TestFunction::GaussianBump { width, .. } => {
                // max of |x| e^{-x^2/2} / width is e^{-1/2} / width
                Some((-0.5f64).exp() / width)
            }
            TestFunction::LipCap { slope, .. } => Some(slope.abs()),
            _ => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm().is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_gradient(f: &TestFunction, x: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (f.value(&xp) - f.value(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let fns = vec![
            TestFunction::Constant(2.0),
            TestFunction::Coordinate(1),
            TestFunction::Norm2,
            TestFunction::GaussianBump { center: vec![0.5, -0.3], width: 1.2 },
            TestFunction::LipCap { axis: 0, center: 0.0, slope: 1.0, cap: 10.0 },
            TestFunction::ExpRadial { lambda: 0.2 },
        ];
        let x = [0.7, -0.4];
        for f in &fns {
            let g = f.euclid_gradient(&x);
            let fd = fd_gradient(f, &x);
            for (a, b) in g.iter().zip(&fd) {
                assert_relative_eq!(a, b, epsilon = 1e-7, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn lipcap_saturates() {
        let f = TestFunction::LipCap { axis: 0, center: 0.0, slope: 2.0, cap: 1.0 };
        assert_relative_eq!(f.value(&[10.0]), 1.0);
        assert_relative_eq!(f.value(&[-10.0]), -1.0);
        assert_relative_eq!(f.value(&[0.25]), 0.5);
        assert_eq!(f.euclid_gradient(&[10.0]), vec![0.0]);
        assert_eq!(f.sup_norm(), Some(1.0));
    }

    #[test]
    fn certificates_are_consistent() {
        let f = TestFunction::GaussianBump { center: vec![0.0], width: 2.0 };
        let lip = f.lipschitz().unwrap();
        for i in -50..50 {
            let x = [i as f64 / 10.0];
            let g = f.euclid_gradient(&x);
            assert!(g[0].abs() <= lip + 1e-12);
            assert!(f.value(&x).abs() <= f.sup_norm().unwrap());
        }
    }
}
