//! The three evolving model spaces and their exact differential-geometric
//! data: metric, distance, curvature endomorphism, time derivative of the
//! metric and exponential map.
//!
//! All three families are isotropic: the metric changes by a scalar factor,
//! so the rate-of-change tensor acts as a scalar endomorphism and frame
//! evolution reduces to an analytic rescaling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timefn::TimeFn;

pub const SPHERE_POINT_RTOL: f64 = 1e-9;
pub const FRAME_ORTHO_TOL: f64 = 1e-8;

/// Drift vector field specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftSpec {
    Zero,
    /// `Z_t(x) = -lambda(t) x` in chart coordinates (flat-based kinds only).
    LinearRadial { lambda: TimeFn },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    ConformalFlat,
    ShrinkingSphere,
    StaticFlat,
}

/// An evolving model space: geometry kind, dimension, time-dependent
/// coefficients and drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub dim: usize,
    /// Conformal factor `c(t)` of the flat metric `c(t)^2 dx^2`
    /// (`ConformalFlat` only; constant 1 otherwise).
    pub conformal_factor: TimeFn,
    /// Squared radius at time 0 (`ShrinkingSphere` only). A value of 0 is
    /// the self-similar sphere collapsing exactly at time 0.
    pub initial_radius_sq: f64,
    pub drift: DriftSpec,
    /// Times are restricted to `(-inf, horizon)`.
    pub horizon: f64,
}

impl Model {
    pub fn static_flat(dim: usize, drift: DriftSpec) -> Model {
        Model {
            kind: ModelKind::StaticFlat,
            dim,
            conformal_factor: TimeFn::Constant(1.0),
            initial_radius_sq: 0.0,
            drift,
            horizon: f64::INFINITY,
        }
    }

    /// Standard Ornstein-Uhlenbeck fixture: flat space, drift `-x`.
    pub fn ou(dim: usize) -> Model {
        Model::static_flat(
            dim,
            DriftSpec::LinearRadial { lambda: TimeFn::Constant(1.0) },
        )
    }

    pub fn conformal_flat(dim: usize, conformal_factor: TimeFn, drift: DriftSpec) -> Model {
        Model {
            kind: ModelKind::ConformalFlat,
            dim,
            conformal_factor,
            initial_radius_sq: 0.0,
            drift,
            horizon: f64::INFINITY,
        }
    }

    /// Round sphere with `r(t)^2 = r0^2 - 2(d-1)t`, collapsing at the
    /// forced horizon `r0^2 / (2(d-1))`.
    pub fn shrinking_sphere(dim: usize, initial_radius: f64) -> Result<Model> {
        if dim < 2 {
            return Err(Error::Domain("shrinking sphere needs dim >= 2".into()));
        }
        if initial_radius < 0.0 {
            return Err(Error::Domain("initial radius must be non-negative".into()));
        }
        let r0_sq = initial_radius * initial_radius;
        Ok(Model {
            kind: ModelKind::ShrinkingSphere,
            dim,
            conformal_factor: TimeFn::Constant(1.0),
            initial_radius_sq: r0_sq,
            drift: DriftSpec::Zero,
            horizon: r0_sq / (2.0 * (dim as f64 - 1.0)),
        })
    }

    pub fn is_flat_based(&self) -> bool {
        matches!(self.kind, ModelKind::StaticFlat | ModelKind::ConformalFlat)
    }

    /// Dimension of the coordinate vectors points are stored in.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ModelKind::ShrinkingSphere => self.dim + 1,
            _ => self.dim,
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if t < self.horizon {
            Ok(())
        } else {
            Err(Error::HorizonViolation { time: t, horizon: self.horizon })
        }
    }

    pub fn conformal(&self, t: f64) -> f64 {
        match self.kind {
            ModelKind::ConformalFlat => self.conformal_factor.value(t),
            _ => 1.0,
        }
    }

    pub fn radius_sq(&self, t: f64) -> f64 {
        self.initial_radius_sq - 2.0 * (self.dim as f64 - 1.0) * t
    }

    pub fn radius(&self, t: f64) -> f64 {
        self.radius_sq(t).sqrt()
    }

    /// Scalar endomorphism value of `h_t = (1/2) ∂_t g_t`: `ċ/c` for the
    /// conformal family, `ṙ/r` for the sphere, zero for the static space.
    pub fn metric_rate(&self, t: f64) -> f64 {
        match self.kind {
            ModelKind::StaticFlat => 0.0,
            ModelKind::ConformalFlat => {
                self.conformal_factor.derivative(t) / self.conformal_factor.value(t)
            }
            ModelKind::ShrinkingSphere => -(self.dim as f64 - 1.0) / self.radius_sq(t),
        }
    }

    pub fn drift_lambda(&self, t: f64) -> f64 {
        match &self.drift {
            DriftSpec::Zero => 0.0,
            DriftSpec::LinearRadial { lambda } => lambda.value(t),
        }
    }

    /// Scalar lower bound of `Ric_t - h_t - ∇Z_t`; sharp on these models.
    pub fn curvature_drift_scalar(&self, t: f64) -> f64 {
        match self.kind {
            ModelKind::StaticFlat => self.drift_lambda(t),
            ModelKind::ConformalFlat => self.drift_lambda(t) - self.metric_rate(t),
            ModelKind::ShrinkingSphere => 2.0 * (self.dim as f64 - 1.0) / self.radius_sq(t),
        }
    }

    pub fn drift_vector(&self, t: f64, x: &SpacePoint) -> Vec<f64> {
        match &self.drift {
            DriftSpec::Zero => vec![0.0; x.coords.len()],
            DriftSpec::LinearRadial { lambda } => {
                let l = lambda.value(t);
                x.coords.iter().map(|&c| -l * c).collect()
            }
        }
    }

    /// Origin used as the reference point for radial quantities.
    pub fn origin(&self, t: f64) -> SpacePoint {
        match self.kind {
            ModelKind::ShrinkingSphere => {
                let mut coords = vec![0.0; self.dim + 1];
                coords[self.dim] = self.radius(t);
                SpacePoint { coords }
            }
            _ => SpacePoint { coords: vec![0.0; self.dim] },
        }
    }

    pub fn validate_point(&self, t: f64, x: &SpacePoint) -> Result<()> {
        self.check_time(t)?;
        if x.coords.len() != self.ambient_dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, expected {}",
                x.coords.len(),
                self.ambient_dim()
            )));
        }
        if self.kind == ModelKind::ShrinkingSphere {
            let r = self.radius(t);
            if (x.norm() - r).abs() > SPHERE_POINT_RTOL * r {
                return Err(Error::Domain(format!(
                    "point norm {} off the sphere of radius {}",
                    x.norm(),
                    r
                )));
            }
        }
        Ok(())
    }
}

/// A point of the model space in chart (flat kinds) or ambient (sphere)
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacePoint {
    pub coords: Vec<f64>,
}

impl SpacePoint {
    pub fn new(coords: Vec<f64>) -> SpacePoint {
        SpacePoint { coords }
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SpacePoint) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }
}

/// A `g_t`-orthonormal frame at a point: rows of `basis` are tangent
/// vectors forming the image of the canonical basis of `R^d`.
#[derive(Debug, Clone)]
pub struct FrameState {
    pub basepoint: SpacePoint,
    pub basis: DMatrix<f64>,
    pub time: f64,
}

impl FrameState {
    /// Canonical frame at `x`: rescaled coordinate axes for flat kinds, a
    /// Gram-Schmidt completion of the tangent space on the sphere.
    pub fn canonical(model: &Model, t: f64, x: &SpacePoint) -> Result<FrameState> {
        model.validate_point(t, x)?;
        let d = model.dim;
        let amb = model.ambient_dim();
        let mut basis = DMatrix::zeros(d, amb);
        match model.kind {
            ModelKind::StaticFlat | ModelKind::ConformalFlat => {
                let scale = 1.0 / model.conformal(t);
                for i in 0..d {
                    basis[(i, i)] = scale;
                }
            }
            ModelKind::ShrinkingSphere => {
                let u: Vec<f64> = x.coords.iter().map(|c| c / x.norm()).collect();
                let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
                for axis in 0..amb {
                    if rows.len() == d {
                        break;
                    }
                    let mut v = vec![0.0; amb];
                    v[axis] = 1.0;
                    // project out the radial direction and earlier rows
                    let du: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
                    for (vi, ui) in v.iter_mut().zip(&u) {
                        *vi -= du * ui;
                    }
                    for row in &rows {
                        let dr: f64 = v.iter().zip(row).map(|(a, b)| a * b).sum();
                        for (vi, ri) in v.iter_mut().zip(row) {
                            *vi -= dr * ri;
                        }
                    }
                    let n: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if n > 1e-8 {
                        rows.push(v.iter().map(|c| c / n).collect());
                    }
                }
                for (i, row) in rows.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        basis[(i, j)] = *v;
                    }
                }
            }
        }
        Ok(FrameState { basepoint: x.clone(), basis, time: t })
    }

    /// Maps Euclidean components to the tangent vector `sum_i a_i f_i`.
    pub fn apply(&self, components: &[f64]) -> Vec<f64> {
        let amb = self.basis.ncols();
        let mut out = vec![0.0; amb];
        for (i, a) in components.iter().enumerate() {
            for j in 0..amb {
                out[j] += a * self.basis[(i, j)];
            }
        }
        out
    }

    /// Maximal deviation of `<f_i, f_j>_{g_t}` from the identity.
    pub fn orthonormality_defect(&self, model: &Model) -> f64 {
        let c = model.conformal(self.time);
        let gram_scale = c * c; // g_t inner product is c^2 * euclidean on flat kinds
        let scale = if model.is_flat_based() { gram_scale } else { 1.0 };
        let d = self.basis.nrows();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..self.basis.ncols())
                    .map(|k| self.basis[(i, k)] * self.basis[(j, k)])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((scale * dot - target).abs());
            }
        }
        worst
    }
}

/// Riemannian distance at time `t`.
pub fn distance(model: &Model, t: f64, x: &SpacePoint, y: &SpacePoint) -> Result<f64> {
    model.validate_point(t, x)?;
    model.validate_point(t, y)?;
    match model.kind {
        ModelKind::StaticFlat | ModelKind::ConformalFlat => {
            let e: f64 = x
                .coords
                .iter()
                .zip(&y.coords)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            Ok(model.conformal(t) * e)
        }
        ModelKind::ShrinkingSphere => {
            let r = model.radius(t);
            let chord: f64 = x
                .coords
                .iter()
                .zip(&y.coords)
                .map(|(a, b)| (a / r - b / r) * (a / r - b / r))
                .sum::<f64>()
                .sqrt();
            // 2 asin(chord/2) is exact and stable over the whole range
            let angle = 2.0 * (0.5 * chord.min(2.0)).asin();
            Ok(r * angle)
        }
    }
}

/// Time derivative of `t -> rho_t(x, y)` holding the endpoints fixed.
pub fn distance_time_derivative(model: &Model, t: f64, x: &SpacePoint, y: &SpacePoint) -> Result<f64> {
    let rho = distance(model, t, x, y)?;
    if rho == 0.0 {
        return Ok(0.0);
    }
    Ok(model.metric_rate(t) * rho)
}

/// Matrix of the Bakry-Emery-type tensor `Ric_t - h_t - ∇Z_t` read in the
/// given frame. Isotropic on these models, hence a multiple of the
/// identity for every admissible frame.
pub fn rz_operator(model: &Model, t: f64, frame: &FrameState) -> Result<DMatrix<f64>> {
    model.check_time(t)?;
    debug_assert_eq!(frame.basis.nrows(), model.dim);
    let k = model.curvature_drift_scalar(t);
    Ok(DMatrix::identity(model.dim, model.dim) * k)
}

/// Exponential map: moves `x` along the geodesic with initial velocity `v`
/// (ambient/chart representation of a tangent vector).
pub fn geodesic_step(model: &Model, t: f64, x: &SpacePoint, v: &[f64]) -> Result<SpacePoint> {
    model.validate_point(t, x)?;
    match model.kind {
        ModelKind::StaticFlat | ModelKind::ConformalFlat => Ok(SpacePoint::new(
            x.coords.iter().zip(v).map(|(a, b)| a + b).collect(),
        )),
        ModelKind::ShrinkingSphere => {
            let r = model.radius(t);
            let vnorm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if vnorm == 0.0 {
                return Ok(x.clone());
            }
            let radial: f64 = v.iter().zip(&x.coords).map(|(a, b)| a * b).sum::<f64>() / r;
            if radial.abs() > 1e-6 * vnorm {
                return Err(Error::Domain(format!(
                    "velocity has radial component {radial:e} relative to norm {vnorm:e}"
                )));
            }
            // drop the residual radial part so the step stays on the sphere
            let vt: Vec<f64> = v
                .iter()
                .zip(&x.coords)
                .map(|(a, b)| a - radial * b / r)
                .collect();
            let vt_norm: f64 = vt.iter().map(|c| c * c).sum::<f64>().sqrt();
            let theta = vt_norm / r;
            let (c, s) = (theta.cos(), theta.sin());
            let coords: Vec<f64> = x
                .coords
                .iter()
                .zip(&vt)
                .map(|(xi, vi)| c * xi + s * r * vi / vt_norm)
                .collect();
            // renormalize to kill the last few ulps of drift
            let n: f64 = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
            Ok(SpacePoint::new(coords.iter().map(|c| c * r / n).collect()))
        }
    }
}

/// Parallel transport of an ambient tangent vector `a` at `x` to `y`
/// along the connecting minimal geodesic (sphere of radius `r`). At the
/// antipode the transport plane is fixed by a deterministic reference
/// axis.
pub fn sphere_parallel_transport(x: &SpacePoint, y: &SpacePoint, a: &[f64]) -> Vec<f64> {
    let r = x.norm();
    let u: Vec<f64> = x.coords.iter().map(|c| c / r).collect();
    let up: Vec<f64> = y.coords.iter().map(|c| c / y.norm()).collect();
    let cos_t: f64 = u.iter().zip(&up).map(|(p, q)| p * q).sum();
    // w = unit vector along the geodesic direction at x
    let mut w: Vec<f64> = up.iter().zip(&u).map(|(p, q)| p - cos_t * q).collect();
    let wn: f64 = w.iter().map(|c| c * c).sum::<f64>().sqrt();
    if wn < 1e-12 {
        if cos_t > 0.0 {
            return a.to_vec();
        }
        // antipodal pair: pick the transport plane from a fixed axis
        let mut axis = vec![0.0; u.len()];
        let idx = u
            .iter()
            .enumerate()
            .min_by(|l, r| l.1.abs().partial_cmp(&r.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        axis[idx] = 1.0;
        let du: f64 = axis.iter().zip(&u).map(|(p, q)| p * q).sum();
        w = axis.iter().zip(&u).map(|(p, q)| p - du * q).collect();
        let n: f64 = w.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in w.iter_mut() {
            *c /= n;
        }
    } else {
        for c in w.iter_mut() {
            *c /= wn;
        }
    }
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let au: f64 = a.iter().zip(&u).map(|(p, q)| p * q).sum();
    let aw: f64 = a.iter().zip(&w).map(|(p, q)| p * q).sum();
    a.iter()
        .enumerate()
        .map(|(i, &ai)| {
            ai + (cos_t - 1.0) * (au * u[i] + aw * w[i]) + sin_t * (au * w[i] - aw * u[i])
        })
        .collect()
}

/// Squared `g_t`-norm of the gradient of a function given its
/// coordinate/ambient Euclidean gradient at `x`.
pub fn grad_norm_sq(model: &Model, t: f64, x: &SpacePoint, euclid_grad: &[f64]) -> f64 {
    match model.kind {
        ModelKind::StaticFlat | ModelKind::ConformalFlat => {
            let c = model.conformal(t);
            euclid_grad.iter().map(|g| g * g).sum::<f64>() / (c * c)
        }
        ModelKind::ShrinkingSphere => {
            let r = x.norm();
            let radial: f64 =
                euclid_grad.iter().zip(&x.coords).map(|(g, c)| g * c / r).sum();
            euclid_grad.iter().map(|g| g * g).sum::<f64>() - radial * radial
        }
    }
}

/// Components of the `g_t`-gradient of a function in the given frame:
/// `a_i = df(f_i)`, i.e. the Euclidean pairing of the coordinate gradient
/// with each frame row.
pub fn gradient_frame_components(frame: &FrameState, euclid_grad: &[f64]) -> Vec<f64> {
    (0..frame.basis.nrows())
        .map(|i| {
            (0..frame.basis.ncols())
                .map(|j| frame.basis[(i, j)] * euclid_grad[j])
                .sum()
        })
        .collect()
}
