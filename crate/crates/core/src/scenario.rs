//! Coefficient systems for the process and the field, the built-in scenario
//! catalog, and conversion between the centered and non-centered Poisson
//! representations.
//!
//! Array layouts used throughout:
//! - diffusion `b`: `n x m`, `b[i * m + k]` is component `i` of column `b_k`;
//! - `∇D`: `n x m`, `[i * m + k] = ∂D_k/∂x_i`;
//! - Hessians: `n x n`, `[i * n + j]`;
//! - `∇²D`: `[(i * n + j) * m + k] = ∂²D_k/∂x_i∂x_j`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{central_gradient, central_hessian, central_jacobian};
use crate::noise::{IntensitySpec, MarkDistribution};

pub type TimeFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;
pub type MarkFn = Arc<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>;
pub type FieldScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type FieldVecFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
pub type FieldMarkFn = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;
pub type FieldMarkVecFn = Arc<dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync>;
pub type InitFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type InitVecFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

pub type Params = BTreeMap<String, f64>;

/// Which Poisson measure drives the jump integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    /// Jumps integrate against `ν(dt, dγ)`.
    NonCentered,
    /// Jumps integrate against `ν(dt, dγ) - dt Pi(dγ)`.
    Centered,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::NonCentered => "non-centered",
            Representation::Centered => "centered",
        })
    }
}

/// `dx = a(t) dt + b_k(t) dw_k + ∫ g(t, γ) ν(dt, dγ)`.
#[derive(Clone)]
pub struct ProcessCoefficients {
    n: usize,
    m: usize,
    drift: TimeFn,
    diffusion: TimeFn,
    jump: MarkFn,
    representation: Representation,
}

impl ProcessCoefficients {
    /// All-zero coefficients in the non-centered representation.
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            drift: Arc::new(|_, out| out.fill(0.0)),
            diffusion: Arc::new(|_, out| out.fill(0.0)),
            jump: Arc::new(|_, _, out| out.fill(0.0)),
            representation: Representation::NonCentered,
        }
    }

    pub fn with_drift(mut self, f: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(f);
        self
    }

    pub fn with_diffusion(mut self, f: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Arc::new(f);
        self
    }

    pub fn with_jump(mut self, f: impl Fn(f64, f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.jump = Arc::new(f);
        self
    }

    pub fn with_representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn drift(&self, t: f64, out: &mut [f64]) {
        (self.drift)(t, out)
    }

    pub fn diffusion(&self, t: f64, out: &mut [f64]) {
        (self.diffusion)(t, out)
    }

    pub fn jump(&self, t: f64, mark: f64, out: &mut [f64]) {
        (self.jump)(t, mark, out)
    }

    /// Drift of the non-centered form: `a(t)` as stored when non-centered,
    /// `ã(t) - ∫ g(t, γ) Pi(dγ)` when centered.
    pub fn effective_drift(&self, intensity: &IntensitySpec, t: f64, out: &mut [f64]) -> Result<()> {
        self.drift(t, out);
        if self.representation == Representation::Centered {
            let mut comp = vec![0.0; self.n];
            intensity.integrate_into(&mut comp, |g, v| self.jump(t, g, v))?;
            for (o, c) in out.iter_mut().zip(&comp) {
                *o -= c;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for ProcessCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessCoefficients")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("representation", &self.representation)
            .finish_non_exhaustive()
    }
}

/// `dF(t; x) = Q dt + D_k dw_k + ∫ G(t; x; γ) ν(dt, dγ)`, `F(0; x) = F0(x)`,
/// with optional analytic spatial derivatives.
#[derive(Clone)]
pub struct FieldCoefficients {
    n: usize,
    m: usize,
    q: FieldScalarFn,
    d: FieldVecFn,
    g: FieldMarkFn,
    f0: InitFn,
    q_grad: Option<FieldVecFn>,
    q_hess: Option<FieldVecFn>,
    d_grad: Option<FieldVecFn>,
    d_hess: Option<FieldVecFn>,
    g_grad: Option<FieldMarkVecFn>,
    g_hess: Option<FieldMarkVecFn>,
    f0_grad: Option<InitVecFn>,
    f0_hess: Option<InitVecFn>,
    representation: Representation,
}

impl FieldCoefficients {
    /// Identically zero field (with zero analytic derivatives).
    pub fn new(n: usize, m: usize) -> Self {
        let zero_vec: FieldVecFn = Arc::new(|_, _, out| out.fill(0.0));
        let zero_mark_vec: FieldMarkVecFn = Arc::new(|_, _, _, out| out.fill(0.0));
        let zero_init_vec: InitVecFn = Arc::new(|_, out| out.fill(0.0));
        Self {
            n,
            m,
            q: Arc::new(|_, _| 0.0),
            d: zero_vec.clone(),
            g: Arc::new(|_, _, _| 0.0),
            f0: Arc::new(|_| 0.0),
            q_grad: Some(zero_vec.clone()),
            q_hess: Some(zero_vec.clone()),
            d_grad: Some(zero_vec.clone()),
            d_hess: Some(zero_vec),
            g_grad: Some(zero_mark_vec.clone()),
            g_hess: Some(zero_mark_vec),
            f0_grad: Some(zero_init_vec.clone()),
            f0_hess: Some(zero_init_vec),
            representation: Representation::NonCentered,
        }
    }

    /// Sets `Q`; any previously supplied derivatives of `Q` are dropped.
    pub fn with_q(mut self, f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.q = Arc::new(f);
        self.q_grad = None;
        self.q_hess = None;
        self
    }

    pub fn with_q_grad(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.q_grad = Some(Arc::new(f));
        self
    }

    pub fn with_q_hess(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.q_hess = Some(Arc::new(f));
        self
    }

    /// Sets `D = (D_1..D_m)`; derivatives of `D` are dropped.
    pub fn with_d(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.d = Arc::new(f);
        self.d_grad = None;
        self.d_hess = None;
        self
    }

    pub fn with_d_grad(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.d_grad = Some(Arc::new(f));
        self
    }

    pub fn with_d_hess(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.d_hess = Some(Arc::new(f));
        self
    }

    /// Sets the jump amplitude `G(t, x, γ)`; derivatives of `G` are dropped.
    pub fn with_g(mut self, f: impl Fn(f64, &[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.g = Arc::new(f);
        self.g_grad = None;
        self.g_hess = None;
        self
    }

    pub fn with_g_grad(
        mut self,
        f: impl Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.g_grad = Some(Arc::new(f));
        self
    }

    pub fn with_g_hess(
        mut self,
        f: impl Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.g_hess = Some(Arc::new(f));
        self
    }

    /// Sets the initial profile `F0`; derivatives of `F0` are dropped.
    pub fn with_f0(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.f0 = Arc::new(f);
        self.f0_grad = None;
        self.f0_hess = None;
        self
    }

    pub fn with_f0_grad(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f0_grad = Some(Arc::new(f));
        self
    }

    pub fn with_f0_hess(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f0_hess = Some(Arc::new(f));
        self
    }

    pub fn with_representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn q(&self, t: f64, x: &[f64]) -> f64 {
        (self.q)(t, x)
    }

    pub fn d(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.d)(t, x, out)
    }

    pub fn g(&self, t: f64, x: &[f64], mark: f64) -> f64 {
        (self.g)(t, x, mark)
    }

    pub fn f0(&self, x: &[f64]) -> f64 {
        (self.f0)(x)
    }

    pub fn q_grad(&self) -> Option<&FieldVecFn> {
        self.q_grad.as_ref()
    }

    pub fn q_hess(&self) -> Option<&FieldVecFn> {
        self.q_hess.as_ref()
    }

    pub fn d_grad(&self) -> Option<&FieldVecFn> {
        self.d_grad.as_ref()
    }

    pub fn d_hess(&self) -> Option<&FieldVecFn> {
        self.d_hess.as_ref()
    }

    pub fn g_grad(&self) -> Option<&FieldMarkVecFn> {
        self.g_grad.as_ref()
    }

    pub fn g_hess(&self) -> Option<&FieldMarkVecFn> {
        self.g_hess.as_ref()
    }

    pub fn f0_grad(&self) -> Option<&InitVecFn> {
        self.f0_grad.as_ref()
    }

    pub fn f0_hess(&self) -> Option<&InitVecFn> {
        self.f0_hess.as_ref()
    }

    /// True when every coefficient carries an analytic gradient.
    pub fn has_analytic_gradient(&self) -> bool {
        self.q_grad.is_some() && self.d_grad.is_some() && self.g_grad.is_some() && self.f0_grad.is_some()
    }

    /// True when every coefficient carries an analytic Hessian.
    pub fn has_analytic_hessian(&self) -> bool {
        self.q_hess.is_some() && self.d_hess.is_some() && self.g_hess.is_some() && self.f0_hess.is_some()
    }

    /// Coefficient-wise sum of two fields. Analytic derivatives survive only
    /// where both operands supply them.
    pub fn plus(&self, other: &FieldCoefficients) -> Result<FieldCoefficients> {
        if self.n != other.n || self.m != other.m {
            return Err(Error::InvalidDimension("summed fields differ in (n, m)".into()));
        }
        if self.representation != other.representation {
            return Err(Error::InvalidArgument(
                "summed fields differ in representation".into(),
            ));
        }
        fn sum_vec(a: &Option<FieldVecFn>, b: &Option<FieldVecFn>) -> Option<FieldVecFn> {
            let (a, b) = (a.clone()?, b.clone()?);
            Some(Arc::new(move |t, x, out: &mut [f64]| {
                let mut tmp = vec![0.0; out.len()];
                a(t, x, out);
                b(t, x, &mut tmp);
                out.iter_mut().zip(&tmp).for_each(|(o, v)| *o += v);
            }))
        }
        fn sum_mark_vec(a: &Option<FieldMarkVecFn>, b: &Option<FieldMarkVecFn>) -> Option<FieldMarkVecFn> {
            let (a, b) = (a.clone()?, b.clone()?);
            Some(Arc::new(move |t, x, g, out: &mut [f64]| {
                let mut tmp = vec![0.0; out.len()];
                a(t, x, g, out);
                b(t, x, g, &mut tmp);
                out.iter_mut().zip(&tmp).for_each(|(o, v)| *o += v);
            }))
        }
        fn sum_init_vec(a: &Option<InitVecFn>, b: &Option<InitVecFn>) -> Option<InitVecFn> {
            let (a, b) = (a.clone()?, b.clone()?);
            Some(Arc::new(move |x, out: &mut [f64]| {
                let mut tmp = vec![0.0; out.len()];
                a(x, out);
                b(x, &mut tmp);
                out.iter_mut().zip(&tmp).for_each(|(o, v)| *o += v);
            }))
        }
        let (q1, q2) = (self.q.clone(), other.q.clone());
        let (g1, g2) = (self.g.clone(), other.g.clone());
        let (f1, f2) = (self.f0.clone(), other.f0.clone());
        Ok(FieldCoefficients {
            n: self.n,
            m: self.m,
            q: Arc::new(move |t, x| q1(t, x) + q2(t, x)),
            d: sum_vec(&Some(self.d.clone()), &Some(other.d.clone())).expect("both present"),
            g: Arc::new(move |t, x, y| g1(t, x, y) + g2(t, x, y)),
            f0: Arc::new(move |x| f1(x) + f2(x)),
            q_grad: sum_vec(&self.q_grad, &other.q_grad),
            q_hess: sum_vec(&self.q_hess, &other.q_hess),
            d_grad: sum_vec(&self.d_grad, &other.d_grad),
            d_hess: sum_vec(&self.d_hess, &other.d_hess),
            g_grad: sum_mark_vec(&self.g_grad, &other.g_grad),
            g_hess: sum_mark_vec(&self.g_hess, &other.g_hess),
            f0_grad: sum_init_vec(&self.f0_grad, &other.f0_grad),
            f0_hess: sum_init_vec(&self.f0_hess, &other.f0_hess),
            representation: self.representation,
        })
    }

    /// `Q` of the non-centered form: `Q̃(t, x) - ∫ G(t, x, γ) Pi(dγ)` when
    /// centered, `Q(t, x)` otherwise.
    pub fn effective_q(&self, intensity: &IntensitySpec, t: f64, x: &[f64]) -> Result<f64> {
        let q = self.q(t, x);
        match self.representation {
            Representation::NonCentered => Ok(q),
            Representation::Centered => Ok(q - intensity.integrate(|g| self.g(t, x, g))?),
        }
    }
}

impl fmt::Debug for FieldCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldCoefficients")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("analytic_gradient", &self.has_analytic_gradient())
            .field("analytic_hessian", &self.has_analytic_hessian())
            .field("representation", &self.representation)
            .finish_non_exhaustive()
    }
}

/// One experiment: process, field, intensity, initial point and horizon.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    name: String,
    params: Params,
    process: ProcessCoefficients,
    field: FieldCoefficients,
    intensity: IntensitySpec,
    initial: Vec<f64>,
    horizon: f64,
}

impl ScenarioSpec {
    pub fn new(
        name: impl Into<String>,
        params: Params,
        process: ProcessCoefficients,
        field: FieldCoefficients,
        intensity: IntensitySpec,
        initial: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        let name = name.into();
        if process.n() == 0 || process.m() == 0 {
            return Err(Error::InvalidDimension(format!("{name}: n and m must be >= 1")));
        }
        if process.n() != field.n() || process.m() != field.m() {
            return Err(Error::InvalidDimension(format!(
                "{name}: process is {}x{}, field is {}x{}",
                process.n(),
                process.m(),
                field.n(),
                field.m()
            )));
        }
        if initial.len() != process.n() {
            return Err(Error::InvalidDimension(format!(
                "{name}: initial point has {} components, expected {}",
                initial.len(),
                process.n()
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("{name}: horizon must be > 0")));
        }
        Ok(Self {
            name,
            params,
            process,
            field,
            intensity,
            initial,
            horizon,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn process(&self) -> &ProcessCoefficients {
        &self.process
    }

    pub fn field(&self) -> &FieldCoefficients {
        &self.field
    }

    pub fn intensity(&self) -> &IntensitySpec {
        &self.intensity
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.process.n()
    }

    pub fn m(&self) -> usize {
        self.process.m()
    }

    /// Representation shared by process and field. Mixed specs report the
    /// process flag.
    pub fn representation(&self) -> Representation {
        self.process.representation()
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        if initial.len() != self.n() {
            return Err(Error::InvalidDimension(format!(
                "initial point has {} components, expected {}",
                initial.len(),
                self.n()
            )));
        }
        self.initial = initial;
        Ok(self)
    }

    /// Reinterprets the stored coefficients in `representation` without
    /// changing them (e.g. reads a catalog drift as `ã` instead of `a`).
    pub fn with_representation(mut self, representation: Representation) -> Self {
        self.process = self.process.with_representation(representation);
        self.field = self.field.with_representation(representation);
        self
    }

    /// Rewrites a centered spec into non-centered form:
    /// `a(t) = ã(t) - ∫ g(t, γ) Pi(dγ)`, `Q(t, x) = Q̃(t, x) - ∫ G(t, x, γ) Pi(dγ)`.
    /// `b`, `g`, `D`, `G`, `F0` are unchanged.
    pub fn to_noncentered(&self) -> Conversion {
        self.convert(Representation::NonCentered)
    }

    /// Inverse of [`ScenarioSpec::to_noncentered`]: `ã = a + ∫ g dPi`,
    /// `Q̃ = Q + ∫ G dPi`.
    pub fn to_centered(&self) -> Conversion {
        self.convert(Representation::Centered)
    }

    fn convert(&self, target: Representation) -> Conversion {
        // sign of the compensator added to the stored drift
        let sign = match target {
            Representation::NonCentered => -1.0,
            Representation::Centered => 1.0,
        };
        let mut converted = self.clone();
        let mut touched = false;

        if self.process.representation() != target {
            touched = true;
            let pc = self.process.clone();
            let pi = self.intensity.clone();
            let n = pc.n();
            converted.process = ProcessCoefficients {
                drift: Arc::new(move |t, out: &mut [f64]| {
                    pc.drift(t, out);
                    let mut comp = vec![0.0; n];
                    if pi.integrate_into(&mut comp, |g, v| pc.jump(t, g, v)).is_err() {
                        out.fill(f64::NAN);
                        return;
                    }
                    for (o, c) in out.iter_mut().zip(&comp) {
                        *o = if sign < 0.0 { *o - c } else { *o + c };
                    }
                }),
                representation: target,
                ..self.process.clone()
            };
        }

        if self.field.representation() != target {
            touched = true;
            converted.field = convert_field(&self.field, &self.intensity, target, sign);
        }

        Conversion {
            spec: converted,
            warning: (!touched).then(|| format!("scenario '{}' is already {target}", self.name)),
        }
    }

    /// Finite-difference check of the field's analytic derivatives at the
    /// given probes, using support points of the mark law for `G`.
    pub fn validate_derivatives(&self, probes: &[(f64, Vec<f64>)]) -> Result<DerivativeReport> {
        validate_derivatives(&self.field, probes, &self.intensity.marks().support_probes())
    }
}

fn convert_field(
    fc: &FieldCoefficients,
    pi: &IntensitySpec,
    target: Representation,
    sign: f64,
) -> FieldCoefficients {
    let apply = move |v: f64, c: f64| if sign < 0.0 { v - c } else { v + c };

    let (q, g) = (fc.q.clone(), fc.g.clone());
    let pi_q = pi.clone();
    let new_q: FieldScalarFn = Arc::new(move |t, x| {
        match pi_q.integrate(|y| g(t, x, y)) {
            Ok(c) => apply(q(t, x), c),
            Err(_) => f64::NAN,
        }
    });

    let shift_vec = |base: &Option<FieldVecFn>, jump: &Option<FieldMarkVecFn>| -> Option<FieldVecFn> {
        let (base, jump) = (base.clone()?, jump.clone()?);
        let pi = pi.clone();
        Some(Arc::new(move |t, x, out: &mut [f64]| {
            base(t, x, out);
            let mut comp = vec![0.0; out.len()];
            if pi.integrate_into(&mut comp, |y, v| jump(t, x, y, v)).is_err() {
                out.fill(f64::NAN);
                return;
            }
            out.iter_mut().zip(&comp).for_each(|(o, c)| *o = apply(*o, *c));
        }))
    };

    FieldCoefficients {
        q: new_q,
        q_grad: shift_vec(&fc.q_grad, &fc.g_grad),
        q_hess: shift_vec(&fc.q_hess, &fc.g_hess),
        representation: target,
        ..fc.clone()
    }
}

/// Result of a representation conversion; `warning` is set when the spec was
/// already in the requested form and nothing changed.
#[derive(Debug, Clone)]
pub struct Conversion {
    pub spec: ScenarioSpec,
    pub warning: Option<String>,
}

/// Outcome for one supplied analytic derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum DerivativeStatus {
    Checked {
        max_abs: f64,
        max_rel: f64,
        passed: bool,
    },
    /// No analytic form supplied; consumers fall back to finite differences.
    NumericOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    pub name: &'static str,
    pub status: DerivativeStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub checks: Vec<DerivativeCheck>,
}

impl DerivativeReport {
    pub const REL_TOLERANCE: f64 = 1e-5;

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| match c.status {
            DerivativeStatus::Checked { passed, .. } => passed,
            DerivativeStatus::NumericOnly => true,
        })
    }

    pub fn get(&self, name: &str) -> Option<&DerivativeStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| &c.status)
    }
}

#[derive(Default)]
struct Discrepancy {
    max_abs: f64,
    max_rel: f64,
}

impl Discrepancy {
    fn add(&mut self, analytic: &[f64], numeric: &[f64]) {
        for (a, b) in analytic.iter().zip(numeric) {
            let abs = (a - b).abs();
            self.max_abs = self.max_abs.max(abs);
            self.max_rel = self.max_rel.max(abs / a.abs().max(1.0));
        }
    }

    fn into_status(self) -> DerivativeStatus {
        DerivativeStatus::Checked {
            max_abs: self.max_abs,
            max_rel: self.max_rel,
            passed: self.max_rel < DerivativeReport::REL_TOLERANCE,
        }
    }
}

fn finite(name: &str, t: f64, x: &[f64], values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::contract(name, t, x))
    }
}

/// Compares every supplied analytic derivative of `fc` against central
/// differences at `probes`; `G` derivatives are probed at each of `marks`.
/// Hessians are differenced from the analytic gradient when one exists.
pub fn validate_derivatives(
    fc: &FieldCoefficients,
    probes: &[(f64, Vec<f64>)],
    marks: &[f64],
) -> Result<DerivativeReport> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("validate_derivatives needs probes".into()));
    }
    let (n, m) = (fc.n(), fc.m());
    let mut checks = Vec::new();
    let mut push = |name: &'static str, status: DerivativeStatus| {
        checks.push(DerivativeCheck { name, status })
    };

    // Value checks run first so a broken coefficient is named directly.
    for (t, x) in probes {
        finite("F0", *t, x, &[fc.f0(x)])?;
        finite("Q", *t, x, &[fc.q(*t, x)])?;
        let mut d = vec![0.0; m];
        fc.d(*t, x, &mut d);
        finite("D", *t, x, &d)?;
        for &y in marks {
            finite("G", *t, x, &[fc.g(*t, x, y)])?;
        }
    }

    let mut an = vec![0.0; n * n * m.max(1)];
    let mut num = vec![0.0; n * n * m.max(1)];

    // F0
    match fc.f0_grad() {
        Some(grad) => {
            let mut disc = Discrepancy::default();
            for (t, x) in probes {
                grad(x, &mut an[..n]);
                finite("grad F0", *t, x, &an[..n])?;
                central_gradient(|p| fc.f0(p), x, &mut num[..n]);
                disc.add(&an[..n], &num[..n]);
            }
            push("grad F0", disc.into_status());
        }
        None => push("grad F0", DerivativeStatus::NumericOnly),
    }
    match fc.f0_hess() {
        Some(hess) => {
            let mut disc = Discrepancy::default();
            for (t, x) in probes {
                hess(x, &mut an[..n * n]);
                finite("hess F0", *t, x, &an[..n * n])?;
                match fc.f0_grad() {
                    Some(grad) => central_jacobian(|p, out| grad(p, out), x, n, &mut num[..n * n]),
                    None => central_hessian(|p| fc.f0(p), x, &mut num[..n * n]),
                }
                disc.add(&an[..n * n], &num[..n * n]);
            }
            push("hess F0", disc.into_status());
        }
        None => push("hess F0", DerivativeStatus::NumericOnly),
    }

    // Q
    match fc.q_grad() {
        Some(grad) => {
            let mut disc = Discrepancy::default();
            for (t, x) in probes {
                grad(*t, x, &mut an[..n]);
                finite("grad Q", *t, x, &an[..n])?;
                central_gradient(|p| fc.q(*t, p), x, &mut num[..n]);
                disc.add(&an[..n], &num[..n]);
            }
            push("grad Q", disc.into_status());
        }
        None => push("grad Q", DerivativeStatus::NumericOnly),
    }
    match fc.q_hess() {
        Some(hess) => {
            let mut disc = Discrepancy::default();
            for (t, x) in probes {
                hess(*t, x, &mut an[..n * n]);
                finite("hess Q", *t, x, &an[..n * n])?;
                match fc.q_grad() {
                    Some(grad) => central_jacobian(|p, out| grad(*t, p, out), x, n, &mut num[..n * n]),
                    None => central_hessian(|p| fc.q(*t, p), x, &mut num[..n * n]),
                }
                disc.add(&an[..n * n], &num[..n * n]);
            }
            push("hess Q", disc.into_status());
        }
        None => push("hess Q", DerivativeStatus::NumericOnly),
    }

    // D
    match fc.d_grad() {
        Some(grad) => {
            let mut disc = Discrepancy::default();
            for (t, x) in probes {
                grad(*t, x, &mut an[..n * m]);
                finite("grad D", *t, x, &an[..n * m])?;
                central_jacobian(|p, out| fc.d(*t, p, out), x, m, &mut num[..n * m]);
                disc.add(&an[..n * m], &num[..n * m]);
            }
            push("grad D", disc.into_status());
        }
        None => push("grad D", DerivativeStatus::NumericOnly),
    }
    match fc.d_hess() {
        Some(hess) => {
            let mut disc = Discrepancy::default();
            let len = n * n * m;
            for (t, x) in probes {
                hess(*t, x, &mut an[..len]);
                finite("hess D", *t, x, &an[..len])?;
                match fc.d_grad() {
                    Some(grad) => central_jacobian(|p, out| grad(*t, p, out), x, n * m, &mut num[..len]),
                    None => {
                        let mut hk = vec![0.0; n * n];
                        for k in 0..m {
                            central_hessian(
                                |p| {
                                    let mut d = vec![0.0; m];
                                    fc.d(*t, p, &mut d);
                                    d[k]
                                },
                                x,
                                &mut hk,
                            );
                            for ij in 0..n * n {
                                num[ij * m + k] = hk[ij];
                            }
                        }
                    }
                }
                disc.add(&an[..len], &num[..len]);
            }
            push("hess D", disc.into_status());
        }
        None => push("hess D", DerivativeStatus::NumericOnly),
    }

    // G, per mark
    match fc.g_grad() {
        Some(grad) if !marks.is_empty() => {
            let mut disc = Discrepancy::default();
            for (t, x) in probes {
                for &y in marks {
                    grad(*t, x, y, &mut an[..n]);
                    finite("grad G", *t, x, &an[..n])?;
                    central_gradient(|p| fc.g(*t, p, y), x, &mut num[..n]);
                    disc.add(&an[..n], &num[..n]);
                }
            }
            push("grad G", disc.into_status());
        }
        _ => push("grad G", DerivativeStatus::NumericOnly),
    }
    match fc.g_hess() {
        Some(hess) if !marks.is_empty() => {
            let mut disc = Discrepancy::default();
            for (t, x) in probes {
                for &y in marks {
                    hess(*t, x, y, &mut an[..n * n]);
                    finite("hess G", *t, x, &an[..n * n])?;
                    match fc.g_grad() {
                        Some(grad) => {
                            central_jacobian(|p, out| grad(*t, p, y, out), x, n, &mut num[..n * n])
                        }
                        None => central_hessian(|p| fc.g(*t, p, y), x, &mut num[..n * n]),
                    }
                    disc.add(&an[..n * n], &num[..n * n]);
                }
            }
            push("hess G", disc.into_status());
        }
        _ => push("hess G", DerivativeStatus::NumericOnly),
    }

    Ok(DerivativeReport { checks })
}

/// A named, parameterized catalog scenario.
#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [(&'static str, f64)],
    /// Residual vanishes to rounding for every step count and seed.
    pub exact: bool,
    build: fn(&Params) -> Result<ScenarioSpec>,
}

const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "affine-exact",
        summary: "F(t,x) = c x + psi t with constant a, b and uniform jumps",
        required: &["c", "psi"],
        optional: &[("a", 0.5), ("b", 0.8), ("lambda", 1.0)],
        exact: true,
        build: build_affine_exact,
    },
    CatalogEntry {
        name: "ito-quadratic",
        summary: "static F(x) = x^2 under constant a, b and fixed-size jumps",
        required: &["a", "b"],
        optional: &[("lambda", 1.0), ("jump", 0.5)],
        exact: false,
        build: build_ito_quadratic,
    },
    CatalogEntry {
        name: "product-rule",
        summary: "F(t,x) = phi(t) x with dphi = alpha dt + beta dw_1",
        required: &["alpha", "beta", "a", "b", "lambda"],
        optional: &[("h", 0.1)],
        exact: false,
        build: build_product_rule,
    },
    CatalogEntry {
        name: "jump-only",
        summary: "pure jumps, g = gamma, G = c gamma, F0(x) = x",
        required: &["lambda", "c"],
        optional: &[],
        exact: true,
        build: build_jump_only,
    },
    CatalogEntry {
        name: "jump-state-g",
        summary: "pure jumps with state-dependent G(t,x,gamma) = x gamma",
        required: &["lambda"],
        optional: &[],
        exact: true,
        build: build_jump_state_g,
    },
    CatalogEntry {
        name: "full-mix",
        summary: "two-dimensional process and field with every term active",
        required: &[],
        optional: &[
            ("lambda", 1.5),
            ("a", 0.3),
            ("b", 0.4),
            ("q", 0.5),
            ("s", 0.3),
            ("c", 0.2),
        ],
        exact: false,
        build: build_full_mix,
    },
];

pub fn catalog_entries() -> &'static [CatalogEntry] {
    CATALOG
}

pub fn catalog_entry(name: &str) -> Result<&'static CatalogEntry> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

/// Builds a catalog scenario from `name` and a flat parameter map. Every
/// required key must be present; optional keys fall back to their defaults;
/// any other key is rejected.
pub fn catalog(name: &str, params: &Params) -> Result<ScenarioSpec> {
    let entry = catalog_entry(name)?;
    let bad = |message: String| Error::ScenarioParams {
        scenario: name.to_string(),
        message,
    };
    for key in params.keys() {
        let known = entry.required.contains(&key.as_str())
            || entry.optional.iter().any(|(k, _)| k == key);
        if !known {
            return Err(bad(format!("unexpected parameter '{key}'")));
        }
    }
    let mut full = Params::new();
    for key in entry.required {
        let v = params
            .get(*key)
            .ok_or_else(|| bad(format!("missing parameter '{key}'")))?;
        full.insert(key.to_string(), *v);
    }
    for (key, default) in entry.optional {
        full.insert(key.to_string(), params.get(*key).copied().unwrap_or(*default));
    }
    if let Some((k, v)) = full.iter().find(|(_, v)| !v.is_finite()) {
        return Err(bad(format!("parameter '{k}' = {v} is not finite")));
    }
    (entry.build)(&full)
}

fn uniform(rate: f64, low: f64, high: f64) -> Result<IntensitySpec> {
    IntensitySpec::new(rate, MarkDistribution::Uniform { low, high })
}

fn build_affine_exact(p: &Params) -> Result<ScenarioSpec> {
    let (c, psi, a, b) = (p["c"], p["psi"], p["a"], p["b"]);
    let process = ProcessCoefficients::new(1, 1)
        .with_drift(move |_, out| out[0] = a)
        .with_diffusion(move |_, out| out[0] = b)
        .with_jump(|_, g, out| out[0] = g);
    let field = FieldCoefficients::new(1, 1)
        .with_f0(move |x| c * x[0])
        .with_f0_grad(move |_, out| out[0] = c)
        .with_f0_hess(|_, out| out[0] = 0.0)
        .with_q(move |_, _| psi)
        .with_q_grad(|_, _, out| out[0] = 0.0)
        .with_q_hess(|_, _, out| out[0] = 0.0);
    ScenarioSpec::new(
        "affine-exact",
        p.clone(),
        process,
        field,
        uniform(p["lambda"], -1.0, 1.0)?,
        vec![0.25],
        1.0,
    )
}

fn build_ito_quadratic(p: &Params) -> Result<ScenarioSpec> {
    let (a, b) = (p["a"], p["b"]);
    let process = ProcessCoefficients::new(1, 1)
        .with_drift(move |_, out| out[0] = a)
        .with_diffusion(move |_, out| out[0] = b)
        .with_jump(|_, g, out| out[0] = g);
    let field = FieldCoefficients::new(1, 1)
        .with_f0(|x| x[0] * x[0])
        .with_f0_grad(|x, out| out[0] = 2.0 * x[0])
        .with_f0_hess(|_, out| out[0] = 2.0);
    ScenarioSpec::new(
        "ito-quadratic",
        p.clone(),
        process,
        field,
        IntensitySpec::new(p["lambda"], MarkDistribution::PointMass(p["jump"]))?,
        vec![0.5],
        1.0,
    )
}

fn build_product_rule(p: &Params) -> Result<ScenarioSpec> {
    let (alpha, beta, a, b, h) = (p["alpha"], p["beta"], p["a"], p["b"], p["h"]);
    let process = ProcessCoefficients::new(1, 1)
        .with_drift(move |_, out| out[0] = a)
        .with_diffusion(move |_, out| out[0] = b)
        .with_jump(|_, g, out| out[0] = g);
    let field = FieldCoefficients::new(1, 1)
        .with_f0(|x| x[0])
        .with_f0_grad(|_, out| out[0] = 1.0)
        .with_f0_hess(|_, out| out[0] = 0.0)
        .with_q(move |_, x| alpha * x[0])
        .with_q_grad(move |_, _, out| out[0] = alpha)
        .with_q_hess(|_, _, out| out[0] = 0.0)
        .with_d(move |_, x, out| out[0] = beta * x[0])
        .with_d_grad(move |_, _, out| out[0] = beta)
        .with_d_hess(|_, _, out| out[0] = 0.0);
    ScenarioSpec::new(
        "product-rule",
        p.clone(),
        process,
        field,
        uniform(p["lambda"], -h.abs(), h.abs())?,
        vec![1.0],
        1.0,
    )
}

fn build_jump_only(p: &Params) -> Result<ScenarioSpec> {
    let c = p["c"];
    let process = ProcessCoefficients::new(1, 1).with_jump(|_, g, out| out[0] = g);
    let field = FieldCoefficients::new(1, 1)
        .with_f0(|x| x[0])
        .with_f0_grad(|_, out| out[0] = 1.0)
        .with_f0_hess(|_, out| out[0] = 0.0)
        .with_g(move |_, _, g| c * g)
        .with_g_grad(|_, _, _, out| out[0] = 0.0)
        .with_g_hess(|_, _, _, out| out[0] = 0.0);
    ScenarioSpec::new(
        "jump-only",
        p.clone(),
        process,
        field,
        uniform(p["lambda"], -1.0, 1.0)?,
        vec![0.0],
        1.0,
    )
}

fn build_jump_state_g(p: &Params) -> Result<ScenarioSpec> {
    let process = ProcessCoefficients::new(1, 1).with_jump(|_, g, out| out[0] = g);
    let field = FieldCoefficients::new(1, 1)
        .with_f0(|x| x[0])
        .with_f0_grad(|_, out| out[0] = 1.0)
        .with_f0_hess(|_, out| out[0] = 0.0)
        .with_g(|_, x, g| x[0] * g)
        .with_g_grad(|_, _, g, out| out[0] = g)
        .with_g_hess(|_, _, _, out| out[0] = 0.0);
    ScenarioSpec::new(
        "jump-state-g",
        p.clone(),
        process,
        field,
        uniform(p["lambda"], -1.0, 1.0)?,
        vec![0.5],
        1.0,
    )
}

fn build_full_mix(p: &Params) -> Result<ScenarioSpec> {
    let (a, b, q, s, c) = (p["a"], p["b"], p["q"], p["s"], p["c"]);
    let process = ProcessCoefficients::new(2, 2)
        .with_drift(move |t, out| {
            out[0] = a * (1.0 + 0.5 * t.sin());
            out[1] = -a * t;
        })
        .with_diffusion(move |t, out| {
            out[0] = b;
            out[1] = 0.5 * b;
            out[2] = -0.25 * b * t;
            out[3] = b * (1.0 + 0.5 * t);
        })
        .with_jump(|_, g, out| {
            out[0] = g;
            out[1] = 0.5 * g * g;
        });

    let field = FieldCoefficients::new(2, 2)
        .with_f0(|x| x[0].sin() + 0.5 * x[0] * x[1] + 0.25 * x[1] * x[1])
        .with_f0_grad(|x, out| {
            out[0] = x[0].cos() + 0.5 * x[1];
            out[1] = 0.5 * x[0] + 0.5 * x[1];
        })
        .with_f0_hess(|x, out| {
            out[0] = -x[0].sin();
            out[1] = 0.5;
            out[2] = 0.5;
            out[3] = 0.5;
        })
        .with_q(move |t, x| q * ((t + x[0]).cos() - 0.2 * x[1]))
        .with_q_grad(move |t, x, out| {
            out[0] = -q * (t + x[0]).sin();
            out[1] = -0.2 * q;
        })
        .with_q_hess(move |t, x, out| {
            out[0] = -q * (t + x[0]).cos();
            out[1] = 0.0;
            out[2] = 0.0;
            out[3] = 0.0;
        })
        .with_d(move |t, x, out| {
            out[0] = s * x[1].sin();
            out[1] = 0.5 * s * (1.0 + t) * x[0] * x[1];
        })
        .with_d_grad(move |t, x, out| {
            // [i * m + k] = ∂D_k/∂x_i
            out[0] = 0.0;
            out[1] = 0.5 * s * (1.0 + t) * x[1];
            out[2] = s * x[1].cos();
            out[3] = 0.5 * s * (1.0 + t) * x[0];
        })
        .with_d_hess(move |t, x, out| {
            // [(i * n + j) * m + k]
            out.fill(0.0);
            let cross = 0.5 * s * (1.0 + t);
            out[3] = cross; // (0,1), D_2
            out[5] = cross; // (1,0), D_2
            out[6] = -s * x[1].sin(); // (1,1), D_1
        })
        .with_g(move |_, x, g| c * (g * x[0].cos() + 0.5 * g * g * x[1]))
        .with_g_grad(move |_, x, g, out| {
            out[0] = -c * g * x[0].sin();
            out[1] = 0.5 * c * g * g;
        })
        .with_g_hess(move |_, x, g, out| {
            out[0] = -c * g * x[0].cos();
            out[1] = 0.0;
            out[2] = 0.0;
            out[3] = 0.0;
        });

    ScenarioSpec::new(
        "full-mix",
        p.clone(),
        process,
        field,
        uniform(p["lambda"], -0.5, 1.0)?,
        vec![0.1, -0.2],
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, f64)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn probes(n: usize) -> Vec<(f64, Vec<f64>)> {
        let pts = [-1.3, -0.4, 0.0, 0.7, 2.1];
        let mut out = Vec::new();
        for (i, &t) in [0.0, 0.35, 0.9].iter().enumerate() {
            for j in 0..pts.len() {
                let x = (0..n).map(|d| pts[(j + d + i) % pts.len()] + 0.1 * d as f64).collect();
                out.push((t, x));
            }
        }
        out
    }

    #[test]
    fn jump_only_has_no_continuous_part() {
        let s = catalog("jump-only", &params(&[("lambda", 2.0), ("c", 1.0)])).unwrap();
        let mut v = [1.0];
        for t in [0.0, 0.3, 1.0] {
            s.process().drift(t, &mut v);
            assert_eq!(v[0], 0.0);
            s.process().diffusion(t, &mut v);
            assert_eq!(v[0], 0.0);
            assert_eq!(s.field().q(t, &[0.7]), 0.0);
            s.field().d(t, &[0.7], &mut v);
            assert_eq!(v[0], 0.0);
        }
        assert_eq!(s.field().g(0.1, &[3.0], 0.5), 0.5);
    }

    #[test]
    fn affine_exact_coefficients() {
        let s = catalog("affine-exact", &params(&[("c", 3.0), ("psi", 1.0)])).unwrap();
        let f = s.field();
        assert_eq!(f.f0(&[2.0]), 6.0);
        assert_eq!(f.q(0.4, &[2.0]), 1.0);
        assert_eq!(f.g(0.4, &[2.0], 0.3), 0.0);
        let mut d = [1.0];
        f.d(0.4, &[2.0], &mut d);
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn product_rule_analytic_cross_derivative() {
        let s = catalog(
            "product-rule",
            &params(&[("alpha", 0.1), ("beta", 0.2), ("a", 0.3), ("b", 0.4), ("lambda", 1.0)]),
        )
        .unwrap();
        let mut d = [0.0];
        s.field().d(0.0, &[2.0], &mut d);
        assert!((d[0] - 0.4).abs() < 1e-15);
        let grad = s.field().d_grad().expect("analytic ∂D/∂x");
        grad(0.3, &[2.0], &mut d);
        assert_eq!(d[0], 0.2);
    }

    #[test]
    fn catalog_rejects_bad_keys() {
        assert!(matches!(catalog("nosuch", &Params::new()), Err(Error::UnknownScenario(_))));
        let missing = catalog("jump-only", &params(&[("lambda", 2.0)]));
        assert!(matches!(missing, Err(Error::ScenarioParams { .. })));
        let extra = catalog("jump-only", &params(&[("lambda", 2.0), ("c", 1.0), ("zeta", 1.0)]));
        assert!(matches!(extra, Err(Error::ScenarioParams { .. })));
        let nan = catalog("jump-only", &params(&[("lambda", f64::NAN), ("c", 1.0)]));
        assert!(nan.is_err());
    }

    #[test]
    fn catalog_is_deterministic() {
        let p = Params::new();
        let a = catalog("full-mix", &p).unwrap();
        let b = catalog("full-mix", &p).unwrap();
        for (t, x) in probes(2) {
            assert_eq!(a.field().q(t, &x), b.field().q(t, &x));
            assert_eq!(a.field().f0(&x), b.field().f0(&x));
        }
    }

    #[test]
    fn every_catalog_scenario_passes_derivative_validation() {
        for entry in catalog_entries() {
            let mut p = Params::new();
            for k in entry.required {
                p.insert(k.to_string(), 0.35);
            }
            let s = catalog(entry.name, &p).unwrap();
            let report = s.validate_derivatives(&probes(s.n())).unwrap();
            assert!(report.passed(), "{}: {:?}", entry.name, report);
            assert!(s.field().has_analytic_gradient(), "{}", entry.name);
            assert!(s.field().has_analytic_hessian(), "{}", entry.name);
        }
    }

    #[test]
    fn quadratic_gradient_discrepancy_is_tiny() {
        let fc = FieldCoefficients::new(1, 1)
            .with_f0(|x| x[0] * x[0])
            .with_f0_grad(|x, out| out[0] = 2.0 * x[0]);
        let probes: Vec<_> = [-1.0, 0.0, 2.0].iter().map(|&x| (0.0, vec![x])).collect();
        let report = validate_derivatives(&fc, &probes, &[]).unwrap();
        match report.get("grad F0").unwrap() {
            DerivativeStatus::Checked { max_abs, passed, .. } => {
                assert!(*max_abs < 1e-8, "{max_abs}");
                assert!(passed);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(report.get("hess F0"), Some(&DerivativeStatus::NumericOnly));
    }

    #[test]
    fn linear_diffusion_derivative_is_exact_to_rounding() {
        let beta = 0.2;
        let fc = FieldCoefficients::new(1, 1)
            .with_d(move |_, x, out| out[0] = beta * x[0])
            .with_d_grad(move |_, _, out| out[0] = beta);
        let probes: Vec<_> = [-1.0, 0.5, 3.0].iter().map(|&x| (0.2, vec![x])).collect();
        let report = validate_derivatives(&fc, &probes, &[]).unwrap();
        match report.get("grad D").unwrap() {
            DerivativeStatus::Checked { max_abs, .. } => assert!(*max_abs < 1e-10, "{max_abs}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_derivative_is_numeric_only() {
        let fc = FieldCoefficients::new(1, 1).with_f0(|x| x[0].powi(3));
        let probes = vec![(0.0, vec![1.0])];
        let report = validate_derivatives(&fc, &probes, &[]).unwrap();
        assert_eq!(report.get("grad F0"), Some(&DerivativeStatus::NumericOnly));
        assert!(report.passed());
    }

    #[test]
    fn wrong_derivative_fails_validation() {
        let fc = FieldCoefficients::new(1, 1)
            .with_f0(|x| x[0].powi(3))
            .with_f0_grad(|x, out| out[0] = 2.0 * x[0] * x[0]);
        let report = validate_derivatives(&fc, &[(0.0, vec![1.0])], &[]).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn non_finite_coefficient_is_named() {
        let fc = FieldCoefficients::new(1, 1).with_q(|_, x| 1.0 / x[0]);
        let err = validate_derivatives(&fc, &[(0.5, vec![0.0])], &[]).unwrap_err();
        match err {
            Error::ContractViolation { coefficient, .. } => assert_eq!(coefficient, "Q"),
            other => panic!("{other:?}"),
        }
        assert!(validate_derivatives(&fc, &[], &[]).is_err());
    }

    fn centered_full_mix() -> ScenarioSpec {
        catalog("full-mix", &Params::new())
            .unwrap()
            .with_representation(Representation::Centered)
    }

    #[test]
    fn noncentered_conversion_subtracts_compensator() {
        // ã = 1, g = γ, Pi = 2 Uniform(0, 1)  =>  a = 1 - 2 * 1/2 = 0
        let process = ProcessCoefficients::new(1, 1)
            .with_drift(|_, out| out[0] = 1.0)
            .with_jump(|_, g, out| out[0] = g)
            .with_representation(Representation::Centered);
        let field = FieldCoefficients::new(1, 1)
            .with_q(|t, x| t + x[0])
            .with_representation(Representation::Centered);
        let spec = ScenarioSpec::new(
            "t",
            Params::new(),
            process,
            field,
            uniform(2.0, 0.0, 1.0).unwrap(),
            vec![0.0],
            1.0,
        )
        .unwrap();
        let conv = spec.to_noncentered();
        assert!(conv.warning.is_none());
        let mut a = [f64::NAN];
        for t in [0.0, 0.5, 1.0] {
            conv.spec.process().drift(t, &mut a);
            assert!(a[0].abs() < 1e-15);
            // G ≡ 0: Q unchanged
            assert_eq!(conv.spec.field().q(t, &[0.3]), t + 0.3);
        }
        assert_eq!(conv.spec.representation(), Representation::NonCentered);

        let again = conv.spec.to_noncentered();
        assert!(again.warning.is_some());
    }

    #[test]
    fn centered_conversion_adds_compensator() {
        let process = ProcessCoefficients::new(1, 1).with_jump(|_, g, out| out[0] = g);
        let spec = ScenarioSpec::new(
            "t",
            Params::new(),
            process,
            FieldCoefficients::new(1, 1),
            uniform(2.0, 0.0, 1.0).unwrap(),
            vec![0.0],
            1.0,
        )
        .unwrap();
        let conv = spec.to_centered();
        let mut a = [0.0];
        conv.spec.process().drift(0.4, &mut a);
        assert!((a[0] - 1.0).abs() < 1e-15);
        assert!(conv.spec.to_centered().warning.is_some());
    }

    #[test]
    fn zero_jumps_make_conversion_identity() {
        let spec = catalog("ito-quadratic", &params(&[("a", 0.4), ("b", 0.3), ("jump", 0.0)]))
            .unwrap()
            .with_representation(Representation::Centered);
        let conv = spec.to_noncentered().spec;
        let (mut a0, mut a1) = ([0.0], [0.0]);
        for (t, x) in probes(1) {
            spec.process().drift(t, &mut a0);
            conv.process().drift(t, &mut a1);
            assert_eq!(a0, a1);
            assert_eq!(spec.field().q(t, &x), conv.field().q(t, &x));
        }
    }

    #[test]
    fn round_trip_reproduces_drift() {
        let spec = centered_full_mix();
        let back = spec.to_noncentered().spec.to_centered().spec;
        let mut rng_state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let (mut a0, mut a1) = ([0.0; 2], [0.0; 2]);
        for _ in 0..100 {
            let t = next();
            let x = [4.0 * next() - 2.0, 4.0 * next() - 2.0];
            spec.process().drift(t, &mut a0);
            back.process().drift(t, &mut a1);
            for i in 0..2 {
                assert!((a0[i] - a1[i]).abs() <= 1e-14);
            }
            assert!((spec.field().q(t, &x) - back.field().q(t, &x)).abs() <= 1e-14);
        }
    }

    #[test]
    fn converted_field_derivatives_stay_consistent() {
        let conv = centered_full_mix().to_noncentered().spec;
        let report = conv.validate_derivatives(&probes(2)).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let r = ScenarioSpec::new(
            "bad",
            Params::new(),
            ProcessCoefficients::new(2, 1),
            FieldCoefficients::new(1, 1),
            IntensitySpec::none(),
            vec![0.0, 0.0],
            1.0,
        );
        assert!(matches!(r, Err(Error::InvalidDimension(_))));
    }
}
