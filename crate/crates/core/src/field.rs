//! Pointwise realization of the random field `F(t_j, x)` driven by the same
//! Wiener path and jump stream as the process.
//!
//! For fixed `x` the field equation is a plain integral in `t`, so values and
//! spatial derivatives are computed on demand by summing the discrete
//! increments up to the requested node. No spatial mesh is involved.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::noise::{IntensitySpec, MarkedJumpStream, WienerPath};
use crate::scenario::{FieldCoefficients, Representation};
use crate::sum::CompensatedSum;

/// Central-difference step for first derivatives.
pub fn grad_step(x: f64) -> f64 {
    f64::max(1e-5, 1e-7 * x.abs())
}

/// Central-difference step for second derivatives.
pub fn hess_step(x: f64) -> f64 {
    f64::max(1e-4, 1e-6 * x.abs())
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient<F>(mut f: F, x: &[f64], out: &mut [f64])
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = grad_step(x[i]);
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        out[i] = (up - down) / (2.0 * h);
    }
}

/// Central-difference Jacobian of a vector function with `dim_out`
/// components: `out[i * dim_out + k] = ∂f_k/∂x_i`.
pub fn central_jacobian<F>(mut f: F, x: &[f64], dim_out: usize, out: &mut [f64])
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut p = x.to_vec();
    let mut up = vec![0.0; dim_out];
    let mut down = vec![0.0; dim_out];
    for i in 0..x.len() {
        let h = grad_step(x[i]);
        p[i] = x[i] + h;
        f(&p, &mut up);
        p[i] = x[i] - h;
        f(&p, &mut down);
        p[i] = x[i];
        for k in 0..dim_out {
            out[i * dim_out + k] = (up[k] - down[k]) / (2.0 * h);
        }
    }
}

/// Central-difference Hessian of a scalar function, symmetric by
/// construction.
pub fn central_hessian<F>(mut f: F, x: &[f64], out: &mut [f64])
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let mut p = x.to_vec();
    let center = f(x);
    for i in 0..n {
        let hi = hess_step(x[i]);
        p[i] = x[i] + hi;
        let up = f(&p);
        p[i] = x[i] - hi;
        let down = f(&p);
        p[i] = x[i];
        out[i * n + i] = (up - 2.0 * center + down) / (hi * hi);
        for j in 0..i {
            let hj = hess_step(x[j]);
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * hi;
                p[j] = x[j] + sj * hj;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let pp = corner(1.0, 1.0);
            let pm = corner(1.0, -1.0);
            let mp = corner(-1.0, 1.0);
            let mm = corner(-1.0, -1.0);
            let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
}

/// Value and spatial derivatives of the field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `n x n`.
    pub hessian: Vec<f64>,
}

/// How far the accumulation runs: all steps before `step`, then the events
/// with index in `first_event_of(step)..event_end`.
#[derive(Clone, Copy)]
struct Cutoff {
    step: usize,
    event_end: usize,
}

/// `(step, event_end, bit patterns of x)`
type MemoKey = (usize, usize, Vec<u64>);

/// Lazily evaluated field realization on shared noise.
pub struct FieldRealization<'a> {
    fc: &'a FieldCoefficients,
    intensity: &'a IntensitySpec,
    wiener: &'a WienerPath,
    jumps: &'a MarkedJumpStream,
    // event_step[l] = step containing event l
    event_step: Vec<usize>,
    // first_event[j] = index of the first event with time > t_j
    first_event: Vec<usize>,
    memo: RefCell<HashMap<MemoKey, f64>>,
}

impl<'a> FieldRealization<'a> {
    pub fn new(
        fc: &'a FieldCoefficients,
        intensity: &'a IntensitySpec,
        wiener: &'a WienerPath,
        jumps: &'a MarkedJumpStream,
    ) -> Result<Self> {
        let grid = wiener.grid();
        if wiener.dim() != fc.m() {
            return Err(Error::InvalidDimension(format!(
                "field expects {} Wiener components, path has {}",
                fc.m(),
                wiener.dim()
            )));
        }
        if jumps.horizon() != grid.horizon() {
            return Err(Error::InvalidArgument(format!(
                "jump horizon {} differs from grid horizon {}",
                jumps.horizon(),
                grid.horizon()
            )));
        }
        let event_step: Vec<usize> = jumps
            .events()
            .iter()
            .map(|e| grid.step_containing(e.time))
            .collect();
        let mut first_event = vec![0; grid.steps() + 1];
        let mut l = 0;
        for (j, slot) in first_event.iter_mut().enumerate() {
            while l < event_step.len() && event_step[l] < j {
                l += 1;
            }
            *slot = l;
        }
        Ok(Self {
            fc,
            intensity,
            wiener,
            jumps,
            event_step,
            first_event,
            memo: RefCell::new(HashMap::new()),
        })
    }

    pub fn coefficients(&self) -> &FieldCoefficients {
        self.fc
    }

    pub fn wiener(&self) -> &WienerPath {
        self.wiener
    }

    pub fn jumps(&self) -> &MarkedJumpStream {
        self.jumps
    }

    /// Step index containing jump event `l`.
    pub fn event_step(&self, l: usize) -> usize {
        self.event_step[l]
    }

    /// Indices of the jump events inside step `j`, i.e. in `(t_j, t_{j+1}]`.
    pub fn events_in_step(&self, j: usize) -> std::ops::Range<usize> {
        self.first_event[j]..self.first_event[j + 1]
    }

    fn node_cutoff(&self, j: usize) -> Result<Cutoff> {
        let n = self.wiener.grid().steps();
        if j > n {
            return Err(Error::InvalidArgument(format!("step index {j} beyond N = {n}")));
        }
        Ok(Cutoff {
            step: j,
            event_end: self.first_event[j],
        })
    }

    fn pre_event_cutoff(&self, l: usize) -> Result<Cutoff> {
        if l >= self.event_step.len() {
            return Err(Error::InvalidArgument(format!("no jump event {l}")));
        }
        Ok(Cutoff {
            step: self.event_step[l],
            event_end: l,
        })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.fc.n() {
            return Err(Error::InvalidDimension(format!(
                "query point has {} components, field expects {}",
                x.len(),
                self.fc.n()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite query point {x:?}")));
        }
        Ok(())
    }

    /// `F(t_j, x)`: initial profile plus all drift, diffusion and jump
    /// increments up to node `j`.
    pub fn eval_field(&self, j: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let cut = self.node_cutoff(j)?;
        self.value_memo(cut, x)
    }

    /// `F(τ_l-, x)`: the field at the start of the step containing event `l`
    /// plus the jumps of earlier events in that step, excluding event `l`.
    pub fn eval_before_event(&self, l: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let cut = self.pre_event_cutoff(l)?;
        self.value_memo(cut, x)
    }

    pub fn eval_gradient(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let cut = self.node_cutoff(j)?;
        if self.fc.has_analytic_gradient() {
            Ok(self.accumulate(cut, x, Order::Gradient)?.gradient)
        } else {
            self.numeric_gradient(cut, x)
        }
    }

    pub fn eval_hessian(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let cut = self.node_cutoff(j)?;
        if self.fc.has_analytic_hessian() {
            Ok(self.accumulate(cut, x, Order::Hessian)?.hessian)
        } else {
            self.numeric_hessian(cut, x)
        }
    }

    /// Value, gradient and Hessian at node `j` in as few sweeps as the
    /// available analytic derivatives allow.
    pub fn eval_jet(&self, j: usize, x: &[f64]) -> Result<FieldJet> {
        self.check_point(x)?;
        let cut = self.node_cutoff(j)?;
        let analytic_grad = self.fc.has_analytic_gradient();
        let analytic_hess = self.fc.has_analytic_hessian();
        let order = match (analytic_grad, analytic_hess) {
            (true, true) => Order::Hessian,
            (true, false) => Order::Gradient,
            _ => Order::Value,
        };
        let mut jet = self.accumulate(cut, x, order)?;
        if !analytic_grad {
            jet.gradient = self.numeric_gradient(cut, x)?;
        }
        if !analytic_hess {
            jet.hessian = self.numeric_hessian(cut, x)?;
        }
        Ok(jet)
    }

    fn numeric_gradient(&self, cut: Cutoff, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        let mut err = None;
        central_gradient(
            |p| match self.value_memo(cut, p) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            x,
            &mut out,
        );
        err.map_or(Ok(out), Err)
    }

    fn numeric_hessian(&self, cut: Cutoff, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len() * x.len()];
        let mut err = None;
        central_hessian(
            |p| match self.value_memo(cut, p) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            x,
            &mut out,
        );
        err.map_or(Ok(out), Err)
    }

    fn value_memo(&self, cut: Cutoff, x: &[f64]) -> Result<f64> {
        let key = (cut.step, cut.event_end, x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if let Some(v) = self.memo.borrow().get(&key) {
            return Ok(*v);
        }
        let v = self.accumulate(cut, x, Order::Value)?.value;
        self.memo.borrow_mut().insert(key, v);
        Ok(v)
    }

    /// Drops memoized values.
    pub fn clear_cache(&self) {
        self.memo.borrow_mut().clear();
    }

    pub fn cache_len(&self) -> usize {
        self.memo.borrow().len()
    }

    /// Effective drift `Q` (compensated when centered) at `(t, x)`.
    pub fn q_at(&self, t: f64, x: &[f64]) -> Result<f64> {
        let v = self.fc.effective_q(self.intensity, t, x)?;
        finite_scalar("Q", t, x, v)
    }

    pub fn d_at(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.fc.d(t, x, out);
        finite_slice("D", t, x, out)
    }

    /// `∂D_k/∂x_i` at `(t, x)`, `out[i * m + k]`; analytic when supplied,
    /// central differences otherwise.
    pub fn d_grad_at(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self.fc.d_grad() {
            Some(grad) => grad(t, x, out),
            None => central_jacobian(|p, o| self.fc.d(t, p, o), x, self.fc.m(), out),
        }
        finite_slice("grad D", t, x, out)
    }

    pub fn g_at(&self, t: f64, x: &[f64], mark: f64) -> Result<f64> {
        finite_scalar("G", t, x, self.fc.g(t, x, mark))
    }

    fn accumulate(&self, cut: Cutoff, x: &[f64], order: Order) -> Result<FieldJet> {
        let fc = self.fc;
        let (n, m) = (fc.n(), fc.m());
        let grid = self.wiener.grid();
        let dt = grid.dt();
        let centered = fc.representation() == Representation::Centered;
        let want_grad = order >= Order::Gradient;
        let want_hess = order >= Order::Hessian;

        let mut f0_grad = vec![0.0; n];
        let mut f0_hess = vec![0.0; n * n];
        if want_grad {
            analytic(fc.f0_grad())?(x, &mut f0_grad);
            finite_slice("grad F0", 0.0, x, &f0_grad)?;
        }
        if want_hess {
            analytic(fc.f0_hess())?(x, &mut f0_hess);
            finite_slice("hess F0", 0.0, x, &f0_hess)?;
        }
        let mut acc = JetSum {
            value: CompensatedSum::new(finite_scalar("F0", 0.0, x, fc.f0(x))?),
            gradient: f0_grad.into_iter().map(CompensatedSum::new).collect(),
            hessian: f0_hess.into_iter().map(CompensatedSum::new).collect(),
        };

        let mut d = vec![0.0; m];
        let mut qg = vec![0.0; n];
        let mut qh = vec![0.0; n * n];
        let mut dg = vec![0.0; n * m];
        let mut dh = vec![0.0; n * n * m];
        let mut comp_g = vec![0.0; n];
        let mut comp_h = vec![0.0; n * n];
        let mut gg = vec![0.0; n];
        let mut gh = vec![0.0; n * n];

        let events = self.jumps.events();
        let mut jump_into = |acc: &mut JetSum, l: usize| -> Result<()> {
            let e = events[l];
            acc.value.add(finite_scalar("G", e.time, x, fc.g(e.time, x, e.mark))?);
            if want_grad {
                analytic(fc.g_grad())?(e.time, x, e.mark, &mut gg);
                finite_slice("grad G", e.time, x, &gg)?;
                acc.gradient.iter_mut().zip(&gg).for_each(|(a, b)| a.add(*b));
            }
            if want_hess {
                analytic(fc.g_hess())?(e.time, x, e.mark, &mut gh);
                finite_slice("hess G", e.time, x, &gh)?;
                acc.hessian.iter_mut().zip(&gh).for_each(|(a, b)| a.add(*b));
            }
            Ok(())
        };

        let q_grad = if want_grad { Some(analytic(fc.q_grad())?) } else { None };
        let d_grad = if want_grad { Some(analytic(fc.d_grad())?) } else { None };
        let q_hess = if want_hess { Some(analytic(fc.q_hess())?) } else { None };
        let d_hess = if want_hess { Some(analytic(fc.d_hess())?) } else { None };
        let g_grad = if centered && want_grad { Some(analytic(fc.g_grad())?) } else { None };
        let g_hess = if centered && want_hess { Some(analytic(fc.g_hess())?) } else { None };

        for i in 0..cut.step {
            let t = grid.node(i);
            let dw = self.wiener.step(i);
            let q = self.q_at(t, x)?;
            fc.d(t, x, &mut d);
            finite_slice("D", t, x, &d)?;
            let mut inc = q * dt;
            for k in 0..m {
                inc += d[k] * dw[k];
            }
            acc.value.add(inc);

            if let (Some(q_grad), Some(d_grad)) = (q_grad, d_grad) {
                q_grad(t, x, &mut qg);
                d_grad(t, x, &mut dg);
                if let Some(grad_g) = g_grad {
                    self.intensity
                        .integrate_into(&mut comp_g, |y, v| grad_g(t, x, y, v))?;
                    qg.iter_mut().zip(&comp_g).for_each(|(a, c)| *a -= c);
                }
                finite_slice("grad Q", t, x, &qg)?;
                finite_slice("grad D", t, x, &dg)?;
                for a in 0..n {
                    let mut inc = qg[a] * dt;
                    for k in 0..m {
                        inc += dg[a * m + k] * dw[k];
                    }
                    acc.gradient[a].add(inc);
                }
            }
            if let (Some(q_hess), Some(d_hess)) = (q_hess, d_hess) {
                q_hess(t, x, &mut qh);
                d_hess(t, x, &mut dh);
                if let Some(hess_g) = g_hess {
                    self.intensity
                        .integrate_into(&mut comp_h, |y, v| hess_g(t, x, y, v))?;
                    qh.iter_mut().zip(&comp_h).for_each(|(a, c)| *a -= c);
                }
                finite_slice("hess Q", t, x, &qh)?;
                finite_slice("hess D", t, x, &dh)?;
                for ab in 0..n * n {
                    let mut inc = qh[ab] * dt;
                    for k in 0..m {
                        inc += dh[ab * m + k] * dw[k];
                    }
                    acc.hessian[ab].add(inc);
                }
            }

            for l in self.first_event[i]..self.first_event[i + 1] {
                jump_into(&mut acc, l)?;
            }
        }
        for l in self.first_event[cut.step]..cut.event_end {
            jump_into(&mut acc, l)?;
        }
        Ok(FieldJet {
            value: acc.value.value(),
            gradient: acc.gradient.iter().map(CompensatedSum::value).collect(),
            hessian: acc.hessian.iter().map(CompensatedSum::value).collect(),
        })
    }
}

struct JetSum {
    value: CompensatedSum,
    gradient: Vec<CompensatedSum>,
    hessian: Vec<CompensatedSum>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Order {
    Value,
    Gradient,
    Hessian,
}

fn analytic<T: ?Sized>(f: Option<&T>) -> Result<&T> {
    f.ok_or_else(|| Error::InvalidArgument("analytic derivative requested but not supplied".into()))
}

fn finite_scalar(name: &str, t: f64, x: &[f64], v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::contract(name, t, x))
    }
}

fn finite_slice(name: &str, t: f64, x: &[f64], v: &[f64]) -> Result<()> {
    if v.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::contract(name, t, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_wiener, JumpEvent, MarkDistribution, TimeGrid};

    fn noise(n: usize, seed: u64) -> (WienerPath, MarkedJumpStream) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let w = sample_wiener(grid, 1, seed).unwrap();
        (w, MarkedJumpStream::empty(1.0))
    }

    #[test]
    fn static_field_stays_put() {
        let fc = FieldCoefficients::new(1, 1).with_f0(|x| x[0].sin());
        let pi = IntensitySpec::none();
        let (w, j) = noise(16, 1);
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        for step in [0, 3, 16] {
            for x in [-1.0, 0.2, 5.0] {
                assert_eq!(fr.eval_field(step, &[x]).unwrap(), x.sin());
            }
        }
    }

    #[test]
    fn linear_in_time_drift_is_exact() {
        let fc = FieldCoefficients::new(1, 1).with_q(|_, x| x[0]);
        let pi = IntensitySpec::none();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let w = sample_wiener(grid, 1, 2).unwrap();
        let j = MarkedJumpStream::empty(1.0);
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        for step in 0..=4 {
            let x = 1.5;
            assert_eq!(fr.eval_field(step, &[x]).unwrap(), x * grid.node(step));
        }
    }

    #[test]
    fn single_jump_shifts_field() {
        let fc = FieldCoefficients::new(1, 1).with_g(|_, _, g| g);
        let pi = IntensitySpec::new(1.0, MarkDistribution::PointMass(2.0)).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let w = sample_wiener(grid, 1, 3).unwrap();
        let j = MarkedJumpStream::from_events(1.0, vec![JumpEvent { time: 0.5, mark: 2.0 }]).unwrap();
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        for step in 0..=8 {
            let v = fr.eval_field(step, &[0.3]).unwrap();
            let expected = if grid.node(step) >= 0.5 { 2.0 } else { 0.0 };
            assert_eq!(v, expected, "step {step}");
        }
        assert_eq!(fr.eval_before_event(0, &[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn analytic_quadratic_derivatives() {
        let fc = FieldCoefficients::new(1, 1)
            .with_f0(|x| x[0] * x[0])
            .with_f0_grad(|x, out| out[0] = 2.0 * x[0])
            .with_f0_hess(|_, out| out[0] = 2.0);
        let pi = IntensitySpec::none();
        let (w, j) = noise(8, 4);
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        assert_eq!(fr.eval_gradient(5, &[1.5]).unwrap(), vec![3.0]);
        assert_eq!(fr.eval_hessian(5, &[1.5]).unwrap(), vec![2.0]);
    }

    #[test]
    fn analytic_gradient_is_termwise() {
        let alpha = 0.7;
        let fc = FieldCoefficients::new(1, 1)
            .with_f0(|x| x[0] * x[0])
            .with_f0_grad(|x, out| out[0] = 2.0 * x[0])
            .with_f0_hess(|_, out| out[0] = 2.0)
            .with_q(move |_, x| alpha * x[0])
            .with_q_grad(move |_, _, out| out[0] = alpha)
            .with_q_hess(|_, _, out| out[0] = 0.0);
        let pi = IntensitySpec::none();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let w = sample_wiener(grid, 1, 4).unwrap();
        let j = MarkedJumpStream::empty(1.0);
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        for step in 0..=8 {
            let g = fr.eval_gradient(step, &[0.4]).unwrap()[0];
            let expected = 0.8 + alpha * grid.node(step);
            assert!((g - expected).abs() < 1e-15, "{g} vs {expected}");
        }
    }

    #[test]
    fn numeric_cubic_derivatives() {
        let fc = FieldCoefficients::new(1, 1).with_f0(|x| x[0].powi(3));
        let pi = IntensitySpec::none();
        let (w, j) = noise(4, 5);
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        let g = fr.eval_gradient(2, &[1.0]).unwrap()[0];
        let h = fr.eval_hessian(2, &[1.0]).unwrap()[0];
        assert!((g - 3.0).abs() < 1e-8, "{g}");
        assert!((h - 6.0).abs() < 1e-5, "{h}");
        assert!(fr.cache_len() > 0);
        fr.clear_cache();
        assert_eq!(fr.cache_len(), 0);
    }

    #[test]
    fn numeric_hessian_is_symmetric() {
        let fc = FieldCoefficients::new(2, 1).with_f0(|x| x[0].sin() * x[1].exp() + x[0] * x[1] * x[1]);
        let pi = IntensitySpec::none();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let w = sample_wiener(grid, 1, 6).unwrap();
        let j = MarkedJumpStream::empty(1.0);
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        let x = [0.3, -0.6];
        let h = fr.eval_hessian(1, &x).unwrap();
        assert_eq!(h[1], h[2]);
        let exact = [
            -x[0].sin() * x[1].exp(),
            x[0].cos() * x[1].exp() + 2.0 * x[1],
            x[0].cos() * x[1].exp() + 2.0 * x[1],
            x[0].sin() * x[1].exp() + 2.0 * x[0],
        ];
        for (a, b) in h.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn non_finite_coefficient_names_source() {
        let fc = FieldCoefficients::new(1, 1).with_q(|t, x| if t > 0.3 { x[0].ln() } else { 0.0 });
        let pi = IntensitySpec::none();
        let (w, j) = noise(4, 7);
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        assert!(fr.eval_field(1, &[-1.0]).is_ok());
        match fr.eval_field(4, &[-1.0]).unwrap_err() {
            Error::ContractViolation { coefficient, t, .. } => {
                assert_eq!(coefficient, "Q");
                assert_eq!(t, 0.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_queries() {
        let fc = FieldCoefficients::new(1, 1);
        let pi = IntensitySpec::none();
        let (w, j) = noise(4, 8);
        let fr = FieldRealization::new(&fc, &pi, &w, &j).unwrap();
        assert!(fr.eval_field(5, &[0.0]).is_err());
        assert!(fr.eval_field(1, &[f64::NAN]).is_err());
        assert!(fr.eval_field(1, &[0.0, 1.0]).is_err());
        assert!(fr.eval_before_event(0, &[0.0]).is_err());
    }
}
