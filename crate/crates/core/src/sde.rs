//! Left-point Euler integration of the jump-diffusion process on shared
//! noise, with jumps applied at their exact event times.

use crate::error::{Error, Result};
use crate::noise::{IntensitySpec, MarkedJumpStream, TimeGrid, WienerPath};
use crate::scenario::ProcessCoefficients;

/// One applied jump: the state just before and just after event `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub mark: f64,
    /// Index `j` of the enclosing step `(t_j, t_{j+1}]`.
    pub step: usize,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessPath {
    grid: TimeGrid,
    n: usize,
    // states[j * n + i]
    states: Vec<f64>,
    ledger: Vec<JumpRecord>,
}

impl ProcessPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// State at node `j`.
    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.n..(j + 1) * self.n]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn ledger(&self) -> &[JumpRecord] {
        &self.ledger
    }
}

/// Integrates `dx = a dt + b_k dw_k + ∫ g dν` from `z` over the Wiener grid.
///
/// Each step uses `a(t_j)`, `b(t_j)`; a centered process has its compensator
/// `∫ g(t_j, γ) Pi(dγ)` removed from the drift. A jump at `τ` inside a step is
/// applied after the fraction `(τ - t_j) / dt` of that step's continuous
/// increment, which defines the ledger's pre-jump state; the node state is
/// `x_j + a dt + b dW + Σ g`.
pub fn integrate_process(
    pc: &ProcessCoefficients,
    intensity: &IntensitySpec,
    wiener: &WienerPath,
    jumps: &MarkedJumpStream,
    z: &[f64],
) -> Result<ProcessPath> {
    let (n, m) = (pc.n(), pc.m());
    let grid = *wiener.grid();
    if wiener.dim() != m {
        return Err(Error::InvalidDimension(format!(
            "process expects {m} Wiener components, path has {}",
            wiener.dim()
        )));
    }
    if z.len() != n {
        return Err(Error::InvalidDimension(format!(
            "initial point has {} components, expected {n}",
            z.len()
        )));
    }
    if jumps.horizon() != grid.horizon() {
        return Err(Error::InvalidArgument(format!(
            "jump horizon {} differs from grid horizon {}",
            jumps.horizon(),
            grid.horizon()
        )));
    }

    let dt = grid.dt();
    let steps = grid.steps();
    let mut states = Vec::with_capacity((steps + 1) * n);
    states.extend_from_slice(z);
    let mut ledger = Vec::with_capacity(jumps.len());

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n * m];
    let mut cont = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut jump_sum = vec![0.0; n];
    let events = jumps.events();
    let mut next_event = 0;

    for j in 0..steps {
        let t = grid.node(j);
        pc.effective_drift(intensity, t, &mut a)?;
        pc.diffusion(t, &mut b);
        let dw = wiener.step(j);
        for i in 0..n {
            let mut c = a[i] * dt;
            for k in 0..m {
                c += b[i * m + k] * dw[k];
            }
            cont[i] = c;
        }

        let x_j = &states[j * n..(j + 1) * n];
        let mut x_next: Vec<f64> = x_j.to_vec();
        jump_sum.fill(0.0);
        let t_next = grid.node(j + 1);
        while next_event < events.len() && events[next_event].time <= t_next {
            let e = events[next_event];
            let theta = (e.time - t) / dt;
            pc.jump(e.time, e.mark, &mut g);
            let pre: Vec<f64> = (0..n).map(|i| x_j[i] + theta * cont[i] + jump_sum[i]).collect();
            let post: Vec<f64> = pre.iter().zip(&g).map(|(p, gi)| p + gi).collect();
            for i in 0..n {
                jump_sum[i] += g[i];
            }
            ledger.push(JumpRecord {
                time: e.time,
                mark: e.mark,
                step: j,
                pre,
                post,
            });
            next_event += 1;
        }
        for i in 0..n {
            x_next[i] += cont[i];
            x_next[i] += jump_sum[i];
        }
        if x_next.iter().any(|v| !v.is_finite())
            || ledger.last().is_some_and(|r| r.step == j && r.post.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Divergence { step: j, t });
        }
        states.extend_from_slice(&x_next);
    }

    Ok(ProcessPath {
        grid,
        n,
        states,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_wiener, JumpEvent, MarkDistribution};
    use crate::scenario::Representation;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn constant_drift_is_exact() {
        let pc = ProcessCoefficients::new(1, 1).with_drift(|_, out| out[0] = 1.0);
        let w = sample_wiener(grid(8), 1, 1).unwrap();
        let p = integrate_process(&pc, &IntensitySpec::none(), &w, &MarkedJumpStream::empty(1.0), &[0.0])
            .unwrap();
        assert_eq!(p.terminal(), &[1.0]);
        assert_eq!(p.state(0), &[0.0]);
    }

    #[test]
    fn unit_diffusion_telescopes_to_terminal_value() {
        let pc = ProcessCoefficients::new(1, 1).with_diffusion(|_, out| out[0] = 1.0);
        let w = sample_wiener(grid(64), 1, 2).unwrap();
        let p = integrate_process(&pc, &IntensitySpec::none(), &w, &MarkedJumpStream::empty(1.0), &[0.0])
            .unwrap();
        assert_eq!(p.terminal()[0], w.terminal()[0]);
    }

    #[test]
    fn single_jump() {
        let pc = ProcessCoefficients::new(1, 1).with_jump(|_, g, out| out[0] = g);
        let w = sample_wiener(grid(10), 1, 3).unwrap();
        let jumps = MarkedJumpStream::from_events(1.0, vec![JumpEvent { time: 0.5, mark: 2.0 }]).unwrap();
        let p = integrate_process(&pc, &IntensitySpec::none(), &w, &jumps, &[1.0]).unwrap();
        assert_eq!(p.terminal(), &[3.0]);
        let rec = &p.ledger()[0];
        assert_eq!(rec.step, 4);
        assert_eq!(rec.pre, vec![1.0]);
        assert_eq!(rec.post, vec![3.0]);
    }

    #[test]
    fn pre_jump_state_interpolates_continuous_part() {
        let pc = ProcessCoefficients::new(1, 1)
            .with_drift(|_, out| out[0] = 2.0)
            .with_jump(|_, g, out| out[0] = g);
        let w = sample_wiener(grid(4), 1, 3).unwrap();
        let jumps = MarkedJumpStream::from_events(
            1.0,
            vec![JumpEvent { time: 0.3, mark: 1.0 }, JumpEvent { time: 0.45, mark: -0.5 }],
        )
        .unwrap();
        let p = integrate_process(&pc, &IntensitySpec::none(), &w, &jumps, &[0.0]).unwrap();
        // step 1 covers (0.25, 0.5]; x_1 = 0.5, continuous increment 0.5
        let l = p.ledger();
        assert!((l[0].pre[0] - (0.5 + 0.2 * 0.5)).abs() < 1e-15);
        assert!((l[1].pre[0] - (0.5 + 0.8 * 0.5 + 1.0)).abs() < 1e-15);
        assert!((p.state(2)[0] - 1.5).abs() < 1e-15);
        for r in l {
            let mut g = [0.0];
            pc.jump(r.time, r.mark, &mut g);
            assert_eq!(r.post[0], r.pre[0] + g[0]);
        }
    }

    #[test]
    fn centered_process_subtracts_compensator() {
        // ã = 1, g = γ, Pi = 2 Uniform(0, 1): effective drift is 0
        let pc = ProcessCoefficients::new(1, 1)
            .with_drift(|_, out| out[0] = 1.0)
            .with_jump(|_, g, out| out[0] = g)
            .with_representation(Representation::Centered);
        let pi = IntensitySpec::new(2.0, MarkDistribution::Uniform { low: 0.0, high: 1.0 }).unwrap();
        let w = sample_wiener(grid(16), 1, 4).unwrap();
        let p = integrate_process(&pc, &pi, &w, &MarkedJumpStream::empty(1.0), &[0.3]).unwrap();
        assert!((p.terminal()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn divergence_reports_step() {
        let pc = ProcessCoefficients::new(1, 1).with_drift(|t, out| out[0] = if t >= 0.5 { f64::INFINITY } else { 0.0 });
        let w = sample_wiener(grid(4), 1, 5).unwrap();
        let err = integrate_process(&pc, &IntensitySpec::none(), &w, &MarkedJumpStream::empty(1.0), &[0.0])
            .unwrap_err();
        assert_eq!(err, Error::Divergence { step: 2, t: 0.5 });
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let pc = ProcessCoefficients::new(2, 1);
        let w = sample_wiener(grid(4), 1, 5).unwrap();
        let r = integrate_process(&pc, &IntensitySpec::none(), &w, &MarkedJumpStream::empty(1.0), &[0.0]);
        assert!(matches!(r, Err(Error::InvalidDimension(_))));
        let r = integrate_process(&pc, &IntensitySpec::none(), &w, &MarkedJumpStream::empty(2.0), &[0.0, 0.0]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
