//! Pathwise verification of the generalized Itô–Wentzell formula.
//!
//! Along one simulated path the right-hand side
//!
//! ```text
//! dF(t, x(t)) = Q dt + D_k dw_k + b_ik ∂_i F dw_k
//!             + [a_i ∂_i F + ½ b_ik b_jk ∂_ij F + b_ik ∂_i D_k] dt
//!             + ∫ [F(t, x + g) - F(t, x)] ν(dt, dγ) + ∫ G(t, x + g, γ) ν(dt, dγ)
//! ```
//!
//! is accumulated increment by increment and compared with the directly
//! evaluated left-hand side `F(T, x(T)) - F(0, z)`. Process, field and
//! right-hand side all see the same Wiener increments and jump events.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::FieldRealization;
use crate::noise::{path_seed, refine, sample_jumps, sample_wiener, MarkedJumpStream, TimeGrid, WienerPath};
use crate::scenario::{Representation, ScenarioSpec};
use crate::sde::{integrate_process, ProcessPath};
use crate::sum::CompensatedSum;

/// Residual bound for scenarios whose discretization error vanishes
/// identically.
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// Per-term right-hand-side accumulators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TermBreakdown {
    /// `Q dt`
    pub drift_q: f64,
    /// `a_i ∂_i F dt`
    pub drift_transport: f64,
    /// `½ b_ik b_jk ∂_ij F dt`
    pub drift_diffusion: f64,
    /// `b_ik ∂_i D_k dt`
    pub drift_cross: f64,
    /// `D_k dw_k`
    pub diffusion_d: f64,
    /// `b_ik ∂_i F dw_k`
    pub diffusion_transport: f64,
    /// `F(τ-, x- + g) - F(τ-, x-)` per event
    pub jump_field: f64,
    /// `G(τ, x- + g, γ)` per event
    pub jump_g: f64,
}

impl TermBreakdown {
    pub const NAMES: [&'static str; 8] = [
        "drift_q",
        "drift_transport",
        "drift_diffusion",
        "drift_cross",
        "diffusion_d",
        "diffusion_transport",
        "jump_field",
        "jump_g",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.drift_q,
            self.drift_transport,
            self.drift_diffusion,
            self.drift_cross,
            self.diffusion_d,
            self.diffusion_transport,
            self.jump_field,
            self.jump_g,
        ]
    }

    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }
}

/// Compensated running sums of the eight accumulators.
#[derive(Default)]
struct TermSums([CompensatedSum; 8]);

impl TermSums {
    fn add(&mut self, increment: &TermBreakdown) {
        for (sum, v) in self.0.iter_mut().zip(increment.values()) {
            sum.add(v);
        }
    }

    fn finish(&self) -> TermBreakdown {
        let v = self.0.map(|s| s.value());
        TermBreakdown {
            drift_q: v[0],
            drift_transport: v[1],
            drift_diffusion: v[2],
            drift_cross: v[3],
            diffusion_d: v[4],
            diffusion_transport: v[5],
            jump_field: v[6],
            jump_g: v[7],
        }
    }
}

/// Result of one pathwise verification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub seed: u64,
    pub steps: usize,
    /// `F(T, x(T)) - F0(z)`
    pub lhs: f64,
    /// Running sum of every right-hand-side increment.
    pub rhs: f64,
    pub residual: f64,
    pub terms: TermBreakdown,
}

impl ResidualReport {
    /// `|rhs - Σ terms|`, the bookkeeping discrepancy.
    pub fn bookkeeping_error(&self) -> f64 {
        (self.rhs - self.terms.total()).abs()
    }
}

/// How a centered spec is verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CenteredMode {
    /// Integrate the centered system as is and use the centered form of the
    /// formula: jump integrals against the compensated measure plus the extra
    /// `Pi`-drift terms.
    #[default]
    Direct,
    /// Convert to the non-centered system first.
    Convert,
}

/// Argument at which the jump amplitude `G` is evaluated in the jump term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JumpAmplitudeArgument {
    /// `G(τ, x(τ-) + g(τ, γ), γ)`, the correct form.
    #[default]
    Shifted,
    /// `G(τ, x(τ-), γ)`. Deliberately wrong; exists so tests can check that the
    /// verifier detects the missing shift.
    PreJump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    pub centered: CenteredMode,
    pub jump_amplitude: JumpAmplitudeArgument,
}

/// Right-hand-side increments of step `j`, evaluated at `(t_j, x_j)`.
pub fn rhs_step(
    spec: &ScenarioSpec,
    path: &ProcessPath,
    field: &FieldRealization<'_>,
    j: usize,
) -> Result<TermBreakdown> {
    let grid = path.grid();
    if j >= grid.steps() {
        return Err(Error::InvalidArgument(format!("step {j} out of range")));
    }
    let (n, m) = (spec.n(), spec.m());
    let t = grid.node(j);
    let dt = grid.dt();
    let x = path.state(j);
    let dw = field.wiener().step(j);

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n * m];
    spec.process().effective_drift(spec.intensity(), t, &mut a)?;
    spec.process().diffusion(t, &mut b);
    let jet = field.eval_jet(j, x)?;
    let q = field.q_at(t, x)?;
    let mut d = vec![0.0; m];
    field.d_at(t, x, &mut d)?;
    let mut dgrad = vec![0.0; n * m];
    field.d_grad_at(t, x, &mut dgrad)?;

    let mut terms = TermBreakdown {
        drift_q: q * dt,
        ..TermBreakdown::default()
    };
    let transport: f64 = a.iter().zip(&jet.gradient).map(|(ai, gi)| ai * gi).sum();
    terms.drift_transport = transport * dt;

    let (mut curvature, mut cross, mut diff_d, mut diff_tr) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..m {
        let mut bk_grad_f = 0.0;
        let mut bk_grad_d = 0.0;
        let mut bk_hess_bk = 0.0;
        for i in 0..n {
            let bik = b[i * m + k];
            bk_grad_f += bik * jet.gradient[i];
            bk_grad_d += bik * dgrad[i * m + k];
            for l in 0..n {
                bk_hess_bk += bik * jet.hessian[i * n + l] * b[l * m + k];
            }
        }
        curvature += bk_hess_bk;
        cross += bk_grad_d;
        diff_d += d[k] * dw[k];
        diff_tr += bk_grad_f * dw[k];
    }
    terms.drift_diffusion = 0.5 * curvature * dt;
    terms.drift_cross = cross * dt;
    terms.diffusion_d = diff_d;
    terms.diffusion_transport = diff_tr;
    Ok(terms)
}

/// Jump increments for event `l`, using the ledger's pre-jump state and the
/// field just before the event.
pub fn rhs_jump(
    spec: &ScenarioSpec,
    path: &ProcessPath,
    field: &FieldRealization<'_>,
    l: usize,
    argument: JumpAmplitudeArgument,
) -> Result<TermBreakdown> {
    let record = path
        .ledger()
        .get(l)
        .ok_or_else(|| Error::InvalidArgument(format!("no jump event {l}")))?;
    let mut g = vec![0.0; spec.n()];
    spec.process().jump(record.time, record.mark, &mut g);
    let shifted: Vec<f64> = record.pre.iter().zip(&g).map(|(x, gi)| x + gi).collect();

    let before = field.eval_before_event(l, &record.pre)?;
    let after = field.eval_before_event(l, &shifted)?;
    let g_arg = match argument {
        JumpAmplitudeArgument::Shifted => &shifted,
        JumpAmplitudeArgument::PreJump => &record.pre,
    };
    Ok(TermBreakdown {
        jump_field: after - before,
        jump_g: field.g_at(record.time, g_arg, record.mark)?,
        ..TermBreakdown::default()
    })
}

/// `∫ [F(t_j, x_j + g(t_j, γ)) - F(t_j, x_j)] Pi(dγ)` and
/// `∫ G(t_j, x_j + g(t_j, γ), γ) Pi(dγ)`: the `dt`-coefficients that appear
/// when the jump integrals are taken against the compensated measure.
pub fn compensator_terms(
    spec: &ScenarioSpec,
    path: &ProcessPath,
    field: &FieldRealization<'_>,
    j: usize,
    argument: JumpAmplitudeArgument,
) -> Result<(f64, f64)> {
    let t = path.grid().node(j);
    let x = path.state(j);
    let base = field.eval_field(j, x)?;
    let mut g = vec![0.0; spec.n()];
    let mut err = None;
    let mut shifted = vec![0.0; spec.n()];
    let mut eval = |mark: f64| -> (f64, f64) {
        spec.process().jump(t, mark, &mut g);
        for i in 0..x.len() {
            shifted[i] = x[i] + g[i];
        }
        let arg = match argument {
            JumpAmplitudeArgument::Shifted => &shifted[..],
            JumpAmplitudeArgument::PreJump => x,
        };
        let r = field
            .eval_field(j, &shifted)
            .and_then(|f| Ok((f - base, field.g_at(t, arg, mark)?)));
        r.unwrap_or_else(|e| {
            err.get_or_insert(e);
            (f64::NAN, f64::NAN)
        })
    };
    let mut out = [0.0; 2];
    let integrated = spec.intensity().integrate_into(&mut out, |mark, v| {
        let (a, b) = eval(mark);
        v[0] = a;
        v[1] = b;
    });
    if let Some(e) = err {
        return Err(e);
    }
    integrated?;
    Ok((out[0], out[1]))
}

/// Verifies the formula on explicitly supplied noise.
pub fn verify_on_noise(
    spec: &ScenarioSpec,
    wiener: &WienerPath,
    jumps: &MarkedJumpStream,
    seed: u64,
    options: VerifyOptions,
) -> Result<ResidualReport> {
    let converted;
    let spec = if spec.representation() == Representation::Centered
        && options.centered == CenteredMode::Convert
    {
        converted = spec.to_noncentered().spec;
        &converted
    } else {
        spec
    };
    let centered_form = spec.representation() == Representation::Centered;

    let path = integrate_process(spec.process(), spec.intensity(), wiener, jumps, spec.initial())?;
    let field = FieldRealization::new(spec.field(), spec.intensity(), wiener, jumps)?;
    let grid = wiener.grid();
    let dt = grid.dt();

    let mut terms = TermSums::default();
    let mut rhs = CompensatedSum::default();
    for j in 0..grid.steps() {
        let step = rhs_step(spec, &path, &field, j)?;
        for v in step.values() {
            rhs.add(v);
        }
        terms.add(&step);
        for l in field.events_in_step(j) {
            let jump = rhs_jump(spec, &path, &field, l, options.jump_amplitude)?;
            rhs.add(jump.jump_field);
            rhs.add(jump.jump_g);
            terms.add(&jump);
        }
        if centered_form {
            let (comp_field, comp_g) =
                compensator_terms(spec, &path, &field, j, options.jump_amplitude)?;
            // compensated-measure integrals subtract dt ∫(..) dPi; the extra
            // drift terms of the centered form add it back
            let compensated = TermBreakdown {
                jump_field: -comp_field * dt,
                jump_g: -comp_g * dt,
                ..TermBreakdown::default()
            };
            let extra = TermBreakdown {
                jump_field: comp_field * dt,
                jump_g: comp_g * dt,
                ..TermBreakdown::default()
            };
            for part in [compensated, extra] {
                rhs.add(part.jump_field);
                rhs.add(part.jump_g);
                terms.add(&part);
            }
        }
    }

    let lhs = field.eval_field(grid.steps(), path.terminal())? - spec.field().f0(spec.initial());
    Ok(ResidualReport {
        seed,
        steps: grid.steps(),
        lhs,
        rhs: rhs.value(),
        residual: lhs - rhs.value(),
        terms: terms.finish(),
    })
}

/// Samples the noise for `seed` on an `N`-step grid and verifies.
pub fn verify_path(spec: &ScenarioSpec, steps: usize, seed: u64, options: VerifyOptions) -> Result<ResidualReport> {
    let grid = TimeGrid::new(spec.horizon(), steps)?;
    let wiener = sample_wiener(grid, spec.m(), seed)?;
    let jumps = sample_jumps(spec.intensity(), spec.horizon(), seed)?;
    verify_on_noise(spec, &wiener, &jumps, seed, options)
}

/// Verifies `paths` independent paths with seeds `path_seed(master, i)`.
/// Reports come back in seed-index order regardless of scheduling.
pub fn verify_batch(
    spec: &ScenarioSpec,
    steps: usize,
    paths: usize,
    master_seed: u64,
    options: VerifyOptions,
) -> Result<Vec<ResidualReport>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|i| verify_path(spec, steps, path_seed(master_seed, i), options))
        .collect()
}

/// Estimated strong order between two consecutive levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderEstimate {
    /// First (coarsest) level.
    None,
    /// Both levels are at rounding level; no rate is defined.
    Exact,
    Estimated(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub dt: f64,
    pub paths: usize,
    pub rms: f64,
    pub max_abs: f64,
    pub order: OrderEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub scenario: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn orders(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| match r.order {
                OrderEstimate::Estimated(p) => Some(p),
                _ => None,
            })
            .collect()
    }

    pub fn rms_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rms < w[0].rms)
    }
}

pub const MIN_CONVERGENCE_PATHS: usize = 30;

/// Residual statistics across nested grids. For each path the Wiener
/// increments are drawn on the coarsest grid and refined by Brownian-bridge
/// fill-in, so every level sees one trajectory and one jump stream.
pub fn convergence_study(
    spec: &ScenarioSpec,
    levels: &[usize],
    paths: usize,
    master_seed: u64,
    options: VerifyOptions,
) -> Result<ConvergenceTable> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("convergence study needs levels".into()));
    }
    for w in levels.windows(2) {
        if w[0] == 0 || w[1] <= w[0] || w[1] % w[0] != 0 {
            return Err(Error::InvalidArgument(format!(
                "levels must be nested refinements, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if paths < MIN_CONVERGENCE_PATHS {
        return Err(Error::InvalidArgument(format!(
            "convergence study needs at least {MIN_CONVERGENCE_PATHS} paths, got {paths}"
        )));
    }

    let residuals: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|i| residuals_across_levels(spec, levels, path_seed(master_seed, i), options))
        .collect::<Result<_>>()?;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for (lvl, &steps) in levels.iter().enumerate() {
        let mut sum_sq = 0.0;
        let mut max_abs: f64 = 0.0;
        for r in &residuals {
            sum_sq += r[lvl] * r[lvl];
            max_abs = max_abs.max(r[lvl].abs());
        }
        let rms = (sum_sq / paths as f64).sqrt();
        let order = match rows.last() {
            None => OrderEstimate::None,
            Some(prev) if prev.rms < EXACT_TOLERANCE && rms < EXACT_TOLERANCE => OrderEstimate::Exact,
            Some(prev) => {
                let factor = (steps / prev.steps) as f64;
                OrderEstimate::Estimated((prev.rms / rms).ln() / factor.ln())
            }
        };
        rows.push(ConvergenceRow {
            steps,
            dt: spec.horizon() / steps as f64,
            paths,
            rms,
            max_abs,
            order,
        });
    }
    Ok(ConvergenceTable {
        scenario: spec.name().to_string(),
        rows,
    })
}

fn residuals_across_levels(
    spec: &ScenarioSpec,
    levels: &[usize],
    seed: u64,
    options: VerifyOptions,
) -> Result<Vec<f64>> {
    let grid = TimeGrid::new(spec.horizon(), levels[0])?;
    let jumps = sample_jumps(spec.intensity(), spec.horizon(), seed)?;
    let mut wiener = sample_wiener(grid, spec.m(), seed)?;
    let mut out = Vec::with_capacity(levels.len());
    for (lvl, &steps) in levels.iter().enumerate() {
        if lvl > 0 {
            wiener = refine(&wiener, steps / levels[lvl - 1], seed)?;
        }
        out.push(verify_on_noise(spec, &wiener, &jumps, seed, options)?.residual);
    }
    Ok(out)
}
