//! Numerical search over constrained piecewise-constant interactions.
//!
//! Each of the `K` segments is described by `d² = (NM)²` real numbers that
//! assemble a Hermitian matrix. That matrix is stripped of its local part and
//! then shrunk by `min(1, g/ρ)`, with `ρ` its spectral radius, so every
//! parameter vector maps to an admissible protocol. BFGS then maximizes the
//! ground-state population at the end of the horizon.

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::bfgs::{self, BfgsOptions, StopReason};
use crate::dynamics::{build_liouvillian, evolve, Generator, Rk4};
use crate::error::{Error, Result};
use crate::linalg::{dominant_eigenpair, hermitian_eigen, hs_inner, CMatrix, C64, I, ZERO};
use crate::operators::{initial_state, optimal_hamiltonian, optimal_pairs, project_out_local, DensityMatrix, HermitianOperator, SystemSpec};
pub use crate::protocol::{ControlProtocol, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Central finite differences, `2·K·d²` objective evaluations.
    Central,
    /// One forward and one backward propagation.
    Adjoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationConfig {
    pub num_segments: usize,
    /// Time at which `P_g` is evaluated; the protocol horizon.
    pub objective_time: f64,
    pub max_iterations: usize,
    /// Finite-difference step for [`GradientMethod::Central`].
    pub gradient_step: f64,
    /// Stop once `‖∇‖_∞` falls below this.
    pub convergence_tol: f64,
    /// Stop once the relative objective decrease stays below this.
    pub objective_tol: f64,
    pub seed: u64,
    pub gradient: GradientMethod,
    /// Largest RK4 step used inside the objective.
    pub integration_step: f64,
    /// Half-width of the uniform initial parameter distribution, in units of `g`.
    pub init_scale: f64,
    /// Longest BFGS trial step in parameter space, in units of `g`. Beyond
    /// the rescaling radius the objective is flat along `θ`, so unbounded
    /// steps would inflate the parameters and flatten the gradient.
    pub max_step: f64,
    /// BFGS iterations between re-canonicalizing the parameters.
    pub restart_interval: usize,
    /// Schatten exponents of the smoothed warm-up stages, run in order
    /// before the exact spectral-radius map.
    pub smoothing: Vec<u32>,
    /// Iteration budget of each warm-up stage.
    pub smoothing_iterations: usize,
}

impl OptimizationConfig {
    /// `K = 16` segments over `π/(2g)`.
    pub fn new(spec: &SystemSpec) -> Self {
        OptimizationConfig {
            num_segments: 16,
            objective_time: std::f64::consts::PI / (2.0 * spec.g),
            max_iterations: 600,
            gradient_step: 1e-5,
            convergence_tol: 1e-7,
            objective_tol: 1e-9,
            seed: 0,
            gradient: GradientMethod::Adjoint,
            integration_step: 0.01 / spec.g,
            init_scale: 0.1,
            max_step: 1.0,
            restart_interval: 50,
            smoothing: vec![8, 32, 128, 512],
            smoothing_iterations: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("objective_time", self.objective_time),
            ("gradient_step", self.gradient_step),
            ("convergence_tol", self.convergence_tol),
            ("integration_step", self.integration_step),
            ("init_scale", self.init_scale),
            ("max_step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.num_segments == 0 || self.max_iterations == 0 || self.restart_interval == 0 {
            return Err(Error::Domain("num_segments, max_iterations and restart_interval must be positive".into()));
        }
        Ok(())
    }
}

/// Number of real parameters, `K·(NM)²`.
pub fn parameter_count(spec: &SystemSpec, num_segments: usize) -> usize {
    num_segments * spec.dim() * spec.dim()
}

/// Builds a Hermitian matrix from `d²` reals: the diagonal first, then
/// `(re, im)` of each upper-triangular entry in row-major order.
pub fn hermitian_from_block(block: &[f64], d: usize) -> CMatrix {
    debug_assert_eq!(block.len(), d * d);
    let mut h = CMatrix::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = C64::new(block[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let z = C64::new(block[k], block[k + 1]);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            k += 2;
        }
    }
    h
}

/// Inverse of [`hermitian_from_block`].
pub fn block_from_hermitian(h: &CMatrix) -> Vec<f64> {
    let d = h.nrows();
    let mut out: Vec<f64> = (0..d).map(|i| h[(i, i)].re).collect();
    for i in 0..d {
        for j in (i + 1)..d {
            out.push(h[(i, j)].re);
            out.push(h[(i, j)].im);
        }
    }
    out
}

/// Pulls a Hermitian gradient `G` (with `dJ = tr(G dH)`) back onto the block
/// parameters.
fn block_gradient(g: &CMatrix) -> Vec<f64> {
    let d = g.nrows();
    let mut out: Vec<f64> = (0..d).map(|i| g[(i, i)].re).collect();
    for i in 0..d {
        for j in (i + 1)..d {
            out.push(2.0 * g[(i, j)].re);
            out.push(2.0 * g[(i, j)].im);
        }
    }
    out
}

/// Parameter vector holding `h` in every one of `k` segments.
pub fn theta_for_constant(h: &HermitianOperator, k: usize) -> Vec<f64> {
    let block = block_from_hermitian(h.matrix());
    (0..k).flat_map(|_| block.iter().copied()).collect()
}

/// How a projected block is shrunk onto the constraint set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `min(1, g/ρ)` with `ρ` the spectral radius; the map used by
    /// [`parametrize`].
    SpectralRadius,
    /// `g/‖A‖_p` with the Schatten `p`-norm, which bounds the spectral radius
    /// from above and is smooth away from zero. The segment always sits
    /// strictly inside the constraint set, so this is only a warm-up stage.
    Schatten(u32),
}

/// Admissible segment Hamiltonian from one parameter block.
struct SegmentMap {
    /// Projected, unscaled matrix.
    projected: CMatrix,
    radius: f64,
    /// `∂radius/∂A` as a Hermitian matrix, when the rescaling is active.
    radius_gradient: Option<CMatrix>,
    hamiltonian: CMatrix,
}

fn map_segment(block: &[f64], spec: &SystemSpec, scaling: Scaling, want_gradient: bool) -> Result<SegmentMap> {
    let d = spec.dim();
    let raw = hermitian_from_block(block, d);
    let projected = crate::linalg::symmetrize(&project_out_local(&raw, spec.target_dim(), spec.aux_dim)?);
    let (radius, radius_gradient) = match scaling {
        Scaling::SpectralRadius => {
            let (lambda, v) = dominant_eigenpair(&projected);
            let radius = lambda.abs();
            if radius <= spec.g {
                return Ok(SegmentMap { hamiltonian: projected.clone(), projected, radius, radius_gradient: None });
            }
            (radius, want_gradient.then(|| (&v * v.adjoint()) * C64::new(lambda.signum(), 0.0)))
        }
        Scaling::Schatten(p) => {
            let (vals, vecs) = hermitian_eigen(&projected);
            let top = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if top == 0.0 {
                return Ok(SegmentMap { hamiltonian: projected.clone(), projected, radius: 0.0, radius_gradient: None });
            }
            let p = p as f64;
            // Scaled by the largest |λ| to keep the powers in range.
            let radius = top * vals.iter().map(|x| (x.abs() / top).powf(p)).sum::<f64>().powf(1.0 / p);
            let grad = want_gradient.then(|| {
                let w: Vec<C64> = vals.iter().map(|x| C64::new(x.signum() * (x.abs() / radius).powf(p - 1.0), 0.0)).collect();
                let scaled = CMatrix::from_fn(d, d, |r, c| vecs[(r, c)] * w[c]);
                scaled * vecs.adjoint()
            });
            (radius, grad)
        }
    };
    let hamiltonian = &projected * C64::new(spec.g / radius, 0.0);
    Ok(SegmentMap { projected, radius, radius_gradient, hamiltonian })
}

/// Maps a parameter vector onto an admissible protocol of `k` equal segments.
pub fn parametrize(theta: &[f64], spec: &SystemSpec, k: usize, horizon: f64) -> Result<ControlProtocol> {
    let d2 = spec.dim() * spec.dim();
    if k == 0 {
        return Err(Error::InvalidProtocol("segment count must be positive".into()));
    }
    if theta.len() != k * d2 {
        return Err(Error::ParameterLength { expected: k * d2, found: theta.len() });
    }
    let dt = horizon / k as f64;
    let segments = theta
        .chunks(d2)
        .map(|block| {
            let m = map_segment(block, spec, Scaling::SpectralRadius, false)?;
            Ok(Segment { duration: dt, hamiltonian: HermitianOperator::from_symmetrized(m.hamiltonian) })
        })
        .collect::<Result<Vec<_>>>()?;
    ControlProtocol::new(spec.g, segments)
}

/// Number of RK4 steps for an interval; even, so Simpson's rule applies.
fn step_count(duration: f64, max_step: f64) -> usize {
    let n = (duration / max_step).ceil().max(2.0) as usize;
    n + n % 2
}

/// `1 − P_g(T)` for a cooling scenario, with gradients.
#[derive(Debug, Clone)]
pub struct CoolingObjective {
    pub spec: SystemSpec,
    pub rho0: DensityMatrix,
    pub num_segments: usize,
    pub horizon: f64,
    pub max_step: f64,
    pub scaling: Scaling,
}

impl CoolingObjective {
    /// Starts from the thermal target with the auxiliary in its ground state.
    pub fn new(spec: &SystemSpec, config: &OptimizationConfig) -> Result<Self> {
        Ok(CoolingObjective {
            spec: *spec,
            rho0: initial_state(spec)?,
            num_segments: config.num_segments,
            horizon: config.objective_time,
            max_step: config.integration_step,
            scaling: Scaling::SpectralRadius,
        })
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.spec, self.num_segments)
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.parameter_count() {
            return Err(Error::ParameterLength { expected: self.parameter_count(), found: theta.len() });
        }
        Ok(())
    }

    fn generators(&self, theta: &[f64], want_dominant: bool) -> Result<(Vec<SegmentMap>, Vec<Generator>)> {
        let d2 = self.spec.dim() * self.spec.dim();
        let mut maps = Vec::with_capacity(self.num_segments);
        let mut gens = Vec::with_capacity(self.num_segments);
        for block in theta.chunks(d2) {
            let m = map_segment(block, &self.spec, self.scaling, want_dominant)?;
            let h = HermitianOperator::from_symmetrized(m.hamiltonian.clone());
            gens.push(Generator::new(&build_liouvillian(&self.spec, &h)?));
            maps.push(m);
        }
        Ok((maps, gens))
    }

    fn excited(&self, state: &[C64]) -> f64 {
        let d = self.spec.dim();
        1.0 - (0..self.spec.aux_dim).map(|j| state[j * d + j].re).sum::<f64>()
    }

    fn check_final(&self, state: &[C64]) -> Result<()> {
        let d = self.spec.dim();
        let tr: f64 = (0..d).map(|j| state[j * d + j].re).sum();
        if !tr.is_finite() || (tr - 1.0).abs() > crate::dynamics::TRACE_FAILURE_TOL {
            return Err(Error::IntegrationFailure { time: self.horizon, reason: format!("trace drifted to {tr}") });
        }
        Ok(())
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        let d = self.spec.dim();
        let (_, gens) = self.generators(theta, false)?;
        let dt = self.horizon / self.num_segments as f64;
        let n = step_count(dt, self.max_step);
        let h = dt / n as f64;
        let mut state = self.rho0.matrix().as_slice().to_vec();
        let mut rk = Rk4::new(d);
        for gen in &gens {
            for _ in 0..n {
                rk.step(gen, &mut state, h);
            }
        }
        self.check_final(&state)?;
        Ok(self.excited(&state))
    }

    /// Central differences with step `eps` along every coordinate.
    pub fn gradient_central(&self, theta: &[f64], eps: f64) -> Result<Vec<f64>> {
        self.check_len(theta)?;
        let mut x = theta.to_vec();
        let mut grad = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            x[i] = theta[i] + eps;
            let up = self.value(&x)?;
            x[i] = theta[i] - eps;
            let down = self.value(&x)?;
            x[i] = theta[i];
            grad[i] = (up - down) / (2.0 * eps);
        }
        Ok(grad)
    }

    /// Value and gradient from a forward pass and a backward (Heisenberg
    /// picture) pass.
    ///
    /// With `Λ(t)` the back-propagated ground projector,
    /// `∂J/∂H_k = i ∫_k [ρ(t), Λ(t)] dt` (Simpson's rule on the RK4 grid),
    /// which is then pulled back through the rescaling and the local
    /// projection.
    pub fn value_and_gradient_adjoint(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_len(theta)?;
        let d = self.spec.dim();
        let m = self.spec.aux_dim;
        let (maps, gens) = self.generators(theta, true)?;
        let k = self.num_segments;
        let dt = self.horizon / k as f64;
        let n = step_count(dt, self.max_step);
        let h = dt / n as f64;

        let mut rk = Rk4::new(d);
        let mut states: Vec<Vec<C64>> = Vec::with_capacity(k * n + 1);
        let mut state = self.rho0.matrix().as_slice().to_vec();
        states.push(state.clone());
        for gen in &gens {
            for _ in 0..n {
                rk.step(gen, &mut state, h);
                states.push(state.clone());
            }
        }
        self.check_final(&state)?;
        let value = self.excited(&state);

        let mut lam = vec![ZERO; d * d];
        for j in 0..m {
            lam[j * d + j] = C64::new(1.0, 0.0);
        }
        let mut commutator = vec![ZERO; d * d];
        let mut grad = Vec::with_capacity(theta.len());
        let mut seg_grads = vec![CMatrix::zeros(d, d); k];
        for seg in (0..k).rev() {
            // Simpson weights h/3 · (1, 4, 2, …, 4, 1) over nodes 0..=n.
            let mut integral = CMatrix::zeros(d, d);
            for s in (0..=n).rev() {
                let w = if s == 0 || s == n { 1.0 } else if s % 2 == 1 { 4.0 } else { 2.0 };
                let rho = &states[seg * n + s];
                rho_lambda_commutator(rho, &lam, &mut commutator, d);
                for (acc, c) in integral.as_mut_slice().iter_mut().zip(&commutator) {
                    *acc += c * w;
                }
                if s > 0 {
                    rk.step_adjoint(&gens[seg], &mut lam, h);
                }
            }
            // dP_g = tr(δH · (−i)[ρ, Λ]); J = 1 − P_g.
            seg_grads[seg] = integral * (I * (h / 3.0));
        }
        for (seg, x) in seg_grads.iter().enumerate() {
            let sm = &maps[seg];
            let ga = match &sm.radius_gradient {
                Some(v) => {
                    let scale = self.spec.g / sm.radius;
                    let xa = hs_inner(x, &sm.projected).re;
                    x * C64::new(scale, 0.0) - v * C64::new(scale / sm.radius * xa, 0.0)
                }
                None => x.clone(),
            };
            let ga = crate::linalg::symmetrize(&ga);
            let pulled = project_out_local(&ga, self.spec.target_dim(), m)?;
            grad.extend(block_gradient(&pulled));
        }
        Ok((value, grad))
    }

    pub fn value_and_gradient(&self, theta: &[f64], method: GradientMethod, eps: f64) -> Result<(f64, Vec<f64>)> {
        match method {
            GradientMethod::Adjoint => self.value_and_gradient_adjoint(theta),
            GradientMethod::Central => Ok((self.value(theta)?, self.gradient_central(theta, eps)?)),
        }
    }
}

/// `out = ρΛ − Λρ` for column-major `d×d` slices.
fn rho_lambda_commutator(rho: &[C64], lam: &[C64], out: &mut [C64], d: usize) {
    out.iter_mut().for_each(|z| *z = ZERO);
    for c in 0..d {
        for k in 0..d {
            let l_kc = lam[c * d + k];
            let r_kc = rho[c * d + k];
            for r in 0..d {
                out[c * d + r] += rho[k * d + r] * l_kc - lam[k * d + r] * r_kc;
            }
        }
    }
}

/// `1 − P_g(T)` for a parameter vector.
pub fn objective(theta: &[f64], spec: &SystemSpec, config: &OptimizationConfig) -> Result<f64> {
    CoolingObjective::new(spec, config)?.value(theta)
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub best_protocol: ControlProtocol,
    pub best_theta: Vec<f64>,
    /// `P_g(T)` of the best protocol, as seen by the objective.
    pub best_pg: f64,
    /// `P_g(T)` after each accepted BFGS step of the final stage, starting
    /// from its initial point.
    pub objective_history: Vec<f64>,
    /// Smoothed-objective `P_g(T)` during the warm-up stages.
    pub warmup_history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub seed: u64,
}

/// Uniform start in `[−s·g, s·g]` per parameter.
pub fn initial_theta(spec: &SystemSpec, config: &OptimizationConfig) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let half = config.init_scale * spec.g;
    (0..parameter_count(spec, config.num_segments)).map(|_| rng.gen_range(-half..half)).collect()
}

/// One BFGS run from the seeded random start.
pub fn optimize(spec: &SystemSpec, config: &OptimizationConfig) -> Result<OptimizationResult> {
    optimize_from(spec, config, &initial_theta(spec, config))
}

pub fn optimize_from(spec: &SystemSpec, config: &OptimizationConfig, theta0: &[f64]) -> Result<OptimizationResult> {
    spec.validate()?;
    config.validate()?;
    let mut obj = CoolingObjective::new(spec, config)?;
    obj.check_len(theta0)?;
    let k = config.num_segments;
    let mut run = Run { x: theta0.to_vec(), f: f64::NAN, history: Vec::new(), iterations: 0, evaluations: 0, stop: StopReason::MaxIterations };
    for &p in &config.smoothing {
        obj.scaling = Scaling::Schatten(p);
        let budget = config.smoothing_iterations.min(config.max_iterations - run.iterations);
        if budget == 0 {
            break;
        }
        run.descend(&obj, config, budget)?;
    }
    if !config.smoothing.is_empty() {
        run.x = saturate(&canonical_theta(&run.x, spec, k, obj.scaling)?, spec);
    }
    let warmup_history = std::mem::take(&mut run.history);
    obj.scaling = Scaling::SpectralRadius;
    let budget = config.max_iterations - run.iterations;
    if budget > 0 {
        run.descend(&obj, config, budget)?;
    } else {
        run.f = obj.value(&run.x)?;
        run.evaluations += 1;
        run.history.push(1.0 - run.f);
    }
    let best_protocol = parametrize(&run.x, spec, k, config.objective_time)?;
    Ok(OptimizationResult {
        best_protocol,
        best_pg: 1.0 - run.f,
        objective_history: run.history,
        warmup_history,
        converged: matches!(run.stop, StopReason::GradientTolerance | StopReason::ObjectiveStalled),
        iterations: run.iterations,
        evaluations: run.evaluations,
        stop: run.stop,
        best_theta: run.x,
        seed: config.seed,
    })
}

/// Accumulated state of one optimization across BFGS restarts.
struct Run {
    x: Vec<f64>,
    f: f64,
    /// `P_g` after each accepted step.
    history: Vec<f64>,
    iterations: usize,
    evaluations: usize,
    stop: StopReason,
}

impl Run {
    /// BFGS rounds of `restart_interval` iterations under `obj`'s scaling,
    /// re-canonicalizing the parameters between rounds.
    fn descend(&mut self, obj: &CoolingObjective, config: &OptimizationConfig, budget: usize) -> Result<()> {
        let spec = &obj.spec;
        let mut opts = BfgsOptions {
            max_iterations: 0,
            gradient_tol: config.convergence_tol,
            f_tol: config.objective_tol,
            stall_iterations: 10,
            initial_step: 0.1 * spec.g,
            max_resets: 20,
            max_step: config.max_step * spec.g,
        };
        let mut used = 0;
        let mut restarted = self.history.is_empty();
        loop {
            opts.max_iterations = config.restart_interval.min(budget - used);
            let report = bfgs::minimize(|x| obj.value_and_gradient(x, config.gradient, config.gradient_step), &self.x, &opts)?;
            let skip = usize::from(!restarted);
            restarted = false;
            self.history.extend(report.history.iter().skip(skip).map(|f| 1.0 - f));
            used += report.iterations;
            self.iterations += report.iterations;
            self.evaluations += report.evaluations;
            self.stop = report.stop;
            self.f = report.f;
            if report.stop != StopReason::MaxIterations || used >= budget || report.iterations == 0 {
                self.x = report.x;
                return Ok(());
            }
            // Shrink every block back onto the constraint set. The objective
            // is unchanged; the curvature estimate restarts at the new scale.
            let canonical = canonical_theta(&report.x, spec, obj.num_segments, obj.scaling)?;
            self.evaluations += 1;
            self.x = if obj.value(&canonical)? <= report.f { canonical } else { report.x };
        }
    }
}

/// Parameters that encode the segment Hamiltonians produced by `scaling`
/// directly: no local part, and the rescaling becomes the identity.
pub fn canonical_theta(theta: &[f64], spec: &SystemSpec, k: usize, scaling: Scaling) -> Result<Vec<f64>> {
    let d2 = spec.dim() * spec.dim();
    if theta.len() != k * d2 {
        return Err(Error::ParameterLength { expected: k * d2, found: theta.len() });
    }
    let mut out = Vec::with_capacity(theta.len());
    for block in theta.chunks(d2) {
        out.extend(block_from_hermitian(&map_segment(block, spec, scaling, false)?.hamiltonian));
    }
    Ok(out)
}

/// Scales every nonzero block of a canonical parameter vector so that its
/// spectral radius equals `g`.
fn saturate(theta: &[f64], spec: &SystemSpec) -> Vec<f64> {
    let d = spec.dim();
    theta
        .chunks(d * d)
        .flat_map(|block| {
            let r = dominant_eigenpair(&hermitian_from_block(block, d)).0.abs();
            let s = if r > 0.0 { spec.g / r } else { 1.0 };
            block.iter().map(move |x| x * s).collect::<Vec<_>>()
        })
        .collect()
}

/// Independent runs with seeds `seed, seed + 1, …`; all results, best first.
pub fn optimize_restarts(spec: &SystemSpec, config: &OptimizationConfig, restarts: usize) -> Result<Vec<OptimizationResult>> {
    let mut out = (0..restarts as u64)
        .map(|r| {
            let mut c = config.clone();
            c.seed = config.seed + r;
            optimize(spec, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.best_pg.total_cmp(&a.best_pg));
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjectureComparison {
    /// Best recorded `P_g` under the constant optimal interaction.
    pub eq1_best_pg: f64,
    pub eq1_best_time: f64,
    pub optimized_best_pg: f64,
    pub optimized_best_time: f64,
    /// `eq1_best_pg − optimized_best_pg`.
    pub delta_pg: f64,
    /// Hilbert–Schmidt distance of each optimized segment to the optimal
    /// interaction after auxiliary permutation and per-pair phase alignment.
    pub segment_distances: Vec<f64>,
    /// Whether the permutation search was exhaustive (`M ≤ 7`).
    pub exhaustive_alignment: bool,
}

/// Largest auxiliary dimension for which all `M!` relabelings are searched.
pub const MAX_ALIGNMENT_AUX: usize = 7;

pub fn compare_to_conjecture(result: &OptimizationResult, spec: &SystemSpec, sample_dt: f64) -> Result<ConjectureComparison> {
    compare_protocol(&result.best_protocol, spec, sample_dt)
}

/// As [`compare_to_conjecture`] for any protocol.
pub fn compare_protocol(protocol: &ControlProtocol, spec: &SystemSpec, sample_dt: f64) -> Result<ConjectureComparison> {
    let rho0 = initial_state(spec)?;
    let eq1 = ControlProtocol::constant(optimal_hamiltonian(spec), protocol.horizon, spec.g)?;
    let (eq1_time, eq1_min) = evolve(&rho0, &eq1, spec, sample_dt)?.min_excited();
    let (opt_time, opt_min) = evolve(&rho0, protocol, spec, sample_dt)?.min_excited();
    let exhaustive = spec.aux_dim <= MAX_ALIGNMENT_AUX;
    let segment_distances = protocol.segments.iter().map(|s| aligned_distance(s.hamiltonian.matrix(), spec)).collect();
    Ok(ConjectureComparison {
        eq1_best_pg: 1.0 - eq1_min,
        eq1_best_time: eq1_time,
        optimized_best_pg: 1.0 - opt_min,
        optimized_best_time: opt_time,
        delta_pg: opt_min - eq1_min,
        segment_distances,
        exhaustive_alignment: exhaustive,
    })
}

/// `min ‖P H P† − E_φ‖_HS` over auxiliary permutations `P` and pair phases `φ`.
///
/// For fixed `P` the optimal phases align each pair entry with `H`, giving
/// `‖H‖² + 2g²·#pairs − 4g Σ |(PHP†)_ab|`, so only the permutation needs
/// searching.
pub fn aligned_distance(h: &CMatrix, spec: &SystemSpec) -> f64 {
    let (n, m) = (spec.target_dim(), spec.aux_dim);
    let pairs = optimal_pairs(n, m);
    let norm2: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    let g = spec.g;
    let score = |perm: &[usize]| -> f64 {
        // (PHP†)_{(t,a),(u,b)} = H_{(t,π⁻¹a),(u,π⁻¹b)}; `perm` is π⁻¹.
        pairs
            .iter()
            .map(|&(ket, bra)| {
                let (t, a) = (ket / m, ket % m);
                let (u, b) = (bra / m, bra % m);
                h[(t * m + perm[a], u * m + perm[b])].norm()
            })
            .sum()
    };
    let mut best = score(&(0..m).collect::<Vec<_>>());
    if m <= MAX_ALIGNMENT_AUX {
        let mut perm: Vec<usize> = (0..m).collect();
        for_each_permutation(&mut perm, 0, &mut |p| best = best.max(score(p)));
    }
    let d2 = norm2 + 2.0 * g * g * pairs.len() as f64 - 4.0 * g * best;
    d2.max(0.0).sqrt()
}

fn for_each_permutation(items: &mut [usize], start: usize, f: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        f(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        for_each_permutation(items, start + 1, f);
        items.swap(start, i);
    }
}
