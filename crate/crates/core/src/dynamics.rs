//! Master-equation generator and time propagation.
//!
//! The generator is
//! `ρ̇ = −i[H, ρ] − γ(1+n̄) D(σ)ρ − γn̄ D(σ†)ρ − κ D(σ_aux)ρ` with
//! `D(c)ρ = (c†cρ + ρc†c)/2 − cρc†` and `ħ = 1`.
//!
//! Propagation uses fixed-step classical RK4. Step boundaries always land on
//! segment boundaries and sample times, so recorded populations are never
//! interpolated.

use crate::error::{Error, Result};
use crate::linalg::{hs_norm, kron, CMatrix, C64, I, ZERO};
use crate::operators::{embed_aux, embed_target, lowering_operator, DensityMatrix, HermitianOperator, SystemKind, SystemSpec};
use crate::protocol::ControlProtocol;

/// A jump operator with its rate; contributes `−rate · D(jump)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipatorChannel {
    pub jump_operator: CMatrix,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    pub hamiltonian: HermitianOperator,
    pub channels: Vec<DissipatorChannel>,
}

/// `D(c)ρ = (c†cρ + ρc†c)/2 − cρc†`.
pub fn dissipator_apply(c: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    if c.shape() != rho.shape() || !c.is_square() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), found: c.nrows() });
    }
    let cdc = c.adjoint() * c;
    Ok((&cdc * rho + rho * &cdc) * C64::new(0.5, 0.0) - c * rho * c.adjoint())
}

pub fn build_liouvillian(spec: &SystemSpec, h: &HermitianOperator) -> Result<Liouvillian> {
    let (n, m) = (spec.target_dim(), spec.aux_dim);
    if h.dim() != n * m {
        return Err(Error::DimensionMismatch { expected: n * m, found: h.dim() });
    }
    let mut channels = Vec::new();
    if spec.gamma > 0.0 {
        let sigma = embed_target(&lowering_operator(spec.target), m)?;
        channels.push(DissipatorChannel { jump_operator: sigma.clone(), rate: spec.gamma * (1.0 + spec.nbar) });
        if spec.nbar > 0.0 {
            channels.push(DissipatorChannel { jump_operator: sigma.adjoint(), rate: spec.gamma * spec.nbar });
        }
    }
    if spec.kappa > 0.0 {
        let aux = embed_aux(&lowering_operator(SystemKind::Oscillator { levels: m }), n)?;
        channels.push(DissipatorChannel { jump_operator: aux, rate: spec.kappa });
    }
    Ok(Liouvillian { hamiltonian: h.clone(), channels })
}

impl Liouvillian {
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    /// `L[ρ]` by dense matrix products.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        let h = self.hamiltonian.matrix();
        if rho.shape() != h.shape() {
            return Err(Error::DimensionMismatch { expected: h.nrows(), found: rho.nrows() });
        }
        let mut out = (h * rho - rho * h) * (-I);
        for ch in &self.channels {
            out -= dissipator_apply(&ch.jump_operator, rho)? * C64::new(ch.rate, 0.0);
        }
        Ok(out)
    }

    /// Matrix of `L` acting on column-stacked `vec(ρ)`, using
    /// `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.
    pub fn superoperator(&self) -> CMatrix {
        let d = self.dim();
        let id = CMatrix::identity(d, d);
        let h = self.hamiltonian.matrix();
        let mut sup = (kron(&id, h) - kron(&h.transpose(), &id)) * (-I);
        for ch in &self.channels {
            let c = &ch.jump_operator;
            let cdc = c.adjoint() * c;
            let r = C64::new(ch.rate, 0.0);
            sup += (kron(&c.conjugate(), c) - (kron(&id, &cdc) + kron(&cdc.transpose(), &id)) * C64::new(0.5, 0.0)) * r;
        }
        sup
    }
}

/// Exact propagation `exp(L t) ρ` through the superoperator exponential.
///
/// Cost grows as `dim⁶`; intended as a reference for small systems.
pub fn propagate_exact(l: &Liouvillian, rho: &DensityMatrix, t: f64) -> Result<CMatrix> {
    let d = l.dim();
    if rho.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho.dim() });
    }
    let prop = crate::linalg::expm(&(l.superoperator() * C64::new(t, 0.0)));
    let v = prop * crate::linalg::vectorize(rho.matrix());
    Ok(crate::linalg::unvectorize(&v, d))
}

/// `Σ_j ⟨0, j|ρ|0, j⟩`.
pub fn ground_population(rho: &DensityMatrix, target_dim: usize, aux_dim: usize) -> Result<f64> {
    let d = target_dim * aux_dim;
    if rho.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho.dim() });
    }
    Ok((0..aux_dim).map(|j| rho.matrix()[(j, j)].re).sum())
}

/// Default RK4 step: `min(1e-3/g, 1e-2/max(γ(1+n̄), κ, g))`.
pub fn default_step(spec: &SystemSpec) -> f64 {
    let fastest = (spec.gamma * (1.0 + spec.nbar)).max(spec.kappa).max(spec.g);
    (1e-3 / spec.g).min(1e-2 / fastest)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub ground_pop: Vec<f64>,
    /// States at the requested checkpoint times.
    pub checkpoints: Vec<(f64, DensityMatrix)>,
    pub final_state: DensityMatrix,
}

impl Trajectory {
    /// Smallest recorded `1 − P_g` and the time it occurs (earliest on ties).
    pub fn min_excited(&self) -> (f64, f64) {
        let mut best = (self.times[0], 1.0 - self.ground_pop[0]);
        for (t, p) in self.times.iter().zip(&self.ground_pop) {
            if 1.0 - p < best.1 {
                best = (*t, 1.0 - p);
            }
        }
        best
    }

    pub fn final_excited(&self) -> f64 {
        1.0 - self.ground_pop.last().copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub sample_dt: f64,
    /// Largest RK4 step; `None` uses [`default_step`].
    pub max_step: Option<f64>,
    /// Extra times at which the full state is stored.
    pub checkpoints: Vec<f64>,
    /// Diagonalize at every sample to check positivity.
    pub check_positivity: bool,
}

impl EvolveOptions {
    pub fn new(sample_dt: f64) -> Self {
        EvolveOptions { sample_dt, max_step: None, checkpoints: Vec::new(), check_positivity: true }
    }
}

pub const TRACE_FAILURE_TOL: f64 = 1e-8;
pub const POSITIVITY_FAILURE_TOL: f64 = 1e-8;

pub fn evolve(rho0: &DensityMatrix, protocol: &ControlProtocol, spec: &SystemSpec, sample_dt: f64) -> Result<Trajectory> {
    evolve_with(rho0, protocol, spec, &EvolveOptions::new(sample_dt))
}

pub fn evolve_with(
    rho0: &DensityMatrix,
    protocol: &ControlProtocol,
    spec: &SystemSpec,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let (n, m) = (spec.target_dim(), spec.aux_dim);
    let d = n * m;
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.dim() });
    }
    if protocol.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: protocol.dim() });
    }
    if !(opts.sample_dt.is_finite() && opts.sample_dt > 0.0) {
        return Err(Error::Domain(format!("sample_dt must be positive, got {}", opts.sample_dt)));
    }
    let max_step = opts.max_step.unwrap_or_else(|| default_step(spec));
    if !(max_step.is_finite() && max_step > 0.0) {
        return Err(Error::Domain(format!("integration step must be positive, got {max_step}")));
    }

    let horizon = protocol.horizon;
    let eps = 1e-12 * horizon.max(1.0);
    let mut samples: Vec<f64> = (0..)
        .map(|k| k as f64 * opts.sample_dt)
        .take_while(|t| *t <= horizon + eps)
        .map(|t| t.min(horizon))
        .collect();
    if horizon - samples.last().copied().unwrap_or(0.0) > eps {
        samples.push(horizon);
    }
    let mut checkpoints: Vec<f64> = opts.checkpoints.iter().copied().filter(|t| *t >= 0.0 && *t <= horizon + eps).collect();
    checkpoints.sort_by(f64::total_cmp);

    let mut state = rho0.matrix().as_slice().to_vec();
    let mut rk = Rk4::new(d);
    let mut traj = Trajectory {
        times: Vec::with_capacity(samples.len()),
        ground_pop: Vec::with_capacity(samples.len()),
        checkpoints: Vec::new(),
        final_state: rho0.clone(),
    };
    let mut next_sample = 0;
    let mut next_check = 0;
    let record = |t: f64, state: &[C64], next_sample: &mut usize, next_check: &mut usize, traj: &mut Trajectory| -> Result<()> {
        let mut hit = false;
        while *next_sample < samples.len() && samples[*next_sample] <= t + eps {
            *next_sample += 1;
            hit = true;
        }
        let mut checkpoint = false;
        while *next_check < checkpoints.len() && checkpoints[*next_check] <= t + eps {
            *next_check += 1;
            checkpoint = true;
        }
        if !hit && !checkpoint {
            return Ok(());
        }
        let rho = check_state(state, d, t, opts.check_positivity)?;
        if hit {
            let pg = ground_pop_flat(state, d, m);
            traj.times.push(t);
            traj.ground_pop.push(pg);
        }
        if checkpoint {
            traj.checkpoints.push((t, rho));
        }
        Ok(())
    };

    record(0.0, &state, &mut next_sample, &mut next_check, &mut traj)?;
    let mut t0 = 0.0;
    for seg in &protocol.segments {
        if seg.duration <= 0.0 {
            continue;
        }
        let t1 = t0 + seg.duration;
        let gen = Generator::new(&build_liouvillian(spec, &seg.hamiltonian)?);
        let mut events: Vec<f64> = samples[next_sample..]
            .iter()
            .chain(&checkpoints[next_check..])
            .copied()
            .filter(|t| *t > t0 + eps && *t < t1 - eps)
            .collect();
        events.sort_by(f64::total_cmp);
        events.push(t1);
        let mut a = t0;
        for b in events {
            if b - a <= eps {
                continue;
            }
            let steps = ((b - a) / max_step).ceil().max(1.0) as usize;
            let h = (b - a) / steps as f64;
            for _ in 0..steps {
                rk.step(&gen, &mut state, h);
            }
            record(b, &state, &mut next_sample, &mut next_check, &mut traj)?;
            a = b;
        }
        t0 = t1;
    }
    // Samples that fall after a float-rounded horizon.
    if next_sample < samples.len() {
        record(horizon + eps, &state, &mut next_sample, &mut next_check, &mut traj)?;
    }
    traj.final_state = check_state(&state, d, horizon, opts.check_positivity)?;
    Ok(traj)
}

fn ground_pop_flat(state: &[C64], d: usize, aux_dim: usize) -> f64 {
    (0..aux_dim).map(|j| state[j * d + j].re).sum()
}

fn check_state(state: &[C64], d: usize, t: f64, positivity: bool) -> Result<DensityMatrix> {
    if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::IntegrationFailure { time: t, reason: "non-finite state".into() });
    }
    let rho = DensityMatrix::from_matrix_unchecked(CMatrix::from_column_slice(d, d, state));
    let tr = rho.trace();
    if (tr - 1.0).abs() > TRACE_FAILURE_TOL {
        return Err(Error::IntegrationFailure { time: t, reason: format!("trace drifted to {tr}") });
    }
    if positivity {
        let min = rho.min_eigenvalue();
        if min < -POSITIVITY_FAILURE_TOL {
            return Err(Error::IntegrationFailure { time: t, reason: format!("negative eigenvalue {min:e}") });
        }
    }
    Ok(rho)
}

/// Sparse jump operator stored as `(row, col, value)` triplets.
#[derive(Debug, Clone)]
struct SparseJump {
    rate: f64,
    entries: Vec<(usize, usize, C64)>,
}

/// Column-major kernel for a fixed Liouvillian.
///
/// Uses the non-Hermitian `H_eff = H − (i/2) Σ r c†c`, so that
/// `L[ρ] = X + X† + Σ r cρc†` with `X = −i H_eff ρ`.
#[derive(Debug, Clone)]
pub(crate) struct Generator {
    d: usize,
    heff: Vec<C64>,
    heff_adj: Vec<C64>,
    jumps: Vec<SparseJump>,
}

impl Generator {
    pub(crate) fn new(l: &Liouvillian) -> Self {
        let d = l.dim();
        let mut heff = l.hamiltonian.matrix().clone();
        let mut jumps = Vec::new();
        for ch in &l.channels {
            let c = &ch.jump_operator;
            heff -= (c.adjoint() * c) * C64::new(0.0, 0.5 * ch.rate);
            let mut entries = Vec::new();
            for col in 0..d {
                for row in 0..d {
                    let v = c[(row, col)];
                    if v != ZERO {
                        entries.push((row, col, v));
                    }
                }
            }
            jumps.push(SparseJump { rate: ch.rate, entries });
        }
        let heff_adj = heff.adjoint().as_slice().to_vec();
        Generator { d, heff: heff.as_slice().to_vec(), heff_adj, jumps }
    }

    /// `out = L[rho]`.
    pub(crate) fn apply(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        matmul(&self.heff, rho, scratch, self.d, -I);
        hermitian_part(scratch, out, self.d);
        for j in &self.jumps {
            for &(a, i, v) in &j.entries {
                let vr = v * j.rate;
                for &(b, k, w) in &j.entries {
                    out[b * self.d + a] += vr * rho[k * self.d + i] * w.conj();
                }
            }
        }
    }

    /// `out = L†[lam]`, the Heisenberg-picture generator.
    pub(crate) fn apply_adjoint(&self, lam: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        matmul(&self.heff_adj, lam, scratch, self.d, I);
        hermitian_part(scratch, out, self.d);
        for j in &self.jumps {
            for &(a, i, v) in &j.entries {
                let vr = v.conj() * j.rate;
                for &(b, k, w) in &j.entries {
                    out[k * self.d + i] += vr * lam[b * self.d + a] * w;
                }
            }
        }
    }
}

/// `out = s · A B` for column-major `d×d` matrices.
fn matmul(a: &[C64], b: &[C64], out: &mut [C64], d: usize, s: C64) {
    out.iter_mut().for_each(|z| *z = ZERO);
    for c in 0..d {
        let oc = &mut out[c * d..(c + 1) * d];
        for k in 0..d {
            let bkc = b[c * d + k] * s;
            if bkc == ZERO {
                continue;
            }
            let ak = &a[k * d..(k + 1) * d];
            for (o, x) in oc.iter_mut().zip(ak) {
                *o += x * bkc;
            }
        }
    }
}

/// `out = X + X†`.
fn hermitian_part(x: &[C64], out: &mut [C64], d: usize) {
    for c in 0..d {
        for r in 0..d {
            out[c * d + r] = x[c * d + r] + x[r * d + c].conj();
        }
    }
}

fn symmetrize_in_place(m: &mut [C64], d: usize) {
    for c in 0..d {
        m[c * d + c].im = 0.0;
        for r in (c + 1)..d {
            let avg = (m[c * d + r] + m[r * d + c].conj()) * 0.5;
            m[c * d + r] = avg;
            m[r * d + c] = avg.conj();
        }
    }
}

/// Scratch buffers for classical RK4.
#[derive(Debug, Clone)]
pub(crate) struct Rk4 {
    d: usize,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
    scratch: Vec<C64>,
}

impl Rk4 {
    pub(crate) fn new(d: usize) -> Self {
        let z = vec![ZERO; d * d];
        Rk4 { d, k: [z.clone(), z.clone(), z.clone(), z.clone()], tmp: z.clone(), scratch: z }
    }

    /// One step of `ẋ = L[x]`, or of `ẋ = L†[x]` when `adjoint` is set.
    fn step_impl(&mut self, gen: &Generator, x: &mut [C64], h: f64, adjoint: bool) {
        let f = |gen: &Generator, inp: &[C64], out: &mut [C64], scratch: &mut [C64]| {
            if adjoint {
                gen.apply_adjoint(inp, out, scratch)
            } else {
                gen.apply(inp, out, scratch)
            }
        };
        let Rk4 { d, k, tmp, scratch } = self;
        let [k1, k2, k3, k4] = k;
        f(gen, x, k1, scratch);
        for ((t, xi), ki) in tmp.iter_mut().zip(x.iter()).zip(k1.iter()) {
            *t = xi + ki * (0.5 * h);
        }
        f(gen, tmp, k2, scratch);
        for ((t, xi), ki) in tmp.iter_mut().zip(x.iter()).zip(k2.iter()) {
            *t = xi + ki * (0.5 * h);
        }
        f(gen, tmp, k3, scratch);
        for ((t, xi), ki) in tmp.iter_mut().zip(x.iter()).zip(k3.iter()) {
            *t = xi + ki * h;
        }
        f(gen, tmp, k4, scratch);
        let w = h / 6.0;
        for i in 0..x.len() {
            x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
        }
        symmetrize_in_place(x, *d);
    }

    pub(crate) fn step(&mut self, gen: &Generator, rho: &mut [C64], h: f64) {
        self.step_impl(gen, rho, h, false)
    }

    pub(crate) fn step_adjoint(&mut self, gen: &Generator, lam: &mut [C64], h: f64) {
        self.step_impl(gen, lam, h, true)
    }
}

/// Largest entry of `‖L[ρ]‖` over a state, handy for fixed-point checks.
pub fn generator_residual(l: &Liouvillian, rho: &DensityMatrix) -> Result<f64> {
    Ok(hs_norm(&l.apply(rho.matrix())?))
}
