//! Bregmanized operator splitting for the L2 and L1 restoration models.
//!
//! With `z = [u; p]`, `w = [v; q]` and `B = [K, -I]`, each outer iteration runs
//!
//! ```text
//! u  <- argmin  lambda alpha R(u) + 1/(2 delta) ||u - v||^2      (split Bregman)
//! p  <- q / (1 + delta lambda)        (L2)   or  shrink(q, lambda delta)  (L1)
//! v  <- (delta K^T K + (delta + 1) I)^-1 ((delta + 1) u + delta K^T (p + f_k))
//! q  <- delta / (delta + 1) (p / delta - f_k + K v)
//! f_k <- f_k + f - (K u - p)
//! ```
//!
//! The `u` step rotates into saturation-value coefficients (or keeps RGB for
//! the per-channel baseline) and solves each coefficient channel with a few
//! split-Bregman sweeps: Gauss-Seidel on `(I - delta beta Lap) q = v~ +
//! delta beta div(b - d)`, a shrink of `grad q + b`, and a Bregman update of `b`.

use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::degradation::{filter_plane, BlurKernel};
use crate::error::{invalid, Error, Result};
use crate::fourier::Fft2;
use crate::graph::{build_channel_graphs, build_graph, Channel, NonlocalGraph, PatchParams};
use crate::image::{clamp, rgb_to_sv, sv_to_rgb, ColorImage, Plane, SvImage};
use crate::regularizer::{objective_with, Fidelity, Regularizer};
use crate::scalar::Scalar;

/// Soft threshold `sign(x) max(|x| - t, 0)`.
#[inline]
pub fn shrink<T: Scalar>(x: T, t: T) -> T {
    debug_assert!(t >= T::zero());
    let m = x.abs() - t;
    if m > T::zero() {
        m * x.signum()
    } else {
        T::zero()
    }
}

/// Checked variant of [`shrink`] rejecting negative thresholds.
pub fn try_shrink<T: Scalar>(x: T, t: T) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(invalid("threshold", format!("{t} must be nonnegative")));
    }
    Ok(shrink(x, t))
}

/// Closed-form `p` step of the L2 model: `q / (1 + delta lambda)`.
pub fn p_update_l2<T: Scalar>(q: &Plane<T>, delta: T, lambda: T) -> Plane<T> {
    let s = T::one() / (T::one() + delta * lambda);
    q.map(|v| v * s)
}

/// `p` step of the L1 model: `shrink(q, lambda delta)`.
pub fn p_update_l1<T: Scalar>(q: &Plane<T>, delta: T, lambda: T) -> Plane<T> {
    let t = lambda * delta;
    q.map(|v| shrink(v, t))
}

/// `||B^T B||` for `B = [K, -I]`, i.e. `max_omega |K^(omega)|^2 + 1` on a
/// periodic `height x width` grid.
pub fn estimate_spectral_norm<T: Scalar>(
    kernel: &BlurKernel<T>,
    height: usize,
    width: usize,
) -> Result<T> {
    let transfer = kernel.transfer(height, width)?;
    Ok(transfer
        .iter()
        .map(|k| k.norm_sqr())
        .fold(T::zero(), |a, b| a.max(b))
        + T::one())
}

/// Periodic `K`, `K^T` and the `w`-step solve, sharing one FFT plan.
pub struct BlurOperator<T: Scalar> {
    fft: Fft2<T>,
    transfer: Vec<Complex<T>>,
    identity: bool,
    height: usize,
    width: usize,
}

impl<T: Scalar> BlurOperator<T> {
    pub fn new(kernel: &BlurKernel<T>, height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            fft: Fft2::new(height, width),
            transfer: kernel.transfer(height, width)?,
            identity: kernel.is_identity(),
            height,
            width,
        })
    }

    fn wrap(&self, data: Vec<T>) -> Plane<T> {
        Plane::from_vec(self.height, self.width, data).expect("dimensions preserved")
    }

    pub fn apply(&self, x: &Plane<T>) -> Plane<T> {
        if self.identity {
            return x.clone();
        }
        self.wrap(filter_plane(&self.fft, x.as_slice(), &self.transfer, false))
    }

    pub fn apply_adjoint(&self, x: &Plane<T>) -> Plane<T> {
        if self.identity {
            return x.clone();
        }
        self.wrap(filter_plane(&self.fft, x.as_slice(), &self.transfer, true))
    }

    /// Solves `(delta K^T K + (delta + 1) I) v = rhs` exactly in frequency.
    fn solve_normal(&self, rhs: &Plane<T>, delta: T) -> Plane<T> {
        let one = T::one();
        if self.identity {
            let s = one / (delta + delta + one);
            return rhs.map(|v| v * s);
        }
        let mut spec = self.fft.forward_real(rhs.as_slice());
        for (s, k) in spec.iter_mut().zip(&self.transfer) {
            *s = *s / (delta * k.norm_sqr() + delta + one);
        }
        self.wrap(self.fft.inverse_real(spec))
    }
}

/// Closed-form `w` step for one channel; returns `(v, q)`.
pub fn w_update<T: Scalar>(
    u: &Plane<T>,
    p: &Plane<T>,
    f_breg: &Plane<T>,
    op: &BlurOperator<T>,
    delta: T,
) -> Result<(Plane<T>, Plane<T>)> {
    u.check_same_dims(p)?;
    u.check_same_dims(f_breg)?;
    if u.dims() != (op.height, op.width) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", op.height, op.width),
            got: format!("{}x{}", u.height(), u.width()),
        });
    }
    let one = T::one();
    let pf = p.zip_map(f_breg, |a, b| a + b);
    let kt_pf = op.apply_adjoint(&pf);
    let rhs = u.zip_map(&kt_pf, |a, b| (delta + one) * a + delta * b);
    let v = op.solve_normal(&rhs, delta);
    let kv = op.apply(&v);
    let s = delta / (delta + one);
    let mut q = Plane::zeros(u.height(), u.width());
    for (i, out) in q.as_mut_slice().iter_mut().enumerate() {
        *out = s * (p.as_slice()[i] / delta - f_breg.as_slice()[i] + kv.as_slice()[i]);
    }
    Ok((v, q))
}

/// Graphs a solve regularizes with.
#[derive(Clone, Copy, Debug)]
pub enum GraphSet<'g, T> {
    /// SVS-NLTV: `q1, q2` use `w_s`, `q3` uses `w_v` of one graph.
    SaturationValue(&'g NonlocalGraph<T>),
    /// NLTV baseline: RGB channel `c` uses graph `c`.
    PerChannel(&'g [NonlocalGraph<T>; 3]),
}

impl<'g, T: Scalar> GraphSet<'g, T> {
    pub fn regularizer(self, mu: T) -> Regularizer<'g, T> {
        match self {
            GraphSet::SaturationValue(graph) => Regularizer::SvsNltv { graph, mu },
            GraphSet::PerChannel(graphs) => Regularizer::Nltv { graphs },
        }
    }

    fn dims(self) -> (usize, usize) {
        match self {
            GraphSet::SaturationValue(g) => (g.height(), g.width()),
            GraphSet::PerChannel(gs) => (gs[0].height(), gs[0].width()),
        }
    }

    /// Graph, weight set and relative threshold factor of each coefficient channel.
    fn channels(self, mu: T) -> [(&'g NonlocalGraph<T>, Channel, T); 3] {
        match self {
            GraphSet::SaturationValue(g) => [
                (g, Channel::Saturation, T::one()),
                (g, Channel::Saturation, T::one()),
                (g, Channel::Value, mu),
            ],
            GraphSet::PerChannel(gs) => [
                (&gs[0], Channel::Value, T::one()),
                (&gs[1], Channel::Value, T::one()),
                (&gs[2], Channel::Value, T::one()),
            ],
        }
    }

    fn to_coefficients(self, img: &ColorImage<T>) -> [Plane<T>; 3] {
        match self {
            GraphSet::SaturationValue(_) => rgb_to_sv(img).into_planes(),
            GraphSet::PerChannel(_) => img.planes().clone(),
        }
    }

    fn from_coefficients(self, planes: [Plane<T>; 3]) -> ColorImage<T> {
        match self {
            GraphSet::SaturationValue(_) => {
                sv_to_rgb(&SvImage::from_planes(planes).expect("planes share dimensions"))
            }
            GraphSet::PerChannel(_) => ColorImage::from_planes(planes)
                .unwrap_or_else(|e| panic!("coefficient planes: {e}")),
        }
    }
}

/// Rebuild the graphs from the current iterate every `every` outer iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct Reweight {
    pub every: usize,
    pub patch: PatchParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub mu: f64,
    pub lambda: f64,
    pub delta: f64,
    pub beta: f64,
    pub outer_max: usize,
    pub inner_max: usize,
    pub gs_sweeps: usize,
    /// Stop once `||u_{k+1} - u_k|| / ||u_k|| <= tol`.
    pub tol: f64,
    pub clamp_each_iter: bool,
    pub clamp_output: bool,
    pub reweight: Option<Reweight>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            mu: 0.05,
            lambda: 1.0,
            delta: 0.49,
            beta: 8.0,
            outer_max: 500,
            inner_max: 4,
            gs_sweeps: 4,
            tol: 1e-6,
            clamp_each_iter: false,
            clamp_output: true,
            reweight: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("alpha", self.alpha), ("mu", self.mu)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and nonnegative")));
            }
        }
        let positive = [
            ("lambda", self.lambda),
            ("delta", self.delta),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and positive")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("{} must be positive", self.tol)));
        }
        for (name, v) in [
            ("outer_max", self.outer_max),
            ("inner_max", self.inner_max),
            ("gs_sweeps", self.gs_sweeps),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if let Some(r) = &self.reweight {
            if r.every == 0 {
                return Err(invalid("reweight_every", "must be at least 1"));
            }
            r.patch.validate()?;
        }
        Ok(())
    }
}

/// Per-channel split variables of the `u` step, living on graph edges.
#[derive(Clone, Debug)]
pub struct SplitVariables<T> {
    pub d: [Vec<T>; 3],
    pub b: [Vec<T>; 3],
    /// Last coefficient solution, used to warm-start Gauss-Seidel.
    pub q: Option<[Plane<T>; 3]>,
}

impl<T: Scalar> SplitVariables<T> {
    fn zeros(set: GraphSet<'_, T>) -> Self {
        let channels = set.channels(T::one());
        Self {
            d: channels.map(|(g, _, _)| vec![T::zero(); g.edge_count()]),
            b: channels.map(|(g, _, _)| vec![T::zero(); g.edge_count()]),
            q: None,
        }
    }

    pub fn for_graphs(set: GraphSet<'_, T>) -> Self {
        Self::zeros(set)
    }
}

/// One serial Gauss-Seidel sweep in raster order for
/// `(I - c/2 Lap) q = rhs`, where `c = 2 delta beta`.
pub fn gauss_seidel_sweep<T: Scalar>(
    graph: &NonlocalGraph<T>,
    channel: Channel,
    coupling: T,
    rhs: &[T],
    q: &mut [T],
) {
    let w = graph.weights(channel);
    for i in 0..graph.pixel_count() {
        let mut sum = T::zero();
        let mut total = T::zero();
        for e in graph.row(i) {
            sum = sum + w[e] * q[graph.target(e)];
            total = total + w[e];
        }
        q[i] = (rhs[i] + coupling * sum) / (T::one() + coupling * total);
    }
}

struct ChannelStep<'a, T> {
    graph: &'a NonlocalGraph<T>,
    channel: Channel,
    kappa: T,
}

fn solve_channel<T: Scalar>(
    step: &ChannelStep<'_, T>,
    v: &Plane<T>,
    q: &mut Plane<T>,
    d: &mut [T],
    b: &mut [T],
    delta_beta: T,
    beta: T,
    inner_max: usize,
    gs_sweeps: usize,
) {
    if step.kappa == T::zero() {
        q.as_mut_slice().copy_from_slice(v.as_slice());
        d.iter_mut().for_each(|x| *x = T::zero());
        b.iter_mut().for_each(|x| *x = T::zero());
        return;
    }
    let g = step.graph;
    let n = g.pixel_count();
    let coupling = delta_beta + delta_beta;
    let threshold = step.kappa / beta;
    let mut bd = vec![T::zero(); g.edge_count()];
    let mut div = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    let mut grad = vec![T::zero(); g.edge_count()];
    for _ in 0..inner_max {
        for e in 0..bd.len() {
            bd[e] = b[e] - d[e];
        }
        g.divergence_into(&bd, step.channel, &mut div);
        for i in 0..n {
            rhs[i] = v.as_slice()[i] + delta_beta * div[i];
        }
        for _ in 0..gs_sweeps {
            gauss_seidel_sweep(g, step.channel, coupling, &rhs, q.as_mut_slice());
        }
        g.gradient_into(q.as_slice(), step.channel, &mut grad);
        for e in 0..grad.len() {
            let de = shrink(grad[e] + b[e], threshold);
            b[e] = b[e] + grad[e] - de;
            d[e] = de;
        }
    }
}

/// Approximately solves `argmin lambda alpha R(u) + 1/(2 delta) ||u - v||^2`
/// with `inner_max` split-Bregman sweeps; `split` persists across calls.
pub fn u_subproblem<T: Scalar>(
    v: &ColorImage<T>,
    graphs: GraphSet<'_, T>,
    cfg: &SolverConfig,
    split: &mut SplitVariables<T>,
) -> Result<ColorImage<T>> {
    let (h, w) = graphs.dims();
    if v.dims() != (h, w) {
        return Err(Error::DimensionMismatch {
            expected: format!("{h}x{w} image"),
            got: format!("{}x{} image", v.height(), v.width()),
        });
    }
    let channels = graphs.channels(T::of(cfg.mu));
    for (k, (g, _, _)) in channels.iter().enumerate() {
        if split.d[k].len() != g.edge_count() || split.b[k].len() != g.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: format!("split variables over {} edges", g.edge_count()),
                got: format!("{} edges", split.d[k].len()),
            });
        }
    }
    if cfg.alpha == 0.0 {
        split.q = Some(graphs.to_coefficients(v));
        return Ok(v.clone());
    }
    let v_coef = graphs.to_coefficients(v);
    let mut q = split.q.take().unwrap_or_else(|| v_coef.clone());
    let lambda_alpha = T::of(cfg.lambda * cfg.alpha);
    let delta_beta = T::of(cfg.delta * cfg.beta);
    let beta = T::of(cfg.beta);

    let steps = channels.map(|(graph, channel, factor)| ChannelStep {
        graph,
        channel,
        kappa: lambda_alpha * factor,
    });
    let [d0, d1, d2] = &mut split.d;
    let [b0, b1, b2] = &mut split.b;
    let [q0, q1, q2] = &mut q;
    let mut work = [(0usize, q0, d0, b0), (1, q1, d1, b1), (2, q2, d2, b2)];
    work.par_iter_mut().for_each(|(k, qk, dk, bk)| {
        solve_channel(
            &steps[*k],
            &v_coef[*k],
            qk,
            dk,
            bk,
            delta_beta,
            beta,
            cfg.inner_max,
            cfg.gs_sweeps,
        )
    });
    let u = graphs.from_coefficients(q.clone());
    split.q = Some(q);
    Ok(u)
}

/// Full iterate set of one solve.
#[derive(Clone, Debug)]
pub struct SolverState<T> {
    pub u: ColorImage<T>,
    pub p: ColorImage<T>,
    pub v: ColorImage<T>,
    pub q_aux: ColorImage<T>,
    pub f_breg: ColorImage<T>,
    pub split: SplitVariables<T>,
    pub iter: usize,
    /// `(objective, relative change)` per outer iteration.
    pub history: Vec<(T, T)>,
}

#[derive(Clone, Debug)]
pub struct RestoreResult<T> {
    pub restored: ColorImage<T>,
    pub iterations: usize,
    pub final_rel_err: T,
    pub objective_trace: Vec<T>,
    pub rel_err_trace: Vec<T>,
}

/// Rejects `delta` outside `(0, 1 / ||B^T B||)`.
pub fn check_spectral_guard<T: Scalar>(
    kernel: &BlurKernel<T>,
    height: usize,
    width: usize,
    delta: f64,
) -> Result<()> {
    let norm = estimate_spectral_norm(kernel, height, width)?.to_f64_lossy();
    let bound = 1.0 / norm;
    if !(delta > 0.0 && delta < bound) {
        return Err(Error::SpectralGuard { delta, bound });
    }
    Ok(())
}

enum Graphs<'g, T> {
    Borrowed(GraphSet<'g, T>),
    Joint(NonlocalGraph<T>),
    PerChannel(Box<[NonlocalGraph<T>; 3]>),
}

impl<T: Scalar> Graphs<'_, T> {
    fn set(&self) -> GraphSet<'_, T> {
        match self {
            Graphs::Borrowed(s) => *s,
            Graphs::Joint(g) => GraphSet::SaturationValue(g),
            Graphs::PerChannel(gs) => GraphSet::PerChannel(gs),
        }
    }

    fn rebuilt(&self, u: &ColorImage<T>, patch: &PatchParams) -> Result<Graphs<'static, T>> {
        Ok(match self.set() {
            GraphSet::SaturationValue(_) => Graphs::Joint(build_graph(u, patch)?),
            GraphSet::PerChannel(_) => {
                Graphs::PerChannel(Box::new(build_channel_graphs(u, patch)?))
            }
        })
    }
}

fn rel_change<T: Scalar>(new: &ColorImage<T>, old: &ColorImage<T>) -> T {
    let diff = new.zip_map(old, |a, b| a - b).norm();
    let base = old.norm();
    if diff == T::zero() {
        T::zero()
    } else if base == T::zero() {
        T::infinity()
    } else {
        diff / base
    }
}

/// Restores `f` under `f = K u + noise` with the chosen regularizer and fidelity.
///
/// Starts from `u = v = f_k = f`, `p = q = 0` and zero split variables.
pub fn solve<T: Scalar>(
    f: &ColorImage<T>,
    kernel: &BlurKernel<T>,
    graphs: GraphSet<'_, T>,
    cfg: &SolverConfig,
    fidelity: Fidelity,
) -> Result<RestoreResult<T>> {
    cfg.validate()?;
    let (h, w) = f.dims();
    if graphs.dims() != (h, w) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} image", graphs.dims().0, graphs.dims().1),
            got: format!("{h}x{w} image"),
        });
    }
    check_spectral_guard(kernel, h, w, cfg.delta)?;

    let op = BlurOperator::new(kernel, h, w)?;
    let delta = T::of(cfg.delta);
    let lambda = T::of(cfg.lambda);
    let alpha = T::of(cfg.alpha);
    let mu = T::of(cfg.mu);
    let zero_img = ColorImage::zeros(h, w);
    let mut current = Graphs::Borrowed(graphs);
    let mut state = SolverState {
        u: f.clone(),
        p: zero_img.clone(),
        v: f.clone(),
        q_aux: zero_img,
        f_breg: f.clone(),
        split: SplitVariables::zeros(graphs),
        iter: 0,
        history: Vec::new(),
    };

    let mut rel = T::infinity();
    while state.iter < cfg.outer_max {
        if let Some(rw) = &cfg.reweight {
            if state.iter > 0 && state.iter % rw.every == 0 {
                current = current.rebuilt(&state.u, &rw.patch)?;
                let q = state.split.q.take();
                state.split = SplitVariables::zeros(current.set());
                state.split.q = q;
            }
        }
        let set = current.set();
        state.iter += 1;
        let k = state.iter;

        let mut u_next = u_subproblem(&state.v, set, cfg, &mut state.split)?;
        if cfg.clamp_each_iter {
            u_next = clamp(&u_next, T::zero(), T::one())?;
        }

        let mut p_planes = Vec::with_capacity(3);
        let mut v_planes = Vec::with_capacity(3);
        let mut q_planes = Vec::with_capacity(3);
        let mut f_planes = Vec::with_capacity(3);
        for c in 0..3 {
            let q_prev = &state.q_aux.planes()[c];
            let p = match fidelity {
                Fidelity::L2 => p_update_l2(q_prev, delta, lambda),
                Fidelity::L1 => p_update_l1(q_prev, delta, lambda),
            };
            let fk = &state.f_breg.planes()[c];
            let (v, q) = w_update(&u_next.planes()[c], &p, fk, &op, delta)?;
            let ku = op.apply(&u_next.planes()[c]);
            let f0 = f.planes()[c].as_slice();
            let mut f_next = fk.clone();
            for (i, out) in f_next.as_mut_slice().iter_mut().enumerate() {
                *out = *out + f0[i] - (ku.as_slice()[i] - p.as_slice()[i]);
            }
            p_planes.push(p);
            v_planes.push(v);
            q_planes.push(q);
            f_planes.push(f_next);
        }
        let to_img = |v: Vec<Plane<T>>| -> Result<ColorImage<T>> {
            let arr: [Plane<T>; 3] = v.try_into().expect("three planes");
            ColorImage::from_planes(arr).map_err(|_| Error::Diverged { iteration: k })
        };
        if !u_next.is_finite() {
            return Err(Error::Diverged { iteration: k });
        }
        state.p = to_img(p_planes)?;
        state.v = to_img(v_planes)?;
        state.q_aux = to_img(q_planes)?;
        state.f_breg = to_img(f_planes)?;

        rel = rel_change(&u_next, &state.u);
        state.u = u_next;
        let obj = objective_with(&state.u, f, kernel, &set.regularizer(mu), alpha, fidelity)?;
        if !obj.is_finite() {
            return Err(Error::Diverged { iteration: k });
        }
        state.history.push((obj, rel));
        if rel <= T::of(cfg.tol) {
            break;
        }
    }

    let restored = if cfg.clamp_output {
        clamp(&state.u, T::zero(), T::one())?
    } else {
        state.u.clone()
    };
    Ok(RestoreResult {
        restored,
        iterations: state.iter,
        final_rel_err: rel,
        objective_trace: state.history.iter().map(|h| h.0).collect(),
        rel_err_trace: state.history.iter().map(|h| h.1).collect(),
    })
}
