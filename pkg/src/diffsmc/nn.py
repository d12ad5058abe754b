"""Feed-forward network stack for the learned guidance potential.

Two small MLPs share a flat float64 parameter vector:

* a scalar "smoothing" net ``r(t)`` mapping a sinusoidal time embedding
  through ``layers`` hidden layers to a scalar, and
* a vector net ``N(t, x)`` that encodes the time embedding with a
  2-layer MLP, concatenates the encoding with the state ``x`` and maps
  the result through ``layers`` hidden layers to a vector in R^d.

All reverse-mode machinery is written for this fixed topology: plain
value backprop (gradients of scalar outputs with respect to parameters
and ``x``), input-tangent propagation (Jacobian-vector products in
``x``), and the forward-over-reverse sweep needed to differentiate
functions of the input gradient with respect to the parameters.  GeLU
is evaluated in its exact erf form so the second derivatives used by
the forward-over-reverse sweep are exact.

Everything is vectorized over a batch: ``t`` has shape ``(B,)`` and
``x`` shape ``(B, d)``.
"""

from dataclasses import dataclass, replace
import struct

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class EvaluationError(ValueError):
    """Non-finite inputs fed to the network."""


def time_embed(t: np.ndarray, dim: int = 128) -> np.ndarray:
    """Sinusoidal embedding of scalar times in [0, 1].

    Frequencies are geometric from 1 to 1e4 over ``dim / 2`` channels;
    the embedding is ``[sin(w_j t), cos(w_j t)]`` concatenated, so its
    norm is exactly ``sqrt(dim / 2)``.
    """
    if dim % 2 != 0:
        raise ValueError("embedding dimension must be even")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(1e4), half))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def gelu(z):
    return 0.5 * z * (1.0 + erf(z * _INV_SQRT2))


def gelu_prime(z):
    phi = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return 0.5 * (1.0 + erf(z * _INV_SQRT2)) + z * phi


def gelu_second(z):
    phi = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return phi * (2.0 - z * z)


@dataclass(frozen=True)
class NetConfig:
    dim: int
    embed_dim: int = 128
    hidden: int = 64
    layers: int = 3


class _Layout:
    """Slice bookkeeping for the flat parameter vector.

    Layer weights are stored row-major as ``(n_out, n_in)`` blocks
    followed by the bias, in network order r, encoder, trunk.
    """

    def __init__(self, cfg: NetConfig):
        e, h, d, L = cfg.embed_dim, cfg.hidden, cfg.dim, cfg.layers
        self.r_sizes = [e] + [h] * L + [1]
        self.enc_sizes = [e, h, h]
        self.main_sizes = [h + d] + [h] * L + [d]
        self.slices = {}
        off = 0
        for net, sizes in (
            ("r", self.r_sizes),
            ("enc", self.enc_sizes),
            ("main", self.main_sizes),
        ):
            per_net = []
            for n_in, n_out in zip(sizes[:-1], sizes[1:]):
                w = slice(off, off + n_out * n_in)
                off += n_out * n_in
                b = slice(off, off + n_out)
                off += n_out
                per_net.append((w, b, n_out, n_in))
            self.slices[net] = per_net
        self.n_params = off


_LAYOUTS: dict = {}


def _layout_cache(cfg: NetConfig) -> _Layout:
    if cfg not in _LAYOUTS:
        _LAYOUTS[cfg] = _Layout(cfg)
    return _LAYOUTS[cfg]


def n_params(cfg: NetConfig) -> int:
    return _layout_cache(cfg).n_params


@dataclass(frozen=True)
class NetworkState:
    """Flat parameters plus configuration for the two potential networks."""

    config: NetConfig
    theta: np.ndarray

    @property
    def layout(self) -> _Layout:
        return _layout_cache(self.config)

    def with_theta(self, theta: np.ndarray) -> "NetworkState":
        return replace(self, theta=np.asarray(theta, dtype=np.float64))


def init_network(cfg: NetConfig, rng: np.random.Generator) -> NetworkState:
    """He-style fan-in init with zeroed final layers.

    Zeroing the output layers of both nets makes the learned potential
    coincide with the shrunk-argument approximation at initialization,
    so training starts from that baseline.
    """
    layout = _layout_cache(cfg)
    theta = np.zeros(layout.n_params)
    for net in ("r", "enc", "main"):
        layers = layout.slices[net]
        for i, (w, b, n_out, n_in) in enumerate(layers):
            final = net in ("r", "main") and i == len(layers) - 1
            if not final:
                theta[w] = rng.standard_normal(n_out * n_in) * np.sqrt(2.0 / n_in)
    return NetworkState(config=cfg, theta=theta)


def _weights(theta, sl):
    w, b, n_out, n_in = sl
    return theta[w].reshape(n_out, n_in), theta[b]


def _mlp_forward(theta, layers, inp):
    """Returns the final pre-activation ``(B, n_out)`` and a cache of
    per-layer ``(input, pre-activation)`` pairs."""
    a = inp
    cache = []
    last = len(layers) - 1
    for i, sl in enumerate(layers):
        W, b = _weights(theta, sl)
        z = a @ W.T + b
        cache.append((a, z))
        a = z if i == last else gelu(z)
    return a, cache


def _mlp_backward(theta, layers, cache, zbar_out, grad=None, want_input_grad=False):
    """First-order reverse sweep from the final pre-activation adjoint.

    Accumulates batch-summed parameter gradients into the flat array
    ``grad`` when given; returns the input adjoint when requested.
    """
    zbar = zbar_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = _weights(theta, layers[i])
        a_in, _ = cache[i]
        if grad is not None:
            w, b, _, _ = layers[i]
            grad[w] += (zbar.T @ a_in).ravel()
            grad[b] += zbar.sum(axis=0)
        if i == 0:
            return zbar @ W if want_input_grad else None
        abar = zbar @ W
        _, z_prev = cache[i - 1]
        zbar = abar * gelu_prime(z_prev)
    return None


def _mlp_jvp(theta, layers, cache, t_in):
    """Input-tangent propagation; returns the output tangent and a cache
    of per-layer ``(input tangent, pre-activation tangent)`` pairs."""
    ta = t_in
    tcache = []
    last = len(layers) - 1
    for i, sl in enumerate(layers):
        W, _ = _weights(theta, sl)
        tz = ta @ W.T
        tcache.append((ta, tz))
        if i == last:
            ta = tz
        else:
            _, z = cache[i]
            ta = tz * gelu_prime(z)
    return ta, tcache


def _collect_zbars(theta, layers, cache, zbar_out):
    """Per-layer pre-activation adjoints of a first-order sweep."""
    zbars = [None] * len(layers)
    zbar = zbar_out
    for i in range(len(layers) - 1, -1, -1):
        zbars[i] = zbar
        if i == 0:
            break
        W, _ = _weights(theta, layers[i])
        abar = zbar @ W
        _, z_prev = cache[i - 1]
        zbar = abar * gelu_prime(z_prev)
    return zbars


def _collect_zbars_fwdrev(theta, layers, cache, tcache, zbar_out, tzbar_out):
    """Per-layer adjoint pairs of the forward-over-reverse sweep.

    Differentiates ``sum_b <zbar_out_b, z_L_b> + <tzbar_out_b, tz_L_b>``
    where ``tz_L`` is the input-tangent output of :func:`_mlp_jvp`.  The
    activation rule couples the two strands: the value adjoint picks up
    a second-derivative term from the tangent path.
    """
    n = len(layers)
    zbars, tzbars = [None] * n, [None] * n
    zbar, tzbar = zbar_out, tzbar_out
    for i in range(n - 1, -1, -1):
        zbars[i], tzbars[i] = zbar, tzbar
        if i == 0:
            break
        W, _ = _weights(theta, layers[i])
        abar = zbar @ W
        tabar = tzbar @ W
        _, z_prev = cache[i - 1]
        _, tz_prev = tcache[i - 1]
        g1 = gelu_prime(z_prev)
        zbar = abar * g1 + tabar * tz_prev * gelu_second(z_prev)
        tzbar = tabar * g1
    return zbars, tzbars


def _accumulate_grads(layers, cache, zbars, grad, tcache=None, tzbars=None):
    """Write batch-summed parameter gradients from collected adjoints."""
    for i, (w, b, _, _) in enumerate(layers):
        a_in, _ = cache[i]
        zb = zbars[i]
        grad[w] += (zb.T @ a_in).ravel()
        grad[b] += zb.sum(axis=0)
        if tzbars is not None:
            ta_in, _ = tcache[i]
            grad[w] += (tzbars[i].T @ ta_in).ravel()


def _per_sample_sq_norm(layers, cache, zbars, tcache=None, tzbars=None):
    """Per-sample squared parameter-gradient norms for one MLP.

    A per-sample weight gradient is the outer product of the layer
    adjoint with the layer input (plus the tangent pair in the
    forward-over-reverse case), so its squared Frobenius norm reduces to
    inner products of the factors; no per-sample matrices are formed.
    """
    total = np.zeros(zbars[-1].shape[0])
    for i, _ in enumerate(layers):
        a_in, _ = cache[i]
        zb = zbars[i]
        zb_sq = np.sum(zb**2, axis=1)
        total += zb_sq * np.sum(a_in**2, axis=1) + zb_sq
        if tzbars is not None:
            ta_in, _ = tcache[i]
            tzb = tzbars[i]
            total += 2.0 * np.sum(zb * tzb, axis=1) * np.sum(a_in * ta_in, axis=1)
            total += np.sum(tzb**2, axis=1) * np.sum(ta_in**2, axis=1)
    return total


class PotentialNet:
    """Evaluation and differentiation helpers bound to a parameter state.

    The composite potential built on top of these pieces is
    ``rho * <N(t, x), x> + (1 - rho) * G0`` with ``rho = r(t) - r(0)``
    and ``G0`` an externally supplied baseline; the methods here provide
    every derivative of the network-dependent parts that the potential,
    the sampler and the losses need.
    """

    def __init__(self, state: NetworkState):
        self.state = state
        self.layout = state.layout
        self.cfg = state.config

    def _embed(self, t):
        return time_embed(t, self.cfg.embed_dim)

    def forward(self, t, x):
        """Scalar ``r(t)``, scalar ``r(0)`` and vector field ``N(t, x)``."""
        r, r0, N, _ = self.forward_cached(t, x)
        return r, r0, N

    def forward_cached(self, t, x):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise EvaluationError("non-finite network input")
        theta = self.state.theta
        lay = self.layout
        emb = self._embed(t)
        r_out, r_cache = _mlp_forward(theta, lay.slices["r"], emb)
        r0_out, r0_cache = _mlp_forward(theta, lay.slices["r"], self._embed(0.0))
        enc_z, enc_cache = _mlp_forward(theta, lay.slices["enc"], emb)
        enc_out = gelu(enc_z)  # encoder layers are both hidden layers
        trunk_in = np.concatenate([enc_out, x], axis=1)
        N, main_cache = _mlp_forward(theta, lay.slices["main"], trunk_in)
        caches = {
            "r": r_cache,
            "r0": r0_cache,
            "enc": enc_cache,
            "main": main_cache,
            "x": x,
        }
        return r_out[:, 0], float(r0_out[0, 0]), N, caches

    # -- derivatives in x ------------------------------------------------

    def grad_x_inner(self, caches, N):
        """x-gradient of ``phi = <N(t, x), x>``, namely ``N + J^T x``."""
        abar = _mlp_backward(
            self.state.theta,
            self.layout.slices["main"],
            caches["main"],
            caches["x"],
            want_input_grad=True,
        )
        return N + abar[:, self.cfg.hidden :]

    def jvp_n(self, caches, v):
        """Tangent ``J v`` of ``N`` for input direction ``v`` in x."""
        B = v.shape[0]
        t_in = np.concatenate([np.zeros((B, self.cfg.hidden)), v], axis=1)
        out, _ = _mlp_jvp(
            self.state.theta, self.layout.slices["main"], caches["main"], t_in
        )
        return out

    # -- derivatives in theta ---------------------------------------------

    def _enc_continue(self, abar_trunk_input, caches):
        """Convert a trunk-input adjoint into the encoder's final
        pre-activation adjoint (the encoder output is activated)."""
        encbar = abar_trunk_input[:, : self.cfg.hidden]
        _, z_enc = caches["enc"][-1]
        return encbar * gelu_prime(z_enc)

    def eta_grad_weighted(self, caches, coeff, grad):
        """Add ``grad_eta sum_b coeff_b * (r(t_b) - r(0))`` into ``grad``."""
        theta = self.state.theta
        lay = self.layout
        _mlp_backward(theta, lay.slices["r"], caches["r"], coeff[:, None], grad=grad)
        zbar0 = np.array([[-np.sum(coeff)]])
        _mlp_backward(theta, lay.slices["r"], caches["r0"], zbar0, grad=grad)

    def gamma_grad_value(self, caches, coeff, grad):
        """Add ``grad_gamma sum_b coeff_b * <N_b, x_b>`` into ``grad``."""
        theta = self.state.theta
        lay = self.layout
        upstream = coeff[:, None] * caches["x"]
        abar = _mlp_backward(
            theta,
            lay.slices["main"],
            caches["main"],
            upstream,
            grad=grad,
            want_input_grad=True,
        )
        zbar_enc = self._enc_continue(abar, caches)
        _mlp_backward(theta, lay.slices["enc"], caches["enc"], zbar_enc, grad=grad)

    def gamma_grad_score(self, caches, v, u1, u2, grad):
        """Add ``grad_gamma sum_b <u1_b, N_b> + <u2_b, (J v)_b>`` into ``grad``.

        ``v`` is the per-sample input tangent direction.  This is the
        forward-over-reverse sweep used by the score-matching losses,
        where the loss depends on the x-gradient of the potential.
        """
        theta = self.state.theta
        lay = self.layout
        B = v.shape[0]
        t_in = np.concatenate([np.zeros((B, self.cfg.hidden)), v], axis=1)
        _, tcache = _mlp_jvp(theta, lay.slices["main"], caches["main"], t_in)
        zbars, tzbars = _collect_zbars_fwdrev(
            theta, lay.slices["main"], caches["main"], tcache, u1, u2
        )
        _accumulate_grads(
            lay.slices["main"], caches["main"], zbars, grad, tcache, tzbars
        )
        W0, _ = _weights(theta, lay.slices["main"][0])
        abar = zbars[0] @ W0
        # The tangent input is constant in theta, so the tangent adjoint
        # stops at the trunk input; only the value adjoint continues.
        zbar_enc = self._enc_continue(abar, caches)
        _mlp_backward(theta, lay.slices["enc"], caches["enc"], zbar_enc, grad=grad)

    def per_sample_score_grad_sq(self, caches, v, u1, u2, eta_coeff):
        """Per-sample ``||grad_theta||^2`` for the score-loss form.

        Gamma part as in :meth:`gamma_grad_score` with per-sample
        ``u1, u2, v``; eta part is ``eta_coeff_b * (grad r(t_b) -
        grad r(0))``.  Parameter blocks are disjoint so the squared
        norms add.
        """
        theta = self.state.theta
        lay = self.layout
        B = v.shape[0]
        t_in = np.concatenate([np.zeros((B, self.cfg.hidden)), v], axis=1)
        _, tcache = _mlp_jvp(theta, lay.slices["main"], caches["main"], t_in)
        zbars, tzbars = _collect_zbars_fwdrev(
            theta, lay.slices["main"], caches["main"], tcache, u1, u2
        )
        total = _per_sample_sq_norm(
            lay.slices["main"], caches["main"], zbars, tcache, tzbars
        )
        W0, _ = _weights(theta, lay.slices["main"][0])
        zbar_enc = self._enc_continue(zbars[0] @ W0, caches)
        zb_enc = _collect_zbars(theta, lay.slices["enc"], caches["enc"], zbar_enc)
        total += _per_sample_sq_norm(lay.slices["enc"], caches["enc"], zb_enc)
        # eta block: || c_b g(t_b) - c_b g(0) ||^2 expanded, where g is
        # the parameter gradient of r at the two inputs.
        zb_r = _collect_zbars(
            theta, lay.slices["r"], caches["r"], eta_coeff[:, None]
        )
        total += _per_sample_sq_norm(lay.slices["r"], caches["r"], zb_r)
        zb_r0 = _collect_zbars(
            theta, lay.slices["r"], caches["r0"], np.ones((1, 1))
        )
        g0_sq = _per_sample_sq_norm(lay.slices["r"], caches["r0"], zb_r0)[0]
        cross = np.zeros(B)
        for i, _ in enumerate(lay.slices["r"]):
            a_in, _ = caches["r"][i]
            a0_in, _ = caches["r0"][i]
            cross += (zb_r[i] @ zb_r0[i][0]) * (a_in @ a0_in[0])
            cross += zb_r[i] @ zb_r0[i][0]
        total += eta_coeff**2 * g0_sq - 2.0 * eta_coeff * cross
        return total


@dataclass
class AdamState:
    """Adam moments with stepwise exponential learning-rate decay."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_rate: float = 0.95
    decay_every: int = 50


def init_adam(n: int, lr: float = 1e-3, decay_rate: float = 0.95,
              decay_every: int = 50) -> AdamState:
    return AdamState(m=np.zeros(n), v=np.zeros(n), lr=lr,
                     decay_rate=decay_rate, decay_every=decay_every)


def adam_lr(opt: AdamState, step: int) -> float:
    """Learning rate applied at 1-based step ``step``."""
    if opt.decay_every <= 0:
        return opt.lr
    return opt.lr * opt.decay_rate ** ((step - 1) // opt.decay_every)


def adam_step(opt: AdamState, theta: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam update; returns ``(theta', opt')``."""
    if theta.shape != grad.shape or theta.shape != opt.m.shape:
        raise ValueError("adam shape mismatch")
    t = opt.t + 1
    m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad
    v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad * grad
    mhat = m / (1.0 - opt.beta1**t)
    vhat = v / (1.0 - opt.beta2**t)
    theta = theta - adam_lr(opt, t) * mhat / (np.sqrt(vhat) + opt.eps)
    return theta, replace(opt, m=m, v=v, t=t)


# -- checkpoint format ----------------------------------------------------

_MAGIC = b"DSMCNET1"
_HEADER = "<8sIIIII"


def save_network(path, state: NetworkState):
    """Versioned little-endian binary checkpoint (header + float64 data)."""
    cfg = state.config
    with open(path, "wb") as fh:
        fh.write(struct.pack(_HEADER, _MAGIC, 1, cfg.dim, cfg.embed_dim,
                             cfg.hidden, cfg.layers))
        fh.write(struct.pack("<Q", state.theta.size))
        fh.write(state.theta.astype("<f8").tobytes())


def load_network(path) -> NetworkState:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize(_HEADER))
        if len(head) != struct.calcsize(_HEADER):
            raise ValueError(f"not a recognized network checkpoint: {path}")
        magic, version, dim, embed_dim, hidden, layers = struct.unpack(_HEADER, head)
        if magic != _MAGIC or version != 1:
            raise ValueError(f"not a recognized network checkpoint: {path}")
        (n,) = struct.unpack("<Q", fh.read(8))
        theta = np.frombuffer(fh.read(n * 8), dtype="<f8").astype(np.float64)
    cfg = NetConfig(dim=dim, embed_dim=embed_dim, hidden=hidden, layers=layers)
    if theta.size != n_params(cfg):
        raise ValueError("checkpoint parameter count does not match header")
    return NetworkState(config=cfg, theta=theta)
