"""Frame-condition factories, residual diagnostics, and frame bases.

Layerwise perfect reconstruction of a linear encoder-decoder pair needs
two algebraic conditions per layer: the unpooling/pooling product must be
a multiple of the identity, and the stacked filter matrices must form a
scaled tight frame whose constant depends on whether a skip branch shares
the load (1/(r a) without skips, 1/(r (a+1)) with them).

The factories here realize those conditions with seeded orthogonal
matrices, the simplest symmetric tight frames.  Residual checks are
diagnostics, never gates: every analysis in this package must also work
on arbitrary banks that satisfy nothing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .convops import circ_conv, filters_to_matrix, identity_conv
from .netbuild import LayerBank, NetworkSpec, _orthonormal, realize
from .seeding import derive, rng

__all__ = [
    "FrameConfig",
    "FrameBasis",
    "frame_filter_constant",
    "make_frame_pooling",
    "make_frame_filters",
    "frame_bank",
    "frame_residual",
    "build_frame_basis",
    "cascade_filter_check",
]

MODES = ("no_skip", "skip")


@dataclass(frozen=True)
class FrameConfig:
    """Pooling frame constant, skip/no-skip constant selection, seed."""

    alpha: float = 1.0
    mode: str = "no_skip"
    seed: int = 0
    pooling: str = "orthogonal"  # or "identity"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"frame constant alpha={self.alpha} must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pooling not in ("identity", "orthogonal"):
            raise ValueError(f"unknown pooling kind {self.pooling!r}")

    @classmethod
    def for_spec(cls, spec: NetworkSpec, alpha: float = 1.0, seed: int = 0,
                 pooling: str = "orthogonal") -> "FrameConfig":
        return cls(alpha=alpha, mode="skip" if spec.skip else "no_skip",
                   seed=seed, pooling=pooling)


def frame_filter_constant(r: int, alpha: float, mode: str) -> float:
    """Tight-frame constant for the filter matrices."""
    if mode == "no_skip":
        return 1.0 / (r * alpha)
    if mode == "skip":
        return 1.0 / (r * (alpha + 1.0))
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def make_frame_pooling(m: int, alpha: float, kind: str = "orthogonal",
                       seed: int = 0, m_out: int | None = None):
    """Pooling/unpooling pair with unpool @ pool' == alpha * identity.

    Only square pairs exist: the identity on m coordinates cannot factor
    through fewer, so contraction is a hard error rather than a silent
    approximation.
    """
    if alpha <= 0:
        raise ValueError(f"frame constant alpha={alpha} must be positive")
    m_out = m if m_out is None else int(m_out)
    if m_out < m:
        raise ValueError(
            f"frame pooling requires non-contracting dims: rank {m_out} cannot "
            f"carry an identity on {m} coordinates"
        )
    if m_out > m:
        raise ValueError(
            f"frame pooling factory builds square matrices only, got {m} -> {m_out}"
        )
    if kind == "identity":
        phi = np.eye(m)
    elif kind == "orthogonal":
        phi = _orthonormal(m, m, rng(seed, "frame-pool", m))
    else:
        raise ValueError(f"unknown pooling kind {kind!r}")
    return phi, alpha * phi


def make_frame_filters(r: int, q_in: int, q_out: int, alpha: float,
                       mode: str = "no_skip", seed: int = 0):
    """Symmetric tight-frame filter matrices (r q_in) x q_out.

    Takes r q_in orthonormal rows of a seeded q_out x q_out orthogonal
    matrix, scaled by the square root of the frame constant, so that
    Psi @ Psi_tilde' equals the constant times the identity exactly.
    Needs q_out >= r q_in; thinner layers cannot carry the frame.
    """
    c = frame_filter_constant(r, alpha, mode)
    if q_out < r * q_in:
        raise ValueError(
            f"frame filters need q_out >= r * q_in, got {q_out} < {r} * {q_in}"
        )
    basis = _orthonormal(q_out, q_out, rng(seed, "frame-filters", r, q_in, q_out))
    row_sel = basis.T[: r * q_in]
    psi = np.sqrt(c) * row_sel
    return psi, psi.copy()


def _matrix_to_filters(P: np.ndarray, q_in: int, q_out: int, r: int) -> np.ndarray:
    """Inverse of convops.filters_to_matrix."""
    return P.reshape(q_in, r, q_out).transpose(0, 2, 1).copy()


def frame_bank(spec: NetworkSpec, config: FrameConfig) -> LayerBank:
    """Bank satisfying the frame conditions at every layer.

    Spatial dims must stay constant (square pooling) and channels must
    grow at least r-fold per layer.  Layers draw independent sub-seeded
    orthogonal factors, so the bank is reproducible from (spec, config).
    """
    enc, dec, pool, unpool = [], [], [], []
    for l in range(1, spec.kappa + 1):
        m_prev, m_cur = spec.m[l - 1], spec.m[l]
        q_prev, q_cur = spec.q[l - 1], spec.q[l]
        phi, phi_t = make_frame_pooling(
            m_prev, config.alpha, kind=config.pooling,
            seed=derive(config.seed, "frame-bank-pool", l), m_out=m_cur,
        )
        psi, psi_t = make_frame_filters(
            spec.r, q_prev, q_cur, config.alpha, mode=config.mode,
            seed=derive(config.seed, "frame-bank-filters", l),
        )
        pool.append(phi)
        unpool.append(phi_t)
        enc.append(_matrix_to_filters(psi, q_prev, q_cur, spec.r))
        dec.append(_matrix_to_filters(psi_t, q_prev, q_cur, spec.r))
    return LayerBank(enc_filters=tuple(enc), dec_filters=tuple(dec),
                     pool=tuple(pool), unpool=tuple(unpool))


def _max_dev(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.max(np.abs(A - B)))


def frame_residual(spec: NetworkSpec, bank: LayerBank, config: FrameConfig) -> list:
    """Per-layer deviations from the frame conditions and the layer identity.

    Reports, never raises: arbitrary banks are expected to violate
    everything.  In skip mode the pooled and identity-pooled halves of the
    layer identity are also reported separately, since the factory
    guarantees their split but arbitrary banks need not.
    """
    skip_mode = config.mode == "skip"
    eval_spec = dataclasses.replace(spec, skip=True) if skip_mode else spec
    mats = realize(eval_spec, bank)
    out = []
    for l in range(1, spec.kappa + 1):
        m_prev = spec.m[l - 1]
        c = frame_filter_constant(spec.r, config.alpha, config.mode)
        psi = filters_to_matrix(bank.enc_filters[l - 1])
        psi_t = filters_to_matrix(bank.dec_filters[l - 1])
        phi = bank.pool[l - 1]
        phi_t = bank.unpool[l - 1]
        layer = mats[l - 1]
        d_prev = spec.d[l - 1]
        entry = {
            "layer": l,
            "pooling_residual": _max_dev(phi_t @ phi.T, config.alpha * np.eye(m_prev)),
            "filter_residual": _max_dev(psi @ psi_t.T, c * np.eye(psi.shape[0])),
        }
        recon = layer.D @ layer.E.T
        if skip_mode:
            pooled = recon.copy()
            skip_part = layer.S_tilde @ layer.S.T
            recon = recon + skip_part
            a = config.alpha
            entry["pooled_term_residual"] = _max_dev(
                pooled, a / (a + 1.0) * np.eye(d_prev)
            )
            entry["identity_term_residual"] = _max_dev(
                skip_part, 1.0 / (a + 1.0) * np.eye(d_prev)
            )
        entry["layer_identity_residual"] = _max_dev(recon, np.eye(d_prev))
        out.append(entry)
    return out


@dataclass(frozen=True)
class FrameBasis:
    """Global frame and dual: with frame conditions, B_tilde @ B' == identity."""

    B: np.ndarray
    B_tilde: np.ndarray

    @property
    def feature_dim(self) -> int:
        return self.B.shape[1]

    def reconstruction(self) -> np.ndarray:
        return self.B_tilde @ self.B.T


def build_frame_basis(spec: NetworkSpec, bank: LayerBank) -> FrameBasis:
    """Linear-composition frame pair (nonlinearities ignored).

    Without skips these are the plain E- and D-chains; with skips each
    level appends its skip operator to the chain prefix, deepest level
    first after the full-depth block.
    """
    mats = realize(spec, bank)
    d0 = spec.d[0]
    prefix_e = [np.eye(d0)]
    prefix_d = [np.eye(d0)]
    for l in range(1, spec.kappa + 1):
        prefix_e.append(prefix_e[-1] @ mats[l - 1].E)
        prefix_d.append(prefix_d[-1] @ mats[l - 1].D)
    if not spec.skip:
        return FrameBasis(B=prefix_e[spec.kappa], B_tilde=prefix_d[spec.kappa])
    blocks = [prefix_e[spec.kappa]]
    dual_blocks = [prefix_d[spec.kappa]]
    for l in range(spec.kappa, 0, -1):
        blocks.append(prefix_e[l - 1] @ mats[l - 1].S)
        dual_blocks.append(prefix_d[l - 1] @ mats[l - 1].S_tilde)
    return FrameBasis(B=np.hstack(blocks), B_tilde=np.hstack(dual_blocks))


def cascade_filter_check(spec: NetworkSpec, bank: LayerBank, tol: float = 1e-12) -> dict:
    """Verify that chained layer operators are single long convolutions.

    With identity pooling everywhere (and a single input channel), every
    m-column block of the cumulative encoder product must equal the
    circulant of a sum of cascaded filters over all channel paths into
    that block; dually for the decoder side.  Returns per-depth maximal
    deviations and an overall verdict at ``tol``.
    """
    m = spec.m[0]
    if any(mm != m for mm in spec.m):
        raise ValueError("corollary requires no pooling: spatial dims must be constant")
    for l in range(spec.kappa):
        if not (np.array_equal(bank.pool[l], np.eye(m))
                and np.array_equal(bank.unpool[l], np.eye(m))):
            raise ValueError("corollary requires no pooling: all pooling matrices "
                             "must be the identity")
    if spec.q[0] != 1:
        raise ValueError("cascade check needs a single input channel (q_0 == 1)")

    mats = realize(spec, bank)
    report = {"tol": tol, "per_layer": []}
    worst = 0.0

    def pad(v):
        out = np.zeros(m)
        out[: len(v)] = v
        return out

    enc_sums = [pad(bank.enc_filters[0][0, j]) for j in range(spec.q[1])]
    dec_sums = [pad(bank.dec_filters[0][0, j]) for j in range(spec.q[1])]
    prod_e = mats[0].E
    prod_d = mats[0].D
    for l in range(1, spec.kappa + 1):
        if l >= 2:
            enc_sums = [
                sum(circ_conv(enc_sums[j], bank.enc_filters[l - 1][j, t])
                    for j in range(spec.q[l - 1]))
                for t in range(spec.q[l])
            ]
            dec_sums = [
                sum(circ_conv(dec_sums[j], bank.dec_filters[l - 1][j, t])
                    for j in range(spec.q[l - 1]))
                for t in range(spec.q[l])
            ]
            prod_e = prod_e @ mats[l - 1].E
            prod_d = prod_d @ mats[l - 1].D
        enc_dev = max(
            _max_dev(prod_e[:, t * m:(t + 1) * m], identity_conv(m, enc_sums[t]))
            for t in range(spec.q[l])
        )
        dec_dev = max(
            _max_dev(prod_d[:, t * m:(t + 1) * m], identity_conv(m, dec_sums[t]))
            for t in range(spec.q[l])
        )
        worst = max(worst, enc_dev, dec_dev)
        report["per_layer"].append(
            {"layer": l, "enc_deviation": enc_dev, "dec_deviation": dec_dev}
        )
    report["max_deviation"] = worst
    report["ok"] = worst <= tol
    return report
