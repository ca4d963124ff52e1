"""Spatial, frequency-aware and temporal attention blocks.

Layout conventions (leading batch axes are optional everywhere):

* group features   ``(..., J, C', F)``
* spatial map      ``(..., J, J)``
* attention stack  ``(..., F, J, J)`` (bin axis in the frequency domain,
  frame axis after the inverse transform)

All arguments may be numpy arrays or tape ``Var`` nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import ShapeError
from .spectral import FrequencyOperatorConfig, SpectralBasis, dct_forward, frequency_operator, idct


@dataclass
class Linear:
    w: object
    b: object = None

    def __call__(self, x):
        y = nx.bmm(x, self.w)
        return y if self.b is None else nx.add(y, self.b)


@dataclass
class BlockParams:
    sab_q: list
    sab_k: list
    fab_q: list
    fab_k: list
    value: Linear
    tq: Linear
    tk: Linear
    tv: Linear

    @property
    def d(self) -> int:
        return nx.value_of(self.sab_q[0].w).shape[1]

    @property
    def d_t(self) -> int:
        return nx.value_of(self.tq.w).shape[1]


@dataclass
class ChannelTransformParams:
    squeeze: Linear
    excite: Linear
    conv1_w: object  # (C_out, C_in, 3), dilation 1
    conv1_b: object
    conv2_w: object  # dilation 2
    conv2_b: object
    proj: Linear  # 3C -> C


def _perm_tail(ndim: int, tail) -> list:
    head = list(range(ndim - len(tail)))
    return head + [ndim - len(tail) + t for t in tail]


def _swap_last2(x):
    return nx.transpose(x, _perm_tail(nx.value_of(x).ndim, (1, 0)))


def _attention(q, k, d: int):
    return nx.scaled_softmax_rows(nx.bmm(q, _swap_last2(k)), d)


def _mix(self_maps, cross_maps):
    """MS_i = self_i + cross_i + cross_{i-1}, dropping terms outside 1..n-1."""
    n = len(self_maps)
    out = []
    for i in range(n):
        m = self_maps[i]
        if i < n - 1:
            m = nx.add(m, cross_maps[i])
        if i > 0:
            m = nx.add(m, cross_maps[i - 1])
        out.append(m)
    return out


def _check_groups(groups):
    if len(groups) < 2:
        raise ValueError(f"mixed attention needs at least 2 groups, got {len(groups)}")
    shapes = {nx.value_of(g).shape for g in groups}
    if len(shapes) != 1:
        raise ShapeError(f"groups disagree in shape: {sorted(shapes)}")


def spatial_tokens(x, lin: Linear):
    """ReLU(linear(avg over frames)) -> (..., J, d)."""
    return nx.pooled_projection(x, lin.w, lin.b, "avg", pool_axis=-1)


def spatial_attention_maps(groups, params: BlockParams):
    """Raw self and cross maps of the spatial branch (each row sums to 1)."""
    _check_groups(groups)
    d = params.d
    Q = [spatial_tokens(x, lq) for x, lq in zip(groups, params.sab_q)]
    K = [spatial_tokens(x, lk) for x, lk in zip(groups, params.sab_k)]
    selfs = [_attention(q, k, d) for q, k in zip(Q, K)]
    cross = [_attention(Q[i + 1], K[i], d) for i in range(len(groups) - 1)]
    return selfs, cross


def spatial_self_and_mixed(groups, params: BlockParams):
    """Mixed spatial maps MS_i, one (..., J, J) map per group."""
    return _mix(*spatial_attention_maps(groups, params))


def bin_tokens(xbar, lin: Linear, activation=nx.relu):
    """Per-bin joint tokens: (..., J, C', F) coefficients -> (..., F, J, d)."""
    nd = nx.value_of(xbar).ndim
    per_bin = nx.transpose(xbar, _perm_tail(nd, (2, 0, 1)))
    y = lin(per_bin)
    return y if activation is None else activation(y)


def frequency_attention_maps(groups, params: BlockParams, basis: SpectralBasis):
    """Raw per-bin self and cross maps, each (..., F, J, J)."""
    _check_groups(groups)
    d = params.d
    bars = [dct_forward(x, basis, axis=-1) for x in groups]
    Q = [bin_tokens(xb, lq) for xb, lq in zip(bars, params.fab_q)]
    K = [bin_tokens(xb, lk) for xb, lk in zip(bars, params.fab_k)]
    selfs = [_attention(q, k, d) for q, k in zip(Q, K)]
    cross = [_attention(Q[i + 1], K[i], d) for i in range(len(groups) - 1)]
    return selfs, cross


def frequency_self_and_mixed(groups, params: BlockParams, basis: SpectralBasis,
                             fo: FrequencyOperatorConfig | None, return_spectral: bool = False):
    """Mixed frequency maps restored to the frame domain, MF_i = IDCT(psi(mixed_i)).

    ``fo=None`` skips the frequency operator (plain IDCT of the mixed stack).
    With ``return_spectral`` the pre-operator frequency-domain stacks are
    returned alongside.
    """
    F = nx.value_of(groups[0]).shape[-1]
    if F != basis.F:
        raise ShapeError(f"frame axis {F} does not match basis F={basis.F}")
    bar = _mix(*frequency_attention_maps(groups, params, basis))
    scaled = bar if fo is None else [frequency_operator(m, fo, axis=-3) for m in bar]
    mf = [idct(m, basis, axis=-3) for m in scaled]
    return (mf, bar) if return_spectral else mf


def fuse_and_concat(mf, ms):
    """MFS_i[f] = MF_i[f] + MS_i, stacked in group order along a new leading axis."""
    if len(mf) != len(ms):
        raise ShapeError(f"{len(mf)} frequency maps vs {len(ms)} spatial maps")
    fused = []
    for a, b in zip(mf, ms):
        av, bv = nx.value_of(a), nx.value_of(b)
        if av.shape[:-3] != bv.shape[:-2] or av.shape[-2:] != bv.shape[-2:]:
            raise ShapeError(f"frequency map {av.shape} incompatible with spatial map {bv.shape}")
        fused.append(nx.add(a, nx.reshape(b, bv.shape[:-2] + (1,) + bv.shape[-2:])))
    return nx.stack(fused, axis=0)


def value_projection(x, lin: Linear):
    """1x1 channel convolution: (..., J, C, F) -> (..., J, F, C)."""
    nd = nx.value_of(x).ndim
    return lin(nx.transpose(x, _perm_tail(nd, (0, 2, 1))))


def apply_value(m, x, params: BlockParams):
    """x_t^i[:, :, f] = MFS_i[f] V_i[:, :, f], groups re-joined along channels.

    ``m`` is a stacked map of shape (n, ..., F, J, J); a frame axis of length
    1 broadcasts one map over all frames.
    """
    mv, xv = nx.value_of(m), nx.value_of(x)
    n = mv.shape[0]
    J, C, F = xv.shape[-3:]
    if mv.shape[-1] != J or mv.shape[-2] != J:
        raise ShapeError(f"map joints {mv.shape[-2:]} vs input joints {J}")
    if C % n:
        raise ShapeError(f"{C} channels cannot be split into {n} groups")
    cg = C // n
    v = value_projection(x, params.value)  # (..., J, F, C)
    nd = xv.ndim
    v = nx.transpose(v, _perm_tail(nd, (1, 0, 2)))  # (..., F, J, C)
    outs = []
    for i in range(n):
        vi = nx.getitem(v, (Ellipsis, slice(i * cg, (i + 1) * cg)))
        outs.append(nx.bmm(nx.getitem(m, i), vi))
    out = nx.concat(outs, axis=-1)  # (..., F, J, C)
    return nx.transpose(out, _perm_tail(nd, (1, 2, 0)))


def _temporal_conv(x, w, b, dilation: int):
    """Width-3 dilated conv along frames, zero padded: (..., J, C, F) -> (..., J, O, F)."""
    nd = nx.value_of(x).ndim
    taps = [nx.shift(x, (t - 1) * dilation, axis=-1) for t in range(3)]
    st = nx.stack(taps, axis=-2)  # (..., J, C, 3, F)
    st = nx.transpose(st, _perm_tail(nd + 1, (0, 3, 1, 2)))  # (..., J, F, C, 3)
    sv = nx.value_of(st)
    flat = nx.reshape(st, sv.shape[:-2] + (sv.shape[-2] * 3,))
    wv = nx.value_of(w)
    kern = nx.reshape(nx.transpose(w, (1, 2, 0)), (wv.shape[1] * 3, wv.shape[0]))
    y = nx.bmm(flat, kern)  # (..., J, F, O)
    if b is not None:
        y = nx.add(y, b)
    return nx.transpose(y, _perm_tail(nd, (0, 2, 1)))


def channel_gate(x, ct: ChannelTransformParams):
    """Squeeze-excitation gate from the (J, F) average: (..., C) in (0, 1)."""
    pooled = nx.mean(x, axis=(-3, -1))
    C = nx.value_of(pooled).shape[-1]
    if nx.value_of(pooled).ndim == 1:
        pooled = nx.reshape(pooled, (1, C))
        return nx.reshape(nx.sigmoid(ct.excite(nx.relu(ct.squeeze(pooled)))), (C,))
    return nx.sigmoid(ct.excite(nx.relu(ct.squeeze(pooled))))


def channel_transform(x, ct: ChannelTransformParams):
    """Gate channels, run {identity, dilation 1, dilation 2} branches, project back to C."""
    xv = nx.value_of(x)
    C = xv.shape[-2]
    if nx.value_of(ct.proj.w).shape != (3 * C, C):
        raise ShapeError(f"channel transform expects {nx.value_of(ct.proj.w).shape[1]} channels, got {C}")
    g = channel_gate(x, ct)
    gv = nx.value_of(g)
    xg = nx.mul(x, nx.reshape(g, gv.shape[:-1] + (1, C, 1)))
    y1 = _temporal_conv(xg, ct.conv1_w, ct.conv1_b, 1)
    y2 = _temporal_conv(xg, ct.conv2_w, ct.conv2_b, 2)
    cat = nx.concat([xg, y1, y2], axis=-2)
    nd = xv.ndim
    out = ct.proj(nx.transpose(cat, _perm_tail(nd, (0, 2, 1))))
    return nx.transpose(out, _perm_tail(nd, (0, 2, 1)))


def temporal_maps(X_t, params: BlockParams):
    """Frame attention softmax(Q_t K_t^T / sqrt(d_t)) from avg/max pooled frame tokens."""
    avg = nx.mean(X_t, axis=(-3, -2))
    mx = nx.amax(X_t, axis=(-3, -2))
    av = nx.value_of(avg)
    q = nx.relu(params.tq(nx.reshape(avg, av.shape + (1,))))
    k = nx.relu(params.tk(nx.reshape(mx, av.shape + (1,))))
    return _attention(q, k, params.d_t)


def temporal_attention(x_t, params: BlockParams, ct: ChannelTransformParams, return_map: bool = False):
    """X_out[:, :, f] = sum_g sigmoid(A[f, g]) V_t[:, :, g] with X_t = CT(x_t)."""
    X_t = channel_transform(x_t, ct)
    A = temporal_maps(X_t, params)
    S = nx.sigmoid(A)
    nd = nx.value_of(X_t).ndim
    vt = value_projection(X_t, params.tv)  # (..., J, F, C)
    vt = nx.transpose(vt, _perm_tail(nd, (0, 2, 1)))  # (..., J, C, F)
    shp = nx.value_of(vt).shape
    flat = nx.reshape(vt, shp[:-3] + (shp[-3] * shp[-2], shp[-1]))
    out = nx.bmm(flat, _swap_last2(S))
    out = nx.reshape(out, shp)
    return (out, A) if return_map else out


# ---------------------------------------------------------------------------
# partial / full DCT attention (single unmixed group, literal projections)

@dataclass
class DCTAttentionParams:
    w_q: object
    w_k: object
    w_v: object


def _dct_qk(x, p: DCTAttentionParams, basis: SpectralBasis):
    F = nx.value_of(x).shape[-1]
    if F != basis.F:
        raise ShapeError(f"frame axis {F} does not match basis F={basis.F}")
    xbar = dct_forward(x, basis, axis=-1)
    q = bin_tokens(xbar, Linear(p.w_q), activation=None)
    k = bin_tokens(xbar, Linear(p.w_k), activation=None)
    d = nx.value_of(p.w_q).shape[1]
    return xbar, _attention(q, k, d)


def partial_dct_attention(x, p: DCTAttentionParams, basis: SpectralBasis):
    """IDCT(softmax(Q_bar K_bar^T / sqrt d)) V with V taken from the time-domain input.

    Returns (..., J, C_v, F).
    """
    _, maps = _dct_qk(x, p, basis)
    frames = idct(maps, basis, axis=-3)  # (..., F, J, J)
    nd = nx.value_of(x).ndim
    v = value_projection(x, Linear(p.w_v))  # (..., J, F, Cv)
    v = nx.transpose(v, _perm_tail(nd, (1, 0, 2)))  # (..., F, J, Cv)
    out = nx.bmm(frames, v)
    return nx.transpose(out, _perm_tail(nd, (1, 2, 0)))


def full_dct_attention(x, p: DCTAttentionParams, basis: SpectralBasis, return_spectral: bool = False):
    """IDCT(softmax(Q_bar K_bar^T / sqrt d) V_bar), everything in the DCT domain."""
    xbar, maps = _dct_qk(x, p, basis)
    vbar = bin_tokens(xbar, Linear(p.w_v), activation=None)  # (..., F, J, Cv)
    prod = nx.bmm(maps, vbar)
    out = idct(prod, basis, axis=-3)
    nd = nx.value_of(x).ndim
    out = nx.transpose(out, _perm_tail(nd, (1, 2, 0)))
    return (out, prod) if return_spectral else out


def time_average_abs(stack) -> np.ndarray:
    """Collapse an (F, J, J) stack to one J x J map for display."""
    return np.abs(np.asarray(nx.value_of(stack))).mean(axis=-3)
