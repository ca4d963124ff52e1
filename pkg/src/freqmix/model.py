"""FreqMixFormer assembly: embedding, grouped mixed blocks, temporal block, head."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import attention as at
from . import numerics as nx
from .numerics import NonFiniteError, Parameter, ShapeError
from .spectral import FrequencyOperatorConfig, SpectralBasis, dct_forward, frequency_operator, idct

VARIANTS = ("standard", "partial_dct", "full_dct")


@dataclass(frozen=True)
class ModelConfig:
    J: int = 25
    C_in: int = 3
    C: int = 16
    F: int = 64
    n: int = 4
    phi: float = 0.5
    n_high: int = 12
    num_classes: int = 60
    depth: int = 3
    heads: int = 2
    variant: str = "standard"
    attn_dim: int = 0  # 0 -> C
    reduction: int = 4
    use_fab: bool = True
    use_fo: bool = True
    use_tab: bool = True
    per_frame_pos: bool = False
    value_bias: bool = False  # biases on V, V_t and the CT convolutions
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n={self.n}: mixed attention needs at least 2 groups")
        if self.C % self.n:
            raise ValueError(f"C={self.C} not divisible by n={self.n}")
        if not 0 <= self.n_high <= self.F:
            raise ValueError(f"N_c={self.n_high} outside [0, F={self.F}]")
        if not 0 < self.phi < 1:
            raise ValueError(f"phi={self.phi} outside (0, 1)")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.C % self.heads:
            raise ValueError(f"heads={self.heads} does not divide C={self.C}")
        if self.depth < 1 or self.num_classes < 2 or self.J < 1 or self.F < 1:
            raise ValueError("depth >= 1, num_classes >= 2, J >= 1 and F >= 1 required")
        if self.use_tab and self.C // self.reduction < 1:
            raise ValueError(f"reduction {self.reduction} too large for C={self.C}")

    @property
    def group_width(self) -> int:
        return self.C // self.n

    @property
    def d(self) -> int:
        return self.attn_dim or self.C

    def replace(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ModelConfig":
        return cls(**(parse_kv(text, cls) | overrides))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def parse_kv(text: str, cls) -> dict:
    """Parse ``key=value`` lines into typed fields of a dataclass."""
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = coerce(val, types[key])
    return out


def coerce(val: str, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    if typ == "bool":
        low = val.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {val!r}")
        return low in ("true", "1", "yes")
    if typ == "int":
        return int(val)
    if typ == "float":
        return float(val)
    return val


# ---------------------------------------------------------------------------
# parameter layout

def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Ordered name -> shape map; fan-in/fan-out follow from the shapes."""
    C, cg, d = cfg.C, cfg.group_width, cfg.d
    shapes: dict[str, tuple] = {
        "embed.w": (cfg.C_in, C),
        "embed.pos": (cfg.J, cfg.F, C) if cfg.per_frame_pos else (cfg.J, C),
    }
    for b in range(cfg.depth):
        pre = f"blocks.{b}"
        branches = ["sab"] + (["fab"] if cfg.use_fab else [])
        for br in branches:
            for i in range(cfg.n):
                for t in ("q", "k"):
                    shapes[f"{pre}.{br}.{i}.w_{t}"] = (cg, d)
                    shapes[f"{pre}.{br}.{i}.b_{t}"] = (d,)
        vb = cfg.value_bias
        shapes[f"{pre}.value.w"] = (C, C)
        if vb:
            shapes[f"{pre}.value.b"] = (C,)
        if cfg.use_tab:
            r = C // cfg.reduction
            shapes |= {
                f"{pre}.ct.squeeze.w": (C, r), f"{pre}.ct.squeeze.b": (r,),
                f"{pre}.ct.excite.w": (r, C), f"{pre}.ct.excite.b": (C,),
                f"{pre}.ct.conv1.w": (C, C, 3), f"{pre}.ct.conv2.w": (C, C, 3),
                f"{pre}.ct.proj.w": (3 * C, C),
                f"{pre}.tab.w_q": (1, d), f"{pre}.tab.b_q": (d,),
                f"{pre}.tab.w_k": (1, d), f"{pre}.tab.b_k": (d,),
                f"{pre}.tab.w_v": (C, C),
            }
            if vb:
                shapes |= {f"{pre}.ct.conv1.b": (C,), f"{pre}.ct.conv2.b": (C,),
                           f"{pre}.ct.proj.b": (C,), f"{pre}.tab.b_v": (C,)}
    shapes["head.w"] = (C, cfg.num_classes)
    shapes["head.b"] = (cfg.num_classes,)
    return shapes


def parameter_count(cfg: ModelConfig) -> int:
    return int(sum(np.prod(s) for s in parameter_shapes(cfg).values()))


def _init_value(rng, name: str, shape: tuple) -> np.ndarray:
    if len(shape) == 1 or name.endswith(".b"):
        return np.zeros(shape)
    if name == "embed.pos":
        return rng.uniform(-0.1, 0.1, size=shape)
    if len(shape) == 3:  # conv kernel (out, in, width)
        fan_in, fan_out = shape[1] * shape[2], shape[0] * shape[2]
    else:
        fan_in, fan_out = shape
    return nx.glorot_uniform(rng, fan_in, fan_out, shape)


# ---------------------------------------------------------------------------
# model

class FreqMixFormer:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.basis = SpectralBasis.of(cfg.F)
        self.fo = FrequencyOperatorConfig(cfg.n_high, cfg.phi) if cfg.use_fo else None
        rng = nx.make_rng(cfg.seed)
        self.params: dict[str, Parameter] = {
            name: Parameter(name, _init_value(rng, name, shape))
            for name, shape in parameter_shapes(cfg).items()
        }

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def bind(self, tape: nx.GradientTape | None = None) -> dict:
        if tape is None:
            return {k: p.value for k, p in self.params.items()}
        return {k: tape.watch(p) for k, p in self.params.items()}

    def load_state(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(values)
        extra = set(values) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in values.items():
            if v.shape != self.params[k].shape:
                raise ShapeError(f"{k}: checkpoint shape {v.shape} != model shape {self.params[k].shape}")
            self.params[k].value[...] = v

    def save(self, path) -> None:
        nx.save_parameters(path, self.parameters())

    def load(self, path) -> None:
        self.load_state(nx.load_parameters(path))

    # -- parameter views -----------------------------------------------------

    def block_params(self, P: dict, b: int) -> at.BlockParams:
        pre = f"blocks.{b}"

        def lin(stem, t):
            return at.Linear(P[f"{stem}.w_{t}"], P.get(f"{stem}.b_{t}"))

        n = self.cfg.n
        sab_q = [lin(f"{pre}.sab.{i}", "q") for i in range(n)]
        sab_k = [lin(f"{pre}.sab.{i}", "k") for i in range(n)]
        fab_q = [lin(f"{pre}.fab.{i}", "q") for i in range(n)] if self.cfg.use_fab else []
        fab_k = [lin(f"{pre}.fab.{i}", "k") for i in range(n)] if self.cfg.use_fab else []
        value = at.Linear(P[f"{pre}.value.w"], P.get(f"{pre}.value.b"))
        if self.cfg.use_tab:
            tq, tk, tv = lin(f"{pre}.tab", "q"), lin(f"{pre}.tab", "k"), lin(f"{pre}.tab", "v")
        else:
            tq = tk = tv = None
        return at.BlockParams(sab_q, sab_k, fab_q, fab_k, value, tq, tk, tv)

    def ct_params(self, P: dict, b: int) -> at.ChannelTransformParams:
        pre = f"blocks.{b}.ct"
        return at.ChannelTransformParams(
            squeeze=at.Linear(P[f"{pre}.squeeze.w"], P[f"{pre}.squeeze.b"]),
            excite=at.Linear(P[f"{pre}.excite.w"], P[f"{pre}.excite.b"]),
            conv1_w=P[f"{pre}.conv1.w"], conv1_b=P.get(f"{pre}.conv1.b"),
            conv2_w=P[f"{pre}.conv2.w"], conv2_b=P.get(f"{pre}.conv2.b"),
            proj=at.Linear(P[f"{pre}.proj.w"], P.get(f"{pre}.proj.b")),
        )

    # -- forward ---------------------------------------------------------------

    def forward(self, batch, tape: nx.GradientTape | None = None, trace: dict | None = None):
        """Logits (B, num_classes) for a (B, J, C_in, F) batch."""
        cfg = self.cfg
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 4 or batch.shape[1:] != (cfg.J, cfg.C_in, cfg.F):
            raise ShapeError(f"batch shape {batch.shape} does not match (B, {cfg.J}, {cfg.C_in}, {cfg.F})")
        P = self.bind(tape)
        h = embed(batch, P["embed.w"], P["embed.pos"])
        for b in range(cfg.depth):
            h = self._block(h, P, b, trace)
            if not np.all(np.isfinite(nx.value_of(h))):
                raise NonFiniteError(f"non-finite activations after block {b}")
        pooled = nx.mean(h, axis=(1, 3))
        return at.Linear(P["head.w"], P["head.b"])(pooled)

    __call__ = forward

    def _block(self, h, P, b: int, trace: dict | None):
        cfg = self.cfg
        bp = self.block_params(P, b)
        groups = partition(h, cfg.n)
        ms = at.spatial_self_and_mixed(groups, bp)
        mf = None
        extra = None
        if not cfg.use_fab:
            M = nx.stack([_frame_axis(m) for m in ms], axis=0)
        elif cfg.variant == "standard":
            mf = at.frequency_self_and_mixed(groups, bp, self.basis, self.fo)
            M = at.fuse_and_concat(mf, ms)
        else:
            selfs, _ = at.frequency_attention_maps(groups, bp, self.basis)
            spec = selfs if self.fo is None else [frequency_operator(m, self.fo, axis=-3) for m in selfs]
            if cfg.variant == "partial_dct":
                mf = [idct(m, self.basis, axis=-3) for m in spec]
                M = at.fuse_and_concat(mf, ms)
            else:
                M = nx.stack([_frame_axis(m) for m in ms], axis=0)
                extra = self._full_dct_values(h, bp, spec)
        x_t = at.apply_value(M, h, bp)
        if extra is not None:
            x_t = nx.add(x_t, extra)
        if trace is not None:
            trace[f"block{b}.ms"] = [nx.value_of(m) for m in ms]
            trace[f"block{b}.mf"] = None if mf is None else [nx.value_of(m) for m in mf]
            trace[f"block{b}.mfs"] = nx.value_of(M)
        h = nx.add(h, x_t)
        if cfg.use_tab:
            h = nx.add(h, at.temporal_attention(h, bp, self.ct_params(P, b)))
        return h

    def _full_dct_values(self, h, bp: at.BlockParams, spec_maps):
        """Per group: IDCT over bins of (map[k] @ V_bar[k]); channels re-joined."""
        n, cg = self.cfg.n, self.cfg.group_width
        v = at.value_projection(h, bp.value)  # (B, J, F, C)
        vbar = dct_forward(v, self.basis, axis=-2)  # bins on axis -2
        vbar = nx.transpose(vbar, (0, 2, 1, 3))  # (B, F, J, C)
        outs = []
        for i in range(n):
            vi = nx.getitem(vbar, (Ellipsis, slice(i * cg, (i + 1) * cg)))
            outs.append(idct(nx.bmm(spec_maps[i], vi), self.basis, axis=-3))
        out = nx.concat(outs, axis=-1)  # (B, F, J, C)
        return nx.transpose(out, (0, 2, 3, 1))

    def predict_scores(self, x, batch_size: int = 64) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.concatenate([self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])


def _frame_axis(m):
    v = nx.value_of(m)
    return nx.reshape(m, v.shape[:-2] + (1,) + v.shape[-2:])


def embed(seq, w, pos):
    """Per-frame linear lift C_in -> C plus positional table, (..., J, C, F)."""
    sv = nx.value_of(seq)
    nd = sv.ndim
    wv, pv = nx.value_of(w), nx.value_of(pos)
    if sv.shape[-2] != wv.shape[0]:
        raise ShapeError(f"input width {sv.shape[-2]} does not match embedding {wv.shape}")
    if pv.shape[0] != sv.shape[-3]:
        raise ShapeError(f"positional table {pv.shape} does not match {sv.shape[-3]} joints")
    lifted = nx.bmm(nx.transpose(seq, at._perm_tail(nd, (0, 2, 1))), w)  # (..., J, F, C)
    if pv.ndim == 2:
        pos = nx.reshape(pos, (pv.shape[0], 1, pv.shape[1]))
    h = nx.add(lifted, pos)
    return nx.transpose(h, at._perm_tail(nd, (0, 2, 1)))


def partition(x, n: int):
    """Contiguous channel groups of width C / n, order preserving."""
    C = nx.value_of(x).shape[-2]
    if n < 2:
        raise ValueError(f"n={n}: mixed attention needs at least 2 groups")
    if C % n:
        raise ValueError(f"C={C} not divisible by n={n}")
    w = C // n
    return [nx.getitem(x, (Ellipsis, slice(i * w, (i + 1) * w), slice(None))) for i in range(n)]


def concat_groups(groups):
    return nx.concat(groups, axis=-2)


def mhsa_reference(x, w_q, w_k, w_v, w_out, h: int):
    """Concat(H_1..H_h) W_out with H_i = softmax(Q_i K_i^T / sqrt(D/h)) V_i."""
    T, D = nx.value_of(x).shape
    if D % h:
        raise ValueError(f"heads={h} does not divide width {D}")
    dh = D // h
    Q, K, V = nx.matmul(x, w_q), nx.matmul(x, w_k), nx.matmul(x, w_v)
    heads = []
    for i in range(h):
        cols = (slice(None), slice(i * dh, (i + 1) * dh))
        q, k, v = nx.getitem(Q, cols), nx.getitem(K, cols), nx.getitem(V, cols)
        a = nx.scaled_softmax_rows(nx.matmul(q, nx.transpose(k, (1, 0))), dh)
        heads.append(nx.matmul(a, v))
    return nx.matmul(nx.concat(heads, axis=1), w_out)


def load_config(path, **overrides) -> ModelConfig:
    return ModelConfig.from_text(Path(path).read_text(), **overrides)
