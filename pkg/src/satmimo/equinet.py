"""Permutation-equivariant precoding networks and their weight containers.

Two fixed-depth architectures map link statistics to the closed-form tuple
(w, u, lambda, rho, b):

* centralized: one tensor network over the full S x K feature grid,
  equivariant to satellite and terminal permutations;
* decentralized: per-satellite networks (shared weights) combining a local
  1-D branch over terminals with an other-satellite 2-D branch pooled by
  multihead attention, invariant to other-satellite order and equivariant
  to terminal order.

Inference is a fixed feed-forward pass: no iteration caps, no data-dependent
loops.  Weights live in a small binary container (magic ``EQWT``) with a
human-readable sidecar manifest.
"""
from __future__ import annotations

import math
import struct
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .channel import ScenarioInstance
from .errors import ShapeMismatch, WeightFormatError
from .recovery import PredictedTuple

ARCH_CENTRALIZED = "centralized"
ARCH_DECENTRALIZED = "decentralized"
_ARCH_TAGS = {ARCH_CENTRALIZED: 0, ARCH_DECENTRALIZED: 1}
_TAG_ARCHS = {v: k for k, v in _ARCH_TAGS.items()}

_MAGIC = b"EQWT"
_FORMAT_VERSION = 1
_LN_EPS = 1e-5
_W_FLOOR = 1e-6
_LAM_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# dims and tensor registries


@dataclass(frozen=True)
class CenDims:
    d_in: int  # per-link feature width D = 8 + 2M^2 + 2N^2
    hidden: int
    fused: int  # F, width after the equivariant trunk
    out: int  # G = 6 + 2N, decoded channels
    depth: int  # number of equivariant blocks

    def as_tuple(self) -> tuple[int, ...]:
        return (self.d_in, self.hidden, self.fused, self.out, self.depth)


@dataclass(frozen=True)
class DecDims:
    d_loc: int  # local feature width, 8 + 2M^2 + 2N^2
    d_oth: int  # other-satellite feature width, 6 + 2M^2 + 2N^2
    hidden_loc: int
    hidden_oth: int
    fused_loc: int
    fused_oth: int
    out: int  # G = 6 + 2N
    depth: int
    heads: int

    def as_tuple(self) -> tuple[int, ...]:
        return (
            self.d_loc,
            self.d_oth,
            self.hidden_loc,
            self.hidden_oth,
            self.fused_loc,
            self.fused_oth,
            self.out,
            self.depth,
            self.heads,
        )


def feature_width(m: int, n: int) -> int:
    """Centralized/local per-link feature width D = 8 + 2M^2 + 2N^2."""
    return 8 + 2 * m * m + 2 * n * n


def other_feature_width(m: int, n: int) -> int:
    """Other-satellite feature width 6 + 2M^2 + 2N^2."""
    return 6 + 2 * m * m + 2 * n * n


def out_width(n: int) -> int:
    """Decoded channel count G = 6 + 2N."""
    return 6 + 2 * n


def default_cen_dims(m: int, n: int, hidden: int = 128, fused: int = 64, depth: int = 4):
    return CenDims(feature_width(m, n), hidden, fused, out_width(n), depth)


def default_dec_dims(
    m: int,
    n: int,
    hidden_loc: int = 96,
    hidden_oth: int = 96,
    fused_loc: int = 64,
    fused_oth: int = 64,
    depth: int = 4,
    heads: int = 4,
):
    return DecDims(
        feature_width(m, n),
        other_feature_width(m, n),
        hidden_loc,
        hidden_oth,
        fused_loc,
        fused_oth,
        out_width(n),
        depth,
        heads,
    )


def _trunk_shapes(prefix: str, d_in: int, hidden: int, fused: int, depth: int, pats: int):
    shapes = {f"{prefix}in.w": (d_in, hidden), f"{prefix}in.b": (hidden,)}
    for i in range(depth):
        for j in range(pats):
            shapes[f"{prefix}blk{i}.mde.p{j}.w"] = (hidden, hidden)
            shapes[f"{prefix}blk{i}.mde.p{j}.b"] = (hidden,)
        shapes[f"{prefix}blk{i}.ln.g"] = (hidden,)
        shapes[f"{prefix}blk{i}.ln.b"] = (hidden,)
    shapes[f"{prefix}out.w"] = (hidden, fused)
    shapes[f"{prefix}out.b"] = (fused,)
    return shapes


def _fda_shapes(d_in: int, out: int):
    return {
        "fda.ln.g": (d_in,),
        "fda.ln.b": (d_in,),
        "fda.l1.w": (d_in, out),
        "fda.l1.b": (out,),
        "fda.l2.w": (out, out),
        "fda.l2.b": (out,),
    }


def tensor_shapes(arch: str, dims) -> dict[str, tuple[int, ...]]:
    """The full name -> shape table of one architecture."""
    if arch == ARCH_CENTRALIZED:
        shapes = _trunk_shapes("", dims.d_in, dims.hidden, dims.fused, dims.depth, 4)
        shapes.update(_fda_shapes(dims.fused, dims.out))
        return shapes
    if arch == ARCH_DECENTRALIZED:
        shapes = _trunk_shapes(
            "loc.", dims.d_loc, dims.hidden_loc, dims.fused_loc, dims.depth, 2
        )
        shapes.update(
            _trunk_shapes(
                "oth.", dims.d_oth, dims.hidden_oth, dims.fused_oth, dims.depth, 4
            )
        )
        f = dims.fused_oth
        shapes["pma.seed"] = (f,)
        for name in ("q", "k", "v", "o"):
            shapes[f"pma.w{name}"] = (f, f)
            shapes[f"pma.b{name}"] = (f,)
        shapes.update(_fda_shapes(dims.fused_loc + dims.fused_oth, dims.out))
        return shapes
    raise WeightFormatError(f"unknown architecture {arch!r}")


@dataclass
class EquiWeights:
    """A named-tensor bundle plus its architecture and dimension block."""

    arch: str
    dims: CenDims | DecDims
    tensors: dict[str, np.ndarray]

    def tensor(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightFormatError(f"missing tensor {name!r}") from None

    def validate(self) -> None:
        expected = tensor_shapes(self.arch, self.dims)
        have = set(self.tensors)
        want = set(expected)
        if have != want:
            missing = sorted(want - have)
            extra = sorted(have - want)
            raise WeightFormatError(
                f"tensor table mismatch: missing {missing}, unexpected {extra}"
            )
        for name, shape in expected.items():
            if tuple(self.tensors[name].shape) != shape:
                raise WeightFormatError(
                    f"{name}: shape {self.tensors[name].shape}, expected {shape}"
                )
        derive_array_dims(self.arch, self.dims)  # consistency of (D, G)


def derive_array_dims(arch: str, dims) -> tuple[int, int]:
    """Recover (M, N) implied by the dimension block, validating consistency."""
    g = dims.out
    if g < 8 or (g - 6) % 2:
        raise WeightFormatError(f"output width {g} is not 6 + 2N")
    n = (g - 6) // 2
    d = dims.d_in if arch == ARCH_CENTRALIZED else dims.d_loc
    rem = d - 8 - 2 * n * n
    if rem <= 0 or rem % 2:
        raise WeightFormatError(f"feature width {d} is not 8 + 2M^2 + 2N^2")
    m = math.isqrt(rem // 2)
    if 2 * m * m != rem:
        raise WeightFormatError(f"feature width {d} implies a non-square M^2")
    if arch == ARCH_DECENTRALIZED:
        if dims.d_oth != dims.d_loc - 2:
            raise WeightFormatError("other-satellite width must be local width - 2")
        if dims.fused_oth % dims.heads:
            raise WeightFormatError("attention width must divide evenly into heads")
    return m, n


def random_weights(arch: str, dims, seed=None) -> EquiWeights:
    """Randomly initialized weights (1/sqrt(fan-in) scaling); used both as a
    test fixture and as the train-time initializer convention."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(arch, dims).items():
        if name.endswith(".ln.g"):
            arr = 1.0 + 0.02 * rng.standard_normal(shape)
        elif name.endswith(".ln.b"):
            arr = 0.02 * rng.standard_normal(shape)
        elif name.endswith(".b") or name.startswith("pma.b"):
            arr = 0.02 * rng.standard_normal(shape)
        elif name == "pma.seed":
            arr = rng.standard_normal(shape) / math.sqrt(shape[0])
        else:
            arr = rng.standard_normal(shape) / math.sqrt(shape[0])
        tensors[name] = arr.astype(np.float32)
    return EquiWeights(arch=arch, dims=dims, tensors=tensors)


# ---------------------------------------------------------------------------
# container serialization


def save_weights(weights: EquiWeights, path) -> None:
    """Write the binary container and its sidecar text manifest.

    Layout: magic ``EQWT`` | u32 format version | u8 arch tag | dims block
    (u32 each, count fixed by the arch) | tensor records until EOF, each
    ``u16 name length | name utf-8 | u8 rank | u32 dims | float32 LE payload
    (row-major)``.  Tensors are written in sorted-name order.
    """
    weights.validate()
    path = str(path)
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<I", _FORMAT_VERSION)
    blob += struct.pack("<B", _ARCH_TAGS[weights.arch])
    for v in weights.dims.as_tuple():
        blob += struct.pack("<I", v)
    for name in sorted(weights.tensors):
        arr = np.ascontiguousarray(weights.tensors[name], dtype="<f4")
        enc = name.encode("utf-8")
        blob += struct.pack("<H", len(enc))
        blob += enc
        blob += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            blob += struct.pack("<I", d)
        blob += arr.tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(blob)
    with open(path + ".manifest.txt", "w", encoding="utf-8") as fh:
        fh.write(f"eqwt manifest (format {_FORMAT_VERSION})\n")
        fh.write(f"arch {weights.arch}\n")
        fh.write("dims " + " ".join(str(v) for v in weights.dims.as_tuple()) + "\n")
        for name in sorted(weights.tensors):
            shape = "x".join(str(d) for d in weights.tensors[name].shape)
            fh.write(f"tensor {name} {shape}\n")


def _dims_from(arch: str, vals: tuple[int, ...]):
    if arch == ARCH_CENTRALIZED:
        return CenDims(*vals)
    return DecDims(*vals)


def load_weights(path) -> EquiWeights:
    """Read a container written by save_weights (or a bit-exact sibling)."""
    with open(str(path), "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise WeightFormatError("bad magic; not a weight container")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != _FORMAT_VERSION:
        raise WeightFormatError(f"unsupported container version {version}")
    (tag,) = struct.unpack_from("<B", blob, off)
    off += 1
    if tag not in _TAG_ARCHS:
        raise WeightFormatError(f"unknown architecture tag {tag}")
    arch = _TAG_ARCHS[tag]
    ndims = 5 if arch == ARCH_CENTRALIZED else 9
    if off + 4 * ndims > len(blob):
        raise WeightFormatError("truncated dims block")
    vals = struct.unpack_from(f"<{ndims}I", blob, off)
    off += 4 * ndims
    dims = _dims_from(arch, vals)

    tensors: dict[str, np.ndarray] = {}
    while off < len(blob):
        if off + 2 > len(blob):
            raise WeightFormatError("truncated tensor record")
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", blob, off)
        off += 1
        if off + 4 * rank > len(blob):
            raise WeightFormatError(f"truncated shape for {name!r}")
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        nbytes = 4 * count
        if off + nbytes > len(blob):
            raise WeightFormatError(f"truncated payload for {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        tensors[name] = arr.reshape(shape).astype(np.float32)
        off += nbytes
    weights = EquiWeights(arch=arch, dims=dims, tensors=tensors)
    weights.validate()
    return weights


def validate_weights(path) -> dict:
    """Integrity check of a container (and its manifest, when present).

    Returns a summary dict; raises WeightFormatError on any inconsistency.
    """
    weights = load_weights(path)
    m, n = derive_array_dims(weights.arch, weights.dims)
    manifest = str(path) + ".manifest.txt"
    try:
        with open(manifest, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except FileNotFoundError:
        lines = None
    if lines is not None:
        listed = {}
        for ln in lines:
            parts = ln.split()
            if parts[0] == "tensor":
                listed[parts[1]] = tuple(int(d) for d in parts[2].split("x"))
            elif parts[0] == "arch" and parts[1] != weights.arch:
                raise WeightFormatError("manifest arch disagrees with container")
            elif parts[0] == "dims":
                if tuple(int(v) for v in parts[1:]) != weights.dims.as_tuple():
                    raise WeightFormatError("manifest dims disagree with container")
        if listed and listed != {
            k: tuple(v.shape) for k, v in weights.tensors.items()
        }:
            raise WeightFormatError("manifest tensor table disagrees with container")
    return {
        "arch": weights.arch,
        "dims": weights.dims.as_tuple(),
        "tensors": len(weights.tensors),
        "parameters": int(sum(t.size for t in weights.tensors.values())),
        "m": m,
        "n": n,
    }


# ---------------------------------------------------------------------------
# op counting (used to assert the fixed-op-count contract)

_ACTIVE_COUNTER = None


class OpCounter:
    def __init__(self):
        self.counts: dict[str, int] = {}

    def add(self, label: str):
        self.counts[label] = self.counts.get(label, 0) + 1


@contextmanager
def count_ops():
    """Context manager recording every primitive op (with shapes) executed
    by the forward functions; two runs at equal (S, K, M, N) must agree."""
    global _ACTIVE_COUNTER
    counter = OpCounter()
    _ACTIVE_COUNTER = counter
    try:
        yield counter
    finally:
        _ACTIVE_COUNTER = None


def _tally(label: str):
    if _ACTIVE_COUNTER is not None:
        _ACTIVE_COUNTER.add(label)


# ---------------------------------------------------------------------------
# primitives


def _f64(weights: EquiWeights, name: str) -> np.ndarray:
    return weights.tensor(name).astype(np.float64)


def _linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    _tally(f"linear:{w.shape[0]}x{w.shape[1]}:in{x.shape}")
    return x @ w + b


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Normalization over the trailing (feature) axis."""
    _tally(f"ln:{x.shape[-1]}")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * gain + bias


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian-CDF GELU (kept exact for trainer/inference parity)."""
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _pool_patterns(x: np.ndarray) -> list[np.ndarray]:
    e = x.ndim - 1
    if e == 1:
        return [x, np.broadcast_to(x.mean(axis=0, keepdims=True), x.shape)]
    if e == 2:
        both = x.mean(axis=(0, 1), keepdims=True)
        return [
            x,
            np.broadcast_to(x.mean(axis=0, keepdims=True), x.shape),
            np.broadcast_to(x.mean(axis=1, keepdims=True), x.shape),
            np.broadcast_to(both, x.shape),
        ]
    raise ShapeMismatch(f"equivariant rank must be 1 or 2, got {e}")


def mde_forward(x: np.ndarray, pattern_weights) -> np.ndarray:
    """Multidimensional-equivariant layer: sum of per-pattern affine maps of
    the identity/mean pooling patterns (2 patterns for 1-D, 4 for 2-D)."""
    pools = _pool_patterns(x)
    if len(pools) != len(pattern_weights):
        raise ShapeMismatch(
            f"{len(pattern_weights)} pattern maps for {len(pools)} pooling patterns"
        )
    _tally(f"mde:{x.shape[-1]}:e{x.ndim - 1}")
    out = None
    for pool, (w, b) in zip(pools, pattern_weights):
        term = pool @ w + b
        out = term if out is None else out + term
    return out


def ten_forward(
    x: np.ndarray, weights: EquiWeights, prefix: str = "", depth: int | None = None
) -> np.ndarray:
    """Equivariant trunk: linear lift, `depth` x (MDE -> ReLU -> LayerNorm),
    linear head.  Equivariant rank is implied by x (features on last axis)."""
    depth = weights.dims.depth if depth is None else depth
    pats = 2 if x.ndim - 1 == 1 else 4
    h = _linear(x, _f64(weights, f"{prefix}in.w"), _f64(weights, f"{prefix}in.b"))
    for i in range(depth):
        pws = [
            (
                _f64(weights, f"{prefix}blk{i}.mde.p{j}.w"),
                _f64(weights, f"{prefix}blk{i}.mde.p{j}.b"),
            )
            for j in range(pats)
        ]
        h = mde_forward(h, pws)
        h = np.maximum(h, 0.0)
        h = layer_norm(
            h, _f64(weights, f"{prefix}blk{i}.ln.g"), _f64(weights, f"{prefix}blk{i}.ln.b")
        )
    return _linear(h, _f64(weights, f"{prefix}out.w"), _f64(weights, f"{prefix}out.b"))


def pma_pool(x: np.ndarray, weights: EquiWeights) -> np.ndarray:
    """Pooling by multihead attention over axis 0 of a (R, K, F) stack.

    A learned seed query attends to the R rows independently per terminal;
    the result is invariant to any permutation of the rows.
    """
    if x.ndim != 3:
        raise ShapeMismatch("pma_pool expects a (rows, K, F) stack")
    r, k_n, f = x.shape
    heads = weights.dims.heads
    dh = f // heads
    _tally(f"pma:{r}x{k_n}x{f}h{heads}")
    q = _f64(weights, "pma.seed") @ _f64(weights, "pma.wq") + _f64(weights, "pma.bq")
    keys = x @ _f64(weights, "pma.wk") + _f64(weights, "pma.bk")
    vals = x @ _f64(weights, "pma.wv") + _f64(weights, "pma.bv")
    q = q.reshape(heads, dh)
    keys = keys.reshape(r, k_n, heads, dh)
    vals = vals.reshape(r, k_n, heads, dh)
    logits = np.einsum("hd,rkhd->rkh", q, keys) / math.sqrt(dh)
    logits -= logits.max(axis=0, keepdims=True)
    att = np.exp(logits)
    att /= att.sum(axis=0, keepdims=True)
    pooled = np.einsum("rkh,rkhd->khd", att, vals).reshape(k_n, f)
    return pooled @ _f64(weights, "pma.wo") + _f64(weights, "pma.bo")


def fda_forward(t: np.ndarray, weights: EquiWeights) -> np.ndarray:
    """Feature-decoding head: LayerNorm -> Linear -> GELU -> Linear.

    (The training-time dropout between GELU and the last linear layer is the
    identity at inference.)
    """
    h = layer_norm(t, _f64(weights, "fda.ln.g"), _f64(weights, "fda.ln.b"))
    h = _linear(h, _f64(weights, "fda.l1.w"), _f64(weights, "fda.l1.b"))
    h = gelu(h)
    return _linear(h, _f64(weights, "fda.l2.w"), _f64(weights, "fda.l2.b"))


# ---------------------------------------------------------------------------
# feature construction


@dataclass
class InputTensors:
    """Network features of one scenario, laid out exactly as documented.

    a[s,k] = [phi_sat, theta_sat, phi_ut, theta_ut, sigma_k^2, P_s]
    r[s,k] = [vec Re r_ut | vec Im r_ut | vec Re r_sat | vec Im r_sat]
    b[s,k] = [beta, kappa]
    u[s,k] = [vec Re d0 d0^H | vec Im d0 d0^H | vec Re g g^H | vec Im g g^H]

    (vec = row-major flatten; r_sat = beta * g g^H.)
    """

    a: np.ndarray  # (S, K, 6)
    r: np.ndarray  # (S, K, 2M^2 + 2N^2)
    b: np.ndarray  # (S, K, 2)
    u: np.ndarray  # (S, K, 2M^2 + 2N^2)

    def x_cen(self) -> np.ndarray:
        """Centralized feature grid [A | R | B], shape (S, K, D)."""
        return np.concatenate([self.a, self.r, self.b], axis=-1)

    def x_loc(self, s: int) -> np.ndarray:
        """Local features of satellite s, shape (K, D)."""
        return self.x_cen()[s]

    def x_oth(self, s: int) -> np.ndarray:
        """Other-satellite features [A | U] excluding s, shape (S-1, K, D-2)."""
        keep = [t for t in range(self.a.shape[0]) if t != s]
        return np.concatenate([self.a[keep], self.u[keep]], axis=-1)


def _vec_herm(mat: np.ndarray) -> np.ndarray:
    # (..., N, N) -> (..., 2N^2): row-major Re block then Im block.
    flat_re = mat.real.reshape(*mat.shape[:-2], -1)
    flat_im = mat.imag.reshape(*mat.shape[:-2], -1)
    return np.concatenate([flat_re, flat_im], axis=-1)


def build_inputs(scn: ScenarioInstance) -> InputTensors:
    """Assemble the feature tensors of a scenario (float64)."""
    s_n, k_n = scn.num_sats, scn.num_uts
    a = np.empty((s_n, k_n, 6))
    a[..., 0] = scn.phi_sat
    a[..., 1] = scn.theta_sat
    a[..., 2] = scn.phi_ut
    a[..., 3] = scn.theta_ut
    a[..., 4] = np.broadcast_to(scn.noise[None, :], (s_n, k_n))
    a[..., 5] = np.broadcast_to(scn.budgets[:, None], (s_n, k_n))

    r_sat = scn.beta[..., None, None] * np.einsum(
        "ska,skb->skab", scn.g, scn.g.conj()
    )
    r = np.concatenate([_vec_herm(scn.r_ut), _vec_herm(r_sat)], axis=-1)

    b = np.stack([scn.beta, scn.kappa], axis=-1)

    dd = np.einsum("ska,skb->skab", scn.d0, scn.d0.conj())
    gg = np.einsum("ska,skb->skab", scn.g, scn.g.conj())
    u = np.concatenate([_vec_herm(dd), _vec_herm(gg)], axis=-1)
    return InputTensors(a=a, r=r, b=b, u=u)


# ---------------------------------------------------------------------------
# CFR decode and inference


@dataclass
class DecPrediction:
    """Per-satellite slice of the closed-form tuple."""

    w: np.ndarray  # (K,)
    u: np.ndarray  # (K,) complex
    lam: float
    rho: np.ndarray  # (K,) complex
    b: np.ndarray  # (K, N) complex


def cfr_decode(c: np.ndarray, n: int, mode: str):
    """Decode the G = 6 + 2N channels per link into the closed-form tuple.

    Channel order: [w_raw, Re u, Im u, lam_raw, Re rho, Im rho,
    Re b (N), Im b (N)]; w = softplus(w_raw) + 1e-6 and, per satellite,
    lambda = softplus(mean_k lam_raw) + 1e-8.
    """
    if c.shape[-1] != 6 + 2 * n:
        raise ShapeMismatch(f"decode expects {6 + 2 * n} channels, got {c.shape[-1]}")
    _tally(f"cfr:{c.shape[-1]}")
    w = softplus(c[..., 0]) + _W_FLOOR
    u = c[..., 1] + 1j * c[..., 2]
    rho = c[..., 4] + 1j * c[..., 5]
    b = c[..., 6 : 6 + n] + 1j * c[..., 6 + n : 6 + 2 * n]
    if mode == "centralized":
        if c.ndim != 3:
            raise ShapeMismatch("centralized decode expects an (S, K, G) grid")
        lam = softplus(c[..., 3].mean(axis=1)) + _LAM_FLOOR
        return PredictedTuple(w=w, u=u, lam=lam, rho=rho, b=b)
    if mode == "decentralized":
        if c.ndim != 2:
            raise ShapeMismatch("decentralized decode expects a (K, G) grid")
        lam = float(softplus(c[..., 3].mean()) + _LAM_FLOOR)
        return DecPrediction(w=w, u=u, lam=lam, rho=rho, b=b)
    raise ShapeMismatch(f"unknown decode mode {mode!r}")


def _check_arch(weights: EquiWeights, arch: str, scn: ScenarioInstance):
    if weights.arch != arch:
        raise ShapeMismatch(f"weights are {weights.arch!r}, expected {arch!r}")
    m, n = derive_array_dims(weights.arch, weights.dims)
    if (m, n) != (scn.m, scn.n):
        raise ShapeMismatch(
            f"weights built for (M, N) = ({m}, {n}); scenario has ({scn.m}, {scn.n})"
        )


def infer_centralized(scn: ScenarioInstance, weights: EquiWeights) -> PredictedTuple:
    """Full-grid forward pass: features -> trunk -> decode head -> tuple."""
    _check_arch(weights, ARCH_CENTRALIZED, scn)
    x = build_inputs(scn).x_cen()
    t = ten_forward(x, weights)
    c = fda_forward(t, weights)
    return cfr_decode(c, scn.n, "centralized")


def infer_decentralized(
    scn: ScenarioInstance, weights: EquiWeights, s: int
) -> DecPrediction:
    """Satellite-s forward pass over its local and other-satellite features."""
    _check_arch(weights, ARCH_DECENTRALIZED, scn)
    if scn.num_sats < 2:
        raise ShapeMismatch("decentralized inference needs at least two satellites")
    feats = build_inputs(scn)
    t_loc = ten_forward(feats.x_loc(s), weights, prefix="loc.")
    t_oth = ten_forward(feats.x_oth(s), weights, prefix="oth.")
    pooled = pma_pool(t_oth, weights)
    c = fda_forward(np.concatenate([t_loc, pooled], axis=-1), weights)
    return cfr_decode(c, scn.n, "decentralized")


def assemble_decentralized(scn: ScenarioInstance, weights: EquiWeights) -> PredictedTuple:
    """Stack the per-satellite decentralized slices into one tuple."""
    slices = [infer_decentralized(scn, weights, s) for s in range(scn.num_sats)]
    return PredictedTuple(
        w=np.stack([sl.w for sl in slices]),
        u=np.stack([sl.u for sl in slices]),
        lam=np.array([sl.lam for sl in slices]),
        rho=np.stack([sl.rho for sl in slices]),
        b=np.stack([sl.b for sl in slices]),
    )
