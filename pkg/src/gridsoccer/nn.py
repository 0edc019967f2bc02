"""Small numpy network core: valid convolutions, dense layers, ReLU, softmax.

Inputs are batched ``(N, H, W, C)`` arrays. A network is a :class:`NetworkSpec`
(input shape plus a chain of :class:`LayerSpec`) and a :class:`NetworkParams`
holding one ``(weight, bias)`` pair per parametric layer. Gradients are exact;
see :mod:`gridsoccer.gradcheck` for the finite-difference suite.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    """Non-finite loss or gradient."""


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv | dense | relu | softmax | flatten | concat
    out: int = 0
    kh: int = 0
    kw: int = 0
    stride: int = 1

    def to_json(self) -> dict:
        return {"kind": self.kind, "out": self.out, "kh": self.kh, "kw": self.kw, "stride": self.stride}


def Conv(out: int, kh: int, kw: int, stride: int = 1) -> LayerSpec:
    return LayerSpec("conv", out, kh, kw, stride)


def Dense(out: int) -> LayerSpec:
    return LayerSpec("dense", out)


def ReLU() -> LayerSpec:
    return LayerSpec("relu")


def Softmax() -> LayerSpec:
    return LayerSpec("softmax")


def Flatten() -> LayerSpec:
    return LayerSpec("flatten")


def ConcatSide(extra: int) -> LayerSpec:
    return LayerSpec("concat", extra)


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]  # (H, W, C) or (D,)
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()

    def shapes(self) -> list[tuple[int, ...]]:
        """Output shape (without batch axis) after each layer."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            k = layer.kind
            if k == "conv":
                if len(shape) != 3:
                    raise ShapeError(f"layer {i}: conv needs (H, W, C) input, got {shape}")
                H, W, _ = shape
                if layer.kh > H or layer.kw > W or layer.stride < 1:
                    raise ShapeError(f"layer {i}: {layer.kh}x{layer.kw} kernel does not fit {shape}")
                shape = ((H - layer.kh) // layer.stride + 1, (W - layer.kw) // layer.stride + 1, layer.out)
            elif k == "dense":
                if len(shape) != 1:
                    raise ShapeError(f"layer {i}: dense needs flat input, got {shape}")
                shape = (layer.out,)
            elif k == "flatten":
                shape = (int(np.prod(shape)),)
            elif k == "concat":
                if len(shape) != 1:
                    raise ShapeError(f"layer {i}: concat needs flat input, got {shape}")
                shape = (shape[0] + layer.out,)
            elif k in ("relu", "softmax"):
                pass
            else:
                raise ShapeError(f"unknown layer kind {k!r}")
            out.append(shape)
        return out

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes()[-1] if self.layers else self.input_shape

    @property
    def side_dim(self) -> int:
        return sum(layer.out for layer in self.layers if layer.kind == "concat")

    def to_json(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [layer.to_json() for layer in self.layers]}

    @classmethod
    def from_json(cls, data: dict) -> "NetworkSpec":
        return cls(tuple(data["input_shape"]), tuple(LayerSpec(**d) for d in data["layers"]))

    def fingerprint(self) -> bytes:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()

    def param_shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]] | None]:
        shape = self.input_shape
        result = []
        for layer, nxt in zip(self.layers, self.shapes()):
            if layer.kind == "conv":
                result.append(((layer.kh, layer.kw, shape[2], layer.out), (layer.out,)))
            elif layer.kind == "dense":
                result.append(((shape[0], layer.out), (layer.out,)))
            else:
                result.append(None)
            shape = nxt
        return result

    def param_count(self) -> int:
        return sum(int(np.prod(w)) + int(np.prod(b)) for w, b in filter(None, self.param_shapes()))


@dataclass
class NetworkParams:
    spec: NetworkSpec
    layers: list[tuple[np.ndarray, np.ndarray] | None]
    init: str = "he_uniform"

    def arrays(self) -> list[np.ndarray]:
        out = []
        for pair in self.layers:
            if pair is not None:
                out.extend(pair)
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.spec,
            [None if p is None else (p[0].copy(), p[1].copy()) for p in self.layers],
            self.init,
        )

    def assign(self, other: "NetworkParams") -> None:
        """In-place copy of ``other``'s values into this parameter set."""
        for dst, src in zip(self.arrays(), other.arrays()):
            dst[...] = src

    @property
    def count(self) -> int:
        return sum(a.size for a in self.arrays())

    def equals(self, other: "NetworkParams") -> bool:
        return self.spec == other.spec and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


def init_params(spec: NetworkSpec, rng: np.random.Generator, scheme: str = "he_uniform") -> NetworkParams:
    layers: list[tuple[np.ndarray, np.ndarray] | None] = []
    for shapes in spec.param_shapes():
        if shapes is None:
            layers.append(None)
            continue
        wshape, bshape = shapes
        if scheme == "zeros":
            w = np.zeros(wshape)
        elif scheme == "he_uniform":
            fan_in = int(np.prod(wshape[:-1]))
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=wshape)
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
        layers.append((w, np.zeros(bshape)))
    return NetworkParams(spec, layers, scheme)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> tuple[np.ndarray, int, int]:
    N, H, W, C = x.shape
    Ho = (H - kh) // stride + 1
    Wo = (W - kw) // stride + 1
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # N, H', W', C, kh, kw
    win = win[:, : (Ho - 1) * stride + 1 : stride, : (Wo - 1) * stride + 1 : stride]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(N * Ho * Wo, kh * kw * C)
    return cols, Ho, Wo


def forward(params: NetworkParams, x: np.ndarray, side: np.ndarray | None = None):
    """Run the batch ``x`` (and optional side input) through the network.

    Returns ``(output, cache)``; the cache is consumed by :func:`backward`.
    """
    spec = params.spec
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != spec.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} does not match {spec.input_shape}")
    if (side is None) != (spec.side_dim == 0):
        raise ShapeError("side input must be given iff the network has a concat layer")
    N = x.shape[0]
    cache = []
    side_at = 0
    for layer, pair in zip(spec.layers, params.layers):
        k = layer.kind
        if k == "conv":
            w, b = pair
            cols, Ho, Wo = _im2col(x, layer.kh, layer.kw, layer.stride)
            cache.append((cols, x.shape))
            x = (cols @ w.reshape(-1, layer.out) + b).reshape(N, Ho, Wo, layer.out)
        elif k == "dense":
            w, b = pair
            cache.append(x)
            x = x @ w + b
        elif k == "relu":
            mask = x > 0
            cache.append(mask)
            x = x * mask
        elif k == "softmax":
            z = np.exp(x - x.max(axis=-1, keepdims=True))
            x = z / z.sum(axis=-1, keepdims=True)
            cache.append(x)
        elif k == "flatten":
            cache.append(x.shape)
            x = x.reshape(N, -1)
        elif k == "concat":
            part = np.asarray(side, dtype=np.float64)[:, side_at : side_at + layer.out]
            if part.shape != (N, layer.out):
                raise ShapeError(f"side input needs {layer.out} columns at offset {side_at}")
            side_at += layer.out
            cache.append(x.shape[1])
            x = np.concatenate([x, part], axis=1)
    if side is not None and np.asarray(side).shape[1] != side_at:
        raise ShapeError(f"side input has {np.asarray(side).shape[1]} columns, network uses {side_at}")
    return x, cache


def predict(params: NetworkParams, x: np.ndarray, side: np.ndarray | None = None) -> np.ndarray:
    return forward(params, x, side)[0]


def backward(params: NetworkParams, cache, grad_out: np.ndarray):
    """Gradients of ``sum(grad_out * output)``.

    Returns ``(grads, grad_input, grad_side)`` where ``grads`` aligns with
    ``params.layers`` (``None`` for parameter-free layers).
    """
    spec = params.spec
    g = np.asarray(grad_out, dtype=np.float64)
    grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(spec.layers)
    side_parts = []
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, c = spec.layers[i], cache[i]
        k = layer.kind
        if k == "conv":
            w, _ = params.layers[i]
            cols, xshape = c
            N, H, W, C = xshape
            g2 = g.reshape(-1, layer.out)
            grads[i] = ((cols.T @ g2).reshape(w.shape), g2.sum(axis=0))
            dcols = (g2 @ w.reshape(-1, layer.out).T).reshape(
                N, g.shape[1], g.shape[2], layer.kh, layer.kw, C
            )
            dx = np.zeros(xshape)
            s, Ho, Wo = layer.stride, g.shape[1], g.shape[2]
            for a in range(layer.kh):
                for b in range(layer.kw):
                    dx[:, a : a + s * (Ho - 1) + 1 : s, b : b + s * (Wo - 1) + 1 : s, :] += dcols[:, :, :, a, b, :]
            g = dx
        elif k == "dense":
            w, _ = params.layers[i]
            grads[i] = (c.T @ g, g.sum(axis=0))
            g = g @ w.T
        elif k == "relu":
            g = g * c
        elif k == "softmax":
            g = c * (g - (g * c).sum(axis=-1, keepdims=True))
        elif k == "flatten":
            g = g.reshape(c)
        elif k == "concat":
            side_parts.append(g[:, c:])
            g = g[:, :c]
    grad_side = np.concatenate(side_parts[::-1], axis=1) if side_parts else None
    return grads, g, grad_side


def flat_grads(grads) -> list[np.ndarray]:
    out = []
    for pair in grads:
        if pair is not None:
            out.extend(pair)
    return out


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams, lr: float = 1e-3, **kw) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], lr=lr, **kw)


def adam_step(params: NetworkParams, grads, state: AdamState) -> None:
    """In-place Adam update with bias correction."""
    flat = grads if all(isinstance(g, np.ndarray) for g in grads) else flat_grads(grads)
    for gr in flat:
        # a sum is non-finite iff some entry is (or the magnitudes overflow, which is also fatal)
        if not np.isfinite(gr.sum()):
            raise TrainingError("non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    # lr * mhat / (sqrt(vhat) + eps) with the corrections folded into two scalars
    step = state.lr * np.sqrt(c2) / c1
    eps_hat = state.eps * np.sqrt(c2)
    for p, gr, m, v in zip(params.arrays(), flat, state.m, state.v):
        tmp = np.multiply(gr, 1.0 - b1)
        m *= b1
        m += tmp
        np.multiply(gr, gr, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp += eps_hat
        np.divide(m, tmp, out=tmp)
        tmp *= step
        p -= tmp


# Checkpoint file layout (all integers little-endian):
#   magic b"GSNN" | u16 version | u32 number of parameter sets
#   per set: u32 name length, name utf-8 | u32 spec json length, spec json
#            | 32-byte sha256 spec fingerprint | u32 tensor count
#            | per tensor: u32 ndim, ndim x u32 dims, float64 values
MAGIC = b"GSNN"
VERSION = 1


def _write_set(buf: io.BytesIO, name: str, params: NetworkParams) -> None:
    nm = name.encode()
    spec_blob = json.dumps(params.spec.to_json(), sort_keys=True).encode()
    buf.write(struct.pack("<I", len(nm)) + nm)
    buf.write(struct.pack("<I", len(spec_blob)) + spec_blob)
    buf.write(params.spec.fingerprint())
    arrays = params.arrays()
    buf.write(struct.pack("<I", len(arrays)))
    for a in arrays:
        buf.write(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def save_bundle(bundle: dict[str, NetworkParams], path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<HI", VERSION, len(bundle)))
    for name, params in bundle.items():
        _write_set(buf, name, params)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def load_bundle(path, expected: dict[str, NetworkSpec] | None = None) -> dict[str, NetworkParams]:
    """Read every parameter set; verify fingerprints against ``expected`` if given."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<HI", _read_exact(fh, 6))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        out = {}
        for _ in range(count):
            (ln,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, ln).decode()
            (ls,) = struct.unpack("<I", _read_exact(fh, 4))
            spec = NetworkSpec.from_json(json.loads(_read_exact(fh, ls)))
            fp = _read_exact(fh, 32)
            if fp != spec.fingerprint():
                raise CheckpointError(f"{path}: corrupt spec for {name!r}")
            if expected is not None and name in expected and expected[name].fingerprint() != fp:
                raise CheckpointError(f"{path}: {name!r} was saved for a different network spec")
            (nt,) = struct.unpack("<I", _read_exact(fh, 4))
            arrays = []
            for _ in range(nt):
                (nd,) = struct.unpack("<I", _read_exact(fh, 4))
                shape = struct.unpack(f"<{nd}I", _read_exact(fh, 4 * nd))
                size = int(np.prod(shape)) if nd else 1
                arrays.append(np.frombuffer(_read_exact(fh, 8 * size), dtype="<f8").reshape(shape).astype(np.float64))
            params = init_params(spec, np.random.default_rng(0), "zeros")
            if len(arrays) != len(params.arrays()):
                raise CheckpointError(f"{path}: tensor count mismatch for {name!r}")
            for dst, src in zip(params.arrays(), arrays):
                if dst.shape != src.shape:
                    raise CheckpointError(f"{path}: tensor shape mismatch for {name!r}")
                dst[...] = src
            out[name] = params
        if expected is not None:
            missing = set(expected) - set(out)
            if missing:
                raise CheckpointError(f"{path}: missing parameter sets {sorted(missing)}")
    return out


def save_params(params: NetworkParams, path) -> None:
    save_bundle({"net": params}, path)


def load_params(path, spec: NetworkSpec | None = None) -> NetworkParams:
    bundle = load_bundle(path, None if spec is None else {"net": spec})
    return bundle["net"]
