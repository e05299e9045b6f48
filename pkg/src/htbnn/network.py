"""ReLU network data model, evaluation and network calculus.

A network of depth ``L`` with width vector ``r = (r_0, ..., r_{L+1})`` realizes

    f = A_{L+1} o relu o A_L o ... o relu o A_1,     A_l(y) = W_l y + v_l.

Coefficients are flattened layer by layer; inside a layer the block
``[v_l | W_l]`` (shift as column 0) is read row-major.  The directed prior
schedule depends on this ordering, so it is frozen.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


class StructuralError(ValueError):
    """Shapes or dimensions that do not fit together."""


@dataclass(frozen=True)
class Architecture:
    depth: int
    widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if int(self.depth) < 1:
            raise StructuralError(f"depth must be >= 1, got {self.depth}")
        if len(widths) != self.depth + 2:
            raise StructuralError(
                f"expected {self.depth + 2} widths for depth {self.depth}, got {len(widths)}"
            )
        if min(widths) < 1:
            raise StructuralError(f"widths must be positive: {widths}")

    @classmethod
    def from_widths(cls, widths: Sequence[int]) -> "Architecture":
        return cls(len(widths) - 2, tuple(widths))

    @property
    def d(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(rows, columns) of each weight matrix W_1..W_{L+1}."""
        w = self.widths
        return [(w[l], w[l - 1]) for l in range(1, self.depth + 2)]


@dataclass(frozen=True)
class ParamCount:
    T: int
    V: int


def param_count(arch: Architecture) -> ParamCount:
    r = arch.widths
    L = arch.depth
    T = sum(r[l] * r[l + 1] for l in range(L + 1)) + sum(r[1:])
    V = 1
    for l in range(L + 1):
        V *= r[l] + 1
    return ParamCount(T=T, V=V)


def coefficient_index(arch: Architecture) -> np.ndarray:
    """Return an array of (l, i, j) triples in the frozen coefficient order.

    ``l`` runs over 1..L+1, ``i`` over 1..r_l and ``j`` over 0..r_{l-1}, with
    ``j = 0`` the shift.
    """
    rows = []
    for l, (n_out, n_in) in enumerate(arch.layer_shapes(), start=1):
        i, j = np.meshgrid(np.arange(1, n_out + 1), np.arange(0, n_in + 1), indexing="ij")
        block = np.stack([np.full(i.size, l), i.ravel(), j.ravel()], axis=1)
        rows.append(block)
    return np.concatenate(rows, axis=0)


class Network:
    """Immutable ReLU network.

    ``layers`` holds ``(W_l, v_l)`` for ``l = 1..L+1``.
    """

    __slots__ = ("arch", "_layers")

    def __init__(self, arch: Architecture, layers: Sequence[tuple[np.ndarray, np.ndarray]]):
        if len(layers) != arch.depth + 1:
            raise StructuralError(f"need {arch.depth + 1} layers, got {len(layers)}")
        frozen = []
        for (rows, cols), (W, v) in zip(arch.layer_shapes(), layers):
            W = np.array(W, dtype=np.float64, copy=True)
            if W.shape != (rows, cols):
                raise StructuralError(f"weight matrix {W.shape} does not match ({rows}, {cols})")
            v = np.array(v, dtype=np.float64, copy=True).reshape(-1)
            if v.shape != (rows,):
                raise StructuralError("shift vector does not match the architecture")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(v))):
                raise StructuralError("coefficients must be finite")
            W.flags.writeable = False
            v.flags.writeable = False
            frozen.append((W, v))
        self.arch = arch
        self._layers = tuple(frozen)

    @property
    def layers(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        return self._layers

    @property
    def depth(self) -> int:
        return self.arch.depth

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return iter(self._layers)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)

    def __repr__(self) -> str:
        return f"Network(widths={self.arch.widths})"

    # -- coefficient vector -------------------------------------------------
    def to_vector(self) -> np.ndarray:
        parts = [np.column_stack([v, W]).ravel() for W, v in self._layers]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, arch: Architecture, theta: np.ndarray) -> "Network":
        theta = np.asarray(theta, dtype=np.float64).ravel()
        if theta.size != param_count(arch).T:
            raise StructuralError(
                f"vector of length {theta.size} does not match T={param_count(arch).T}"
            )
        layers = []
        pos = 0
        for rows, cols in arch.layer_shapes():
            block = theta[pos:pos + rows * (cols + 1)].reshape(rows, cols + 1)
            layers.append((block[:, 1:], block[:, 0]))
            pos += rows * (cols + 1)
        return cls(arch, layers)

    def max_abs_coefficient(self) -> float:
        return float(max(max(np.max(np.abs(W), initial=0.0), np.max(np.abs(v), initial=0.0))
                         for W, v in self._layers))

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.to_vector()))


def zeros(arch: Architecture) -> Network:
    return Network.from_vector(arch, np.zeros(param_count(arch).T))


# -- evaluation --------------------------------------------------------------

def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Evaluate the network.

    A 1-D input of length ``r_0`` gives a 1-D output; a 2-D array of shape
    ``(n, r_0)`` is evaluated row by row and gives ``(n, r_{L+1})``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != net.arch.d:
        raise StructuralError(f"input of shape {x.shape} does not match input dim {net.arch.d}")
    last = len(net.layers) - 1
    for l, (W, v) in enumerate(net.layers):
        a = _affine(a, W, v)
        if l < last:
            np.maximum(a, 0.0, out=a)
    return a[0] if single else a


def _affine(a: np.ndarray, W: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Sum input columns in a fixed order: BLAS reorders by shape, which would
    # make zero padding and batching change the last bits.
    out = np.empty((a.shape[0], W.shape[0]))
    out[:] = v
    for j in range(W.shape[1]):
        out += a[:, j:j + 1] * W[:, j]
    return out


def clip(y, B: float):
    """Truncate values to [-B, B]."""
    if not B > 0:
        raise ValueError("clip bound must be positive")
    return np.clip(y, -B, B)


def propagation_bound(arch: Architecture, delta: float, b: float) -> float:
    """Sup-norm bound on |f - f*| for coefficientwise |θ| <= b and |θ - θ*| <= delta."""
    V = param_count(arch).V
    L = arch.depth
    return float(delta * V * max(b, 1.0) ** L * (L + 1))


# -- network calculus --------------------------------------------------------

def _identity_pair(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrix mapping y in R^k to (y, -y) before a ReLU."""
    eye = np.eye(k)
    return np.vstack([eye, -eye]), np.zeros(2 * k)


def compose(f: Network, g: Network) -> Network:
    """Network realizing g o f.

    The output of ``f`` is routed through one hidden layer ``(relu(y), relu(-y))``
    and recombined inside the first layer of ``g``, so coefficients of ``f``
    and ``g`` are not multiplied together and negative values survive.
    """
    k = f.arch.out_dim
    if g.arch.d != k:
        raise StructuralError(f"cannot compose: f outputs {k} values, g expects {g.arch.d}")
    Wf, vf = f.layers[-1]
    P, p = _identity_pair(k)
    first = (P @ Wf, P @ vf + p)
    Wg, vg = g.layers[0]
    joined = (np.hstack([Wg, -Wg]), vg)
    layers = list(f.layers[:-1]) + [first, joined] + list(g.layers[1:])
    widths = f.arch.widths[:-1] + (2 * k,) + g.arch.widths[1:]
    return Network(Architecture.from_widths(widths), layers)


def parallelize(f: Network, g: Network) -> Network:
    """Network x -> (f(x), g(x)) for equal input dims and equal depths."""
    if f.arch.d != g.arch.d:
        raise StructuralError("parallelize needs equal input dimensions")
    if f.depth != g.depth:
        raise StructuralError("parallelize needs equal depths; call depth_sync first")
    layers = []
    for l, ((W1, v1), (W2, v2)) in enumerate(zip(f.layers, g.layers)):
        if l == 0:
            W = np.vstack([W1, W2])
        else:
            W = np.zeros((W1.shape[0] + W2.shape[0], W1.shape[1] + W2.shape[1]))
            W[:W1.shape[0], :W1.shape[1]] = W1
            W[W1.shape[0]:, W1.shape[1]:] = W2
        layers.append((W, np.concatenate([v1, v2])))
    widths = (f.arch.d,) + tuple(a + b for a, b in zip(f.arch.widths[1:], g.arch.widths[1:]))
    return Network(Architecture.from_widths(widths), layers)


def depth_sync(f: Network, q: int) -> Network:
    """Append ``q`` hidden layers that carry the output unchanged."""
    if q < 0:
        raise StructuralError("q must be nonnegative")
    if q == 0:
        return f
    k = f.arch.out_dim
    P, p = _identity_pair(k)
    W_last, v_last = f.layers[-1]
    layers = list(f.layers[:-1]) + [(P @ W_last, P @ v_last)]
    eye = np.eye(k)
    carry = np.block([[eye, -eye], [-eye, eye]])
    for _ in range(q - 1):
        layers.append((carry, np.zeros(2 * k)))
    layers.append((np.hstack([eye, -eye]), np.zeros(k)))
    widths = f.arch.widths[:-1] + (2 * k,) * q + (k,)
    return Network(Architecture.from_widths(widths), layers)


def enlarge(f: Network, arch: Architecture) -> Network:
    """Zero-pad ``f`` into a wider architecture of the same depth."""
    if arch.depth != f.depth:
        raise StructuralError("enlarge keeps the depth; use depth_sync first")
    if arch.d != f.arch.d or arch.out_dim != f.arch.out_dim:
        raise StructuralError("enlarge keeps input and output dimensions")
    if any(a < b for a, b in zip(arch.widths, f.arch.widths)):
        raise StructuralError(f"{arch.widths} is not componentwise >= {f.arch.widths}")
    layers = []
    for (rows, cols), (W, v) in zip(arch.layer_shapes(), f.layers):
        Wn = np.zeros((rows, cols))
        Wn[:W.shape[0], :W.shape[1]] = W
        vn = np.zeros(rows)
        vn[:v.size] = v
        layers.append((Wn, vn))
    return Network(arch, layers)


def embed(f: Network, arch: Architecture) -> Network:
    """depth_sync then enlarge, the usual way to place a network in a class."""
    if arch.depth < f.depth:
        raise StructuralError(f"target depth {arch.depth} below network depth {f.depth}")
    return enlarge(depth_sync(f, arch.depth - f.depth), arch)


# -- serialization -----------------------------------------------------------

_FORMAT = "htbnn-network/1"


def to_bytes(net: Network) -> bytes:
    """Self-describing .npz payload: header JSON plus the coefficient vector."""
    buf = io.BytesIO()
    header = json.dumps({"format": _FORMAT, "depth": net.depth, "widths": list(net.arch.widths)})
    np.savez(buf, header=np.frombuffer(header.encode(), dtype=np.uint8), theta=net.to_vector())
    return buf.getvalue()


def from_bytes(data: bytes) -> Network:
    with np.load(io.BytesIO(data)) as z:
        header = json.loads(z["header"].tobytes().decode())
        if header.get("format") != _FORMAT:
            raise StructuralError(f"unknown network format {header.get('format')!r}")
        arch = Architecture(header["depth"], tuple(header["widths"]))
        return Network.from_vector(arch, z["theta"])


def save(net: Network, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(net))


def load(path) -> Network:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
