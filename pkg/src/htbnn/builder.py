"""Layer-by-layer assembly of hand-built ReLU networks.

Constructions are written as arithmetic on :class:`Lin` values, affine forms
over the neurons of one layer.  ``relu`` opens a neuron in the next layer.
Forms living on different layers are combined by carrying the shallower one
forward, with ``relu(y) - relu(-y)`` (or a single ReLU when the value is known
to be nonnegative).  ``build`` prunes unused neurons and emits a
:class:`~htbnn.network.Network`.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .network import Architecture, Network


class Lin:
    __slots__ = ("b", "layer", "coef", "const", "nonneg")

    def __init__(self, b: "NetBuilder", layer: Optional[int], coef: dict, const: float = 0.0,
                 nonneg: bool = False):
        self.b = b
        self.layer = layer if coef else None
        self.coef = coef
        self.const = float(const)
        self.nonneg = nonneg

    # constants have no layer and adapt to whatever they meet
    @property
    def is_const(self) -> bool:
        return not self.coef

    def _align(self, other: "Lin") -> tuple["Lin", "Lin"]:
        if self.is_const or other.is_const or self.layer == other.layer:
            return self, other
        if self.layer < other.layer:
            return self.b.lift(self, other.layer), other
        return self, self.b.lift(other, self.layer)

    def __add__(self, other):
        if not isinstance(other, Lin):
            return Lin(self.b, self.layer, dict(self.coef), self.const + float(other),
                       self.nonneg and float(other) >= 0)
        a, c = self._align(other)
        coef = dict(a.coef)
        for k, v in c.coef.items():
            coef[k] = coef.get(k, 0.0) + v
        coef = {k: v for k, v in coef.items() if v != 0.0}
        layer = a.layer if a.layer is not None else c.layer
        return Lin(self.b, layer, coef, a.const + c.const, a.nonneg and c.nonneg)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        s = float(s)
        if s == 0.0:
            return Lin(self.b, None, {}, 0.0, True)
        return Lin(self.b, self.layer, {k: v * s for k, v in self.coef.items()},
                   self.const * s, self.nonneg and s > 0)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / float(s))

    def key(self):
        return (self.layer, tuple(sorted(self.coef.items())), self.const)


class NetBuilder:
    def __init__(self, d: int):
        self.d = d
        # incoming[l][k]: pre-activation form of neuron k in layer l (l >= 1)
        self.incoming: list[list[Lin]] = [[]]
        self._memo: dict = {}

    def inputs(self) -> list[Lin]:
        return [Lin(self, 0, {i: 1.0}) for i in range(self.d)]

    def const(self, c: float) -> Lin:
        return Lin(self, None, {}, c, c >= 0)

    def relu(self, lin: Lin, at: Optional[int] = None) -> Lin:
        """New neuron relu(lin) in layer ``lin.layer + 1`` (or ``at`` for constants)."""
        if lin.is_const:
            if at is None:
                raise ValueError("relu of a constant needs an explicit layer")
            lin = Lin(self, at - 1, {}, lin.const)
            layer = at
        else:
            layer = lin.layer + 1
        key = (layer, lin.key()[1], lin.const)
        hit = self._memo.get(key)
        if hit is not None:
            return Lin(self, layer, {hit: 1.0}, 0.0, True)
        while len(self.incoming) <= layer:
            self.incoming.append([])
        idx = len(self.incoming[layer])
        self.incoming[layer].append(lin)
        self._memo[key] = idx
        return Lin(self, layer, {idx: 1.0}, 0.0, True)

    def step(self, lin: Lin) -> Lin:
        """Carry a form one layer forward."""
        if lin.is_const:
            return lin
        if lin.nonneg:
            return self.relu(lin)
        return self.relu(lin) - self.relu(-lin)

    def lift(self, lin: Lin, layer: int) -> Lin:
        if lin.is_const:
            return lin
        if lin.layer > layer:
            raise ValueError(f"cannot move a form back from layer {lin.layer} to {layer}")
        while lin.layer < layer:
            lin = self.step(lin)
        return lin

    def sync(self, lins: Sequence[Lin]) -> list[Lin]:
        top = max((l.layer for l in lins if not l.is_const), default=0)
        return [self.lift(l, top) for l in lins]

    def build(self, outputs: Sequence[Lin], depth: Optional[int] = None) -> Network:
        outs = list(outputs)
        top = max((o.layer for o in outs if not o.is_const), default=0)
        top = max(top, 1, depth or 0)
        outs = [self.lift(o, top) for o in outs]
        # constant outputs are attached to the last layer with no weights
        L = top
        used = [set() for _ in range(L + 1)]
        for o in outs:
            used[L].update(o.coef)
        for l in range(L, 0, -1):
            for k in sorted(used[l]):
                used[l - 1].update(self.incoming[l][k].coef)
        used[0] = set(range(self.d))
        order = [sorted(u) for u in used]
        pos = [{k: p for p, k in enumerate(o)} for o in order]
        widths = [self.d] + [max(len(order[l]), 1) for l in range(1, L + 1)] + [len(outs)]
        layers = []
        for l in range(1, L + 1):
            W = np.zeros((widths[l], widths[l - 1]))
            v = np.zeros(widths[l])
            for row, k in enumerate(order[l]):
                form = self.incoming[l][k]
                for j, c in form.coef.items():
                    W[row, pos[l - 1][j]] = c
                v[row] = form.const
            layers.append((W, v))
        W = np.zeros((len(outs), widths[L]))
        v = np.zeros(len(outs))
        for row, o in enumerate(outs):
            for j, c in o.coef.items():
                W[row, pos[L][j]] = c
            v[row] = o.const
        layers.append((W, v))
        return Network(Architecture.from_widths(widths), layers)


def total(lins: Iterable[Lin], b: NetBuilder) -> Lin:
    """Sum of many forms, carried to a common layer first."""
    lins = b.sync(list(lins))
    coef: dict = {}
    const = 0.0
    layer = None
    nonneg = True
    for l in lins:
        for k, v in l.coef.items():
            coef[k] = coef.get(k, 0.0) + v
        const += l.const
        nonneg = nonneg and l.nonneg
        layer = l.layer if l.layer is not None else layer
    coef = {k: v for k, v in coef.items() if v != 0.0}
    return Lin(b, layer, coef, const, nonneg)
