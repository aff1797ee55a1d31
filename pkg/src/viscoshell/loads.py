"""Applied loads f^{i,2}(t, y, x3) and h^{i,3}_{+/-}(t, y) given as expressions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy as sp

_SYMS = sp.symbols("t y1 y2 x3", real=True)
_LOCALS = {s.name: s for s in _SYMS}


def _compile(expr):
    e = sp.sympify(expr, locals=_LOCALS)
    f = sp.lambdify(_SYMS, e, "numpy")
    return e, f


@dataclass(frozen=True)
class Loads:
    """Body force density f^{i,2} and face tractions h^{i,3} on x3 = +1 and x3 = -1.

    Components are contravariant. Expressions are in the symbols t, y1, y2;
    only the body force may also use x3.
    """

    f: tuple = ("0", "0", "0")
    h_plus: tuple = ("0", "0", "0")
    h_minus: tuple = ("0", "0", "0")

    def __post_init__(self):
        for name in ("f", "h_plus", "h_minus"):
            comp = tuple(str(c) for c in getattr(self, name))
            if len(comp) != 3:
                raise ValueError(f"load {name} needs three components")
            object.__setattr__(self, name, comp)
            exprs = [_compile(c)[0] for c in comp]
            if name != "f" and any(_SYMS[3] in e.free_symbols for e in exprs):
                raise ValueError("face tractions cannot depend on x3")
        object.__setattr__(self, "_fn", {k: [_compile(c)[1] for c in getattr(self, k)]
                                         for k in ("f", "h_plus", "h_minus")})

    @classmethod
    def uniform_normal(cls, q: float = 1.0) -> "Loads":
        return cls(f=("0", "0", repr(float(q))))

    @property
    def is_zero(self) -> bool:
        return all(sp.sympify(c) == 0 for k in ("f", "h_plus", "h_minus") for c in getattr(self, k))

    def _eval(self, key, t, y, x3):
        y = np.asarray(y, dtype=float)
        x3 = np.broadcast_to(np.asarray(x3, dtype=float), y.shape[:-1])
        out = [np.broadcast_to(np.asarray(fn(t, y[..., 0], y[..., 1], x3), dtype=float), y.shape[:-1])
               for fn in self._fn[key]]
        return np.stack(out, -1)

    def body(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._eval("f", t, x[..., :2], x[..., 2])

    def face(self, t: float, y, side: int) -> np.ndarray:
        return self._eval("h_plus" if side > 0 else "h_minus", t, y, 1.0 if side > 0 else -1.0)

    def resultant(self, t: float, y, n_gauss: int = 6) -> np.ndarray:
        """p^i(t, y) = int_{-1}^{1} f^{i,2} dx3 + h^{i,3}_+ + h^{i,3}_-."""
        xg, wg = np.polynomial.legendre.leggauss(n_gauss)
        y = np.asarray(y, dtype=float)
        p = sum(w * self._eval("f", t, y, x) for x, w in zip(xg, wg))
        return p + self.face(t, y, +1) + self.face(t, y, -1)


def loads_from_strings(f: Sequence[str] | None = None, h_plus: Sequence[str] | None = None,
                       h_minus: Sequence[str] | None = None) -> Loads:
    z = ("0", "0", "0")
    return Loads(tuple(f or z), tuple(h_plus or z), tuple(h_minus or z))
