"""Named example systems."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .forcing import Forcing, ForcingFamily
from .potential import DepthPotential, constant, from_weights, gauss_potential, letter_values
from .shift import TruncatedShift

BUILTINS = {
    "bernoulli:p1,p2,...": "full M-shift with u = log p_e (depth 1)",
    "golden-mean": "golden-mean shift [[1,1],[1,0]] with u = 0",
    "gauss:s": "Gauss system truncated at M letters, u = 2s log[0; x1, x2, ...], depth 2",
    "golden-renewal": "full 2-shift, eta = 0, xi = (1, 2), chi = 1, step forcing (lattice, a = 1)",
    "nonlattice-renewal": "full 2-shift, eta = 0, xi = (1, sqrt 2), chi = 1, step forcing",
}


@dataclass(eq=False)
class System:
    name: str
    shift: TruncatedShift
    u: DepthPotential
    xi: DepthPotential | None = None
    chi: float | np.ndarray | None = None
    forcing: ForcingFamily | None = None
    lattice: bool = False


def list_builtins():
    return ["%-22s %s" % (k, v) for k, v in BUILTINS.items()]


def builtin(name, M=None, depth=None):
    """Build a named system; ``M`` and ``depth`` apply to ``gauss:s`` only."""
    base, _, arg = name.partition(":")
    if base == "bernoulli":
        try:
            p = [float(v) for v in arg.split(",")]
        except ValueError as exc:
            raise ConfigError("bad bernoulli weights %r" % arg) from exc
        if len(p) < 1 or any(v <= 0 for v in p) or abs(sum(p) - 1.0) > 1e-12:
            raise ConfigError("bernoulli weights must be positive and sum to 1")
        shift = TruncatedShift.full(len(p))
        return System(name, shift, from_weights(shift, p, name=name))
    if base == "golden-mean" and not arg:
        shift = TruncatedShift.golden_mean()
        return System(name, shift, constant(shift, 0.0, name="zero"))
    if base == "gauss":
        try:
            s = float(arg or 1.0)
        except ValueError as exc:
            raise ConfigError("bad gauss exponent %r" % arg) from exc
        shift = TruncatedShift.full(M or 50)
        shift.name = "gauss-%d" % shift.M
        return System(name, shift, gauss_potential(shift, s, depth=depth or 2))
    if base in ("golden-renewal", "nonlattice-renewal") and not arg:
        shift = TruncatedShift.full(2)
        second = 2.0 if base == "golden-renewal" else math.sqrt(2.0)
        return System(name, shift, constant(shift, 0.0, name="eta=0"),
                      letter_values(shift, [1.0, second], name="xi"), 1.0,
                      ForcingFamily.uniform(Forcing.step()), lattice=base == "golden-renewal")
    raise ConfigError("unknown builtin %r" % name)
