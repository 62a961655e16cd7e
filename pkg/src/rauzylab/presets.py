"""
Named starting points and the shared experiment context.

A context bundles everything the statistics commands need for one
``(perm, lengths)``: the base cell, the Ulam invariant density, the mean
roof and the class measure of the base.  Building it is deterministic
given the seed.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._simplex import SimplexGrid
from .errors import ConfigError
from .iet_core import Permutation, as_lengths
from .induced_mp import select_base
from .rauzy_veech import rauzy_class
from .recurrence_stats import _perron, base_class_mass
from .surface_flow import mean_roof
from .transfer_ulam import InvariantDensity, build_ulam, spectral_analysis

__all__ = ["Preset", "PRESETS", "resolve_iet", "Context", "build_context", "load_density",
           "save_density"]

_PHI = (1 + math.sqrt(5)) / 2


@dataclass(frozen=True)
class Preset:
    name: str
    rows: str
    lengths: tuple
    grid: int
    samples_per_cell: int


def _normalise(v):
    s = math.fsum(v)
    return tuple(x / s for x in v)


PRESETS = {
    "d2-golden": Preset("d2-golden", "AB/BA", (2 - _PHI, _PHI - 1), 64, 2000),
    "d3-rotation": Preset("d3-rotation", "ABC/CBA", _normalise((1, math.sqrt(2), math.sqrt(3))),
                          8, 100),
    "d4-genus2": Preset("d4-genus2", "ABCD/DCBA",
                        _normalise((1, math.sqrt(2), math.sqrt(3), math.sqrt(5))), 4, 50),
}


def _parse_lengths(text, exact):
    from fractions import Fraction
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    if exact:
        return as_lengths([Fraction(p.strip()) for p in parts])
    return as_lengths([float(Fraction(p.strip())) if "/" in p else float(p) for p in parts])


def resolve_iet(preset=None, pi=None, lam=None, exact=False):
    """``(perm, lengths, preset)`` from a preset name or explicit rows and lengths."""
    p = None
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        p = PRESETS[preset]
    rows = pi if pi is not None else (p.rows if p else None)
    if rows is None:
        raise ConfigError("need --pi or --preset")
    perm = Permutation.from_rows(rows)
    if lam is not None:
        lengths = _parse_lengths(lam, exact)
    elif p is not None and rows == p.rows:
        lengths = as_lengths(p.lengths)
    else:
        lengths = None
    if lengths is not None and len(lengths) != perm.d:
        raise ConfigError(f"{len(lengths)} lengths for {perm.d} letters")
    return perm, lengths, p


@dataclass
class Context:
    """Base, invariant density and derived constants for one starting point."""
    perm: object
    lengths: object
    base: object
    density: InvariantDensity
    grid_n: int
    leading_eigenvalue: float = 1.0
    gap: float = float("nan")
    _rbar: tuple = field(default=None, repr=False)
    _mu_B: tuple = field(default=None, repr=False)
    seed: int = 0

    @property
    def rbar(self):
        """Mean roof (Birkhoff average over ``10^6`` returns) and its standard error."""
        if self._rbar is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 11]))
            self._rbar = mean_roof(self.density._induced, 10 ** 6, rng)
        return self._rbar

    @property
    def mu_B(self):
        """Measure of the base in its class of the accelerated map."""
        if self._mu_B is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 12]))
            self._mu_B = base_class_mass(self.base, rng, 10 ** 6)
        return self._mu_B

    def generic_center(self):
        """A point near the middle of the base, offset along an irrational direction."""
        c = np.asarray(self.base.center, float)
        d = len(c)
        off = np.array([math.sqrt(p) for p in (3, 5, 7, 11, 13, 17)[:d]])
        off -= off.mean()
        off /= np.linalg.norm(off)
        x = c + 1e-4 * off
        return x / x.sum()

    def periodic_center(self):
        """Fixed point of the heaviest branch of the induced map found by enumeration."""
        from .induced_mp import enumerate_branches
        inv = enumerate_branches(self.base, 12, max_nodes=5000)
        br = max(inv.branches, key=lambda b: b.mass)
        return _perron(br.matrix.matrix)


def build_context(perm, lengths, grid=None, samples_per_cell=None, seed=0, preset=None,
                  density=None):
    """Select the base for ``(perm, lengths)`` and estimate its invariant density."""
    if lengths is None:
        raise ConfigError("lengths are required to select a base")
    grid = grid or (preset.grid if preset else 32)
    samples = samples_per_cell or (preset.samples_per_cell if preset else 500)
    rc = rauzy_class(perm)
    base = select_base(perm, lengths, rclass=rc)
    lead, gap = 1.0, float("nan")
    if density is None:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 10]))
        op = build_ulam(base, grid, samples, rng)
        rep = spectral_analysis(op)
        density = InvariantDensity.from_report(op, rep)
        lead, gap = rep.leading_eigenvalue, rep.gap
    elif not isinstance(density, InvariantDensity):
        density = load_density(density, base)
        grid = density.grid.N
    return Context(perm, lengths, base, density, grid, lead, gap, seed=seed)


def save_density(density, path):
    """Cell masses of an invariant density as CSV (the grid is rebuilt from the base)."""
    with open(path, "w") as fh:
        fh.write("# rauzylab-schema v1\n")
        fh.write(f"# grid {density.grid.N}\n")
        fh.write("cell,mass\n")
        for i, m in enumerate(density.cell_masses):
            fh.write(f"{i},{m:.17g}\n")


def load_density(path, base):
    with open(path) as fh:
        lines = fh.read().splitlines()
    N = None
    masses = []
    for line in lines:
        if line.startswith("# grid"):
            N = int(line.split()[2])
        elif line and not line.startswith("#") and not line.startswith("cell"):
            masses.append(float(line.split(",")[1]))
    if N is None:
        raise ConfigError(f"{path}: missing grid line")
    grid = SimplexGrid(base.vertex_set, N)
    if len(masses) != grid.n_cells:
        raise ConfigError(f"{path}: {len(masses)} masses for {grid.n_cells} cells")
    return InvariantDensity(base, grid, masses)
