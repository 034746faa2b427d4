"""Natural cubic spline basis over the date index.

The construction follows the usual recipe: a clamped cubic B-spline basis on
the boundary and interior knots, with the first column dropped (the model
carries its own intercept), projected onto the null space of the
second-derivative constraints at both boundary knots. Outside the boundary
knots each basis function continues linearly.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.interpolate import BSpline

__all__ = ["SplineBasis", "make_basis", "evaluate_basis"]


@dataclasses.dataclass(frozen=True)
class SplineBasis:
    df: int
    interior_knots: np.ndarray
    boundary_knots: tuple
    t_values: np.ndarray
    B: np.ndarray
    _proj: np.ndarray = dataclasses.field(repr=False)

    @property
    def knots(self):
        """Boundary and interior knots in increasing order."""
        return np.concatenate([[self.boundary_knots[0]], self.interior_knots, [self.boundary_knots[1]]])

    def _bspline(self):
        lo, hi = self.boundary_knots
        aug = np.concatenate([[lo] * 4, self.interior_knots, [hi] * 4])
        return BSpline(aug, np.eye(len(aug) - 4), 3, extrapolate=True)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(t)):
            raise ValueError("spline evaluation points must be finite")
        flat = np.atleast_1d(t).ravel()
        spl = self._bspline()
        d1 = spl.derivative(1)
        lo, hi = self.boundary_knots
        clipped = np.clip(flat, lo, hi)
        raw = spl(clipped)
        # linear continuation beyond the boundary knots
        for edge, mask in ((lo, flat < lo), (hi, flat > hi)):
            if mask.any():
                raw[mask] = spl(edge)[None, :] + (flat[mask] - edge)[:, None] * d1(edge)[None, :]
        out = raw @ self._proj
        return out.reshape(t.shape + (self.df,))

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t," + ",".join(f"ns{k + 1}" for k in range(self.df)) + "\n")
            for t, row in zip(self.t_values, self.B):
                fh.write(repr(float(t)) + "," + ",".join(repr(float(x)) for x in row) + "\n")


def make_basis(t_values, df):
    """Natural cubic spline basis with ``df`` columns and no intercept.

    Interior knots sit at the ``k / df`` quantiles (``k = 1 .. df-1``) of
    ``t_values``; boundary knots at its extremes.

    >>> make_basis(np.arange(1, 11), 2).B.shape
    (10, 2)
    """
    t = np.asarray(t_values, dtype=float).ravel()
    df = int(df)
    if not np.all(np.isfinite(t)):
        raise ValueError("t_values must be finite")
    if df < 2:
        raise ValueError(f"df must be at least 2, got {df}")
    n_distinct = np.unique(t).size
    if n_distinct < df + 1:
        raise ValueError(f"df={df} needs at least {df + 1} distinct t values, got {n_distinct}")

    lo, hi = float(t.min()), float(t.max())
    interior = np.quantile(t, np.arange(1, df) / df)
    if np.any(np.diff(np.concatenate([[lo], interior, [hi]])) <= 0):
        raise ValueError(f"df={df} puts coincident knots on these t values")

    aug = np.concatenate([[lo] * 4, interior, [hi] * 4])
    spl = BSpline(aug, np.eye(len(aug) - 4), 3)
    const = spl.derivative(2)(np.array([lo, hi]))[:, 1:]
    q, _ = np.linalg.qr(const.T, mode="complete")
    proj = np.zeros((len(aug) - 4, df))
    proj[1:] = q[:, 2:]

    basis = SplineBasis(
        df=df,
        interior_knots=interior,
        boundary_knots=(lo, hi),
        t_values=t,
        B=np.zeros((0, df)),
        _proj=proj,
    )
    B = basis(t)
    if np.linalg.matrix_rank(np.column_stack([np.ones(len(t)), B])) != df + 1:
        raise ValueError(f"spline design with df={df} is rank deficient on these t values")
    return dataclasses.replace(basis, B=B)


def evaluate_basis(basis, t_new):
    """Basis functions at ``t_new`` (scalar -> vector of length ``df``)."""
    return basis(t_new)
