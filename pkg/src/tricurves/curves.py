"""The predicted limit of the eigenvalue clouds.

Given the reference density of states and the coupling g (half the mean
super/sub log-asymmetry), the non-real part of the limit spectrum is the
level set gamma(z) = |g| of the Lyapunov exponent, traced here by
bisection in the imaginary direction (gamma is strictly increasing in
Im z >= 0).  The real part Sigma is the part of the support of dN where
the log-potential exceeds max(E xi, E eta), and the linear density along
the curve is |Stieltjes transform| / 2 pi.  Arcs are stored as polylines
of the upper half plane; the lower halves are implied by conjugation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ensembles import EnsembleSpec, analytic_means
from .errors import ValidationError
from .spectral import IdsEstimate, phi_many, stieltjes_many

__all__ = [
    "Arc",
    "CurveModel",
    "coupling_g",
    "equipotential_threshold",
    "trace_curve",
    "real_support_sigma",
    "curve_density",
    "limit_measure_integral",
    "gaussian_bump",
    "poly_cutoff",
    "default_bump_panel",
    "save_curve_model",
    "load_curve_model",
]

_TIE_BAND = 1e-9  # grid values this close to the threshold belong to neither side


@dataclass(frozen=True)
class Arc:
    """Upper-half-plane arc as a polyline (x ascending, y >= 0, y = 0 at
    both ends); rho holds the curve density at each vertex (endpoint
    values are one-sided limits, copied from the nearest interior vertex)."""

    x: np.ndarray
    y: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        for arr in (self.x, self.y, self.rho):
            arr.setflags(write=False)

    @property
    def a(self) -> float:
        return float(self.x[0])

    @property
    def a_prime(self) -> float:
        return float(self.x[-1])

    def points(self) -> np.ndarray:
        return self.x + 1j * self.y

    def mass(self) -> float:
        """Trapezoidal integral of rho over this arc's length (upper half)."""
        dl = np.abs(np.diff(self.points()))
        return float(np.sum(0.5 * (self.rho[:-1] + self.rho[1:]) * dl))


@dataclass(frozen=True)
class CurveModel:
    g: float
    threshold: float  # equipotential level max(E xi, E eta)
    mean_log_c: float
    arcs: tuple
    real_points: tuple
    sigma: tuple  # intervals (lo, hi) of the real component
    ids: IdsEstimate
    curve_tol: float

    def gamma(self, z) -> np.ndarray:
        """Lyapunov exponent via the Thouless route (valid on the axis)."""
        return phi_many(self.ids, np.atleast_1d(np.asarray(z, complex))) - self.mean_log_c

    def sigma_mass(self) -> float:
        """dN-mass of the real component."""
        total = 0.0
        for lo, hi in self.sigma:
            total += _interp_n(self.ids, hi) - _interp_n(self.ids, lo)
        return total

    def arcs_mass(self) -> float:
        """Density integral over all arcs, both conjugate halves."""
        return 2.0 * sum(arc.mass() for arc in self.arcs)

    def total_mass(self) -> float:
        return self.sigma_mass() + self.arcs_mass()


def _interp_n(ids: IdsEstimate, x: float) -> float:
    return float(np.interp(x, ids.grid, ids.values))


def coupling_g(spec: EnsembleSpec) -> float:
    """g = (E eta - E xi) / 2, exactly from the distribution parameters."""
    e_xi, e_eta = analytic_means(spec)
    return 0.5 * (e_eta - e_xi)


def equipotential_threshold(spec: EnsembleSpec) -> float:
    """max(E xi, E eta) -- the potential level of the curve, equal to
    E log c_0 + |g|."""
    e_xi, e_eta = analytic_means(spec)
    return max(e_xi, e_eta)


def _gamma_real(ids: IdsEstimate, mean_log_c: float, xs: np.ndarray) -> np.ndarray:
    return phi_many(ids, xs.astype(complex)) - mean_log_c


def _gamma_at(ids: IdsEstimate, mean_log_c: float, x, y) -> np.ndarray:
    zs = np.asarray(x, float) + 1j * np.asarray(y, float)
    return phi_many(ids, zs) - mean_log_c


def _upper_height(mean_log_c: float, abs_g: float) -> float:
    """A height above the curve for every x: a unit real measure has
    potential >= log y at height y, so gamma > |g| once
    y > exp(|g| + E log c)."""
    return 1.5 * math.exp(abs_g + mean_log_c) + 1.0


def trace_curve(
    ids: IdsEstimate,
    g: float,
    x_grid: Optional[np.ndarray] = None,
    mean_log_c: float = 0.0,
    x_points: int = 800,
    curve_tol: float = 1e-6,
) -> CurveModel:
    """Trace the level set gamma = |g| over the given (or an automatic)
    x grid; group qualifying abscissae into arcs, refine the real
    endpoints by bisection, and attach the curve density.

    g = 0 returns a model with no arcs.  Isolated real solutions of
    gamma(x) = |g| are reported in real_points and carry no arc.
    """
    abs_g = abs(float(g))
    threshold = mean_log_c + abs_g
    sigma = real_support_sigma(ids, threshold)
    if abs_g == 0.0:
        return CurveModel(
            g=float(g), threshold=threshold, mean_log_c=mean_log_c,
            arcs=(), real_points=(), sigma=sigma, ids=ids, curve_tol=curve_tol,
        )
    if x_grid is None:
        pad = max(1.0, math.exp(abs_g + mean_log_c)) * 1.5
        lo, hi = ids.support
        x_grid = np.linspace(lo - pad, hi + pad, x_points)
    else:
        x_grid = np.asarray(x_grid, dtype=float)
    gam = _gamma_real(ids, mean_log_c, x_grid)
    qualify = gam <= abs_g
    # never let the scan window clip the curve
    if qualify[0] or qualify[-1]:
        raise ValidationError("x grid too narrow: the level-set region touches its ends")
    arcs = []
    real_points = []
    y_hi = _upper_height(mean_log_c, abs_g)
    idx = np.where(qualify)[0]
    if idx.size:
        splits = np.where(np.diff(idx) > 1)[0]
        groups = np.split(idx, splits + 1)
    else:
        groups = []
    for grp in groups:
        a = _refine_endpoint(ids, mean_log_c, abs_g, x_grid[grp[0] - 1], x_grid[grp[0]])
        a_prime = _refine_endpoint(ids, mean_log_c, abs_g, x_grid[grp[-1] + 1], x_grid[grp[-1]])
        xs_inner = x_grid[grp]
        ys_inner = _solve_heights(ids, mean_log_c, abs_g, xs_inner, y_hi, curve_tol)
        keep = ys_inner > 1e-9 * max(1.0, ids.support_radius)
        if not np.any(keep):
            # the level set touches the axis only: an isolated real solution
            real_points.append(0.5 * (a + a_prime))
            continue
        xs = np.concatenate(([a], xs_inner[keep], [a_prime]))
        ys = np.concatenate(([0.0], ys_inner[keep], [0.0]))
        rho_inner = np.abs(stieltjes_many(ids, xs_inner[keep] + 1j * ys_inner[keep])) / (2.0 * np.pi)
        rho = np.concatenate(([rho_inner[0]], rho_inner, [rho_inner[-1]]))
        arcs.append(Arc(x=xs, y=ys, rho=rho))
    return CurveModel(
        g=float(g), threshold=threshold, mean_log_c=mean_log_c,
        arcs=tuple(arcs), real_points=tuple(real_points), sigma=sigma,
        ids=ids, curve_tol=curve_tol,
    )


def _refine_endpoint(ids, mean_log_c, abs_g, x_out, x_in) -> float:
    """Bisect gamma(x) - |g| between a non-qualifying and a qualifying x."""
    g_out = float(_gamma_real(ids, mean_log_c, np.array([x_out]))[0]) - abs_g
    g_in = float(_gamma_real(ids, mean_log_c, np.array([x_in]))[0]) - abs_g
    if g_out <= 0.0:  # grid boundary already inside; nothing to refine
        return float(x_out)
    if g_in > 0.0:
        return float(x_in)
    for _ in range(60):
        mid = 0.5 * (x_out + x_in)
        val = float(_gamma_real(ids, mean_log_c, np.array([mid]))[0]) - abs_g
        if val > 0.0:
            x_out = mid
        else:
            x_in = mid
        if abs(x_out - x_in) < 1e-13 * max(1.0, abs(x_in)):
            break
    return float(0.5 * (x_out + x_in))


def _solve_heights(ids, mean_log_c, abs_g, xs, y_hi, curve_tol) -> np.ndarray:
    """For each qualifying x, the unique y >= 0 with gamma(x + iy) = |g|
    (gamma is strictly increasing in y), by vectorized bisection down to
    residual < curve_tol."""
    lo = np.zeros_like(xs)
    hi = np.full_like(xs, y_hi)
    for _ in range(110):
        mid = 0.5 * (lo + hi)
        val = _gamma_at(ids, mean_log_c, xs, mid) - abs_g
        if np.max(np.abs(val)) < curve_tol:
            return mid  # residual certified at exactly these heights
        above = val > 0.0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    # brackets are at float resolution; accept only if the residual target
    # is met there (it cannot improve further)
    y = 0.5 * (lo + hi)
    resid = np.abs(_gamma_at(ids, mean_log_c, xs, y) - abs_g)
    if np.max(resid) >= curve_tol:
        raise ValidationError(
            f"curve bisection stalled: worst residual {np.max(resid):.3g} (tol {curve_tol:g})"
        )
    return y


def real_support_sigma(ids: IdsEstimate, threshold: float, tie_band: float = _TIE_BAND) -> tuple:
    """Intervals of supp dN where Phi(lambda + i0) strictly exceeds the
    threshold.  Grid points within tie_band of the threshold are assigned
    to neither side (dropped) to avoid double counting with the contours."""
    dens = ids.cell_density
    mids = 0.5 * (ids.grid[:-1] + ids.grid[1:])
    phi_mid = phi_many(ids, mids.astype(complex))
    qualifies = (dens > 0.0) & (phi_mid > threshold + tie_band)
    intervals = []
    start = None
    for i, flag in enumerate(qualifies):
        if flag and start is None:
            start = ids.grid[i]
        elif not flag and start is not None:
            intervals.append((float(start), float(ids.grid[i])))
            start = None
    if start is not None:
        intervals.append((float(start), float(ids.grid[-1])))
    return tuple(intervals)


def curve_density(ids: IdsEstimate, z: complex) -> float:
    """Linear eigenvalue density along the curve: |m(z)| / 2 pi where m is
    the Stieltjes transform of dN.  Requires Im z > 0 (endpoint values are
    one-sided limits along the arc)."""
    z = complex(z)
    if z.imag <= 0.0:
        raise ValidationError("curve_density needs Im z > 0")
    return float(np.abs(stieltjes_many(ids, [z]))[0] / (2.0 * np.pi))


def limit_measure_integral(model: CurveModel, f: Callable[[complex], float]) -> float:
    """integral of f against the predicted limit measure: Stieltjes sums of
    f dN over Sigma plus trapezoidal arc-length quadrature of f rho along
    every arc and its conjugate."""
    ids = model.ids
    total = 0.0
    mids = 0.5 * (ids.grid[:-1] + ids.grid[1:])
    dn = np.diff(ids.values)
    for lo, hi in model.sigma:
        inside = (mids >= lo) & (mids <= hi)
        if np.any(inside):
            fvals = np.array([f(complex(x)) for x in mids[inside]])
            total += float(fvals @ dn[inside])
    for arc in model.arcs:
        pts = arc.points()
        for sheet in (pts, np.conj(pts)):
            fvals = np.array([f(complex(p)) for p in sheet])
            dl = np.abs(np.diff(sheet))
            total += float(np.sum(0.5 * (fvals[:-1] * arc.rho[:-1] + fvals[1:] * arc.rho[1:]) * dl))
    return total


# -- bounded continuous test functions ----------------------------------------

def gaussian_bump(center: complex, width: float) -> Callable[[complex], float]:
    center = complex(center)
    s2 = 2.0 * float(width) ** 2

    def f(z: complex) -> float:
        return math.exp(-abs(complex(z) - center) ** 2 / s2)

    f.label = f"bump({center.real:g}{center.imag:+g}i, w={width:g})"  # type: ignore[attr-defined]
    return f


def poly_cutoff(px: int, py: int, radius: float) -> Callable[[complex], float]:
    """(Re z)^px (Im z)^py times a Gaussian cutoff of the given radius."""
    r2 = 2.0 * float(radius) ** 2

    def f(z: complex) -> float:
        z = complex(z)
        return (z.real ** px) * (z.imag ** py) * math.exp(-abs(z) ** 2 / r2)

    f.label = f"poly({px},{py})*cutoff({radius:g})"  # type: ignore[attr-defined]
    return f


def default_bump_panel(model: CurveModel, count: int = 10) -> list:
    """Deterministic panel of Gaussian bumps covering the support box of
    the limit measure: count-4 bumps along the real support, 3 at curve
    height, one centered far off the support as a zero-mass control."""
    lo, hi = model.ids.support
    width = (hi - lo) / 8.0
    top = max((float(np.max(arc.y)) for arc in model.arcs), default=width)
    panel = []
    n_real = max(count - 4, 1)
    for x in np.linspace(lo, hi, n_real):
        panel.append(gaussian_bump(complex(x, 0.0), width))
    for frac in (0.35, 0.7, 1.0):
        panel.append(gaussian_bump(complex(0.5 * (lo + hi), frac * top), width))
    panel.append(gaussian_bump(complex(hi + 6.0 * width, 3.0 * top + 6.0 * width), width))
    return panel[:count]


# -- model serialization --------------------------------------------------------

def save_curve_model(model: CurveModel, path) -> None:
    with open(path, "w") as fh:
        fh.write("# curve-model v1\n")
        fh.write(f"# g={float(model.g)!r} threshold={float(model.threshold)!r} mean_log_c={float(model.mean_log_c)!r}\n")
        fh.write(f"# curve_tol={float(model.curve_tol)!r} ids_hash={model.ids.source_hash}\n")
        fh.write(f"# sigma_count={len(model.sigma)} arc_count={len(model.arcs)} "
                 f"real_points={len(model.real_points)}\n")
        for lo, hi in model.sigma:
            fh.write(f"sigma {float(lo)!r} {float(hi)!r}\n")
        for xp in model.real_points:
            fh.write(f"realpoint {float(xp)!r}\n")
        for i, arc in enumerate(model.arcs):
            for x, y, r in zip(arc.x, arc.y, arc.rho):
                fh.write(f"arc {i} {float(x)!r} {float(y)!r} {float(r)!r}\n")


def load_curve_model(model_path, ids: IdsEstimate) -> CurveModel:
    header = {}
    sigma = []
    real_points = []
    arc_rows: dict = {}
    with open(model_path) as fh:
        first = fh.readline()
        if not first.startswith("# curve-model v1"):
            raise ValidationError(f"{model_path} is not a curve model file")
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        header[k] = v
                continue
            parts = line.split()
            if parts[0] == "sigma":
                sigma.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "realpoint":
                real_points.append(float(parts[1]))
            elif parts[0] == "arc":
                arc_rows.setdefault(int(parts[1]), []).append(tuple(float(p) for p in parts[2:]))
    if header.get("ids_hash", "") != ids.source_hash:
        raise ValidationError("curve model and ids estimate come from different ensembles")
    arcs = []
    for i in sorted(arc_rows):
        rows = np.asarray(arc_rows[i])
        arcs.append(Arc(x=rows[:, 0].copy(), y=rows[:, 1].copy(), rho=rows[:, 2].copy()))
    return CurveModel(
        g=float(header["g"]),
        threshold=float(header["threshold"]),
        mean_log_c=float(header["mean_log_c"]),
        arcs=tuple(arcs),
        real_points=tuple(real_points),
        sigma=tuple(sigma),
        ids=ids,
        curve_tol=float(header.get("curve_tol", 1e-6)),
    )
