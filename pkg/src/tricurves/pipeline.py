"""Stage runners behind the CLI: config-driven, cached, reproducible.

Every artifact is diff-able text carrying the config hash and seed in its
header; a manifest per command lists artifacts and wall times.  Stages
reuse cached artifacts when the embedded hash matches, so pipelines are
restartable at file boundaries.  Per-(n, rep) jobs run in a bounded
thread pool (LAPACK releases the GIL) and results are merged in (n, rep)
order, so the merge is deterministic regardless of scheduling.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
import numpy as np

from . import __version__
from .config import ExperimentConfig, RunManifest, config_hash
from .curves import (
    CurveModel,
    coupling_g,
    load_curve_model,
    save_curve_model,
    trace_curve,
)
from .eigensolvers import SpectrumResult, spectrum
from .ensembles import mean_log_coupling, sample
from .errors import ValidationError
from .operators import build
from .spectral import (
    estimate_ids,
    load_ids,
    lyapunov_thouless,
    lyapunov_transfer,
    save_ids,
)
from .verify import (
    check_exclusion,
    check_transfer_eigenvector_bounds,
    check_mass,
    check_rank2_identity,
    check_thouless_residual,
    check_weak_convergence,
)

__all__ = [
    "stage_sample",
    "stage_spectrum",
    "stage_ids",
    "stage_lyapunov",
    "stage_curve",
    "stage_verify",
    "stage_compare",
]

_FMT = "%.17g"


def _header(cfg: ExperimentConfig, **extra) -> str:
    items = " ".join(f"{k}={v}" for k, v in extra.items())
    head = f"# config_hash={config_hash(cfg)} seed={cfg.ensemble.seed}"
    return head + (f" {items}\n" if items else "\n")


def _write_manifest(out_dir: str, cfg: ExperimentConfig, artifacts: dict, walltimes: dict, name: str):
    manifest = RunManifest(config_hash=config_hash(cfg), tool_version=__version__)
    for key, path in artifacts.items():
        manifest.add(key, path, walltimes.get(key))
    manifest.write(os.path.join(out_dir, f"manifest_{name}.txt"))
    return manifest


def _spectrum_csv_path(n: int, rep: int) -> str:
    return os.path.join("spectra", f"spectrum_n{n}_rep{rep}.csv")


def _check_artifact(path: str, cfg: ExperimentConfig) -> bool:
    if not os.path.exists(path):
        return False
    with open(path) as fh:
        return config_hash(cfg) in fh.readline()


def stage_sample(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> RunManifest:
    """Write the coefficient realizations for every (n, rep)."""
    os.makedirs(os.path.join(out_dir, "samples"), exist_ok=True)
    artifacts, times = {}, {}
    for n in cfg.sizes:
        for rep in range(cfg.reps):
            t0 = time.perf_counter()
            rel = os.path.join("samples", f"coeffs_n{n}_rep{rep}.csv")
            path = os.path.join(out_dir, rel)
            key = f"sample_n{n}_rep{rep}"
            if not _check_artifact(path, cfg):
                seq = sample(replace(cfg.ensemble, seed=cfg.ensemble.seed + rep), n)
                cols = ("sub", "sup", "diag") if seq.raw else ("xi", "eta", "q")
                arrays = [getattr(seq, c) for c in cols]
                with open(path, "w") as fh:
                    fh.write(_header(cfg, n=n, rep=rep))
                    fh.write("k," + ",".join(cols) + "\n")
                    for k in range(n + 1):
                        fh.write(f"{k}," + ",".join(_FMT % a[k] for a in arrays) + "\n")
            artifacts[key] = rel
            times[key] = time.perf_counter() - t0
    return _write_manifest(out_dir, cfg, artifacts, times, "sample")


def _one_spectrum(cfg: ExperimentConfig, n: int, rep: int) -> SpectrumResult:
    seq = sample(replace(cfg.ensemble, seed=cfg.ensemble.seed + rep), n)
    return spectrum(build(seq))


def stage_spectrum(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> RunManifest:
    """Eigenvalue CSVs per (n, rep) plus a non-real count summary."""
    os.makedirs(os.path.join(out_dir, "spectra"), exist_ok=True)
    pairs = [(n, rep) for n in cfg.sizes for rep in range(cfg.reps)]
    artifacts, times = {}, {}
    todo = [(n, rep) for (n, rep) in pairs
            if not _check_artifact(os.path.join(out_dir, _spectrum_csv_path(n, rep)), cfg)]
    results = {}
    t0 = time.perf_counter()
    if todo:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            for (n, rep), res in zip(todo, pool.map(lambda p: _one_spectrum(cfg, *p), todo)):
                results[(n, rep)] = res
    elapsed = time.perf_counter() - t0
    summary_rows = []
    for n, rep in pairs:  # ordered merge
        rel = _spectrum_csv_path(n, rep)
        path = os.path.join(out_dir, rel)
        key = f"spectrum_n{n}_rep{rep}"
        if (n, rep) in results:
            res = results[(n, rep)]
            with open(path, "w") as fh:
                fh.write(_header(cfg, n=n, rep=rep, method=res.method,
                                 residual=f"{res.residual:.3e}"))
                fh.write("re,im\n")
                for z in res.eigenvalues:
                    fh.write(f"{_FMT % z.real},{_FMT % z.imag}\n")
            nonreal = int(np.sum(np.abs(res.eigenvalues.imag) > cfg.nonreal_tol))
        else:
            data = np.loadtxt(path, delimiter=",", skiprows=2)
            nonreal = int(np.sum(np.abs(data[:, 1]) > cfg.nonreal_tol))
        summary_rows.append((n, rep, nonreal, nonreal / n, rel))
        artifacts[key] = rel
        times[key] = elapsed / max(len(todo), 1) if (n, rep) in results else 0.0
    rel = os.path.join("spectra", "summary.csv")
    with open(os.path.join(out_dir, rel), "w") as fh:
        fh.write(_header(cfg, nonreal_tol=cfg.nonreal_tol))
        fh.write("n,rep,nonreal_count,nonreal_fraction,path\n")
        for n, rep, cnt, frac, p in summary_rows:
            fh.write(f"{n},{rep},{cnt},{_FMT % frac},{p}\n")
    artifacts["summary"] = rel
    _write_plot_template(out_dir)  # template is config-independent, not a manifest artifact
    return _write_manifest(out_dir, cfg, artifacts, times, "spectrum")


def _ids_path() -> str:
    return os.path.join("ids", "ids_cache.txt")


def stage_ids(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> RunManifest:
    """Estimate (or reuse) the integrated density of states cache."""
    os.makedirs(os.path.join(out_dir, "ids"), exist_ok=True)
    rel = _ids_path()
    path = os.path.join(out_dir, rel)
    t0 = time.perf_counter()
    ids = _load_or_build_ids(cfg, out_dir)
    if not os.path.exists(path):
        save_ids(ids, path)
    artifacts = {"ids": rel}
    times = {"ids": time.perf_counter() - t0}
    return _write_manifest(out_dir, cfg, artifacts, times, "ids")


def _load_or_build_ids(cfg: ExperimentConfig, out_dir: str):
    from .ensembles import spec_hash

    os.makedirs(os.path.join(out_dir, "ids"), exist_ok=True)
    path = os.path.join(out_dir, _ids_path())
    want = spec_hash(cfg.ensemble)
    if os.path.exists(path):
        try:
            return load_ids(path, expect_hash=want)
        except ValidationError:
            pass  # stale cache: rebuild below
    ids = estimate_ids(cfg.ensemble, cfg.ids_n, cfg.ids_reps, grid_points=cfg.ids_grid_points)
    save_ids(ids, path)
    return ids


def stage_lyapunov(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> RunManifest:
    """Scan of the Lyapunov exponent: transfer and Thouless routes at the
    configured probe points plus a Thouless profile along the real axis."""
    os.makedirs(os.path.join(out_dir, "lyapunov"), exist_ok=True)
    ids = _load_or_build_ids(cfg, out_dir)
    mlc = mean_log_coupling(cfg.ensemble)
    rel = os.path.join("lyapunov", "lyapunov_scan.csv")
    t0 = time.perf_counter()
    with open(os.path.join(out_dir, rel), "w") as fh:
        fh.write(_header(cfg, n=cfg.thouless_n, reps=cfg.thouless_reps))
        fh.write("re,im,gamma_transfer,stderr,gamma_thouless,real_axis_caveat\n")
        for z in cfg.thouless_points:
            est = lyapunov_transfer(cfg.ensemble, cfg.thouless_n, cfg.thouless_reps, z)
            th = lyapunov_thouless(ids, mlc, complex(z))
            fh.write(
                f"{_FMT % est.z.real},{_FMT % est.z.imag},{_FMT % est.gamma_hat},"
                f"{_FMT % est.stderr},{_FMT % th},{int(est.real_axis_caveat)}\n"
            )
        lo, hi = ids.support
        for x in np.linspace(lo - 0.5, hi + 0.5, 41):
            th = lyapunov_thouless(ids, mlc, complex(x))
            fh.write(f"{_FMT % x},0,nan,nan,{_FMT % th},1\n")
    artifacts = {"lyapunov_scan": rel, "ids": _ids_path()}
    times = {"lyapunov_scan": time.perf_counter() - t0}
    return _write_manifest(out_dir, cfg, artifacts, times, "lyapunov")


def _model_path() -> str:
    return os.path.join("curve", "curve_model.txt")


def stage_curve(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> RunManifest:
    """Predicted limit object: coupling, curve, real support, density.

    An empty curve (g = 0 or |g| below onset) is a success with no arcs.
    """
    os.makedirs(os.path.join(out_dir, "curve"), exist_ok=True)
    ids = _load_or_build_ids(cfg, out_dir)
    t0 = time.perf_counter()
    g = coupling_g(cfg.ensemble)
    model = trace_curve(
        ids,
        g,
        mean_log_c=mean_log_coupling(cfg.ensemble),
        x_points=cfg.curve_x_points,
        curve_tol=cfg.curve_tol,
    )
    rel_model = _model_path()
    path = os.path.join(out_dir, rel_model)
    save_curve_model(model, path)
    _prepend_header(path, _header(cfg))
    rel_csv = os.path.join("curve", "curve_points.csv")
    with open(os.path.join(out_dir, rel_csv), "w") as fh:
        fh.write(_header(cfg, g=_FMT % g, threshold=_FMT % model.threshold,
                         mass=_FMT % model.total_mass()))
        fh.write("arc,x,y,rho\n")
        for i, arc in enumerate(model.arcs):
            for x, y, r in zip(arc.x, arc.y, arc.rho):
                fh.write(f"{i},{_FMT % x},{_FMT % y},{_FMT % r}\n")
    artifacts = {"curve_model": rel_model, "curve_points": rel_csv, "ids": _ids_path()}
    times = {"curve_model": time.perf_counter() - t0}
    _write_plot_template(out_dir)
    return _write_manifest(out_dir, cfg, artifacts, times, "curve")


def _prepend_header(path: str, header: str) -> None:
    with open(path) as fh:
        body = fh.read()
    with open(path, "w") as fh:
        fh.write(header + body)


def load_model(cfg: ExperimentConfig, out_dir: str) -> CurveModel:
    ids = _load_or_build_ids(cfg, out_dir)
    path = os.path.join(out_dir, _model_path())
    if not os.path.exists(path):
        raise ValidationError(f"no curve model at {path}; run the curve stage first")
    with open(path) as fh:
        head = fh.readline()
    if config_hash(cfg) not in head:
        raise ValidationError("curve model was produced under a different config hash")
    # strip our header line for the parser
    with open(path) as fh:
        fh.readline()
        text = fh.read()
    tmp = os.path.join(out_dir, "curve", ".model_body.txt")
    with open(tmp, "w") as fh:
        fh.write(text)
    try:
        return load_curve_model(tmp, ids)
    finally:
        os.remove(tmp)


def stage_verify(cfg: ExperimentConfig, out_dir: str, jobs: int = 1):
    """Full invariant battery; returns (manifest, results, all_passed)."""
    os.makedirs(out_dir, exist_ok=True)
    ids = _load_or_build_ids(cfg, out_dir)
    g = coupling_g(cfg.ensemble)
    model = trace_curve(ids, g, mean_log_c=mean_log_coupling(cfg.ensemble),
                        x_points=cfg.curve_x_points, curve_tol=cfg.curve_tol)
    results = [
        check_rank2_identity(cfg.ensemble),
        check_thouless_residual(
            cfg.ensemble, ids, cfg.thouless_points, cfg.thouless_n, cfg.thouless_reps, cfg.thouless_tol
        ),
        check_transfer_eigenvector_bounds(cfg.ensemble),
    ]
    if model.arcs:
        results.append(check_exclusion(cfg.ensemble, model, cfg.rect_margin, cfg.exclusion_n, cfg.exclusion_reps))
    panel_check, table = check_weak_convergence(cfg.ensemble, model, cfg.panel_sizes, reps=cfg.panel_reps)
    results.append(panel_check)
    results.append(check_mass(model, cfg.mass_tol))
    rel = "verify_report.txt"
    with open(os.path.join(out_dir, rel), "w") as fh:
        fh.write(_header(cfg))
        for res in results:
            fh.write(res.line() + "\n")
        fh.write("\n# weak-convergence panel (per test function)\n")
        fh.write("n," + ",".join(f"f{i}" for i in range(len(table[0][2]))) + "\n")
        fh.write("predicted," + ",".join(_FMT % v for v in table[0][3]) + "\n")
        for n, err, empirical, _ in table:
            fh.write(f"{n}," + ",".join(_FMT % v for v in empirical) + "\n")
    manifest = _write_manifest(out_dir, cfg, {"verify_report": rel}, {}, "verify")
    return manifest, results, all(r.passed for r in results)


# -- compare -------------------------------------------------------------------

def _point_segment_distance(p: np.ndarray, a: complex, b: complex) -> np.ndarray:
    ab = b - a
    denom = abs(ab) ** 2
    if denom == 0.0:
        return np.abs(p - a)
    t = np.clip(((p - a) * np.conj(ab)).real / denom, 0.0, 1.0)
    return np.abs(p - (a + t * ab))


def distance_to_arcs(points: np.ndarray, model: CurveModel) -> np.ndarray:
    """Distance from each complex point to the traced curve (both sheets)."""
    points = np.asarray(points, complex)
    if not model.arcs:
        return np.full(points.shape, np.inf)
    best = np.full(points.shape, np.inf)
    for arc in model.arcs:
        for sheet in (arc.points(), np.conj(arc.points())):
            for a, b in zip(sheet[:-1], sheet[1:]):
                best = np.minimum(best, _point_segment_distance(points, a, b))
    return best


def stage_compare(cfg: ExperimentConfig, out_dir: str, jobs: int = 1):
    """Empirical spectra against the predicted limit: distances and
    histograms.  Needs the spectrum and curve stages' artifacts."""
    model = load_model(cfg, out_dir)
    rows = []
    for n in cfg.sizes:
        for rep in range(cfg.reps):
            path = os.path.join(out_dir, _spectrum_csv_path(n, rep))
            if not _check_artifact(path, cfg):
                raise ValidationError(
                    f"spectrum artifact {path} missing or from a different config"
                )
            data = np.loadtxt(path, delimiter=",", skiprows=2)
            eigs = data[:, 0] + 1j * data[:, 1]
            nonreal = eigs[np.abs(eigs.imag) > cfg.nonreal_tol]
            if nonreal.size:
                d_curve = distance_to_arcs(nonreal, model)
                haus_curve = float(np.max(d_curve))
                haus_curve_or_axis = float(np.max(np.minimum(d_curve, np.abs(nonreal.imag))))
            else:
                haus_curve = haus_curve_or_axis = 0.0
            real_mass_err = _real_histogram_error(eigs, model, cfg.nonreal_tol)
            arc_hist_err = _arc_histogram_error(nonreal, model, n)
            rows.append((n, rep, nonreal.size / n, haus_curve, haus_curve_or_axis,
                         real_mass_err, arc_hist_err))
    rel = "compare_report.csv"
    with open(os.path.join(out_dir, rel), "w") as fh:
        fh.write(_header(cfg, hausdorff_budget=cfg.hausdorff_budget))
        fh.write("n,rep,nonreal_fraction,hausdorff_to_curve,hausdorff_to_curve_or_axis,"
                 "real_hist_max_err,arc_hist_max_err\n")
        for row in rows:
            fh.write(f"{row[0]},{row[1]}," + ",".join(_FMT % v for v in row[2:]) + "\n")
    manifest = _write_manifest(out_dir, cfg, {"compare_report": rel}, {}, "compare")
    return manifest, rows


def _real_histogram_error(eigs: np.ndarray, model: CurveModel, tol: float) -> float:
    """Per-interval mass of real eigenvalues against the dN mass on Sigma."""
    real = np.sort(eigs[np.abs(eigs.imag) <= tol].real)
    n = eigs.size
    worst = 0.0
    for lo, hi in model.sigma:
        emp = np.sum((real >= lo) & (real <= hi)) / n
        pred = _sigma_interval_mass(model, lo, hi)
        worst = max(worst, abs(emp - pred))
    return worst


def _sigma_interval_mass(model: CurveModel, lo: float, hi: float) -> float:
    ids = model.ids
    return float(np.interp(hi, ids.grid, ids.values) - np.interp(lo, ids.grid, ids.values))


def _arc_histogram_error(nonreal: np.ndarray, model: CurveModel, n: int, bins_per_arc: int = 12) -> float:
    """Eigenvalues per arc-length bin (folded to the upper sheet, counted
    over both) against twice the density integral of the bin."""
    if not model.arcs or nonreal.size == 0:
        return 0.0
    folded = nonreal.real + 1j * np.abs(nonreal.imag)
    bins = []  # (arc, start_idx, end_idx, predicted_mass)
    centers = []
    for arc in model.arcs:
        pts = arc.points()
        dl = np.abs(np.diff(pts))
        cum = np.concatenate(([0.0], np.cumsum(dl)))
        edges = np.linspace(0.0, cum[-1], bins_per_arc + 1)
        seg_mass = 0.5 * (arc.rho[:-1] + arc.rho[1:]) * dl
        for b in range(bins_per_arc):
            inside = (cum[:-1] >= edges[b]) & (cum[:-1] < edges[b + 1])
            pred = 2.0 * float(np.sum(seg_mass[inside]))
            mid = np.interp(0.5 * (edges[b] + edges[b + 1]), cum, np.arange(cum.size))
            centers.append(pts[int(round(mid))])
            bins.append(pred)
    centers = np.asarray(centers)
    counts = np.zeros(len(bins))
    for z in folded:
        counts[int(np.argmin(np.abs(centers - z)))] += 1.0
    emp = counts / n
    return float(np.max(np.abs(emp - np.asarray(bins))))


_PLOT_TEMPLATE = '''"""Plot helper template (not part of the package).

Reads the CSV artifacts written next to this file.  Adapt freely; any
plotting engine works, matplotlib shown.
"""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
fig, ax = plt.subplots()
for path in sorted(out.glob("spectra/spectrum_*.csv")):
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")][1:]
    xs = [float(r[0]) for r in rows]
    ys = [float(r[1]) for r in rows]
    ax.plot(xs, ys, ".", ms=2, alpha=0.6, label=path.stem)
curve = out / "curve" / "curve_points.csv"
if curve.exists():
    with open(curve) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")][1:]
    xs = [float(r[1]) for r in rows]
    ys = [float(r[2]) for r in rows]
    ax.plot(xs, ys, "k-", lw=1)
    ax.plot(xs, [-y for y in ys], "k-", lw=1)
ax.set_xlabel("Re z")
ax.set_ylabel("Im z")
ax.legend(fontsize=6)
fig.savefig(out / "spectrum_plot.png", dpi=160)
print("wrote", out / "spectrum_plot.png")
'''


def _write_plot_template(out_dir: str) -> None:
    path = os.path.join(out_dir, "plot_template.py")
    if not os.path.exists(path):
        with open(path, "w") as fh:
            fh.write(_PLOT_TEMPLATE)
