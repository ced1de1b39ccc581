"""Command-line pipeline: ``simulate``, ``smooth``, ``fpca`` and ``eval``.

Every command writes UTF-8 CSV files with a header row and LF line endings;
floats use 17 significant digits so that identical inputs give
byte-identical files. Run summaries go to JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .blockops import BlockDiagMatrix, BlockLayout
from .kernels import frame, gram, parse_kernel
from .rek import SolverConfig, SolveStatus
from .simulate import ProcessSpec, covariance, parse_process, sample_dataset
from .smoother import (
    CovarianceFit,
    FitMode,
    FunctionalDataset,
    MeanFit,
    evaluate_on_grid,
    fit_covariance_centered,
    fit_mean,
    fit_second_moment,
    fpca,
)

log = logging.getLogger("trek")

EXIT_DIVERGED = 2
MODES = ("second-moment", "centered", "plugin")


class CliError(RuntimeError):
    pass


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _open_csv(path: Path, header):
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from exc
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def _write_json(path: Path, obj):
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from exc


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def grid(m: int) -> np.ndarray:
    """Regular grid ``(k - 1) / m``, ``k = 1..m``."""
    if m < 1:
        raise CliError(f"--m must be positive, got {m}")
    return np.arange(m) / m


# -- dataset I/O -------------------------------------------------------------

def write_dataset(data: FunctionalDataset, path: Path):
    fh, w = _open_csv(path, ["function_index", "location", "value"])
    with fh:
        for i, (x, y) in enumerate(zip(data.locations, data.values)):
            for xv, yv in zip(x, y):
                w.writerow([i, _fmt(xv), _fmt(yv)])


def read_dataset(path: Path) -> FunctionalDataset:
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise CliError(f"cannot read dataset {path}: {exc.strerror}") from exc
    blocks: dict[int, tuple[list, list]] = {}
    with fh:
        reader = csv.DictReader(fh)
        missing = {"function_index", "location", "value"} - set(reader.fieldnames or ())
        if missing:
            raise CliError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                i = int(row["function_index"])
                x, y = float(row["location"]), float(row["value"])
            except (TypeError, ValueError) as exc:
                raise CliError(f"{path}:{lineno}: {exc}") from None
            xs, ys = blocks.setdefault(i, ([], []))
            xs.append(x)
            ys.append(y)
    if not blocks:
        raise CliError(f"{path}: no data rows")
    keys = sorted(blocks)
    if keys != list(range(len(keys))):
        raise CliError(f"{path}: function indices must be 0..n-1 without gaps")
    return FunctionalDataset.from_blocks([blocks[i][0] for i in keys], [blocks[i][1] for i in keys])


def _spec_from_args(args) -> ProcessSpec:
    try:
        kw = parse_process(args.process)
        return ProcessSpec(sigma=args.sigma, n=args.n, r=args.r, seed=args.seed, **kw)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _spec_record(spec: ProcessSpec) -> dict:
    return {"process": spec.describe(), "n": spec.n, "r": spec.r, "sigma": spec.sigma,
            "seed": spec.seed}


# -- fit artifacts -------------------------------------------------------------

def save_fit(path: Path, data: FunctionalDataset, fit: CovarianceFit, mean: MeanFit | None,
             kernel: str, mode: str, process: str | None):
    arrays = dict(
        r=np.asarray(data.layout.r, dtype=np.int64),
        x=data.x,
        y=data.y,
        B=fit.B.data,
        eta=np.float64(fit.eta),
        kernel=np.str_(kernel),
        mode=np.str_(mode),
        process=np.str_(process or ""),
    )
    if mean is not None:
        arrays["mean"] = mean.coefficients
        arrays["nu"] = np.float64(mean.nu)
    try:
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from exc


def load_fit(path: Path):
    """Return ``(data, fit, mean, kernel_spec, mode, process)`` from a saved fit."""
    try:
        z = np.load(path, allow_pickle=False)
    except OSError as exc:
        raise CliError(f"cannot read fit artifacts {path}: {exc}") from exc
    with z:
        layout = BlockLayout(tuple(int(v) for v in z["r"]))
        x, y = z["x"], z["y"]
        locs = [x[layout.slice(i)] for i in range(layout.n)]
        vals = [y[layout.slice(i)] for i in range(layout.n)]
        data = FunctionalDataset(layout, tuple(locs), tuple(vals))
        mode = str(z["mode"])
        fm = FitMode.CENTERED_COVARIANCE if mode == "centered" else FitMode.SECOND_MOMENT
        fit = CovarianceFit(BlockDiagMatrix(layout, z["B"], symmetric=True), float(z["eta"]),
                            report=None, mode=fm)
        mean = MeanFit(z["mean"], float(z["nu"]), float("nan")) if "mean" in z else None
        return data, fit, mean, str(z["kernel"]), mode, str(z["process"]) or None


def write_surface(path: Path, z: np.ndarray, values: np.ndarray):
    fh, w = _open_csv(path, ["k1", "k2", "z1", "z2", "value"])
    zs = [_fmt(v) for v in z]
    with fh:
        for k1 in range(z.size):
            row = values[k1]
            w.writerows([k1 + 1, k2 + 1, zs[k1], zs[k2], _fmt(row[k2])] for k2 in range(z.size))


def _truth_spec(process: str | None) -> ProcessSpec | None:
    if not process:
        return None
    try:
        return ProcessSpec(**parse_process(process))
    except ValueError:
        return None


def _max_rss_mb():
    try:
        import resource
    except ImportError:
        return None
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # kilobytes on Linux, bytes on macOS
    return rss / 1024.0 if sys.platform != "darwin" else rss / 2**20


# -- commands ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    out = _outdir(args.out)
    data = sample_dataset(spec)
    write_dataset(data, out / "dataset.csv")
    _write_json(out / "dataset.json", {**_spec_record(spec), "version": __version__})
    log.info("wrote %d rows to %s", data.layout.R, out / "dataset.csv")
    return 0


def _load_or_simulate(args):
    """Dataset plus the process description used for ``truth.csv``."""
    if args.data:
        path = Path(args.data)
        data = read_dataset(path)
        process = args.process_given
        sidecar = path.with_suffix(".json")
        if process is None and sidecar.exists():
            try:
                process = json.loads(sidecar.read_text(encoding="utf-8")).get("process")
            except (OSError, ValueError):
                process = None
        return data, process
    spec = _spec_from_args(args)
    return sample_dataset(spec), spec.describe()


def cmd_smooth(args) -> int:
    out = _outdir(args.out)
    try:
        kernel = parse_kernel(args.kernel)
        cfg = SolverConfig(tol=args.tol, maxiter=args.maxiter)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    data, process = _load_or_simulate(args)

    t0 = time.perf_counter()
    mean = None
    if args.mode == "centered":
        mean, fit = fit_covariance_centered(data, kernel, args.nu, args.eta, cfg)
    else:
        fit = fit_second_moment(data, kernel, args.eta, cfg)
        if args.mode == "plugin":
            mean = fit_mean(data, kernel, args.nu)
    wall = time.perf_counter() - t0
    report = fit.report

    fh, w = _open_csv(out / "residuals.csv", ["iteration", "delta"])
    with fh:
        w.writerows([k, _fmt(d)] for k, d in enumerate(report.residual_trace))

    z = grid(args.m)
    F = frame(kernel, data.layout, data.locations, z)
    write_surface(out / "surface.csv", z, evaluate_on_grid(fit, F, mean))
    truth = _truth_spec(process)
    if truth is not None:
        write_surface(out / "truth.csv", z, covariance(truth, z[:, None], z[None, :]))
    save_fit(out / "fit.npz", data, fit, mean, args.kernel, args.mode, process)

    summary = {
        "kappa": report.iterations,
        "status": report.status.value,
        "final_delta": report.residual_trace[-1],
        "wall_time_s": wall,
        "max_rss_mb": _max_rss_mb(),
        "n": data.layout.n,
        "R": data.layout.R,
        "L": data.layout.L,
        "kernel": args.kernel,
        "eta": args.eta,
        "nu": args.nu if mean is not None else None,
        "tol": args.tol,
        "maxiter": args.maxiter,
        "mode": args.mode,
        "m": args.m,
        "process": process,
        "version": __version__,
    }
    _write_json(out / "report.json", summary)
    log.info("%s after %d iterations (%.2f s)", report.status.value, report.iterations, wall)
    if args.strict and report.status is SolveStatus.DIVERGED:
        print(f"trek: solver diverged after {report.iterations} iterations", file=sys.stderr)
        return EXIT_DIVERGED
    return 0


def _fit_path(args) -> Path:
    path = Path(args.fit) if args.fit else Path(args.out) / "fit.npz"
    if not path.exists():
        raise CliError(f"missing fit artifacts {path}; run `trek smooth` first")
    return path


def cmd_eval(args) -> int:
    data, fit, mean, kernel, mode, _ = load_fit(_fit_path(args))
    out = _outdir(args.out)
    z = grid(args.m)
    F = frame(parse_kernel(kernel), data.layout, data.locations, z)
    write_surface(out / "surface.csv", z, evaluate_on_grid(fit, F, mean if mode == "plugin" else None))
    return 0


def cmd_fpca(args) -> int:
    data, fit, mean, kernel_spec, mode, _ = load_fit(_fit_path(args))
    out = _outdir(args.out)
    kernel = parse_kernel(kernel_spec)
    G = gram(kernel, data.layout, data.locations)
    use_mean = mean if mode == "plugin" else None
    res = fpca(fit, G, use_mean, truncate_negative=args.truncate)

    fh, w = _open_csv(out / "eigen.csv", ["l", "lambda"])
    with fh:
        w.writerows([l + 1, _fmt(v)] for l, v in enumerate(res.eigenvalues))

    z = grid(args.m)
    F = frame(kernel, data.layout, data.locations, z)
    phi = res.eigenfunctions(F)
    fh, w = _open_csv(out / "eigenfunctions.csv", ["l", "k", "z", "value"])
    with fh:
        for l in range(res.q):
            w.writerows([l + 1, k + 1, _fmt(z[k]), _fmt(phi[k, l])] for k in range(z.size))

    surface = evaluate_on_grid(fit, F, use_mean)
    recon = (phi * res.eigenvalues) @ phi.T
    orth = res.U.T @ G.values @ res.U
    _write_json(out / "fpca.json", {
        "q": res.q,
        "truncate_negative": bool(args.truncate),
        "reconstruction_max_abs_error": float(np.max(np.abs(recon - surface), initial=0.0)),
        "orthonormality_max_abs_error": float(np.max(np.abs(orth - np.eye(res.q)), initial=0.0)),
        "m": args.m,
    })
    return 0


# -- argument parsing ----------------------------------------------------------

def _add_common(p, *, sim: bool, solve: bool, grid_: bool, out_default: str):
    if sim:
        p.add_argument("--process", default=None,
                       help="bm, bb, ibm or ou:theta:sigma (default bm)")
        p.add_argument("--n", type=int, default=20, help="number of functions")
        p.add_argument("--r", type=int, default=100, help="observations per function")
        p.add_argument("--sigma", type=float, default=0.3, help="noise standard deviation")
        p.add_argument("--seed", type=int, default=0)
    if solve:
        p.add_argument("--kernel", default="gaussian:200",
                       help="gaussian:g, laplacian:g, linear or poly:d:c")
        p.add_argument("--eta", type=float, default=0.05, help="second-moment ridge")
        p.add_argument("--nu", type=float, default=0.05, help="mean ridge (centered/plugin)")
        p.add_argument("--tol", type=float, default=1e-10,
                       help="bound on the squared projected residual norm")
        p.add_argument("--maxiter", type=int, default=500)
        p.add_argument("--mode", choices=MODES, default="second-moment")
        p.add_argument("--strict", action="store_true",
                       help="exit with status 2 when the solver diverges")
    if grid_:
        p.add_argument("--m", type=int, default=500, help="grid resolution")
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trek", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    _add_common(p, sim=True, solve=False, grid_=False, out_default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("smooth", help="fit the second moment or covariance")
    p.add_argument("--data", default=None,
                   help="dataset CSV; simulate from --process etc. when omitted")
    _add_common(p, sim=True, solve=True, grid_=True, out_default="out")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("fpca", help="eigen-decompose a saved fit")
    p.add_argument("--fit", default=None, help="fit.npz (default: <out>/fit.npz)")
    p.add_argument("--truncate", action="store_true", help="drop negative eigenvalues")
    _add_common(p, sim=False, solve=False, grid_=True, out_default="out")
    p.set_defaults(func=cmd_fpca)

    p = sub.add_parser("eval", help="re-evaluate the surface from a saved fit")
    p.add_argument("--fit", default=None, help="fit.npz (default: <out>/fit.npz)")
    _add_common(p, sim=False, solve=False, grid_=True, out_default="out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if hasattr(args, "process"):
        args.process_given = args.process
        if args.process is None:
            args.process = "bm"
    if args.threads is not None and args.threads < 1:
        print("trek: --threads must be positive", file=sys.stderr)
        return 1
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except (CliError, ValueError) as exc:
        print(f"trek: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
