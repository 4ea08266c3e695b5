"""Command-line pipeline: extract -> learn/sweep -> simulate -> reconstruct
-> evaluate.

Every command is a pure function of the JSON config plus its input files;
rerunning a command rewrites byte-identical outputs.  The workdir is laid
out as ``patches/``, ``dict/``, ``sino/``, ``recon/`` and ``reports/`` with
JSON manifests linking the stages.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import dict_learn, metrics_eval, patch_image, recon_solver, tomo_model
from .tensor_core import NumericalError, load_tensor, norms, save_tensor, tprod

__all__ = ["main", "ConfigError", "load_config"]


class ConfigError(ValueError):
    pass


# schema: section -> key -> (type(s), required, default)
_SCHEMA = {
    "patches": {
        "p": (int, True, None),
        "r": (int, True, None),
        "stride": (int, False, 1),
        "max_patches": ((int, type(None)), False, None),
        "seed": (int, False, 0),
    },
    "learn": {
        "s": (int, True, None),
        "lambda": ((int, float), False, 0.1),
        "rho": ((int, float), False, 1.0),
        "eps": ((int, float), False, 1e-4),
        "max_iter": (int, False, 1000),
        "dykstra_max_iter": (int, False, 100),
        "dykstra_tol": ((int, float), False, 1e-10),
        "seed": (int, False, 0),
    },
    "sweep": {
        "lambdas": (list, True, None),
    },
    "tomo": {
        "num_angles": (int, True, None),
        "rays_per_angle": (int, True, None),
        "angle_start": ((int, float), False, 0.0),
        "angle_end": ((int, float), False, 180.0),
        "noise_level": ((int, float), False, 0.0),
        "seed": (int, False, 0),
        "export_matrix": (bool, False, False),
    },
    "recon": {
        "mu": ((int, float, type(None)), False, None),
        "tau": ((int, float, type(None)), False, None),
        "delta": ((int, float), False, 0.0),
        "nu": (int, False, 1),
        "max_iter": (int, False, 20000),
        "rel_change_tol": ((int, float), False, 1e-7),
        "dykstra_tol": ((int, float), False, 1e-3),
        "dykstra_max_iter": (int, False, 200),
        "initial_step": ((int, float, type(None)), False, None),
        "backtrack_shrink": ((int, float), False, 0.5),
        "boundary_scaling": (str, False, "stacked"),
    },
    "paths": {
        "train_image": (str, False, None),
        "exact_image": (str, False, None),
        "workdir": (str, True, None),
    },
}
_OPTIONAL_SECTIONS = {"sweep"}


def _validate_section(name: str, raw: dict) -> dict:
    schema = _SCHEMA[name]
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(
            f"config section '{name}' has unknown keys {sorted(unknown)}; "
            f"known keys are {sorted(schema)}"
        )
    out = {}
    for key, (types, required, default) in schema.items():
        if key in raw:
            val = raw[key]
            if isinstance(val, bool) and types is int:
                raise ConfigError(f"config '{name}.{key}' must be an integer")
            if not isinstance(val, types):
                raise ConfigError(
                    f"config '{name}.{key}' has type {type(val).__name__}, "
                    f"expected {types}"
                )
            out[key] = val
        elif required:
            raise ConfigError(f"config section '{name}' is missing required key '{key}'")
        else:
            out[key] = default
    return out


def _check_values(cfg: dict) -> None:
    p = cfg["patches"]
    if p["p"] < 1 or p["r"] < 1:
        raise ConfigError("patches.p and patches.r must be >= 1")
    if p["stride"] < 1:
        raise ConfigError("patches.stride must be >= 1")
    le = cfg["learn"]
    if le["rho"] <= 0:
        raise ConfigError(f"learn.rho must be > 0, got {le['rho']}")
    if le["lambda"] < 0:
        raise ConfigError("learn.lambda must be >= 0")
    if le["eps"] <= 0:
        raise ConfigError("learn.eps must be > 0")
    re_ = cfg["recon"]
    if re_["nu"] not in (1, 2):
        raise ConfigError(f"recon.nu must be 1 or 2, got {re_['nu']}")
    if "sweep" in cfg:
        lams = cfg["sweep"]["lambdas"]
        if len(lams) < 2:
            raise ConfigError("sweep.lambdas needs at least two values")
        if not all(isinstance(v, (int, float)) and v >= 0 for v in lams):
            raise ConfigError("sweep.lambdas must be non-negative numbers")


def load_config(path, overrides: list[str] | None = None) -> dict:
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form section.key=value")
        dotted, text = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key '{dotted}' must be section.key")
        sec, key = parts
        try:
            val = json.loads(text)
        except json.JSONDecodeError:
            val = text
        raw.setdefault(sec, {})
        if not isinstance(raw[sec], dict):
            raise ConfigError(f"config section '{sec}' must be an object")
        raw[sec][key] = val

    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(
            f"unknown config sections {sorted(unknown)}; known sections are "
            f"{sorted(_SCHEMA)}"
        )
    cfg = {}
    for name in _SCHEMA:
        if name in raw:
            if not isinstance(raw[name], dict):
                raise ConfigError(f"config section '{name}' must be an object")
            cfg[name] = _validate_section(name, raw[name])
        elif name not in _OPTIONAL_SECTIONS:
            cfg[name] = _validate_section(name, {})
    _check_values(cfg)
    return cfg


# ---------------------------------------------------------------------------
# shared helpers


def _workdir(cfg: dict, sub: str) -> Path:
    d = Path(cfg["paths"]["workdir"]) / sub
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_manifest(dirpath: Path, payload: dict) -> None:
    with open(dirpath / "manifest.json", "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def _require_image(cfg: dict, key: str) -> np.ndarray:
    path = cfg["paths"].get(key)
    if not path:
        raise ConfigError(f"paths.{key} is required by this command")
    try:
        return patch_image.load_image(path)
    except FileNotFoundError:
        raise ConfigError(f"paths.{key} not found: {path}")


def _geometry_for(cfg: dict, img: np.ndarray) -> patch_image.PatchGeometry:
    p, r = cfg["patches"]["p"], cfg["patches"]["r"]
    M, N = img.shape
    if M % p != 0:
        raise ConfigError(f"patches.p={p} does not divide the image height {M}")
    if N % r != 0:
        raise ConfigError(f"patches.r={r} does not divide the image width {N}")
    return patch_image.PatchGeometry(p=p, r=r, M=M, N=N)


def _learn_config(cfg: dict, lam: float | None = None) -> dict_learn.DictLearnConfig:
    le = cfg["learn"]
    return dict_learn.DictLearnConfig(
        s=le["s"],
        lam=le["lambda"] if lam is None else lam,
        rho=le["rho"],
        eps=le["eps"],
        max_iter=le["max_iter"],
        dykstra_max_iter=le["dykstra_max_iter"],
        dykstra_tol=le["dykstra_tol"],
        seed=le["seed"],
    )


def _tomo_geometry(cfg: dict, img: np.ndarray) -> tomo_model.ParallelGeometry:
    M, N = img.shape
    if M != N:
        raise ConfigError(f"the simulator expects a square exact image, got {M}x{N}")
    t = cfg["tomo"]
    return tomo_model.ParallelGeometry(
        n_side=M,
        num_angles=t["num_angles"],
        rays_per_angle=t["rays_per_angle"],
        angle_start=t["angle_start"],
        angle_end=t["angle_end"],
    )


def _recon_config(cfg: dict) -> recon_solver.ReconConfig:
    rc = cfg["recon"]
    try:
        return recon_solver.ReconConfig(
            mu=rc["mu"],
            tau=rc["tau"],
            delta=rc["delta"],
            nu=rc["nu"],
            max_iter=rc["max_iter"],
            rel_change_tol=rc["rel_change_tol"],
            dykstra_tol=rc["dykstra_tol"],
            dykstra_max_iter=rc["dykstra_max_iter"],
            initial_step=rc["initial_step"],
            backtrack_shrink=rc["backtrack_shrink"],
            boundary_scaling=rc["boundary_scaling"],
        )
    except ValueError as exc:
        raise ConfigError(f"recon section invalid: {exc}")


def _write_history_csv(path, result: dict_learn.DictLearnResult) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "objective", "kkt1", "kkt2", "kkt3", "kkt4"])
        for i in range(result.iterations):
            w.writerow(
                [i + 1, repr(result.objective_history[i])]
                + [repr(v) for v in result.kkt_history[i]]
            )


# ---------------------------------------------------------------------------
# commands


def cmd_extract(cfg: dict) -> None:
    img = _require_image(cfg, "train_image")
    pc = cfg["patches"]
    Y = patch_image.extract_training_patches(
        img,
        p=pc["p"],
        r=pc["r"],
        stride=pc["stride"],
        max_patches=pc["max_patches"],
        seed=pc["seed"],
    )
    out = _workdir(cfg, "patches")
    save_tensor(out / "Y.tns", Y)
    _write_manifest(
        out,
        {
            "t": int(Y.shape[1]),
            "p": pc["p"],
            "r": pc["r"],
            "stride": pc["stride"],
            "max_patches": pc["max_patches"],
            "seed": pc["seed"],
            "source": cfg["paths"]["train_image"],
        },
    )
    print(f"extract: wrote {Y.shape[1]} patches of size {pc['p']}x{pc['r']}")


def _load_patches(cfg: dict) -> np.ndarray:
    path = Path(cfg["paths"]["workdir"]) / "patches" / "Y.tns"
    if not path.exists():
        raise ConfigError(f"training tensor {path} not found; run 'tpc extract' first")
    return load_tensor(path)


def cmd_learn(cfg: dict) -> None:
    Y = _load_patches(cfg)
    lcfg = _learn_config(cfg)
    result = dict_learn.learn_dictionary(Y, lcfg)
    out = _workdir(cfg, "dict")
    save_tensor(out / "D.tns", result.D)
    save_tensor(out / "H.tns", result.H)
    _write_history_csv(out / "history.csv", result)
    h_zero = bool(np.all(result.H == 0.0))
    _write_manifest(
        out,
        {
            "lambda": lcfg.lam,
            "s": lcfg.s,
            "rho": lcfg.rho,
            "eps": lcfg.eps,
            "seed": lcfg.seed,
            "iterations": result.iterations,
            "converged": result.converged,
            "coefficients_all_zero": h_zero,
        },
    )
    status = "converged" if result.converged else "max_iter reached"
    extra = "; coefficients are all zero" if h_zero else ""
    print(f"learn: {status} after {result.iterations} iterations{extra}")


def cmd_lambda_sweep(cfg: dict, lambdas: list[float] | None = None) -> float:
    if lambdas is None:
        if "sweep" not in cfg:
            raise ConfigError("sweep command requires a 'sweep' config section")
        lambdas = list(cfg["sweep"]["lambdas"])
    if len(lambdas) < 2:
        raise ConfigError("lambda sweep needs at least two values")
    Y = _load_patches(cfg)
    rows = []
    runs = {}
    for lam in sorted(lambdas):
        result = dict_learn.learn_dictionary(Y, _learn_config(cfg, lam=lam))
        resid = float(np.linalg.norm(Y - tprod(result.D, result.H)))
        h_sum = norms(result.H).sum
        rows.append((lam, resid, h_sum, result.iterations, result.converged))
        runs[lam] = result
    # winner minimizes ||H||_sum^2 + ||Y - D*H||_F^2
    crit = [h * h + r * r for _, r, h, _, _ in rows]
    best = rows[int(np.argmin(crit))][0]
    out = _workdir(cfg, "dict")
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["lambda", "residual_fro", "h_sum", "iterations", "converged"])
        for lam, resid, h_sum, iters, conv in rows:
            w.writerow([repr(float(lam)), repr(resid), repr(h_sum), iters, conv])
    winner = runs[best]
    save_tensor(out / "D.tns", winner.D)
    save_tensor(out / "H.tns", winner.H)
    _write_history_csv(out / "history.csv", winner)
    _write_manifest(
        out,
        {
            "lambda": float(best),
            "selected_by": "min h_sum^2 + residual^2",
            "sweep_lambdas": [float(v) for v in sorted(lambdas)],
            "s": cfg["learn"]["s"],
            "rho": cfg["learn"]["rho"],
            "eps": cfg["learn"]["eps"],
            "seed": cfg["learn"]["seed"],
            "iterations": winner.iterations,
            "converged": winner.converged,
        },
    )
    print(f"sweep: selected lambda={best:g} out of {sorted(lambdas)}")
    return float(best)


def cmd_simulate(cfg: dict) -> None:
    img = _require_image(cfg, "exact_image")
    geom = _tomo_geometry(cfg, img)
    A = tomo_model.build_parallel_matrix(geom)
    x = np.ravel(img, order="F")
    b_exact = tomo_model.forward_project(A, x)
    t = cfg["tomo"]
    b_noisy = tomo_model.add_relative_gaussian_noise(
        b_exact, t["noise_level"], seed=t["seed"]
    ) if t["noise_level"] > 0 else b_exact.copy()
    out = _workdir(cfg, "sino")
    clean = tomo_model.Sinogram(values=b_exact, geometry=geom)
    noisy = tomo_model.Sinogram(
        values=b_noisy, geometry=geom, noise_level=t["noise_level"], seed=t["seed"]
    )
    tomo_model.save_sinogram_csv(out / "clean.csv", clean)
    tomo_model.save_sinogram_csv(out / "noisy.csv", noisy)
    tomo_model.save_sinogram_raw(out / "clean.bin", clean)
    tomo_model.save_sinogram_raw(out / "noisy.bin", noisy)
    if t["export_matrix"]:
        tomo_model.export_matrix_market(out / "system_matrix.mtx", A)
    realized = (
        float(np.linalg.norm(b_noisy - b_exact) / np.linalg.norm(b_exact))
        if np.linalg.norm(b_exact) > 0
        else 0.0
    )
    _write_manifest(
        out,
        {
            "m": geom.m,
            "n_side": geom.n_side,
            "num_angles": geom.num_angles,
            "rays_per_angle": geom.rays_per_angle,
            "angle_start": geom.angle_start,
            "angle_end": geom.angle_end,
            "noise_level": t["noise_level"],
            "seed": t["seed"],
            "realized_relative_noise": realized,
        },
    )
    print(f"simulate: {geom.m} measurements, realized noise {realized:.6g}")


def _load_dictionary(cfg: dict) -> np.ndarray:
    path = Path(cfg["paths"]["workdir"]) / "dict" / "D.tns"
    if not path.exists():
        raise ConfigError(f"dictionary {path} not found; run 'tpc learn' or 'tpc sweep'")
    return load_tensor(path)


def _load_noisy_sinogram(cfg: dict, geom: tomo_model.ParallelGeometry) -> np.ndarray:
    path = Path(cfg["paths"]["workdir"]) / "sino" / "noisy.bin"
    if not path.exists():
        raise ConfigError(f"sinogram {path} not found; run 'tpc simulate' first")
    b = tomo_model.load_sinogram_raw(path)
    if b.size != geom.m:
        raise ConfigError(
            f"sinogram length {b.size} does not match geometry m={geom.m}"
        )
    return b


def cmd_reconstruct(cfg: dict) -> None:
    exact = _require_image(cfg, "exact_image")
    geom_t = _tomo_geometry(cfg, exact)
    geom_p = _geometry_for(cfg, exact)
    D = _load_dictionary(cfg)
    A = tomo_model.build_parallel_matrix(geom_t)
    b = _load_noisy_sinogram(cfg, geom_t)
    problem = recon_solver.build_recon_problem(A, b, D, geom_p)
    rcfg = _recon_config(cfg)
    t0 = time.perf_counter()
    x, C, diag = recon_solver.reconstruct(problem, rcfg)
    wall = time.perf_counter() - t0
    out = _workdir(cfg, "recon")
    patch_image.save_pgm(out / "x.pgm", x)
    save_tensor(out / "C.tns", C)
    with open(out / "diagnostics.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "objective", "step", "rel_change"])
        for i in range(diag.iterations):
            w.writerow(
                [
                    i + 1,
                    repr(diag.objective_history[i]),
                    repr(diag.step_history[i]),
                    repr(diag.rel_change_history[i]),
                ]
            )
    report = metrics_eval.MetricsReport(
        re=metrics_eval.relative_error(np.ravel(x, order="F"), np.ravel(exact, order="F")),
        ssim=metrics_eval.ssim(x, exact),
        density_percent=metrics_eval.density(C),
        compressibility_percent=metrics_eval.compressibility(C),
        iterations=diag.iterations,
        wall_time_seconds=wall,
        label=diag.prior,
    )
    reports = _workdir(cfg, "reports")
    metrics_eval.append_metrics_csv(reports / "metrics.csv", report)
    _write_manifest(
        out,
        {
            "prior": diag.prior,
            "nu": rcfg.nu,
            "mu": rcfg.mu,
            "tau": rcfg.tau,
            "delta": rcfg.delta,
            "iterations": diag.iterations,
            "converged": diag.converged,
            "re": report.re,
            "ssim": report.ssim,
            "density_percent": report.density_percent,
            "compressibility_percent": report.compressibility_percent,
        },
    )
    print(
        f"reconstruct[{diag.prior}]: {'converged' if diag.converged else 'max_iter'}"
        f" after {diag.iterations} iters, RE={100 * report.re:.2f}%"
        f" SSIM={report.ssim:.4f} ({wall:.1f}s)"
    )


def cmd_mae(cfg: dict) -> float:
    exact = _require_image(cfg, "exact_image")
    geom = _geometry_for(cfg, exact)
    D = _load_dictionary(cfg)
    X = patch_image.partition_image(exact, geom)
    errs = dict_learn.per_patch_errors(D, X)
    mae = float(np.sum(errs)) / (geom.p * geom.q * geom.r)
    reports = _workdir(cfg, "reports")
    with open(reports / "mae.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["patch", "fro_error"])
        for j, e in enumerate(errs):
            w.writerow([j, repr(float(e))])
    with open(reports / "mae.json", "w") as f:
        json.dump({"mae": mae, "q": geom.q}, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"mae: {mae:.6e} over {geom.q} patches")
    return mae


def cmd_evaluate(cfg: dict) -> None:
    exact = _require_image(cfg, "exact_image")
    work = Path(cfg["paths"]["workdir"])
    xpath = work / "recon" / "x.pgm"
    cpath = work / "recon" / "C.tns"
    if not xpath.exists() or not cpath.exists():
        raise ConfigError("no reconstruction found; run 'tpc reconstruct' first")
    x = patch_image.load_image(xpath)
    C = load_tensor(cpath)
    manifest = {}
    mpath = work / "recon" / "manifest.json"
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
    report = metrics_eval.MetricsReport(
        re=metrics_eval.relative_error(np.ravel(x, order="F"), np.ravel(exact, order="F")),
        ssim=metrics_eval.ssim(x, exact),
        density_percent=metrics_eval.density(C),
        compressibility_percent=metrics_eval.compressibility(C),
        iterations=int(manifest.get("iterations", 0)),
        label="evaluate:" + manifest.get("prior", "unknown"),
    )
    reports = _workdir(cfg, "reports")
    metrics_eval.append_metrics_csv(reports / "metrics.csv", report)
    print(
        f"evaluate: RE={100 * report.re:.2f}% SSIM={report.ssim:.4f} "
        f"density={report.density_percent:.2f}% "
        f"compressibility={report.compressibility_percent:.2f}%"
    )


_COMMANDS = {
    "extract": cmd_extract,
    "learn": cmd_learn,
    "sweep": cmd_lambda_sweep,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "mae": cmd_mae,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tpc",
        description="tensor patch coding: dictionary learning and "
        "dictionary-regularized tomographic reconstruction",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config entry (repeatable); VALUE is parsed as JSON",
    )
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
        _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
