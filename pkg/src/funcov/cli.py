"""Command-line interface.

Four subcommands cover the full workflow:

``fit``
    Estimate a model from a long-format CSV and write the model file
    plus grid-evaluated eigenfunctions and correlation surfaces.
``predict``
    Load a model, condition on a CSV of observations, and write
    per-subject predictions with bands plus a score table.
``simulate``
    Write replicate datasets from the built-in trivariate design.
``evaluate``
    Run the full simulate/fit/score loop and write per-replicate
    metrics with summary quantiles.

Flags mirror :class:`funcov.config.RunConfig`; ``--config file.json``
overrides flags. Failures exit nonzero with a JSON error payload on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import RunConfig, merge_config
from .dataset import CSV_HEADER, SparseFunctionalDataset
from .errors import DataFormatError, DomainError, FuncovError
from .fpca import eval_covariance, eval_eigenfunction
from .model_io import load_model, save_model
from .pipeline import FitSettings, fit_covariance_model
from .predict import predict_subject
from .simulate import SimDesign, generate, replicate_metrics
from . import __version__


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message, code=2)


def _fail(kind: str, message: str, detail=None, code: int = 1):
    payload = {"error": kind, "message": message}
    if detail:
        payload["detail"] = detail
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    raise SystemExit(code)


def _fmt(x) -> str:
    """Deterministic shortest round-trip formatting for CSV cells."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _add_fit_flags(sp):
    sp.add_argument("--order", type=int, help="spline order (degree + 1)")
    sp.add_argument("--n-interior-mean", dest="n_interior_mean", type=int)
    sp.add_argument("--n-interior-cov", dest="n_interior_cov", type=int)
    sp.add_argument("--pve", type=float, help="explained-variance target")
    sp.add_argument("--npc", type=int, help="force the component count")
    sp.add_argument("--workers", type=int, help="thread pool size")
    sp.add_argument("--grid-size", dest="grid_size", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="funcov", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "predict", "simulate", "evaluate"):
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON config file; overrides flags")
        if name == "fit":
            sp.add_argument("--data", required=True, help="long-format CSV")
            sp.add_argument("--out", required=True, help="model file to write")
            sp.add_argument("--domain", help="a,b time interval")
            sp.add_argument("--responses", help="comma-separated response labels")
            _add_fit_flags(sp)
        elif name == "predict":
            sp.add_argument("--model", required=True)
            sp.add_argument("--data", required=True, help="observations CSV")
            sp.add_argument("--out", required=True, help="predictions CSV to write")
            sp.add_argument(
                "--times",
                choices=("grid", "observed"),
                help="predict on a uniform grid or at each subject's own times",
            )
            sp.add_argument("--grid-size", dest="grid_size", type=int)
            sp.add_argument("--npc", type=int)
            sp.add_argument("--level", type=float)
        elif name == "simulate":
            sp.add_argument("--out-dir", required=True)
            sp.add_argument("--n", type=int)
            sp.add_argument("--rho", type=float)
            sp.add_argument("--snr", type=float)
            sp.add_argument("--m-min", dest="m_min", type=int)
            sp.add_argument("--m-max", dest="m_max", type=int)
            sp.add_argument("--seed", type=int)
            sp.add_argument("--replicates", type=int)
            sp.add_argument("--n-test", dest="n_test", type=int)
        else:
            sp.add_argument("--out-dir", required=True)
            sp.add_argument("--n", help="training sizes, comma separated")
            sp.add_argument("--rho", type=float)
            sp.add_argument("--snr", type=float)
            sp.add_argument("--m-min", dest="m_min", type=int)
            sp.add_argument("--m-max", dest="m_max", type=int)
            sp.add_argument("--seed", type=int)
            sp.add_argument("--replicates", type=int)
            sp.add_argument("--n-test", dest="n_test", type=int)
            sp.add_argument(
                "--compare-zero-cross",
                dest="compare_zero_cross",
                action="store_true",
                help="also score predictions with cross blocks zeroed",
            )
            _add_fit_flags(sp)
    return parser


def _config_from_args(args) -> RunConfig:
    flag_values = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config", "data", "out", "model", "out_dir", "times")
    }
    if "domain" in flag_values:
        parts = flag_values["domain"].split(",")
        if len(parts) != 2:
            raise FuncovError("--domain expects 'a,b'")
        flag_values["domain"] = (float(parts[0]), float(parts[1]))
    if "responses" in flag_values:
        flag_values["responses"] = [
            r.strip() for r in flag_values["responses"].split(",") if r.strip()
        ]
    if "n" in flag_values and isinstance(flag_values["n"], str):
        values = [int(v) for v in flag_values["n"].split(",") if v.strip()]
        if not values:
            raise FuncovError("--n expects one or more integers")
        flag_values["n"] = values[0]
        flag_values["n_values"] = values
    return merge_config(flag_values, getattr(args, "config", None))


def _fit_settings(cfg: RunConfig) -> FitSettings:
    return FitSettings(
        order=cfg.order,
        n_interior_mean=cfg.n_interior_mean,
        n_interior_cov=cfg.n_interior_cov,
        tau_grid=cfg.tau_grid,
        rho_grid=cfg.rho_grid,
        w_grid=cfg.w_grid,
        pve=cfg.pve,
        npc=cfg.npc,
        domain=cfg.domain,
        workers=cfg.workers,
    )


def cmd_fit(args) -> int:
    cfg = _config_from_args(args)
    data = SparseFunctionalDataset.from_csv(args.data, response_order=cfg.responses)
    res = fit_covariance_model(data, _fit_settings(cfg))
    save_model(args.out, res.model, res.eig)

    stem = args.out[:-5] if args.out.endswith(".json") else args.out
    a, b = res.model.ws.domain
    grid = np.linspace(a, b, cfg.grid_size)
    labels = res.model.response_labels
    with open(f"{stem}.eigenfunctions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["response", "component", "time", "value"])
        for ell in range(res.npc):
            for k, label in enumerate(labels):
                vals = eval_eigenfunction(res.eig, ell, k, grid)
                for t, v in zip(grid, vals):
                    writer.writerow([label, ell + 1, _fmt(float(t)), _fmt(float(v))])
    with open(f"{stem}.correlations.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["response_i", "response_j", "s", "t", "value"])
        diag = [
            np.sqrt(np.clip(np.diag(eval_covariance(res.model, k, k, grid, grid)), 0, None))
            for k in range(len(labels))
        ]
        for k, lk in enumerate(labels):
            for kp, lkp in enumerate(labels):
                surf = eval_covariance(res.model, k, kp, grid, grid)
                denom = np.outer(diag[k], diag[kp])
                with np.errstate(divide="ignore", invalid="ignore"):
                    corr = np.where(denom > 0, surf / denom, np.nan)
                for i_s, s_val in enumerate(grid):
                    for j_t, t_val in enumerate(grid):
                        writer.writerow(
                            [lk, lkp, _fmt(float(s_val)), _fmt(float(t_val)), _fmt(float(corr[i_s, j_t]))]
                        )
    print(
        json.dumps(
            {
                "model": args.out,
                "npc": res.npc,
                "eigenvalues": [float(v) for v in res.eig.d],
                "sigma2": [float(v) for v in res.model.sigma2],
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_predict(args) -> int:
    cfg = _config_from_args(args)
    model, eig = load_model(args.model)
    mode = getattr(args, "times", "grid")
    data = SparseFunctionalDataset.from_csv(
        args.data, response_order=model.response_labels, allow_empty=True
    )
    scores_path = (
        args.out[:-4] + ".scores.csv" if args.out.endswith(".csv") else args.out + ".scores.csv"
    )
    pred_header = ["subject", "response", "time", "xhat", "variance", "lower95", "upper95", "error"]
    a, b = model.ws.domain
    npc = cfg.npc
    with open(args.out, "w", newline="") as fh, open(scores_path, "w", newline="") as sh:
        writer = csv.writer(fh)
        writer.writerow(pred_header)
        score_writer = csv.writer(sh)
        score_writer.writerow(["subject", "component", "score"])
        if data is None:
            return 0
        p = model.p
        for i, subject in enumerate(data.subjects):
            obs_t, obs_v, dropped = [], [], []
            for k in range(p):
                t, v = data.obs(i, k)
                ok = (t >= a) & (t <= b)
                if not ok.all():
                    for t_bad, v_bad in zip(t[~ok], v[~ok]):
                        dropped.append((k, float(t_bad)))
                obs_t.append(t[ok])
                obs_v.append(v[ok])
            if mode == "grid":
                new_times = np.linspace(a, b, cfg.grid_size)
            else:
                pooled = [t for t in obs_t if t.size]
                new_times = np.unique(np.concatenate(pooled)) if pooled else np.zeros(0)
            if new_times.size:
                pred = predict_subject(
                    model, eig, obs_t, obs_v, new_times, npc=npc, level=cfg.level
                )
                var = np.clip(np.diag(pred.cov), 0.0, None).reshape(p, new_times.size)
                for k, label in enumerate(model.response_labels):
                    for j, t in enumerate(new_times):
                        writer.writerow(
                            [
                                subject,
                                label,
                                _fmt(float(t)),
                                _fmt(float(pred.xhat[k, j])),
                                _fmt(float(var[k, j])),
                                _fmt(float(pred.lower[k, j])),
                                _fmt(float(pred.upper[k, j])),
                                "",
                            ]
                        )
                for ell, value in enumerate(pred.scores):
                    score_writer.writerow([subject, ell + 1, _fmt(float(value))])
            for k, t_bad in dropped:
                writer.writerow(
                    [
                        subject,
                        model.response_labels[k],
                        _fmt(t_bad),
                        "",
                        "",
                        "",
                        "",
                        f"time outside fitted domain [{a!r}, {b!r}]",
                    ]
                )
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    os.makedirs(args.out_dir, exist_ok=True)
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(cfg.replicates)
    from .simulate import coupling_matrix, _sorted_eigh_desc

    d, _ = _sorted_eigh_desc(coupling_matrix(cfg.rho))
    for r in range(cfg.replicates):
        design = SimDesign(
            n=cfg.n,
            rho=cfg.rho,
            snr=cfg.snr,
            m_min=cfg.m_min,
            m_max=cfg.m_max,
            seed=children[r],
            n_test=cfg.n_test,
        )
        train, truth = generate(design)
        train.to_csv(os.path.join(args.out_dir, f"replicate_{r:03d}.csv"))
        if truth.test_data is not None:
            truth.test_data.to_csv(
                os.path.join(args.out_dir, f"replicate_{r:03d}_test.csv")
            )
    with open(os.path.join(args.out_dir, "truth.json"), "w") as fh:
        json.dump(
            {
                "design": {
                    "n": cfg.n,
                    "rho": cfg.rho,
                    "snr": cfg.snr,
                    "m_min": cfg.m_min,
                    "m_max": cfg.m_max,
                    "seed": cfg.seed,
                    "replicates": cfg.replicates,
                    "n_test": cfg.n_test,
                },
                "eigenvalues": [float(v) for v in d],
                "sigma_eps2": float(np.clip(d, 0, None).sum() / (3 * cfg.snr)),
            },
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    return 0


METRIC_COLUMNS = (
    "rise",
    "ise_1",
    "ise_2",
    "ratio_1",
    "ratio_2",
    "mise",
    "mise_zero_cross",
)


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    os.makedirs(args.out_dir, exist_ok=True)
    n_values = cfg.n_values or [cfg.n]
    settings = _fit_settings(cfg)
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(len(n_values) * cfg.replicates)
    runs = [
        (n, r, children[i * cfg.replicates + r])
        for i, n in enumerate(n_values)
        for r in range(cfg.replicates)
    ]

    def one_run(run):
        n, r, child = run
        design = SimDesign(
            n=n,
            rho=cfg.rho,
            snr=cfg.snr,
            m_min=cfg.m_min,
            m_max=cfg.m_max,
            seed=child,
            n_test=cfg.n_test,
        )
        return replicate_metrics(
            design,
            settings,
            grid_size=cfg.grid_size,
            compare_zero_cross=cfg.compare_zero_cross,
        )

    results = []
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(one_run, run) for run in runs]
            for run, fut in zip(runs, futures):
                try:
                    results.append((run, fut.result()))
                except Exception as exc:  # noqa: BLE001 - recorded per replicate
                    results.append((run, exc))
    else:
        for run in runs:
            try:
                results.append((run, one_run(run)))
            except Exception as exc:  # noqa: BLE001 - recorded per replicate
                results.append((run, exc))

    failures = []
    rows = []
    for (n, r, _), outcome in results:
        if isinstance(outcome, Exception):
            failures.append({"n": n, "replicate": r, "error": str(outcome)})
            continue
        rows.append((n, r, outcome))

    metrics_path = os.path.join(args.out_dir, "metrics.csv")
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "replicate"] + list(METRIC_COLUMNS))
        for n, r, m in rows:
            writer.writerow(
                [n, r]
                + [_fmt(float(m[c])) if c in m else "" for c in METRIC_COLUMNS]
            )

    per_n = []
    for n in n_values:
        group = [m for nn, _, m in rows if nn == n]
        summary = {}
        for col in METRIC_COLUMNS:
            vals = np.array([m[col] for m in group if col in m], dtype=float)
            if vals.size == 0:
                continue
            summary[col] = {
                "median": float(np.median(vals)),
                "q25": float(np.quantile(vals, 0.25)),
                "q75": float(np.quantile(vals, 0.75)),
            }
        per_n.append({"n": n, "replicates_done": len(group), "metrics": summary})
    summary_path = os.path.join(args.out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(
            {
                "design": {
                    "rho": cfg.rho,
                    "snr": cfg.snr,
                    "m_min": cfg.m_min,
                    "m_max": cfg.m_max,
                    "seed": cfg.seed,
                    "replicates": cfg.replicates,
                    "n_test": cfg.n_test,
                },
                "per_n": per_n,
                "failures": failures,
            },
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    print(json.dumps({"metrics": metrics_path, "summary": summary_path}, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "fit": cmd_fit,
        "predict": cmd_predict,
        "simulate": cmd_simulate,
        "evaluate": cmd_evaluate,
    }
    try:
        return handlers[args.command](args)
    except DataFormatError as exc:
        _fail("data-format", str(exc), detail=[[n, m] for n, m in exc.rows] or None)
    except DomainError as exc:
        _fail("domain", str(exc))
    except FuncovError as exc:
        _fail("invalid", str(exc))
    except OSError as exc:
        _fail("io", str(exc))
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
