"""Command-line front end.

Exit codes: 0 success, 1 inconclusive result, 2 invalid input, 3 accuracy
failure. Structured output goes to ``--out`` or stdout; human-readable
tables go to stdout only when a file is written and ``--quiet`` is unset.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    RunConfig,
    build_model,
    load_config,
    parse_config,
    parse_orders,
    validate_config,
)
from .errors import AccuracyError, InvalidInputError
from .hermite import indicator_coefficients
from .malliavin import regularity_report
from .mehler import indicator_covariance, mehler_series, orthant_covariance
from .moments import MomentSequence, compute_moments, default_orders, estimate_beta
from .simulation import build_grid, excursion_mean, sample_excursion, validate_variance

EXIT_OK, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_ACCURACY = 0, 1, 2, 3


def _plain(obj):
    """Recursively convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them as strings so the file stays standard
        return x if math.isfinite(x) else str(x)
    return obj


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    return buf.getvalue()


class Output:
    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command

    def envelope(self, payload: dict) -> dict:
        out = {"command": self.command, "version": __version__}
        if self.cfg.output.timestamp:
            out["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        out.update(payload)
        return _plain(out)

    def emit(self, json_payload: dict, csv_text: str | None = None, text: str | None = None) -> None:
        fmt = self.cfg.output.format
        if fmt == "csv" and csv_text is not None:
            body = csv_text
        elif fmt == "text" and text is not None:
            body = text
        else:
            body = json.dumps(self.envelope(json_payload), indent=2, allow_nan=False) + "\n"
        path = self.cfg.output.path
        if path:
            Path(path).write_text(body)
            if text is not None and not self.cfg.output.quiet:
                sys.stdout.write(text)
        else:
            sys.stdout.write(body)


def _note(cfg: RunConfig, message: str) -> None:
    if not cfg.output.quiet:
        print(message, file=sys.stderr)


# -- subcommands -------------------------------------------------------------

def cmd_coeffs(cfg: RunConfig, out: Output) -> int:
    u = cfg.analysis.level
    Q = cfg.analysis.Q if cfg.analysis.Q is not None else 100
    seq = indicator_coefficients(u, Q)
    a, b = seq.coeffs, seq.scaled_coeffs
    rows = [(q, float(a[q]), float(b[q]), float(b[q] ** 2)) for q in range(Q + 1)]
    parseval = math.fsum(b * b)
    payload = {
        "level": u, "Q": Q, "l2_norm_sq": seq.l2_norm_sq, "parseval_partial_sum": parseval,
        "rows": [{"q": q, "a_q": aq, "b_q": bq, "q_fact_a_q_sq": e} for q, aq, bq, e in rows],
    }
    text = "".join(f"{q:>6d} {aq: .10e} {bq: .10e} {e: .10e}\n" for q, aq, bq, e in rows)
    out.emit(payload, _csv(["q", "a_q", "b_q", "q_fact_a_q_sq"], rows), "     q  a_q               b_q               q!a_q^2\n" + text)
    return EXIT_OK


def _orders(cfg: RunConfig) -> np.ndarray:
    return parse_orders(cfg.analysis.orders)


def _load_moments(path):
    """Read a cache file or a `moments --format json` envelope; returns (spec or None, moments)."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read moments file {path}: {exc}") from None
    spec = data.get("model_spec") if isinstance(data, dict) else None
    if isinstance(data, dict) and "orders" not in data:
        data = data.get("moments")
    try:
        return spec, MomentSequence.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"moments file {path} is not a moment table: {exc}") from None


def _moments_for(cfg: RunConfig, model, orders) -> MomentSequence:
    """Moments at ``orders``, served from the cache file when it covers them all."""
    cache = cfg.analysis.moments_file
    if cache and Path(cache).exists():
        spec, ms = _load_moments(cache)
        if ms.model_tag != model.tag or (spec is not None and spec != _plain(asdict(cfg.model))):
            raise ConfigError(f"moments file {cache} was computed for a different model")
        if ms.absolute != cfg.analysis.absolute:
            raise ConfigError(f"moments file {cache} differs in the 'absolute' setting")
        if np.all(np.isin(orders, ms.orders)):
            sel = np.isin(ms.orders, orders)
            _note(cfg, f"using cached moments from {cache}")
            return MomentSequence(ms.orders[sel], ms.moments[sel], ms.errors[sel], ms.model_tag,
                                  ms.measure_mass, ms.dimension, ms.absolute)
        _note(cfg, f"cache {cache} lacks some orders; recomputing")
    ms = compute_moments(model, orders, tol=cfg.analysis.tol, absolute=cfg.analysis.absolute)
    if cache:
        record = {"model_spec": asdict(cfg.model), "moments": ms.to_dict()}
        Path(cache).write_text(json.dumps(_plain(record)) + "\n")
    return ms


def cmd_moments(cfg: RunConfig, out: Output) -> int:
    model = build_model(cfg.model)
    ms = _moments_for(cfg, model, _orders(cfg))
    text = "".join(f"{int(q):>8d} {m: .12e} {e: .3e}\n" for q, m, e in zip(ms.orders, ms.moments, ms.errors))
    out.emit({"moments": ms.to_dict()}, ms.to_csv(), "       q  m_q                 error\n" + text)
    return EXIT_OK


def cmd_beta(cfg: RunConfig, out: Output) -> int:
    model = build_model(cfg.model)
    ms = _moments_for(cfg, model, _orders(cfg))
    est = estimate_beta(ms, cfg.analysis.beta_window)
    payload = {"model_tag": ms.model_tag, "d": ms.dimension, **est.__dict__}
    d_over_alpha = ms.dimension / model.alpha if getattr(model, "alpha", None) else None
    payload["d_over_alpha"] = d_over_alpha
    header = list(payload)
    text = (f"beta_hat = {est.beta_hat:.6f} +- {est.stderr:.2e}  (r^2 = {est.r_squared:.6f}, "
            f"window {est.fit_window[0]}..{est.fit_window[1]}, n = {est.n_points})\n")
    if est.inconclusive:
        text += "inconclusive: moments do not follow a power law on this window\n"
    out.emit(payload, _csv(header, [[payload[k] if not isinstance(payload[k], tuple) else
                                     f"{payload[k][0]}:{payload[k][1]}" for k in header]]), text)
    return EXIT_INCONCLUSIVE if est.inconclusive else EXIT_OK


def _report_text(rep) -> str:
    lines = [f"model {rep.model_tag}  level u = {rep.level:g}",
             f"beta_hat = {rep.beta_hat:.4f}   p* = beta_hat + 1/2 = {rep.p_star:.4f}"]
    if rep.alpha_p_star is not None:
        lines.append(f"alpha_hat = {rep.alpha_hat:.4f}   d/alpha_hat + 1/2 = {rep.alpha_p_star:.4f}")
    lines.append(f"sufficiency threshold for general phi: p <= {rep.sufficiency_threshold:.4f}")
    lines.append("   p  verdict    slope")
    for m in rep.memberships:
        slope = "-" if m["slope"] is None else f"{m['slope']:.4f}"
        lines.append(f"{m['p']:>4d}  {m['verdict']:<9s}  {slope}")
    if rep.note:
        lines.append("note: " + rep.note)
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig, out: Output) -> int:
    a = cfg.analysis
    model = build_model(cfg.model)
    grid = default_orders(a.q_min, a.q_max) if a.orders == "default" else _orders(cfg)
    dense = np.union1d(np.arange(a.q_min, a.q_max + 1), grid)
    ms = _moments_for(cfg, model, dense)
    rep = regularity_report(model, a.level, Q=a.Q, orders=grid, q_min=a.q_min, q_max=a.q_max,
                            beta_window=a.beta_window, tol=a.tol, moments=ms, p_max=a.p_max)
    rows = [(m["p"], m["verdict"], "" if m["slope"] is None else float(m["slope"])) for m in rep.memberships]
    out.emit(rep.to_dict(), _csv(["p", "verdict", "slope"], rows), _report_text(rep))
    return EXIT_INCONCLUSIVE if rep.beta_inconclusive else EXIT_OK


def cmd_mehler_check(cfg: RunConfig, out: Output) -> int:
    a = cfg.analysis
    checks = []
    worst = 0.0
    for u in a.mehler_points:
        for v in a.mehler_points:
            for r in a.mehler_correlations:
                ev = mehler_series(u, v, r, a.mehler_Q)
                worst = max(worst, abs(ev.closed_form - ev.series_value))
    checks.append({"name": "mehler_closed_form_vs_series", "max_deviation": worst,
                   "tolerance": 1e-6, "passed": worst <= 1e-6})
    dev = abs(indicator_covariance(0.0, 0.0, 0.5, a.mehler_Q) - 1 / 12)
    checks.append({"name": "indicator_covariance_arcsine", "max_deviation": dev,
                   "tolerance": 1e-8, "passed": dev <= 1e-8})
    worst = 0.0
    for u in a.mehler_points:
        for v in a.mehler_points:
            for r in a.mehler_correlations:
                series = indicator_covariance(u, v, r, a.mehler_Q)
                worst = max(worst, abs(series - orthant_covariance(u, v, r)))
    checks.append({"name": "indicator_covariance_vs_orthant", "max_deviation": worst,
                   "tolerance": 1e-7, "passed": worst <= 1e-7})
    ok = all(c["passed"] for c in checks)
    text = "".join(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  max dev {c['max_deviation']:.3e}"
                   f" (tol {c['tolerance']:g})\n" for c in checks)
    rows = [(c["name"], float(c["max_deviation"]), c["tolerance"], c["passed"]) for c in checks]
    out.emit({"checks": checks, "passed": ok, "Q": a.mehler_Q},
             _csv(["check", "max_deviation", "tolerance", "passed"], rows), text)
    return EXIT_OK if ok else EXIT_ACCURACY


def cmd_simulate(cfg: RunConfig, out: Output) -> int:
    s = cfg.simulation
    model = build_model(cfg.model)
    grid = build_grid(model, s.resolution)
    est = sample_excursion(grid, cfg.analysis.level, s.replications, s.seed, bootstrap=s.bootstrap,
                           se_method=s.se_method, workers=s.workers)
    payload = {"model_tag": grid.model_tag, "points": grid.size, "jitter": grid.jitter,
               "measure_mass": grid.measure_mass, "expected_mean": excursion_mean(grid, est.level),
               **est.summary()}
    text = (f"E[V] = {est.empirical_mean:.6g} +- {est.mean_stderr:.2g} (exact {payload['expected_mean']:.6g})\n"
            f"Var[V] = {est.empirical_variance:.6g} +- {est.variance_stderr:.2g}\n")
    rows = [(i, float(v)) for i, v in enumerate(est.samples)]
    out.emit(payload, _csv(["replication", "volume"], rows), text)
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Output) -> int:
    s = cfg.simulation
    model = build_model(cfg.model)
    res = validate_variance(model, cfg.analysis.level, s.resolution, s.replications, s.Q, s.seed,
                            bootstrap=s.bootstrap, se_method=s.se_method, workers=s.workers)
    payload = {"model_tag": model.tag, "level": cfg.analysis.level, "seed": s.seed,
               "replications": s.replications, "resolution": s.resolution, **res.summary(),
               "passed": abs(res.z_score) <= 3}
    text = (f"empirical {res.empirical:.6g}  analytic {res.analytic:.6g}  "
            f"z = {res.z_score:.3f}  ({'PASS' if payload['passed'] else 'FAIL'} at |z| <= 3)\n")
    header = list(payload)
    out.emit(payload, _csv(header, [[payload[k] for k in header]]), text)
    return EXIT_OK if payload["passed"] else EXIT_INCONCLUSIVE


COMMANDS = {
    "coeffs": (cmd_coeffs, "Hermite coefficients of the level-u indicator"),
    "moments": (cmd_moments, "covariance moments m_q"),
    "beta": (cmd_beta, "moment decay exponent beta"),
    "report": (cmd_report, "regularity report: beta, p*, verdicts per p"),
    "mehler-check": (cmd_mehler_check, "Mehler and indicator-covariance identity checks"),
    "simulate": (cmd_simulate, "Monte Carlo excursion volumes"),
    "validate": (cmd_validate, "Monte Carlo variance against the chaos sum"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (see docs/config.md)")
    common.add_argument("--seed", type=int, help="simulation seed")
    common.add_argument("--out", help="write structured output to this file")
    common.add_argument("--format", choices=["csv", "json", "text"], help="output format")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from JSON")
    common.add_argument("--orders", help="orders: default, lo:hi, lo:hi:log or q1,q2,...")
    common.add_argument("--level", type=float, help="excursion level u")
    common.add_argument("--Q", type=int, dest="Q", help="maximal chaos order")
    common.add_argument("--quiet", action="store_true", help="suppress tables and notes")
    parser = argparse.ArgumentParser(prog="excursion-chaos",
                                     description="Wiener-chaos analysis of Gaussian excursion volumes")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.simulation.seed = args.seed
    if args.out is not None:
        cfg.output.path = args.out
    if args.format is not None:
        cfg.output.format = args.format
    if args.no_timestamp:
        cfg.output.timestamp = False
    if args.orders is not None:
        cfg.analysis.orders = args.orders
    if args.level is not None:
        cfg.analysis.level = args.level
    if args.Q is not None:
        cfg.analysis.Q = args.Q
        cfg.simulation.Q = args.Q
    if args.quiet:
        cfg.output.quiet = True
    validate_config(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config) if args.config else parse_config({})
        cfg = _apply_flags(cfg, args)
        return handler(cfg, Output(cfg, args.command))
    except (InvalidInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AccuracyError as exc:
        print(f"accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY


if __name__ == "__main__":
    sys.exit(main())
