"""Seeded experiment runner: ``overcp run | localmin | lazybound | baseline``.

Option precedence, lowest to highest: built-in defaults, then a flat
``key = value`` config file (``--config``), then explicit command-line
flags.  Unknown config keys are rejected.  Seed lists are written either
as ``a..b`` (inclusive) or comma-separated.

``run`` and ``baseline`` write one metrics file per seed (JSONL by default,
CSV mirrors the same fields) under an output directory taken from ``--out``
or the OVERCP_OUT_DIR environment variable, plus a merged summary CSV; rows
are flushed as they are produced, so a killed run leaves a readable prefix.
Nothing derived from the clock goes into any output file.

Exit codes: 0 success, 1 runtime failure (including a failed certification
in ``localmin``), 2 usage or config error.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import descent, landscape, lazybound, model
from .randomness import rademacher, substream, unit_sphere

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

ROW_FIELDS = ("iter", "epoch", "loss", "residual", "pbu_sq", "path_len")

LAZYBOUND_HEADER = "d,l,log_d_m,m,analytic_bound"
LAZYBOUND_MC_HEADER = LAZYBOUND_HEADER + ",mc_estimate,mc_stderr,mc_samples"


class ConfigError(ValueError):
    """Bad config file or option combination (usage error, exit 2)."""


# ---------------------------------------------------------------------------
# option parsing helpers


def parse_seed_spec(text):
    """``a..b`` (inclusive) or comma-separated integers."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            a, b = int(lo), int(hi)
        except ValueError:
            raise ConfigError(f"bad seed range {text!r}") from None
        if b < a:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(a, b + 1))
    try:
        seeds = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def parse_int_list(text):
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"bad integer list {text!r}") from None
    if not values:
        raise ConfigError("empty integer list")
    return values


def parse_grid(text):
    """``start:stop:step`` inclusive of both endpoints (up to rounding)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad grid {text!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError("grid needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(n)]


def parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


def _choice(name, options):
    def convert(text):
        if text not in options:
            raise ConfigError(f"{name} must be one of {options}, got {text!r}")
        return text

    return convert


def parse_config_text(text):
    """Flat ``key = value`` lines; '#' starts a comment; blanks ignored."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        cfg[key] = value
    return cfg


def serialize_config(cfg):
    """Inverse of :func:`parse_config_text` (parse ∘ serialize ∘ parse = parse)."""
    return "".join(f"{key} = {value}\n" for key, value in cfg.items())


@dataclass
class Opt:
    convert: object
    default: object = None
    required: bool = False


_RUN_OPTS = {
    "d": Opt(int, required=True),
    "r": Opt(int, required=True),
    "l": Opt(int, required=True),
    "m": Opt(int, required=True),
    "seeds": Opt(parse_seed_spec, required=True),
    "epsilon": Opt(float, 0.05),
    "delta": Opt(float),
    "eta": Opt(float),
    "lam": Opt(float),
    "H": Opt(int),
    "K": Opt(int),
    "gt": Opt(str),
    "out": Opt(str),
    "format": Opt(_choice("format", ("jsonl", "csv")), "jsonl"),
    "workers": Opt(int, 1),
}

_LOCALMIN_OPTS = {
    "kind": Opt(_choice("kind", ("vanilla", "2homo")), required=True),
    "d": Opt(int, required=True),
    "r": Opt(int, required=True),
    "l": Opt(int, required=True),
    "m": Opt(int),
    "probes": Opt(int, 200),
    "seed": Opt(int, 0),
}

_LAZYBOUND_OPTS = {
    "l": Opt(int, required=True),
    "d": Opt(parse_int_list, required=True),
    "xgrid": Opt(parse_grid, required=True),
    "mc": Opt(parse_bool, False),
    "samples": Opt(int, 20000),
    "seed": Opt(int, 0),
    "out": Opt(str),
}

_BASELINE_OPTS = {
    "d": Opt(int, required=True),
    "r": Opt(int, required=True),
    "l": Opt(int, required=True),
    "m": Opt(int, required=True),
    "seeds": Opt(parse_seed_spec, required=True),
    "steps": Opt(int, 10000),
    "eta": Opt(float),
    "delta": Opt(float, 1e-3),
    "start": Opt(_choice("start", ("random", "localmin")), "random"),
    "out": Opt(str),
    "format": Opt(_choice("format", ("jsonl", "csv")), "jsonl"),
    "workers": Opt(int, 1),
}

_OPTS = {
    "run": _RUN_OPTS,
    "localmin": _LOCALMIN_OPTS,
    "lazybound": _LAZYBOUND_OPTS,
    "baseline": _BASELINE_OPTS,
}


def resolve_options(args, file_cfg, opts):
    """Merge flag values over config-file values over defaults."""
    unknown = set(file_cfg) - set(opts)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    effective = {}
    for name, opt in opts.items():
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            effective[name] = flag_value
        elif name in file_cfg:
            try:
                effective[name] = opt.convert(file_cfg[name])
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"config key {name}: {exc}") from None
        else:
            effective[name] = opt.default
        if opt.required and effective[name] is None:
            raise ConfigError(f"missing required option '{name}'")
    return effective


def _resolve_out_dir(out):
    out_dir = out or os.environ.get("OVERCP_OUT_DIR") or "."
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


# ---------------------------------------------------------------------------
# streaming writers


class RowWriter:
    """Append-only metrics writer; one flushed line per row."""

    def __init__(self, path, fmt):
        self.fmt = fmt
        self.fh = open(path, "w", encoding="utf-8", newline="")
        if fmt == "csv":
            self.fh.write(",".join(ROW_FIELDS) + "\n")
            self.fh.flush()

    def write(self, row):
        if self.fmt == "jsonl":
            self.fh.write(json.dumps({k: row.get(k) for k in ROW_FIELDS}) + "\n")
        else:
            cells = []
            for k in ROW_FIELDS:
                v = row.get(k)
                cells.append("" if v is None else str(v))
            self.fh.write(",".join(cells) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def _write_summary(path, fieldnames, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# run


def _load_ground_truth(eff, seed):
    if eff.get("gt"):
        with np.load(eff["gt"]) as data:
            weights, components = data["weights"], data["components"]
        return model.ground_truth_from_decomposition(weights, components, eff["l"])
    return model.generate_ground_truth(eff["d"], eff["r"], eff["l"], seed)


def _run_seed_worker(payload):
    eff, seed = payload["eff"], payload["seed"]
    overrides = {
        k: eff[k] for k in ("delta", "eta", "lam", "H", "K") if eff[k] is not None
    }
    hyper = model.desk_hyperparams(
        eff["d"], eff["l"], eff["r"], eff["m"], eff["epsilon"], seed, **overrides
    )
    gt = _load_ground_truth(eff, seed)
    writer = RowWriter(payload["path"], eff["format"])
    try:
        _, _, outcome = descent.run(hyper, gt, seed=seed, on_iteration=writer.write)
    finally:
        writer.close()
    return {
        "seed": seed,
        "final_residual": outcome.final_residual,
        "epochs_used": outcome.epochs_used,
        "iterations": outcome.iterations,
        "success": outcome.success,
    }


def _dispatch_seeds(payloads, worker, workers):
    """Run payloads (sequentially or in a process pool); returns
    (summaries, n_failed) with per-seed failures reported on stderr."""
    summaries = []
    failed = 0
    if workers <= 1:
        for payload in payloads:
            try:
                summaries.append(worker(payload))
            except Exception as exc:  # noqa: BLE001 - per-seed isolation
                failed += 1
                print(f"seed {payload['seed']}: failed: {exc}", file=sys.stderr)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(p, pool.submit(worker, p)) for p in payloads]
            for payload, future in futures:
                try:
                    summaries.append(future.result())
                except Exception as exc:  # noqa: BLE001
                    failed += 1
                    print(f"seed {payload['seed']}: failed: {exc}", file=sys.stderr)
    return summaries, failed


def cmd_run(eff):
    out_dir = _resolve_out_dir(eff["out"])
    ext = "jsonl" if eff["format"] == "jsonl" else "csv"
    payloads = [
        {"eff": eff, "seed": seed, "path": os.path.join(out_dir, f"run_seed{seed}.{ext}")}
        for seed in eff["seeds"]
    ]
    summaries, failed = _dispatch_seeds(payloads, _run_seed_worker, eff["workers"])
    summaries.sort(key=lambda s: s["seed"])
    for s in summaries:
        print(
            "seed={seed} final_residual={final_residual:.6e} "
            "epochs_used={epochs_used} iterations={iterations} "
            "success={success}".format(**s)
        )
    _write_summary(
        os.path.join(out_dir, "run_summary.csv"),
        ["seed", "final_residual", "epochs_used", "iterations", "success"],
        summaries,
    )
    return EXIT_RUNTIME if failed else EXIT_OK


# ---------------------------------------------------------------------------
# localmin


def _flat_point(U, cvec):
    return np.concatenate([U.ravel(), cvec])


def cmd_localmin(eff):
    kind, d, r, l = eff["kind"], eff["d"], eff["r"], eff["l"]
    if kind == "vanilla":
        m = eff["m"] if eff["m"] is not None else r * (l + 1) + 1
        U, cvec, gt = landscape.bad_local_min_vanilla(d, r, l, m)
        closed_form = l * (l - 1) * r / 4.0

        def loss_fn(x):
            return model.vanilla_loss(x[: d * m].reshape(d, m), x[d * m :], gt)

        def grad_fn(x):
            gU, gc = model.vanilla_grad(x[: d * m].reshape(d, m), x[d * m :], gt)
            return _flat_point(gU, gc)

        point = _flat_point(U, cvec)
    else:
        m = eff["m"] if eff["m"] is not None else 4 * r * (l + 1) + 2
        params, gt = landscape.bad_local_min_2homo(d, r, l, m)
        closed_form = l * (l - 1) * r / 2.0
        a = params.a

        def loss_fn(x):
            return landscape.loss_2homo_free(x[: d * m].reshape(d, m), x[d * m :], a, gt)

        def grad_fn(x):
            gU, gc = landscape.grad_2homo_free(
                x[: d * m].reshape(d, m), x[d * m :], a, gt
            )
            return _flat_point(gU, gc)

        point = _flat_point(params.U, params.c)

    report = landscape.certify_stationary(
        loss_fn, point, probes=eff["probes"], grad_fn=grad_fn, seed=eff["seed"]
    )
    decomp_flat = model.ground_truth_from_decomposition(
        gt.weights, gt.components, l
    ).tensor.entries
    decomp_residual = float(np.linalg.norm(decomp_flat - gt.tensor.entries))

    loss_ok = abs(report.loss_value - closed_form) <= 1e-9
    grad_ok = report.gradient_norm <= 1e-10
    decomp_ok = decomp_residual <= 1e-8

    print(f"kind = {kind}   d = {d}  r = {r}  l = {l}  m = {m}")
    print(f"loss at point          = {report.loss_value!r}")
    print(f"closed-form value      = {closed_form!r}  (|diff| = {abs(report.loss_value - closed_form):.3e})")
    print(f"analytic gradient norm = {report.gradient_norm:.3e}")
    print(f"finite-diff grad norm  = {report.fd_gradient_norm:.3e}")
    print(f"min 2nd-order quotient = {report.min_quotient:.3e}  ({eff['probes']} probes)")
    print(f"exact decomposition    = {gt.weights.size} components, residual {decomp_residual:.3e}")
    for label, ok in (("loss", loss_ok), ("gradient", grad_ok), ("decomposition", decomp_ok)):
        print(f"check {label}: {'ok' if ok else 'FAILED'}")
    return EXIT_OK if (loss_ok and grad_ok and decomp_ok) else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# lazybound


def cmd_lazybound(eff):
    l, d_values, xgrid = eff["l"], eff["d"], eff["xgrid"]
    points = lazybound.figure_curve(d_values, l, xgrid)
    if eff["mc"]:
        guard_hits = [d for d in d_values if d**l > lazybound.DENSE_GUARD]
        if guard_hits:
            raise ConfigError(
                f"--mc needs d**l <= {lazybound.DENSE_GUARD}; too large for d in {guard_hits}"
            )
    fh = open(eff["out"], "w", encoding="utf-8", newline="") if eff["out"] else sys.stdout
    try:
        fh.write((LAZYBOUND_MC_HEADER if eff["mc"] else LAZYBOUND_HEADER) + "\n")
        fh.flush()
        for idx, p in enumerate(points):
            cells = [str(p.d), str(p.l), str(p.x), str(p.m), str(p.analytic_bound)]
            if eff["mc"]:
                rng = substream(eff["seed"], "lazybound-mc", p.d, idx)
                estimate, stderr = lazybound.mc_orthogonal_projection(
                    p.d, p.l, p.m, eff["samples"], rng
                )
                cells += [str(estimate), str(stderr), str(eff["samples"])]
            fh.write(",".join(cells) + "\n")
            fh.flush()
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# baseline


def _baseline_seed_worker(payload):
    eff, seed = payload["eff"], payload["seed"]
    d, r, l, m = eff["d"], eff["r"], eff["l"], eff["m"]
    eta = eff["eta"] if eff["eta"] is not None else 1e-2 / d ** ((l - 2) / 2)
    if eff["start"] == "localmin":
        U0, c0, gt = landscape.bad_local_min_vanilla(d, r, l, m)
    else:
        gt = model.generate_ground_truth(d, r, l, seed)
        rng = substream(seed, "baseline-init")
        U0 = eff["delta"] * np.stack([unit_sphere(rng, d) for _ in range(m)], axis=1)
        c0 = np.array([rademacher(rng) for _ in range(m)])
    writer = RowWriter(payload["path"], eff["format"])
    try:
        def on_step(step, value):
            writer.write(
                {
                    "iter": step,
                    "epoch": 0,
                    "loss": value,
                    "residual": math.sqrt(2.0 * value),
                    "pbu_sq": None,
                    "path_len": None,
                }
            )

        result = descent.vanilla_run(U0, c0, gt, eta, eff["steps"], on_step=on_step)
    finally:
        writer.close()
    return {
        "seed": seed,
        "initial_loss": float(result.losses[0]),
        "final_loss": float(result.losses[-1]),
        "steps": eff["steps"],
    }


def cmd_baseline(eff):
    out_dir = _resolve_out_dir(eff["out"])
    ext = "jsonl" if eff["format"] == "jsonl" else "csv"
    payloads = [
        {
            "eff": eff,
            "seed": seed,
            "path": os.path.join(out_dir, f"baseline_seed{seed}.{ext}"),
        }
        for seed in eff["seeds"]
    ]
    summaries, failed = _dispatch_seeds(payloads, _baseline_seed_worker, eff["workers"])
    summaries.sort(key=lambda s: s["seed"])
    for s in summaries:
        print(
            "seed={seed} initial_loss={initial_loss:.6e} "
            "final_loss={final_loss:.6e} steps={steps}".format(**s)
        )
    _write_summary(
        os.path.join(out_dir, "baseline_summary.csv"),
        ["seed", "initial_loss", "final_loss", "steps"],
        summaries,
    )
    return EXIT_RUNTIME if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--verbose", action="store_true", default=None,
                        help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="overcp",
        description="Over-parameterized symmetric tensor decomposition experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common],
                           help="re-initialized descent over a seed sweep")
    for flag in ("--d", "--r", "--l", "--m", "--H", "--K", "--workers"):
        p_run.add_argument(flag, type=int)
    p_run.add_argument("--seeds", type=parse_seed_spec, help="a..b or comma list")
    for flag in ("--epsilon", "--delta", "--eta", "--lam"):
        p_run.add_argument(flag, type=float)
    p_run.add_argument("--gt", help="npz file with 'weights' and 'components'")
    p_run.add_argument("--out", help="output directory (default $OVERCP_OUT_DIR or .)")
    p_run.add_argument("--format", choices=("jsonl", "csv"))

    p_loc = sub.add_parser("localmin", parents=[common],
                           help="build and certify a stuck point")
    p_loc.add_argument("--kind", choices=("vanilla", "2homo"))
    for flag in ("--d", "--r", "--l", "--m", "--probes", "--seed"):
        p_loc.add_argument(flag, type=int)

    p_lazy = sub.add_parser("lazybound", parents=[common],
                            help="lazy-training lower-bound curve as CSV")
    p_lazy.add_argument("--l", type=int)
    p_lazy.add_argument("--d", type=parse_int_list, help="comma list, e.g. 20,40,80")
    p_lazy.add_argument("--xgrid", type=parse_grid, help="start:stop:step for log_d m")
    p_lazy.add_argument("--mc", action="store_true", default=None,
                        help="add Monte-Carlo projection columns")
    p_lazy.add_argument("--samples", type=int)
    p_lazy.add_argument("--seed", type=int)
    p_lazy.add_argument("--out", help="CSV file (default stdout)")

    p_base = sub.add_parser("baseline", parents=[common],
                            help="plain gradient descent on the vanilla loss")
    for flag in ("--d", "--r", "--l", "--m", "--steps", "--workers"):
        p_base.add_argument(flag, type=int)
    p_base.add_argument("--seeds", type=parse_seed_spec, help="a..b or comma list")
    for flag in ("--eta", "--delta"):
        p_base.add_argument(flag, type=float)
    p_base.add_argument("--start", choices=("random", "localmin"))
    p_base.add_argument("--out", help="output directory (default $OVERCP_OUT_DIR or .)")
    p_base.add_argument("--format", choices=("jsonl", "csv"))
    return parser


_COMMANDS = {
    "run": cmd_run,
    "localmin": cmd_localmin,
    "lazybound": cmd_lazybound,
    "baseline": cmd_baseline,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass both through
        return exc.code if exc.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        file_cfg = {}
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    file_cfg = parse_config_text(fh.read())
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from None
        effective = resolve_options(args, file_cfg, _OPTS[args.command])
        return _COMMANDS[args.command](effective)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        logger.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
