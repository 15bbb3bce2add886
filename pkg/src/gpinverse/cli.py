"""Command-line driver.

Subcommands::

    gpinverse synth      --output DIR            write a synthetic fixture + config
    gpinverse sample     --config CFG            run TMCMC, write chain.csv + manifest.json
    gpinverse summarize  --config CFG            summary.json / summary.csv from chain.csv
    gpinverse predict    --config CFG            model_fit.csv from the chain's plug-in values
    gpinverse loo        --config CFG            leave-one-out coverage report (loo.json)

``--config`` accepts a plain config or any manifest written by this tool
(its ``config`` entry is used), so a run can be repeated from its manifest.
Errors end the process with one line ``error category=<name> message=<text>``
on stderr and exit status 2 (config/parse), 3 (numerical) or 4 (bad init).
Verbosity is read from ``GPINVERSE_LOG_LEVEL``.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core_model import TrainingSet
from .emulator import fit_augmented, loo_cross_validate, model_fit_report, model_fit_rows
from .errors import (
    BoundsViolation,
    ConfigError,
    DimensionMismatch,
    EmptyChain,
    GPInverseError,
    ParseError,
)
from .posterior import ErrorModel, InverseProblem, coordinate_names
from .summaries import bar_frequency, hpd_region, posterior_mode, summarize_chain
from .tmcmc import Chain, TmcmcConfig, default_init, default_scales, run_chain

log = logging.getLogger("gpinverse")

FLOAT_FMT = "%.17g"
TABLE_FMT = "%.7g"

DEFAULTS = {
    "bounds": None,
    "coord_scale": None,
    "measurement_error": {"kind": "none"},
    "tmcmc": {
        "iterations": 20_000,
        "burn_in": 5_000,
        "thin": 1,
        "seed": 0,
        "scales": None,
        "init": None,
        "move_probs": None,
    },
    "summary": {"level": 0.95, "radial_coordinate": None},
    "predict": {"plugin": "median"},
    "loo": {"iterations": 20_000, "burn_in": 5_000, "folds": None},
    "output": "out",
}


# -- hashing / canonical JSON --------------------------------------------------


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


# -- CSV ingestion -------------------------------------------------------------


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_matrix(path) -> np.ndarray:
    """Numeric CSV to a 2-D float array.

    Lines starting with ``#`` are comments. A first data line with no
    numeric cell is taken as a header. Non-numeric, NaN and infinite cells
    raise ParseError with 1-based line and column.
    """
    path = str(path)
    rows = []
    width = None
    header_seen = False
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            if cells[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in cells]
            if not rows and not header_seen and not any(_is_number(c) for c in cells):
                header_seen = True
                continue
            vals = []
            for col, token in enumerate(cells, start=1):
                try:
                    v = float(token)
                except ValueError:
                    raise ParseError(path, lineno, col, f"not a number: {token!r}") from None
                if not math.isfinite(v):
                    raise ParseError(path, lineno, col, f"non-finite value: {token!r}")
                vals.append(v)
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(path, lineno, len(vals) + 1,
                                 f"expected {width} columns, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ParseError(path, 1, 1, "no numeric rows")
    return np.array(rows, dtype=float)


def write_matrix(path, mat, header=None, comments=()):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        if header:
            fh.write(",".join(header) + "\n")
        for row in mat:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def component_header(j, k):
    # column l = m1 * k + m2 holds component m2 of observation m1
    return [f"obs{m1 + 1}_comp{m2 + 1}" for m1 in range(j) for m2 in range(k)]


# -- configuration -------------------------------------------------------------


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path, overrides=None) -> dict:
    """Read a config (or a manifest's embedded config) and resolve paths.

    Data paths are made absolute relative to the config file; the output
    directory is kept as given unless relative, in which case it is
    resolved against the config file as well.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(str(path), exc.lineno, exc.colno, exc.msg) from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]
    cfg = _merge(DEFAULTS, raw)
    base = path.resolve().parent
    data = cfg.get("data")
    if not isinstance(data, dict) or not all(key in data for key in ("design", "training", "test")):
        raise ConfigError("config needs data.design, data.training and data.test")
    cfg["data"] = {key: str((base / data[key]).resolve()) for key in ("design", "training", "test")}
    cfg["output"] = str((base / cfg["output"]).resolve())
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key == "output":
            cfg["output"] = str(Path(val).resolve())
        else:
            cfg["tmcmc"][key] = val
    dims = cfg.get("dims")
    if not isinstance(dims, dict) or not all(key in dims for key in ("d", "j", "k")):
        raise ConfigError("config needs dims.d, dims.j and dims.k")
    if cfg["bounds"] is None:
        raise ConfigError("config needs bounds for s_new")
    return cfg


def config_hash(cfg) -> str:
    return sha256_text(canonical_json(cfg))


class Run:
    """A loaded problem plus the unit conversion between user and internal s."""

    def __init__(self, cfg):
        self.cfg = cfg
        d, j, k = int(cfg["dims"]["d"]), int(cfg["dims"]["j"]), int(cfg["dims"]["k"])
        self.d, self.j, self.k = d, j, k
        scale = cfg.get("coord_scale")
        self.scale = np.ones(d) if scale is None else np.asarray(scale, dtype=float)
        if self.scale.shape != (d,) or np.any(self.scale <= 0):
            raise ConfigError("coord_scale must hold d positive numbers")
        self.names = coordinate_names(d, k)
        self.problem = load_problem(cfg, self.scale)

    def to_internal(self, phi):
        phi = np.array(phi, dtype=float)
        phi[..., : self.d] *= self.scale
        return phi

    def to_user(self, phi):
        phi = np.array(phi, dtype=float)
        phi[..., : self.d] /= self.scale
        return phi

    @property
    def user_bounds(self):
        return np.asarray(self.cfg["bounds"], dtype=float)

    @property
    def user_widths(self):
        b = self.user_bounds
        return b[:, 1] - b[:, 0]


def load_problem(cfg, scale=None) -> InverseProblem:
    d, j, k = int(cfg["dims"]["d"]), int(cfg["dims"]["j"]), int(cfg["dims"]["k"])
    scale = np.ones(d) if scale is None else np.asarray(scale, dtype=float)
    design = read_matrix(cfg["data"]["design"])
    training = read_matrix(cfg["data"]["training"])
    test = read_matrix(cfg["data"]["test"])
    if design.shape[1] != d:
        raise DimensionMismatch(f"design file has {design.shape[1]} columns, dims.d = {d}")
    if training.shape[0] != design.shape[0]:
        raise DimensionMismatch(
            f"training file has {training.shape[0]} rows, design file has {design.shape[0]}"
        )
    if training.shape[1] != j * k:
        raise DimensionMismatch(f"training file has {training.shape[1]} columns, j*k = {j * k}")
    if test.shape != (1, j * k):
        raise DimensionMismatch(f"test file must be 1 x {j * k}, got {test.shape[0]} x {test.shape[1]}")
    bounds = np.asarray(cfg["bounds"], dtype=float)
    if bounds.shape != (d, 2):
        raise DimensionMismatch(f"bounds must be {d} pairs")
    outside = np.any((design < bounds[:, 0]) | (design > bounds[:, 1]), axis=1)
    if np.any(outside):
        warnings.warn(f"{int(outside.sum())} design vectors lie outside the prior bounds",
                      BoundsViolation, stacklevel=2)
    err = ErrorModel.from_dict(cfg.get("measurement_error"))
    ts = TrainingSet(design * scale, training, j, k)
    return InverseProblem(ts, test[0], bounds * scale[:, None], err)


def tmcmc_config(run: Run, section=None, seed=None) -> TmcmcConfig:
    t = dict(run.cfg["tmcmc"])
    if section:
        t.update({key: val for key, val in section.items() if val is not None})
    p = run.problem
    scales = default_scales(p) if t.get("scales") is None else run.to_internal(t["scales"])
    init = default_init(p) if t.get("init") is None else run.to_internal(t["init"])
    return TmcmcConfig(
        scales=scales, init=init, move_probs=t.get("move_probs"),
        iterations=int(t["iterations"]), burn_in=int(t["burn_in"]),
        thin=int(t.get("thin", 1)), seed=int(t["seed"] if seed is None else seed),
    )


# -- chain I/O -----------------------------------------------------------------


def write_chain(path, chain: Chain, run: Run, cfg_hash, seed):
    user = run.to_user(chain.samples)
    header = ["iteration"] + run.names + ["log_post"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_sha256={cfg_hash}\n# seed={seed}\n")
        fh.write("# s coordinates in user units; b in inverse-squared internal units\n")
        fh.write(",".join(header) + "\n")
        for it, row, lp in zip(chain.iterations, user, chain.log_post):
            fh.write(str(int(it)) + "," + ",".join(FLOAT_FMT % v for v in row) + "," + (FLOAT_FMT % lp) + "\n")


def read_chain(path, run: Run) -> Chain:
    if not Path(path).exists():
        raise EmptyChain(f"no chain at {path}; run the sample subcommand first")
    mat = read_matrix(path)
    if mat.shape[1] != len(run.names) + 2:
        raise DimensionMismatch(f"chain has {mat.shape[1]} columns, expected {len(run.names) + 2}")
    samples = run.to_internal(mat[:, 1:-1])
    return Chain(samples, mat[:, -1], 0, 0, mat[:, 0].astype(np.int64))


def _load_manifest(out):
    path = Path(out) / "manifest.json"
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


# -- subcommands ---------------------------------------------------------------


def _progress(step, total):
    log.info("iteration %d / %d", step, total)


def _outputs(out, names):
    return {name: sha256_file(Path(out) / name) for name in names}


def _input_hashes(cfg):
    return {key: sha256_file(path) for key, path in sorted(cfg["data"].items())}


def cmd_sample(cfg) -> dict:
    run = Run(cfg)
    tc = tmcmc_config(run)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    log.info("sampling %d + %d iterations (seed %d)", tc.burn_in, tc.iterations, tc.seed)
    chain = run_chain(run.problem, tc, progress=_progress)
    write_chain(out / "chain.csv", chain, run, h, tc.seed)
    manifest = {
        "tool": "gpinverse",
        "version": __version__,
        "command": "sample",
        "config": cfg,
        "config_sha256": h,
        "seed": tc.seed,
        "inputs_sha256": _input_hashes(cfg),
        "scales": run.to_user(tc.scales).tolist(),
        "init": run.to_user(tc.init).tolist(),
        "acceptance_rate": chain.acceptance_rate,
        "accept_count": chain.accept_count,
        "proposal_count": chain.proposal_count,
        "outputs_sha256": _outputs(out, ["chain.csv"]),
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def _fmt_intervals(intervals):
    return " U ".join("[" + TABLE_FMT % lo + ", " + TABLE_FMT % hi + "]" for lo, hi in intervals)


def cmd_summarize(cfg) -> dict:
    run = Run(cfg)
    out = Path(cfg["output"])
    chain = read_chain(out / "chain.csv", run)
    user = Chain(run.to_user(chain.samples), chain.log_post, 0, 0, chain.iterations)
    level = float(cfg["summary"]["level"])
    widths = list(run.user_widths) + [None] * (len(run.names) - run.d)
    supports = list(run.user_bounds) + [None] * (len(run.names) - run.d)
    table = summarize_chain(user, run.names, widths, level, supports)
    radial = cfg["summary"].get("radial_coordinate")
    h = config_hash(cfg)
    result = {
        "config_sha256": h,
        "seed": int(cfg["tmcmc"]["seed"]),
        "level": level,
        "n_samples": len(chain),
        "coordinates": table,
    }
    if radial is not None:
        r = int(radial)
        if not 0 <= r < run.d:
            raise ConfigError("summary.radial_coordinate must index an s coordinate")
        col = user.samples[:, r]
        region = hpd_region(col, level, widths[r], supports[r])
        vec = np.vectorize(bar_frequency)
        result["omega_b"] = {
            "source": run.names[r],
            "units": "km/s/kpc",
            "mode": bar_frequency(posterior_mode(col, widths[r], supports[r])),
            "hpd": region.map(bar_frequency).to_list(),
            "mean": float(np.mean(vec(col))),
        }
    write_json(out / "summary.json", result)
    with open(out / "summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_sha256={h}\n# seed={result['seed']}\n")
        fh.write("coordinate,mean,variance,ci95_lo,ci95_hi,median,mode,hpd\n")
        for name in run.names:
            row = table[name]
            cells = [name] + [TABLE_FMT % row[key] for key in ("mean", "variance")]
            cells += [TABLE_FMT % v for v in row["ci95"]] + [TABLE_FMT % row["median"]]
            cells += [TABLE_FMT % row["mode"] if "mode" in row else ""]
            cells += ['"' + _fmt_intervals(row["hpd"]) + '"' if "hpd" in row else ""]
            fh.write(",".join(cells) + "\n")
        if "omega_b" in result:
            ob = result["omega_b"]
            fh.write(",".join(["omega_b", TABLE_FMT % ob["mean"], "", "", "", "",
                               TABLE_FMT % ob["mode"], '"' + _fmt_intervals(ob["hpd"]) + '"']) + "\n")
    return result


def _plugin(samples, how):
    if how == "median":
        return np.median(samples, axis=0)
    if how == "mean":
        return samples.mean(axis=0)
    if how == "mode":
        return np.array([posterior_mode(samples[:, i]) for i in range(samples.shape[1])])
    raise ConfigError(f"unknown plug-in rule {how!r}")


def cmd_predict(cfg) -> dict:
    run = Run(cfg)
    out = Path(cfg["output"])
    chain = read_chain(out / "chain.csv", run)
    d = run.d
    user = run.to_user(chain.samples)
    how = cfg["predict"].get("plugin", "median")
    q = _plugin(chain.samples[:, d:2 * d], how)
    s_med = np.median(user[:, :d], axis=0)
    s_mode = np.array([posterior_mode(user[:, i], None, run.user_bounds[i]) for i in range(d)])
    points = {"mode": s_mode, "median": s_med}
    level = float(cfg["summary"]["level"])
    for i in range(d):
        region = hpd_region(user[:, i], level, None, run.user_bounds[i])
        for tag, val in (("lo", region.intervals[0][0]), ("hi", region.intervals[-1][1])):
            pt = s_med.copy()
            pt[i] = val
            points[f"hpd_{tag}_{run.names[i]}"] = pt
    if run.problem._duplicate(s_med * run.scale):
        s_med = s_med + 1e-9 * run.user_widths
    em = fit_augmented(run.problem, s_med * run.scale, q)
    report = model_fit_report(em, run.problem.test, {key: val * run.scale for key, val in points.items()})
    for key, val in points.items():
        report[key]["point"] = val.tolist()
    h = config_hash(cfg)
    with open(out / "model_fit.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_sha256={h}\n# seed={int(cfg['tmcmc']['seed'])}\n")
        fh.write("# q_plugin=" + " ".join(FLOAT_FMT % v for v in q) + "\n")
        fh.write("label,component,observation,predicted,observed\n")
        for label, comp, obs, pred, seen in model_fit_rows(report):
            fh.write(f"{label},{comp},{obs},{FLOAT_FMT % pred},{FLOAT_FMT % seen}\n")
    return {"q_plugin": q.tolist(), "report": report}


def cmd_loo(cfg) -> dict:
    run = Run(cfg)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    lc = cfg["loo"]
    scales = cfg["tmcmc"].get("scales")
    result = loo_cross_validate(
        run.problem.training, run.problem.bounds,
        iterations=int(lc["iterations"]), burn_in=int(lc["burn_in"]),
        seed=int(cfg["tmcmc"]["seed"]), level=float(cfg["summary"]["level"]),
        scales=None if scales is None else run.to_internal(scales), folds=lc.get("folds"),
    )
    for rec in result["folds"]:
        rec["s_true"] = (np.asarray(rec["s_true"]) / run.scale).tolist()
    result["config_sha256"] = config_hash(cfg)
    write_json(out / "loo.json", result)
    return result


def cmd_synth(args) -> dict:
    from .oracle import default_fixture, synth_generate

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    spec = default_fixture(s_true=tuple(args.s_true), noise_sd=args.noise_sd, seed=args.seed)
    training, test, _ = synth_generate(spec)
    j, k = training.j, training.k
    write_matrix(out / "design.csv", training.design, [f"s{i + 1}" for i in range(training.d)])
    write_matrix(out / "training.csv", training.data, component_header(j, k))
    write_matrix(out / "test.csv", test[None, :], component_header(j, k))
    cfg = {
        "data": {"design": "design.csv", "training": "training.csv", "test": "test.csv"},
        "dims": {"d": training.d, "j": j, "k": k},
        "bounds": spec.box.tolist(),
        "tmcmc": {"iterations": args.iterations, "burn_in": args.burn_in, "seed": args.seed},
        "output": "out",
        "truth": {"s_true": spec.s_true.tolist(), "noise_sd": spec.noise_sd},
    }
    write_json(out / "config.json", cfg)
    return cfg


# -- entry point ---------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="gpinverse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gpinverse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sample", "summarize", "predict", "loo"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="config or manifest JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--iterations", type=int)
        p.add_argument("--burn-in", type=int, dest="burn_in")
        p.add_argument("--output")
    p = sub.add_parser("synth", help="write the default synthetic fixture")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--s-true", type=float, nargs=2, default=[0.37, 0.62])
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--iterations", type=int, default=20_000)
    p.add_argument("--burn-in", type=int, default=5_000, dest="burn_in")
    return parser


COMMANDS = {"sample": cmd_sample, "summarize": cmd_summarize, "predict": cmd_predict, "loo": cmd_loo}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("GPINVERSE_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args)
            return 0
        overrides = {"seed": args.seed, "iterations": args.iterations,
                     "burn_in": args.burn_in, "output": args.output}
        cfg = load_config(args.config, overrides)
        with warnings.catch_warnings():
            warnings.simplefilter("always", BoundsViolation)
            warnings.showwarning = _warn_line
            COMMANDS[args.command](cfg)
    except GPInverseError as exc:
        print(f"error category={exc.category} message={_one_line(exc)}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error category=config_error message={_one_line(exc)}", file=sys.stderr)
        return 2
    return 0


def _one_line(exc):
    return " ".join(str(exc).split())


def _warn_line(message, category, filename, lineno, file=None, line=None):
    print(f"warning category={category.__name__} message={_one_line(message)}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
