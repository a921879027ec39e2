"""Command-line entry point: ``trals decompose | evaluate | diagnose``.

Configs are flat ``key = value`` files::

    oracle = pde
    d = 12
    r = 3
    s = 4
    repeats = 5
    rank_increase.enabled = false

Exit codes: 0 success, 2 invalid config or input file, 3 numerical failure
(a partial report is still written).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .als import AlsConfig, NumericalFailure, run
from .diagnostics import diagnose, min_segment_length
from .oracle import (ISING_LEVELS, PDE_LEVELS, ising_oracle, pde_oracle,
                     synthetic_tr_oracle, toy_oracle)
from .ring import (DEFAULT_EVAL_COUNT, error_E, gibbs_chain_ring, load_ring,
                   sample_eval_set, save_ring)

log = logging.getLogger("trals")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
CSV_HEADER = ("run", "E", "E_skeleton", "calls", "fraction", "sweeps", "seconds")
ORACLES = ("toy", "pde", "ising", "synthetic")

PRESETS = {
    "toy": {"oracle": "toy", "d": "6", "n": "10", "r": "3", "s": "4"},
    "pde": {"oracle": "pde", "d": "12", "r": "3", "s": "4"},
    "ising": {"oracle": "ising", "d": "12", "n": "4", "r": "4", "s": "5", "beta": "10"},
    "synthetic": {"oracle": "synthetic", "d": "12", "n": "4", "r": "3", "s": "5"},
}

# key -> (parser, default); None default means required or oracle-dependent
_KEYS = {
    "oracle": (str, None),
    "d": (int, None),
    "n": (int, None),
    "r": (int, 3),
    "s": (int, 4),
    "lambda": (float, 1e-9),
    "passes": (int, 1),
    "max_sweeps": (int, 30),
    "rel_tol": (float, 1e-3),
    "repeats": (int, 5),
    "seed": (int, 0),
    "eval_count": (int, DEFAULT_EVAL_COUNT),
    "init": (str, "svd"),
    "z_mode": (str, "shared"),
    "extra_factor": (int, 5),
    "rank_increase.enabled": ("bool", False),
    "rank_increase.target_r": (int, None),
    "rank_increase.variance": (float, 1e-8),
    "beta": (float, 10.0),
    "levels": ("floats", None),
    "synthetic_rank": (int, None),
    "synthetic_seed": (int, 0),
    "synthetic_noise": (float, 0.0),
    "ring": (str, None),
    "z_count": (int, 10),
    "segment": (int, None),
}


class ConfigError(ValueError):
    pass


def _parse_value(key, kind, raw):
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config(text: str, base: dict | None = None) -> dict:
    """Parse a flat key/value document into a validated settings dict."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    raw = dict(base or {})
    raw.update(cp["config"])
    return build_settings(raw)


def build_settings(raw: dict) -> dict:
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = {**PRESETS[preset], **raw}
    unknown = sorted(set(raw) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = {}
    for key, (kind, default) in _KEYS.items():
        cfg[key] = _parse_value(key, kind, str(raw[key])) if key in raw else default
    if cfg["oracle"] not in ORACLES:
        raise ConfigError(f"oracle must be one of {ORACLES}, got {cfg['oracle']!r}")
    if cfg["d"] is None:
        raise ConfigError("config must set d")
    fixed_n = {"pde": len(cfg["levels"] or PDE_LEVELS), "ising": len(cfg["levels"] or ISING_LEVELS)}
    if cfg["oracle"] in fixed_n:
        if cfg["n"] not in (None, fixed_n[cfg["oracle"]]):
            raise ConfigError(f"{cfg['oracle']} oracle has n = number of levels = "
                              f"{fixed_n[cfg['oracle']]}")
        cfg["n"] = fixed_n[cfg["oracle"]]
    elif cfg["oracle"] == "synthetic" and cfg["n"] is None:
        cfg["n"] = 4
    if cfg["n"] is None:
        raise ConfigError("config must set n")
    if cfg["repeats"] < 1 or cfg["eval_count"] < 1:
        raise ConfigError("repeats and eval_count must be >= 1")
    try:
        als_config(cfg, 0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def als_config(cfg: dict, seed: int) -> AlsConfig:
    return AlsConfig(
        r=cfg["r"], s=cfg["s"], lam=cfg["lambda"], passes=cfg["passes"],
        max_sweeps=cfg["max_sweeps"], rel_tol=cfg["rel_tol"], seed=seed,
        eval_count=cfg["eval_count"], init=cfg["init"], z_mode=cfg["z_mode"],
        extra_factor=cfg["extra_factor"], rank_increase=cfg["rank_increase.enabled"],
        target_r=cfg["rank_increase.target_r"], variance=cfg["rank_increase.variance"],
    )


def synthetic_truth(cfg: dict):
    rng = np.random.default_rng(cfg["synthetic_seed"])
    return gibbs_chain_ring(cfg["d"], cfg["n"], cfg["synthetic_rank"] or cfg["r"], rng,
                            noise=cfg["synthetic_noise"])


def make_oracle(cfg: dict):
    name, d = cfg["oracle"], cfg["d"]
    if name == "toy":
        return toy_oracle(d, cfg["n"])
    if name == "pde":
        return pde_oracle(d, cfg["levels"] or PDE_LEVELS)
    if name == "ising":
        return ising_oracle(d, cfg["beta"], cfg["levels"] or ISING_LEVELS)
    return synthetic_tr_oracle(synthetic_truth(cfg))


def run_seeds(seed: int, repeats: int) -> list:
    """Independent per-run seeds derived from one base seed."""
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(repeats)]


def _run_one(cfg: dict, seed: int):
    oracle = make_oracle(cfg)
    try:
        ring, report = run(oracle, als_config(cfg, seed))
    except NumericalFailure as exc:
        return None, (exc.report.to_dict() if exc.report else None), str(exc)
    return ring, report.to_dict(), None


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def _csv_rows(reports):
    rows = [[i + 1] + [rep[k] for k in CSV_HEADER[1:]] for i, rep in enumerate(reports)]
    med = ["median"] + [float(statistics.median(r[j] for r in rows)) for j in range(1, len(CSV_HEADER))]
    return rows + [med]


def render_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in _csv_rows(reports):
        w.writerow([f"{v:g}" if j in (3, 5) else _fmt(v) for j, v in enumerate(row)])
    return buf.getvalue()


def render_table(reports, title="") -> str:
    head = list(CSV_HEADER) + ["ranks"]
    body = []
    for row, rep in zip(_csv_rows(reports), reports + [None]):
        cells = [_fmt(v) if isinstance(v, float) else str(v) for v in row]
        cells[3] = str(int(row[3])) if row[0] != "median" else f"{row[3]:.1f}"
        cells[5] = str(int(row[5])) if row[0] != "median" else f"{row[5]:.1f}"
        cells[6] = f"{row[6]:.2f}"
        cells.append(",".join(map(str, rep["ranks"])) if rep else "")
        body.append(cells)
    widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(head)]
    lines = [title] if title else []
    lines.append("  ".join(h.rjust(w) for h, w in zip(head, widths)))
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines) + "\n"


def _load_settings(args) -> dict:
    base = dict(PRESETS[args.preset]) if getattr(args, "preset", None) else {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        cfg = parse_config(text, base)
    elif base:
        cfg = build_settings(base)
    else:
        raise ConfigError("pass --config or --preset")
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def cmd_decompose(args) -> int:
    cfg = _load_settings(args)
    seeds = run_seeds(cfg["seed"], cfg["repeats"])
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_run_one, [cfg] * len(seeds), seeds))
    else:
        results = [_run_one(cfg, sd) for sd in seeds]

    reports, failure = [], None
    for i, (ring, rep, err) in enumerate(results):
        if err is not None:
            failure = (i + 1, err, rep)
            break
        reports.append(rep)
        if args.out and args.save_rings:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            save_ring(Path(args.out) / f"ring_run{i + 1}.npz", ring)

    title = (f"{cfg['oracle']} d={cfg['d']} n={cfg['n']} r={cfg['r']} s={cfg['s']} "
             f"repeats={cfg['repeats']} seed={cfg['seed']}")
    payload = {"config": cfg, "seeds": seeds, "runs": reports}
    if failure:
        payload["failure"] = {"run": failure[0], "message": failure[1], "partial": failure[2]}
    text = render_table(reports, title) if reports else title + "\n(no completed runs)\n"
    csv_text = render_csv(reports) if reports else ",".join(CSV_HEADER) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(csv_text)
        (out / "report.txt").write_text(text)
        (out / "report.json").write_text(json.dumps(payload, indent=1, default=_json_default))
    sys.stdout.write(text)
    if not args.out:
        sys.stdout.write("\n" + csv_text)
    if failure:
        print(f"numerical failure in run {failure[0]}: {failure[1]}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (tuple, np.ndarray)):
        return list(o)
    raise TypeError(type(o).__name__)


def cmd_evaluate(args) -> int:
    try:
        ring = load_ring(args.ring)
    except (ValueError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from None
    if args.config:
        cfg = _load_settings(args)
    else:
        if not args.oracle:
            raise ConfigError("pass --oracle or --config")
        raw = {"oracle": args.oracle, "d": str(ring.d), "n": str(ring.n), "beta": str(args.beta)}
        if args.oracle == "synthetic":
            raw["r"] = str(max(ring.ranks))
        cfg = build_settings(raw)
    if cfg["d"] != ring.d or cfg["n"] != ring.n:
        raise ConfigError(f"ring has d={ring.d}, n={ring.n}; oracle has d={cfg['d']}, n={cfg['n']}")
    if cfg["oracle"] == "synthetic" and args.truth:
        try:
            oracle = synthetic_tr_oracle(load_ring(args.truth))
        except (ValueError, FileNotFoundError) as exc:
            raise ConfigError(str(exc)) from None
    else:
        oracle = make_oracle(cfg)
    omega = sample_eval_set(ring.d, ring.n, args.count, args.seed)
    E = error_E(ring, oracle, omega)
    print(f"E={E:.6e} points={omega.shape[0]} seed={args.seed}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _load_settings(args)
    oracle = make_oracle(cfg)
    if cfg["ring"]:
        try:
            ring = load_ring(cfg["ring"])
        except (ValueError, FileNotFoundError) as exc:
            raise ConfigError(str(exc)) from None
    elif cfg["oracle"] == "synthetic":
        ring = synthetic_truth(cfg)
    else:
        try:
            ring, _ = run(oracle, als_config(cfg, cfg["seed"]))
        except NumericalFailure as exc:
            print(f"numerical failure while fitting: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
    lc = cfg["segment"] or min_segment_length(ring.n, max(ring.ranks))
    try:
        rows = diagnose(ring, oracle, lc, cfg["z_count"], cfg["seed"])
    except (ValueError, MemoryError) as exc:
        raise ConfigError(str(exc)) from None
    head = ("k", "c1", "a", "c2", "|b|", "alpha", "kappa", "ratio_B1", "ratio_B2", "alpha/kappa^4", "holds")
    lines = [" ".join(head)]
    for rep in rows:
        a, b, c1, c2 = rep.partition
        lines.append(" ".join([
            str(rep.k), "-".join(map(str, c1)), "-".join(map(str, a)), "-".join(map(str, c2)),
            str(len(b)), f"{rep.alpha:.9f}", f"{rep.kappa:.4e}", f"{rep.ratio_b1:.9f}",
            f"{rep.ratio_b2:.9f}", f"{rep.bound:.4e}", "yes" if rep.holds else "no",
        ]))
    print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trals", description="Tensor-ring ALS from sampled entries.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    dec = sub.add_parser("decompose", help="fit rings and report per-run and median errors")
    dec.add_argument("--config", help="flat key = value config file")
    dec.add_argument("--preset", choices=sorted(PRESETS), help="start from a built-in config")
    dec.add_argument("--out", help="directory for report.csv, report.txt, report.json")
    dec.add_argument("--seed", type=int, help="override the config seed")
    dec.add_argument("--threads", type=int, default=1, help="run repeats in this many processes")
    dec.add_argument("--save-rings", action="store_true", help="also write ring_run<i>.npz to --out")
    dec.set_defaults(func=cmd_decompose)

    ev = sub.add_parser("evaluate", help="relative error of a saved ring on random points")
    ev.add_argument("--ring", required=True)
    ev.add_argument("--oracle", choices=ORACLES)
    ev.add_argument("--config", help="oracle settings as in decompose (overrides --oracle)")
    ev.add_argument("--preset", choices=sorted(PRESETS))
    ev.add_argument("--truth", help="generating ring for the synthetic oracle")
    ev.add_argument("--beta", type=float, default=10.0)
    ev.add_argument("--count", type=int, default=DEFAULT_EVAL_COUNT)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_evaluate)

    dg = sub.add_parser("diagnose", help="alpha, kappa and bond rank-1 ratios per core")
    dg.add_argument("--config")
    dg.add_argument("--preset", choices=sorted(PRESETS))
    dg.add_argument("--seed", type=int)
    dg.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
