"""Command-line driver: ``dfm-mse {mse-table,bands,scaling,replay}``.

Configs are flat TOML files.  Every run writes its CSVs plus a
``manifest_<command>.json`` sidecar holding the config text, its git blob
hash, the seed, the package version and a SHA-1 per output;
``dfm-mse replay --manifest`` reruns from that sidecar and checks the hashes.

Failures print one JSON object on stderr and exit nonzero (2 for config
errors, 1 for numerical ones).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .estimators import TABLE_ORDER, Method
from .exceptions import ConfigError, DfmError
from .model import ScenarioConfig
from .montecarlo import (
    GAP_PAIRS,
    KF_BURN_IN,
    MODE_PAIRS,
    band_series,
    run_experiment,
    scaling_study,
)

MSE_TABLE_HEADER = ("sigma2_star", "N", "row_kind")
BANDS_HEADER = ("t", "truth", "estimate", "lower", "upper")
SCALING_HEADER = ("kind", "N", "item", "value")
DIAGNOSTICS_HEADER = ("sigma2_star", "N", "method", "theoretical", "empirical",
                      "mc_std_error", "z_score", "coverage")

_SCENARIO_KEYS = ("phi", "hetero_mode", "tau", "permute_idio", "hetero_low", "hetero_high")

_KEYS = {
    "mse-table": {"seed", "replications", "t_len", "sigma2_star", "n", "methods",
                  "spherical_variance", "kf_burn_in", *_SCENARIO_KEYS},
    "bands": {"seed", "t_len", "sigma2_star", "n", "methods", "window", "level", "mse",
              "spherical_variance", *_SCENARIO_KEYS},
    "scaling": {"seed", "sigma2_star", "n_grid", "methods", "spherical_variance",
                *_SCENARIO_KEYS},
}

_REQUIRED = {
    "mse-table": ("seed", "sigma2_star", "n"),
    "bands": ("seed",),
    "scaling": ("seed", "sigma2_star", "n_grid"),
}


# ---------------------------------------------------------------- config


def git_blob_sha1(data):
    """Hash ``data`` the way ``git hash-object`` does."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _line_of(text, key):
    m = re.search(rf"^\s*{re.escape(key)}\s*=", text, re.MULTILINE)
    return text.count("\n", 0, m.start()) + 1 if m else None


def parse_config(text, command):
    """Parse and validate a config for ``command``; returns a dict."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else None
        raise ConfigError(f"unparseable config: {exc}", line=line) from exc

    def fail(message, key):
        raise ConfigError(message, field=key, line=_line_of(text, key))

    for key in raw:
        if key not in _KEYS[command]:
            fail(f"unknown key {key!r} for {command}", key)
    for key in _REQUIRED[command]:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", field=key)

    cfg = dict(raw)

    def as_list(key, kind):
        value = cfg.get(key)
        values = value if isinstance(value, list) else [value]
        if not values:
            fail(f"{key} must not be empty", key)
        for v in values:
            if isinstance(v, bool) or not isinstance(v, kind):
                fail(f"{key} has invalid entry {v!r}", key)
        return values

    if "methods" in cfg:
        if not isinstance(cfg["methods"], list) or not cfg["methods"]:
            fail("methods must be a non-empty list", "methods")
        try:
            chosen = {Method.parse(m) for m in cfg["methods"]}
        except ValueError as exc:
            fail(str(exc), "methods")
        cfg["methods"] = tuple(m for m in TABLE_ORDER if m in chosen)
    else:
        cfg["methods"] = TABLE_ORDER

    sv = cfg.get("spherical_variance", "mean")
    if not (sv in ("mean", "sigma2_star")
            or (isinstance(sv, (int, float)) and not isinstance(sv, bool) and sv > 0)):
        fail("spherical_variance must be 'mean', 'sigma2_star' or a positive number",
             "spherical_variance")
    cfg["spherical_variance"] = sv

    if command == "mse-table":
        cfg["sigma2_star"] = as_list("sigma2_star", (int, float))
        cfg["n"] = as_list("n", int)
    elif command == "scaling":
        cfg["n_grid"] = as_list("n_grid", int)
        if len(cfg["n_grid"]) < 2 or sorted(set(cfg["n_grid"])) != cfg["n_grid"]:
            fail("n_grid must be strictly increasing with at least two points", "n_grid")
    else:
        cfg.setdefault("n", 150)
        cfg.setdefault("t_len", 200)
        cfg.setdefault("sigma2_star", 1.0)
        window = cfg.setdefault("window", [140, 160])
        if (not isinstance(window, list) or len(window) != 2
                or not all(isinstance(w, int) for w in window)
                or not 1 <= window[0] <= window[1] <= cfg["t_len"]):
            fail("window must be [first, last] with 1 <= first <= last <= t_len", "window")
        if cfg.setdefault("mse", "true") not in ("true", "believed"):
            fail("mse must be 'true' or 'believed'", "mse")
        level = cfg.setdefault("level", 0.95)
        if not isinstance(level, float) or not 0 < level < 1:
            fail("level must lie in (0, 1)", "level")

    burn = cfg.setdefault("kf_burn_in", KF_BURN_IN)
    if isinstance(burn, bool) or not isinstance(burn, int) or burn < 0:
        fail("kf_burn_in must be a nonnegative integer", "kf_burn_in")

    # validate every scenario field once through ScenarioConfig
    if command == "mse-table":
        probe = (cfg["sigma2_star"][0], cfg["n"][0])
    elif command == "scaling":
        probe = (cfg["sigma2_star"], cfg["n_grid"][0])
    else:
        probe = (cfg["sigma2_star"], cfg["n"])
    try:
        _scenario(cfg, *probe)
    except ConfigError as exc:
        exc.line = _line_of(text, exc.field) if exc.field else None
        raise
    except TypeError as exc:
        raise ConfigError(f"invalid value type: {exc}") from exc
    return cfg


def _scenario(cfg, sigma2_star, n):
    extra = {k: cfg[k] for k in _SCENARIO_KEYS if k in cfg}
    extra.setdefault("phi", 0.0)
    extra.setdefault("hetero_mode", "unit")
    extra.setdefault("tau", 0.0)
    return ScenarioConfig(
        sigma2_star=float(sigma2_star),
        n=n,
        t_len=cfg.get("t_len", 100),
        replications=cfg.get("replications", 1000),
        seed=cfg["seed"],
        **extra,
    )


def _spherical(cfg, scenario):
    sv = cfg["spherical_variance"]
    if sv == "mean":
        return None
    if sv == "sigma2_star":
        return scenario.sigma2_star
    return float(sv)


# ---------------------------------------------------------------- output


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _raw(x):
    return repr(float(x))


def _human(x):
    return f"{float(x):.3f}"


def run_mse_table(cfg, threads=1):
    """Returns ``{filename: text}``."""
    cells = [(s, n) for s in cfg["sigma2_star"] for n in cfg["n"]]
    scenarios = [_scenario(cfg, s, n) for s, n in cells]
    methods = cfg["methods"]

    def one(sc):
        return run_experiment(sc, methods, _spherical(cfg, sc), kf_burn_in=cfg["kf_burn_in"])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, scenarios))
    else:
        results = [one(sc) for sc in scenarios]

    header = MSE_TABLE_HEADER + tuple(m.value for m in methods)
    human, raw, diag = [], [], []
    for (s, n), res in zip(cells, results):
        for kind in ("A", "E"):
            vals = [res.scalar(m, kind) for m in methods]
            human.append([_human(s), n, kind, *map(_human, vals)])
            raw.append([_raw(s), n, kind, *map(_raw, vals)])
        for m in methods:
            diag.append([_raw(s), n, m.value, _raw(res.scalar(m, "A")), _raw(res.scalar(m, "E")),
                         _raw(res.mc_std_error[m]), _raw(res.z_score(m)), _raw(res.coverage[m])])
    return {
        "mse_table.csv": _csv_text(header, human),
        "mse_table_raw.csv": _csv_text(header, raw),
        "mse_diagnostics.csv": _csv_text(DIAGNOSTICS_HEADER, diag),
    }


def run_bands(cfg, threads=1):
    scenario = _scenario(cfg, cfg["sigma2_star"], cfg["n"])
    out = {}
    for m in cfg["methods"]:
        series = band_series(scenario, m, tuple(cfg["window"]), cfg["level"], cfg["mse"],
                             _spherical(cfg, scenario))
        rows = [[t, *map(_raw, vals)] for t, *vals in series.rows()]
        out[f"bands_{m.value}.csv"] = _csv_text(BANDS_HEADER, rows)
    return out


def _pair_name(pair):
    return f"{pair[0].value}-{pair[1].value}"


def run_scaling(cfg, threads=1):
    recipe = _scenario(cfg, cfg["sigma2_star"], cfg["n_grid"][0])
    table = scaling_study(recipe, cfg["n_grid"], cfg["methods"], _spherical(cfg, recipe))
    rows = []
    for m in cfg["methods"]:
        rows += [["scaled_mse", n, m.value, _raw(v)]
                 for n, v in zip(table.n_grid, table.scaled_mse[m])]
    for pair in GAP_PAIRS:
        rows += [["gap", n, _pair_name(pair), _raw(v)]
                 for n, v in zip(table.n_grid, table.gaps[pair])]
    for pair in MODE_PAIRS:
        rows += [["mode_gap", n, _pair_name(pair), _raw(v)]
                 for n, v in zip(table.n_grid, table.mode_gaps[pair])]
    for m in cfg["methods"]:
        rows.append(["slope_scaled_mse", "", m.value, _raw(table.mse_slopes[m])])
    for pair in GAP_PAIRS:
        rows.append(["slope_gap", "", _pair_name(pair), _raw(table.gap_slopes[pair])])
    return {"scaling.csv": _csv_text(SCALING_HEADER, rows)}


_RUNNERS = {"mse-table": run_mse_table, "bands": run_bands, "scaling": run_scaling}


def manifest_text(command, config_path, config_text, cfg, outputs):
    data = config_text.encode("utf-8")
    manifest = {
        "command": command,
        "config_path": str(config_path),
        "config_sha1": git_blob_sha1(data),
        "config_text": config_text,
        "seed": cfg["seed"],
        "version": __version__,
        "outputs": {name: hashlib.sha1(text.encode("utf-8")).hexdigest()
                    for name, text in sorted(outputs.items())},
    }
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def execute(command, config_path, config_text, out_dir, threads=1):
    """Run ``command`` and write its files; returns the written paths."""
    cfg = parse_config(config_text, command)
    outputs = _RUNNERS[command](cfg, threads)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in sorted(outputs.items()):
        path = out_dir / name
        path.write_bytes(text.encode("utf-8"))
        written.append(path)
    mpath = out_dir / f"manifest_{command.replace('-', '_')}.json"
    manifest = manifest_text(command, config_path, config_text, cfg, outputs)
    mpath.write_bytes(manifest.encode("utf-8"))
    written.append(mpath)
    return written


def replay(manifest_path, out_dir, threads=1):
    """Rerun a manifest; raise DfmError if any output hash differs."""
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    text = manifest["config_text"]
    if git_blob_sha1(text.encode("utf-8")) != manifest["config_sha1"]:
        raise DfmError("manifest config text does not match its hash")
    written = execute(manifest["command"], manifest["config_path"], text, out_dir, threads)
    mismatched = [name for name, digest in manifest["outputs"].items()
                  if hashlib.sha1((Path(out_dir) / name).read_bytes()).hexdigest() != digest]
    if mismatched:
        raise DfmError(f"outputs differ from manifest: {', '.join(mismatched)}")
    return written


# ---------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="dfm-mse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("mse-table", "theoretical and empirical MSE tables"),
                            ("bands", "confidence-band series along one simulated path"),
                            ("scaling", "N * MSE and equivalence gaps along an N grid")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--threads", type=int, default=1)
    p = sub.add_parser("replay", help="rerun a manifest and verify its outputs")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--threads", type=int, default=1)
    return parser


def _error_line(exc):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["field"] = exc.field
        payload["line"] = exc.line
    scenario = getattr(exc, "scenario", None)
    if scenario is not None:
        payload["scenario"] = {"sigma2_star": scenario.sigma2_star, "n": scenario.n,
                               "phi": scenario.phi, "seed": scenario.seed}
    return json.dumps(payload, sort_keys=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1", field="threads")
        if args.command == "replay":
            written = replay(args.manifest, args.out, args.threads)
        else:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}", field="config") from exc
            written = execute(args.command, args.config, text, args.out, args.threads)
    except ConfigError as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2
    except (DfmError, ValueError, OSError, KeyError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
