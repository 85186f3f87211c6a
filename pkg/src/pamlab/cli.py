"""Experiment runner: config parsing, artifact persistence, plotting.

Config files are INI-style with a single ``[run]`` section that must
declare ``schema_version = 1``.  List-valued keys hold JSON (for example
``kappas = [0.5, 1.0, 2.0]``), and fraction strings like ``1/14`` are
accepted wherever a float is.  Every artifact embeds the config digest
and the master seed; rerunning a subcommand with the same config and
seed reproduces every output byte for byte.

Exit codes: 0 success, 2 config error, 3 resource budget exceeded,
4 numeric failure, 5 property violation (a checked inequality failed).
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from fractions import Fraction
from pathlib import Path

from .errors import (ConfigError, ContractError, NumericError, PropertyViolation,
                     RangeError, ResourceError)
from .util import canonical_float, config_digest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_NUMERIC = 4
EXIT_PROPERTY = 5

SCHEMA_VERSION = 1

_REQUIRED = object()


def _number(text):
    """Float parser that also takes exact-looking fractions ("1/14")."""
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r} ({exc})")


class RunConfig:
    """One validated [run] section: raw strings plus typed accessors."""

    def __init__(self, raw, allowed):
        unknown = sorted(set(raw) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        self.raw = dict(raw)

    def get(self, key, cast=str, default=_REQUIRED):
        if key not in self.raw:
            if default is _REQUIRED:
                raise ConfigError(f"missing required config key: {key}")
            return default
        text = self.raw[key]
        try:
            if cast is bool:
                return text.strip().lower() in ("1", "true", "yes", "on")
            return cast(text)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})")

    def get_json(self, key, default=_REQUIRED):
        if key not in self.raw:
            if default is _REQUIRED:
                raise ConfigError(f"missing required config key: {key}")
            return default
        try:
            return json.loads(self.raw[key])
        except json.JSONDecodeError as exc:
            raise ConfigError(f"key {key} is not valid JSON: {exc}")


def read_config(path):
    """Parse and validate the key-value config file (schema version 1)."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.RawConfigParser()
    try:
        with open(p, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (configparser.Error, OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}")
    if not cp.has_section("run"):
        raise ConfigError("config must contain a [run] section")
    raw = dict(cp.items("run"))
    ver = raw.pop("schema_version", None)
    if ver is None:
        raise ConfigError("config must declare schema_version")
    try:
        ver = int(ver)
    except ValueError:
        raise ConfigError(f"schema_version must be an integer, got {ver!r}")
    if ver != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {ver} (expected {SCHEMA_VERSION})")
    return raw


def _plain(obj):
    """Recursively coerce numpy scalars/arrays for JSON emission."""
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, np.bool_)):
        return obj.item()
    return obj


def _json_line(obj):
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def _write_jsonl(path, meta, records):
    lines = [_json_line({"record": "meta", **meta})]
    lines += [_json_line(r) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _pool_map(fn, items, threads):
    """Bounded fan-out with order-fixed merge (deterministic at any width)."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- environment plumbing ---------------------------------------------

_ENV_KEYS = ("kind", "d", "l", "t", "seed", "spin_states", "spin_rates",
             "zr_rho", "zr_beta", "rw_rho", "rw_gamma", "rw_shift",
             "frozen_values", "max_events")

# One config file can drive a whole experiment chain, so every subcommand
# validates keys against the shared vocabulary and reads only its own.
_VOCAB = _ENV_KEYS + (
    "kappas", "replicas", "walk_seed", "escape_budget",          # sweeps
    "n_instances", "kappa",                                      # oracle checks
    "a", "alpha", "b", "c", "m", "delta", "k", "a1", "a2",       # block geometry
    "r", "r_max", "reps",                                        # censuses, probes
    "epsilon", "k1",                                             # schedules
    "n_functions", "n_riesz", "n_multisum",                      # rearrangement
    "shapes", "n_fields", "n_partitions", "n_parts", "part_side", "bound_delta",
    "n_nested", "nested_kappa", "n_trials",                      # spectral suites
    "input",                                                     # report
)


def build_env_config(cfg, args, t_override=None):
    """Assemble an environment config from [run] keys (seed flag wins)."""
    import os

    from .environment import EnvConfig
    seed = cfg.get("seed", int, 0)
    if args.seed is not None:
        seed = args.seed
    kw = {
        "kind": cfg.get("kind"),
        "d": cfg.get("d", int, 1),
        "L": cfg.get("l", int, 8),
        "T": t_override if t_override is not None else cfg.get("t", _number),
        "seed": seed,
    }
    for key, attr, cast in (("zr_rho", "zr_rho", _number),
                            ("zr_beta", "zr_beta", _number),
                            ("rw_rho", "rw_rho", _number),
                            ("rw_gamma", "rw_gamma", _number),
                            ("rw_shift", "rw_shift", _number),
                            ("max_events", "max_events", int)):
        if key in cfg.raw:
            kw[attr] = cfg.get(key, cast)
    if "spin_states" in cfg.raw:
        kw["spin_states"] = tuple(cfg.get_json("spin_states"))
    if "spin_rates" in cfg.raw:
        kw["spin_rates"] = tuple(tuple(r) for r in cfg.get_json("spin_rates"))
    if "frozen_values" in cfg.raw:
        kw["frozen_values"] = tuple((tuple(int(x) for x in c), float(v))
                                    for c, v in cfg.get_json("frozen_values"))
    budget = os.environ.get("PAMLAB_MAX_EVENTS")
    if budget is not None:
        try:
            kw["max_events"] = int(budget)
        except ValueError:
            raise ConfigError(f"PAMLAB_MAX_EVENTS must be an integer, got {budget!r}")
    return EnvConfig(**kw)


def _meta(args, cfg_raw, seed):
    digest = config_digest({"subcommand": args.cmd, "seed": seed, **cfg_raw})
    return {"schema_version": SCHEMA_VERSION, "config": digest, "seed": seed}


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands ------------------------------------------------------


def cmd_env_sample(args):
    from .environment import env_mean, export_env, sample_env
    cfg = RunConfig(read_config(args.config), _VOCAB)
    env = build_env_config(cfg, args)
    traj = sample_env(env)
    out = _outdir(args)
    export_env(traj, out / "env.txt")
    meta = _meta(args, cfg.raw, env.seed)
    summary = {**meta, "kind": env.kind, "d": env.d, "l": env.L, "t": env.T,
               "n_events": int(traj.times.size), "env_mean": env_mean(env)}
    (out / "env_sample.json").write_text(_json_line(summary) + "\n", encoding="utf-8")
    print(f"sampled {env.kind} environment: {traj.times.size} events "
          f"-> {out / 'env.txt'}")
    return EXIT_OK


def cmd_lyapunov_sweep(args):
    from .environment import env_mean
    from .walk import lyapunov_sweep
    cfg = RunConfig(read_config(args.config), _VOCAB)
    t = cfg.get("t", _number)
    env = build_env_config(cfg, args, t_override=t)
    kappas = [float(k) for k in cfg.get_json("kappas")]
    replicas = cfg.get("replicas", int)
    walk_seed = cfg.get("walk_seed", int, env.seed + 1)
    budget = cfg.get("escape_budget", _number, 1e-6)
    rows, _env_used = lyapunov_sweep(env, kappas, t, replicas, walk_seed,
                                     escape_budget=budget)
    meta = _meta(args, cfg.raw, env.seed)
    out = _outdir(args)
    lines = [f"# pamlab-sweep schema_version={SCHEMA_VERSION} "
             f"config={meta['config']} seed={meta['seed']}",
             f"# env_mean={canonical_float(env_mean(env))}",
             "kappa,t,replicas,lambda_hat,stderr,env_seed,walk_seed"]
    for r in rows:
        lines.append(",".join([canonical_float(r.kappa), canonical_float(r.t),
                               str(r.replicas), canonical_float(r.lambda_hat),
                               canonical_float(r.stderr), str(r.env_seed),
                               str(r.walk_seed)]))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"swept {len(rows)} kappa values -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_mc_vs_oracle(args):
    from .oracle import mc_vs_oracle_report
    cfg = RunConfig(read_config(args.config), _VOCAB)
    seed = args.seed if args.seed is not None else cfg.get("seed", int, 0)
    kappas = tuple(float(k) for k in cfg.get_json("kappas", [0.5, 1.0, 2.0]))
    records = mc_vs_oracle_report(
        n_instances=cfg.get("n_instances", int, 20), d=cfg.get("d", int, 1),
        L=cfg.get("l", int, 6), t=cfg.get("t", _number, 1.0),
        kappas=kappas, replicas=cfg.get("replicas", int, 20_000), seed=seed)
    out = _outdir(args)
    _write_jsonl(out / "mc_vs_oracle.jsonl", _meta(args, cfg.raw, seed), records)
    worst = max(abs(r["z"]) for r in records)
    print(f"{len(records)} comparisons, worst |z| = {worst:.3f} "
          f"-> {out / 'mc_vs_oracle.jsonl'}")
    return EXIT_OK


_BLOCK_KEYS = ("a", "alpha", "b", "c", "m", "delta", "k", "a1", "a2")


def build_block_spec(cfg, d):
    from .multiscale import BlockSpec
    return BlockSpec(A=cfg.get("a", _number, 2.0),
                     alpha=cfg.get("alpha", _number, 1.0),
                     b=cfg.get("b", int, 1), c=cfg.get("c", int, 1),
                     m=cfg.get("m", _number, 2.0),
                     delta=cfg.get("delta", _number, 0.5),
                     K=cfg.get("k", _number, None), d=d)


def cmd_blocks_census(args):
    import math

    from .environment import sample_env
    from .multiscale import block_census, census_jsonl
    from .walk import sample_walk
    cfg = RunConfig(read_config(args.config), _VOCAB)
    r_max = cfg.get("r_max", int, 2)
    t = cfg.get("t", _number)
    d = cfg.get("d", int, 1)
    spec = build_block_spec(cfg, d)
    slab = spec.slab(r_max + 1)
    horizon = slab * max(1, math.ceil(t / slab))
    env = build_env_config(cfg, args, t_override=horizon)
    traj = sample_env(env)
    path = sample_walk(cfg.get("kappa", _number, 1.0), t, d,
                       cfg.get("walk_seed", int, env.seed + 1))
    records = block_census(traj, path, spec, r_max)
    out = _outdir(args)
    meta = _meta(args, cfg.raw, env.seed)
    text = _json_line({"record": "meta", **meta}) + "\n" + census_jsonl(records) + "\n"
    (out / "census.jsonl").write_text(text, encoding="utf-8")
    top = records[0]
    print(f"census to R={r_max}: level-1 bad blocks = {top['xi_count']} "
          f"-> {out / 'census.jsonl'}")
    return EXIT_OK


def cmd_mixing_probe(args):
    from .multiscale import mixing_probe
    cfg = RunConfig(read_config(args.config), _VOCAB)
    d = cfg.get("d", int, 1)
    env = build_env_config(cfg, args, t_override=cfg.get("t", _number, 1.0))
    spec = build_block_spec(cfg, d)
    result = mixing_probe(env, spec, cfg.get("r", int, 1),
                          cfg.get("reps", int, 200), env.seed)
    out = _outdir(args)
    meta = _meta(args, cfg.raw, env.seed)
    (out / "mixing.json").write_text(_json_line({**meta, **result}) + "\n",
                                     encoding="utf-8")
    print(f"mixing probe: verdict={result['verdict']} "
          f"freq={result['freq']} bound={result['bound']}")
    return EXIT_PROPERTY if result["verdict"] == "violated" else EXIT_OK


def cmd_schedule_report(args):
    from .multiscale import schedule_report
    cfg = RunConfig(read_config(args.config), _VOCAB)
    seed = args.seed if args.seed is not None else cfg.get("seed", int, 0)
    rep = schedule_report(epsilon=cfg.get("epsilon", _number, 0.05),
                          a=cfg.get("a", _number, 2.0),
                          K1=cfg.get("k1", _number, 1.0),
                          d=cfg.get("d", int, 1),
                          R_max=cfg.get("r_max", int, 6))
    out = _outdir(args)
    meta = _meta(args, cfg.raw, seed)
    (out / "schedule.json").write_text(_json_line({**meta, **rep}) + "\n",
                                       encoding="utf-8")
    print(f"A = {canonical_float(rep['A'])}   ratio = {canonical_float(rep['ratio'])}"
          f"   tail <= {canonical_float(rep['tail_bound'])}")
    print("R\tdelta_R\trho_R\tL_R\tpartial_sum")
    for row in rep["rows"]:
        print("\t".join([str(row["R"]), canonical_float(row["delta_R"]),
                         canonical_float(row["rho_R"]), canonical_float(row["L_R"]),
                         canonical_float(row["partial_sum"])]))
    return EXIT_OK


def cmd_rearrange_verify(args):
    from .rearrangement import rearrangement_corpus
    cfg = RunConfig(read_config(args.config), _VOCAB)
    seed = args.seed if args.seed is not None else cfg.get("seed", int, 0)
    result = rearrangement_corpus(
        n_functions=cfg.get("n_functions", int, 10_000),
        n_riesz=cfg.get("n_riesz", int, 10_000),
        n_multisum=cfg.get("n_multisum", int, 1_000), seed=seed)
    out = _outdir(args)
    _write_jsonl(out / "rearrange.jsonl", _meta(args, cfg.raw, seed),
                 [{"record": "summary", **result}])
    n = len(result["violations"])
    print(f"rearrangement corpus: {result['n_functions']} functions, "
          f"{result['n_riesz']} pair sums, {result['n_multisum']} chains, "
          f"{n} violations")
    return EXIT_PROPERTY if n else EXIT_OK


def cmd_spectral_verify(args):
    from .spectral import verify_eigenvalue_bound, verify_neumann_properties
    cfg = RunConfig(read_config(args.config), _VOCAB)
    seed = args.seed if args.seed is not None else cfg.get("seed", int, 0)
    shapes = [tuple(int(n) for n in s)
              for s in cfg.get_json("shapes", [[5], [4, 4], [3, 3, 3]])]
    n_fields = cfg.get("n_fields", int, 200)
    n_partitions = cfg.get("n_partitions", int, 10)

    def one_shape(i):
        return verify_neumann_properties(shapes[i], n_fields=n_fields,
                                         n_partitions=n_partitions, seed=seed + i)

    records = _pool_map(one_shape, range(len(shapes)), args.threads)
    records += verify_eigenvalue_bound(
        n_instances=cfg.get("n_instances", int, 10), d=1,
        delta=cfg.get("bound_delta", _number, 0.05), seed=seed,
        part_side=cfg.get("part_side", int, 3), n_parts=cfg.get("n_parts", int, 3))
    out = _outdir(args)
    _write_jsonl(out / "spectral.jsonl", _meta(args, cfg.raw, seed), records)
    bad = [r for r in records if not r["ok"]]
    print(f"spectral suite: {len(records)} records, {len(bad)} failures "
          f"-> {out / 'spectral.jsonl'}")
    return EXIT_PROPERTY if bad else EXIT_OK


def cmd_localtime_verify(args):
    import numpy as np

    from .rearrangement import localtime_mgf_check, random_localtime_instance
    from .spectral import NestedIntervals, verify_localtime_eigen_bound
    cfg = RunConfig(read_config(args.config), _VOCAB)
    seed = args.seed if args.seed is not None else cfg.get("seed", int, 0)
    n_inst = cfg.get("n_instances", int, 20)
    kappas = [float(k) for k in cfg.get_json("kappas", [0.5, 2.0])]
    t = cfg.get("t", _number, 2.0)
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n_inst):
        d = 1 + (i % 2)
        blocks, gammas = random_localtime_instance(rng, d, t=t)
        cases.append((i, d, blocks, gammas, kappas[i % len(kappas)]))

    def one_case(case):
        i, d, blocks, gammas, kappa = case
        r = localtime_mgf_check(blocks, gammas, kappa, t)
        return {"record": "localtime", "instance": i, "d": d, **r}

    records = _pool_map(one_case, cases, args.threads)
    n_nested = cfg.get("n_nested", int, 3)
    nk = cfg.get("nested_kappa", _number, 1.5)
    n_trials = cfg.get("n_trials", int, 2_000)
    for j in range(n_nested):
        radii = tuple(sorted(rng.choice(np.arange(2, 14), 3, replace=False)))
        betas = tuple(np.round(rng.uniform(0.1, 0.7, 3), 3))
        ni = NestedIntervals(radii=tuple(int(r) for r in radii),
                             betas=tuple(float(b) for b in betas))
        r = verify_localtime_eigen_bound(ni, nk, n_trials=n_trials, seed=seed + j)
        records.append({"record": "nested", "instance": j,
                        "radii": list(ni.radii), "betas": list(ni.betas), **r})
    out = _outdir(args)
    _write_jsonl(out / "localtime.jsonl", _meta(args, cfg.raw, seed), records)
    bad = [r for r in records if not r["holds"]]
    print(f"local-time suite: {len(records)} records, {len(bad)} failures "
          f"-> {out / 'localtime.jsonl'}")
    return EXIT_PROPERTY if bad else EXIT_OK


def cmd_report(args):
    from .report import lyapunov_svg
    cfg = RunConfig(read_config(args.config), _VOCAB)
    out = _outdir(args)
    src = Path(cfg.get("input", str, str(out / "sweep.csv")))
    if not src.is_file():
        raise ConfigError(f"sweep table not found: {src} (run lyapunov-sweep first)")
    rows, env_mean, subtitle = [], None, ""
    for line in src.read_text(encoding="utf-8").splitlines():
        if line.startswith("# env_mean="):
            env_mean = float(line.split("=", 1)[1])
        elif line.startswith("# pamlab-sweep"):
            subtitle = line[2:].strip()
        elif line.startswith("#") or line.startswith("kappa,"):
            continue
        elif line.strip():
            parts = line.split(",")
            if len(parts) != 7:
                raise ConfigError(f"malformed sweep row: {line!r}")
            rows.append({"kappa": float(parts[0]), "lambda_hat": float(parts[3]),
                         "stderr": float(parts[4])})
    if env_mean is None:
        raise ConfigError(f"{src} lacks the env_mean header comment")
    svg = lyapunov_svg(rows, env_mean, subtitle)
    (out / "report.svg").write_text(svg, encoding="utf-8")
    print(f"plotted {len(rows)} points -> {out / 'report.svg'}")
    return EXIT_OK


_HANDLERS = {
    "env-sample": cmd_env_sample,
    "lyapunov-sweep": cmd_lyapunov_sweep,
    "mc-vs-oracle": cmd_mc_vs_oracle,
    "blocks-census": cmd_blocks_census,
    "mixing-probe": cmd_mixing_probe,
    "schedule-report": cmd_schedule_report,
    "rearrange-verify": cmd_rearrange_verify,
    "spectral-verify": cmd_spectral_verify,
    "localtime-verify": cmd_localtime_verify,
    "report": cmd_report,
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="pamlab",
        description="lattice Anderson-model laboratory: sweeps, censuses, "
                    "and inequality verification suites")
    sub = ap.add_subparsers(dest="cmd", required=True, metavar="subcommand")
    for name, fn in _HANDLERS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", default=None,
                       help="INI config file with a [run] section")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config seed)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker pool width for independent instances")
        p.add_argument("--out", default="out", help="artifact directory")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _HANDLERS[args.cmd](args)
    except (ConfigError, ContractError, RangeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PropertyViolation as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
