"""Command-line entry point: ``orbitknots <group> <command> [options]``."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import diagrams as dg

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_FLAGGED, EXIT_USAGE, EXIT_FAILED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str = ""
    flow: str = "default.flow"
    diagram: str = "D0"
    quantity: str = "writhe"
    knot: str = "trefoil"
    knot2: Optional[str] = None
    degree: int = 2
    tol: float = 1e-3
    T: List[float] = field(default_factory=lambda: [float(t) for t in range(4, 13)])
    S: List[float] = field(default_factory=lambda: [float(t) for t in range(4, 11)])
    R: List[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    words: List[str] = field(default_factory=lambda: ["01", "001", "011", "0001", "0011"])
    mc_samples: int = 100_000
    mc_tol: Optional[float] = None
    fraction: float = 0.1
    seed: int = 0
    threads: int = 1
    out: Optional[str] = None
    cache: Optional[str] = None

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, d: Dict[str, object], base: Optional["RunConfig"] = None) -> "RunConfig":
        cfg = base or cls()
        known = set(cls.keys())
        for key, val in d.items():
            k = key.replace("-", "_")
            if k not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            setattr(cfg, k, val)
        cfg.validate()
        return cfg

    def validate(self):
        def grid(name, dec=False):
            v = getattr(self, name)
            if isinstance(v, (int, float)):
                v = [v]
            try:
                v = [float(x) for x in v]
            except (TypeError, ValueError):
                raise ConfigError(f"configuration key {name!r} must be a list of numbers") from None
            ok = all((b < a) if dec else (b > a) for a, b in zip(v, v[1:]))
            if not v or not ok:
                raise ConfigError(f"configuration key {name!r} must be a non-empty {'de' if dec else 'in'}creasing list")
            setattr(self, name, v)

        grid("T")
        grid("S")
        grid("R", dec=True)
        for name, typ in (("degree", int), ("mc_samples", int), ("seed", int), ("threads", int),
                          ("tol", float), ("fraction", float)):
            try:
                setattr(self, name, typ(getattr(self, name)))
            except (TypeError, ValueError):
                raise ConfigError(f"configuration key {name!r} must be {typ.__name__}") from None
        if self.threads < 1:
            raise ConfigError("configuration key 'threads' must be at least 1")
        if not 0 <= self.fraction <= 1:
            raise ConfigError("configuration key 'fraction' must lie in [0, 1]")
        self.words = [str(w) for w in self.words]

    def to_dict(self) -> dict:
        return asdict(self)


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            d = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from None
    if "schema" in d:
        if int(d.pop("schema")) != 1:
            raise ConfigError("unsupported config schema")
    return d


# ---------------------------------------------------------------------------
# helpers


def default_cache_dir() -> Path:
    env = os.environ.get("ORBITKNOTS_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "orbitknots"


def resolve_flow(spec: str):
    from .flow import load_flow

    p = Path(spec)
    if p.exists():
        return load_flow(p)
    data = resources.files("orbitknots") / "data" / p.name
    if data.is_file():
        with resources.as_file(data) as q:
            return load_flow(q)
    raise ConfigError(f"flow spec {spec!r} not found")


def resolve_diagram(text: str) -> dg.TrivalentDiagram:
    aliases = {"d0": "chord", "chord": "chord", "parallel": "parallel", "crossed": "crossed", "tripod": "tripod"}
    key = text.strip().lower()
    if key in aliases:
        return dg.named_diagram(aliases[key])
    try:
        return dg.parse_diagram(text)
    except dg.DiagramError as exc:
        raise ConfigError(f"bad diagram {text!r}: {exc}") from None


def load_preset():
    from .integrals import Degree2Preset

    text = (resources.files("orbitknots") / "data" / "degree2_preset.json").read_text()
    return Degree2Preset.from_dict(json.loads(text))


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


class Outputs:
    """Collects files for one run, writes them in order, then the manifest."""

    def __init__(self, cfg: RunConfig, out_dir: Path):
        self.cfg = cfg
        self.dir = out_dir
        self.files: Dict[str, str] = {}
        self.timings: Dict[str, float] = {}
        self.t0 = time.perf_counter()
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    def add(self, name: str, text: str):
        self.files[name] = text

    def stage(self, name: str, seconds: float):
        self.timings[name] = round(seconds, 3)

    def write(self) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        digests = {}
        for name, text in self.files.items():
            data = text.encode("utf-8")
            (self.dir / name).write_bytes(data)
            digests[name] = hashlib.sha256(data).hexdigest()
        manifest = {"schema": 1, "config": self.cfg.to_dict(), "version": __version__,
                    "python": platform.python_version(), "numpy": np.__version__, "started": self.started,
                    "wall_clock_s": round(time.perf_counter() - self.t0, 3), "timings": self.timings,
                    "outputs": digests}
        path = self.dir / "manifest.json"
        path.write_text(_json(manifest))
        return path


def verify_manifest(path) -> List[str]:
    """Names of outputs whose current digest differs from the manifest."""
    path = Path(path)
    m = json.loads(path.read_text())
    bad = []
    for name, digest in m["outputs"].items():
        f = path.parent / name
        if not f.exists() or hashlib.sha256(f.read_bytes()).hexdigest() != digest:
            bad.append(name)
    return bad


# ---------------------------------------------------------------------------
# commands


def cmd_diagrams(cfg: RunConfig, args) -> int:
    if args.action == "enumerate":
        for d in dg.enumerate_diagrams(cfg.degree):
            print(dg.format_diagram(d))
        return EXIT_OK
    q = dg.stu_basis(cfg.degree)
    print(f"# degree {cfg.degree}: {len(q.diagrams)} diagrams, STU quotient dimension {q.dimension}")
    for d in q.basis_diagrams:
        print(dg.format_diagram(d))
    return EXIT_OK


def _knot(spec: str):
    from .knots import KnotError, make_knot, read_knot_csv

    try:
        if spec.endswith(".csv") and Path(spec).exists():
            return read_knot_csv(spec)
        return make_knot(spec)
    except KnotError as exc:
        raise ConfigError(f"knot {spec!r}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"knot {spec!r}: {exc.strerror}") from None


def knot_invariant(cfg: RunConfig) -> dict:
    from . import integrals as it

    K = _knot(cfg.knot)
    q = cfg.quantity
    rec = {"knot": K.name, "quantity": q, "tol": cfg.tol}
    if q == "writhe":
        rep = it.writhe_gauss(K, tol=cfg.tol)
    elif q == "writhe-projection":
        mean, se, frac = it.writhe_projection(K)
        rec.update(value=mean, abs_error_estimate=se, rejected_fraction=frac,
                   flagged=bool(se > cfg.tol * max(1.0, abs(mean))))
        return rec
    elif q == "linking":
        K2 = _knot(cfg.knot2 or "hopf:1")
        rep = it.linking_gauss(K, K2, tol=cfg.tol)
        rec["knot2"] = K2.name
        rec["combinatorial"] = it.linking_combinatorial(K, K2)
    elif q == "v2":
        rep = it.degree2_value(load_preset(), K)
        rec["rounded"] = int(round(rep.value))
    elif q.startswith("ID:"):
        rep = it.config_integral(resolve_diagram(q[3:]), K, tol=cfg.tol)
    else:
        raise ConfigError(f"unknown quantity {q!r}; use writhe, writhe-projection, linking, v2 or ID:<diagram>")
    rec.update(value=rep.value, abs_error_estimate=rep.abs_error_estimate, samples_used=rep.samples_used,
               flagged=bool(rep.flagged or rep.abs_error_estimate > cfg.tol * max(1.0, abs(rep.value))),
               settings=rep.settings)
    return rec


def cmd_knot(cfg: RunConfig, args) -> int:
    rec = knot_invariant(cfg)
    text = _json(rec)
    sys.stdout.write(text)
    if cfg.out:
        out = Outputs(cfg, Path(cfg.out))
        out.add("invariant.json", text)
        out.write()
    return EXIT_FLAGGED if rec.get("flagged") and not args.allow_flagged else EXIT_OK


def cmd_flow(cfg: RunConfig, args) -> int:
    from .flow import dump_flow, max_entropy_measure
    from .orbit_statistics import OrbitCache, ensemble, flow_digest, orbit_values

    flow = resolve_flow(cfg.flow)
    if args.action == "build":
        mu = max_entropy_measure(flow)
        info = {"name": flow.name, "digest": flow_digest(flow), "symbols": flow.m, "roof": list(flow.roof.values),
                "mixing_exponent": flow.subshift.mixing_exponent(), "entropy": mu.h,
                "stationary": mu.stationary.tolist(), "stationarity_residual": mu.stationarity_residual(),
                "weak_mixing_proxy": flow.weak_mixing_proxy, "diameter": flow.diameter}
        sys.stdout.write(_json(info))
        if cfg.out:
            out = Outputs(cfg, Path(cfg.out))
            out.add("flow.json", _json(info))
            out.add("flow.toml", dump_flow(flow))
            out.write()
        return EXIT_OK
    cache = OrbitCache(Path(cfg.cache) if cfg.cache else default_cache_dir(), flow)
    out = Outputs(cfg, Path(cfg.out or "orbitknots-out/orbits"))
    lines = ["T,word,period,I_D0,error"]
    flagged = False
    for T in cfg.T:
        t0 = time.perf_counter()
        ens = ensemble(flow, T)
        recs = orbit_values(flow, [o.word for o in ens], "I_D0", cache, cfg.threads)
        for o, r in zip(ens, recs):
            lines.append(f"{float(T)!r},{o.label},{o.period!r},{r['value']!r},{r['error']!r}")
            flagged |= r["error"] > cfg.tol * max(1.0, abs(r["value"]))
        out.stage(f"T={T:g}", time.perf_counter() - t0)
    out.add("orbits.csv", "\n".join(lines) + "\n")
    print(out.write())
    return EXIT_FLAGGED if flagged and not args.allow_flagged else EXIT_OK


def run_experiment(cfg: RunConfig, kind: str) -> Outputs:
    from . import orbit_statistics as st
    from .flow import flow_to_dict

    flow = resolve_flow(cfg.flow)
    out = Outputs(cfg, Path(cfg.out or f"orbitknots-out/{kind}"))
    t0 = time.perf_counter()
    summary: dict = {"experiment": kind, "flow": flow_to_dict(flow), "seed": cfg.seed}
    flagged = False
    if kind == "converge":
        cache = st.OrbitCache(Path(cfg.cache), flow) if cfg.cache else None
        rec = st.convergence_experiment(flow, resolve_diagram(cfg.diagram), cfg.T, cfg.mc_samples, cfg.seed,
                                        cache=cache, threads=cfg.threads)
        out.add("converge.csv", rec.to_csv())
        out.add("converge.dat", rec.plot_data())
        summary.update(rec.summary())
        flagged = cfg.mc_tol is not None and rec.target_stderr > cfg.mc_tol
    elif kind == "weakstar":
        tab = st.weakstar_test(flow, cfg.T, mc_samples=cfg.mc_samples, seed=cfg.seed, threads=cfg.threads)
        out.add("weakstar.csv", tab.to_csv())
        names = sorted({r[0] for r in tab.rows})
        summary.update(trend={n: tab.trend_ok(n) for n in names}, factorization=tab.factorization)
    elif kind == "tube":
        words = [tuple(int(c) for c in w) for w in cfg.words]
        tab = st.near_diagonal_mass(flow, words, resolve_diagram(cfg.diagram), cfg.R, threads=cfg.threads)
        out.add("tube.csv", tab.to_csv())
        summary.update(ratio_spread=tab.ratio_spread(),
                       rescaled_spread={repr(k): v for k, v in tab.rescaled_spread().items()})
    elif kind == "pairlink":
        # the CLI runs the square grid S x S; the library also takes separate grids
        tab = st.pair_linking_experiment(flow, cfg.S, None, cfg.mc_samples, cfg.seed, threads=cfg.threads)
        out.add("pairlink.csv", tab.to_csv())
        summary.update(target=tab.target, target_stderr=tab.target_stderr, excluded=tab.excluded,
                       diagonal=tab.diagonal())
        flagged = cfg.mc_tol is not None and tab.target_stderr > cfg.mc_tol
    else:
        raise ConfigError(f"unknown experiment {kind!r}")
    summary["flagged"] = bool(flagged)
    out.add(f"{kind}.json", _json(summary))
    out.stage(kind, time.perf_counter() - t0)
    return out


def cmd_experiment(cfg: RunConfig, args) -> int:
    out = run_experiment(cfg, args.action)
    path = out.write()
    print(path)
    flagged = json.loads(out.files[f"{args.action}.json"])["flagged"]
    return EXIT_FLAGGED if flagged and not args.allow_flagged else EXIT_OK


def cmd_cache(cfg: RunConfig, args) -> int:
    from .orbit_statistics import cache_verify

    root = Path(cfg.cache) if cfg.cache else default_cache_dir()
    try:
        rep = cache_verify(root, cfg.fraction, cfg.seed)
    except FileNotFoundError as exc:
        print(f"orbitknots: {exc}", file=sys.stderr)
        return EXIT_FAILED
    sys.stdout.write(_json(rep.to_dict()))
    return EXIT_OK if rep.ok else EXIT_FAILED


# ---------------------------------------------------------------------------
# parser


def _floats(text: str) -> List[float]:
    """'4:12' (inclusive integer range), '4:12:2', or '0.1,0.01'."""
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1.0
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run options")
    g.add_argument("--config", help="TOML file with run configuration keys")
    g.add_argument("--seed", type=int, help="64-bit master seed (default 0)")
    g.add_argument("--threads", type=int, help="worker threads (default 1)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--cache", help="orbit cache directory (default $ORBITKNOTS_CACHE or ~/.cache/orbitknots)")
    g.add_argument("--allow-flagged", action="store_true", help="exit 0 even when a report is flagged")

    p = argparse.ArgumentParser(prog="orbitknots", description="Knot integrals on curves and periodic orbits.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="group", required=True)

    d = sub.add_parser("diagrams", help="trivalent diagrams")
    dsub = d.add_subparsers(dest="action", required=True)
    for name in ("enumerate", "basis"):
        q = dsub.add_parser(name, parents=[common])
        q.add_argument("--degree", type=int)

    for group, action in (("knot", "invariant"), ("invariant", "compute")):
        k = sub.add_parser(group, help="invariants of a single curve" if group == "knot" else "alias of 'knot invariant'")
        ksub = k.add_subparsers(dest="action", required=True)
        q = ksub.add_parser(action, parents=[common])
        q.add_argument("--knot", help="builder spec (trefoil, figure8, torus:p=2,q=5, ...) or CSV path")
        q.add_argument("--knot2", help="second component for --quantity linking")
        q.add_argument("--quantity", help="writhe | writhe-projection | linking | v2 | ID:<diagram>")
        q.add_argument("--tol", type=float)

    f = sub.add_parser("flow", help="template flows and their orbits")
    fsub = f.add_subparsers(dest="action", required=True)
    for name in ("build", "orbits"):
        q = fsub.add_parser(name, parents=[common])
        q.add_argument("--flow", help="flow spec (TOML); 'default.flow' is built in")
        if name == "orbits":
            q.add_argument("--T", type=_floats, help="period thresholds, e.g. 4:12")
            q.add_argument("--tol", type=float)

    e = sub.add_parser("experiment", help="orbit-average experiments")
    esub = e.add_subparsers(dest="action", required=True)
    for name in ("converge", "weakstar", "tube", "pairlink"):
        q = esub.add_parser(name, parents=[common])
        q.add_argument("--flow")
        q.add_argument("--mc-samples", dest="mc_samples", type=int)
        q.add_argument("--mc-tol", dest="mc_tol", type=float, help="flag the run when the MC stderr exceeds this")
        if name in ("converge", "tube"):
            q.add_argument("--diagram", help="D0, crossed, tripod or '<k> <s>; edges'")
        if name in ("converge", "weakstar"):
            q.add_argument("--T", type=_floats, help="period thresholds, e.g. 4:12")
        if name == "pairlink":
            q.add_argument("--S", type=_floats, help="square grid S = T, e.g. 4:10")
        if name in ("converge", "weakstar", "pairlink"):
            q.add_argument("--Tmin", type=float)
            q.add_argument("--Tmax", type=float)
        if name == "tube":
            q.add_argument("--R", type=_floats, help="radii as fractions of the template diameter")
            q.add_argument("--words", type=lambda s: [w.strip() for w in s.split(",") if w.strip()])

    c = sub.add_parser("cache", help="orbit cache maintenance")
    csub = c.add_subparsers(dest="action", required=True)
    q = csub.add_parser("verify", parents=[common])
    q.add_argument("--fraction", type=float, help="share of records to recompute (default 0.1)")
    return p


_NOT_CONFIG = {"group", "action", "config", "allow_flagged", "Tmin", "Tmax"}


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(command=f"{args.group} {args.action}")
    if getattr(args, "config", None):
        file_cfg = load_config_file(args.config)
        file_cfg.pop("command", None)
        cfg = RunConfig.from_mapping(file_cfg, cfg)
    over = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    tmin, tmax = getattr(args, "Tmin", None), getattr(args, "Tmax", None)
    key = "S" if args.action == "pairlink" else "T"
    if (tmin is not None or tmax is not None) and key not in over:
        lo = tmin if tmin is not None else getattr(cfg, key)[0]
        hi = tmax if tmax is not None else getattr(cfg, key)[-1]
        over[key] = _floats(f"{lo}:{hi}")
    return RunConfig.from_mapping(over, cfg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        handler = {"diagrams": cmd_diagrams, "knot": cmd_knot, "invariant": cmd_knot, "flow": cmd_flow, "experiment": cmd_experiment,
                   "cache": cmd_cache}[args.group]
        return handler(cfg, args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"orbitknots: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"orbitknots: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
