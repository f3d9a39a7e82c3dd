"""Configuration-driven sweeps, identity checks and the result cache.

Usage::

    rotcodes run sweep.cfg
    rotcodes verify
    rotcodes cache-gc --max-bytes 100000000

``ROTCODES_CACHE_DIR`` and ``ROTCODES_WORKERS`` override the cache directory
and worker count given in a config file; command-line flags override both.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time
import uuid
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, NamedTuple

import numpy as np

from . import __version__

EXPERIMENTS = ("diagnostics", "ec_sweep_nbar", "ec_sweep_noise", "break_even",
               "verify_identities", "wigner")
CSV_FIELDS = ("experiment", "family", "N", "param", "nbar", "kappa_t", "kappa_phi_t",
              "scheme", "metric", "value", "runtime_s", "cache_hit")
PARAM_NAME = {"cat": "alpha", "binomial": "K", "pegg_barnett": "s"}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config parsing

def _as_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _list_of(conv: Callable[[str], Any]) -> Callable[[str], list]:
    def parse(text: str) -> list:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return [conv(t) for t in items]
    return parse


# section -> key -> (attribute, converter)
SCHEMA: dict[str, dict[str, tuple[str, Callable]]] = {
    "sweep": {
        "experiment": ("experiment", str),
        "output": ("output", str),
        "workers": ("workers", int),
        "cache_dir": ("cache_dir", str),
        "timing": ("timing", _as_bool),
    },
    "codes": {
        "families": ("families", _list_of(str)),
        "N": ("N", _list_of(int)),
        "nbar_max": ("nbar_max", float),
        "nbar_min": ("nbar_min", float),
        "alpha_step": ("alpha_step", float),
    },
    "noise": {
        "kappa_t": ("kappa_t", _list_of(float)),
        "ratio": ("ratio", float),
    },
    "ec": {
        "schemes": ("schemes", _list_of(str)),
        "flavor": ("flavor", str),
        "mid_alpha": ("mid_alpha", float),
        "data_bins": ("data_bins", int),
        "mid_bins": ("mid_bins", int),
        "optimal": ("optimal", _as_bool),
    },
    "break_even": {
        "bounds": ("be_bounds", _list_of(float)),
        "rel_tol": ("be_rel_tol", float),
        "nbar_max": ("be_nbar_max", float),
    },
    "wigner": {
        "extent": ("wigner_extent", float),
        "points": ("wigner_points", int),
    },
    "verify": {
        "dim": ("verify_dim", int),
    },
}


@dataclass
class SweepConfig:
    """Parsed sweep definition. See ``SCHEMA`` for the accepted keys."""

    experiment: str = ""
    output: str = ""
    workers: int = 1
    cache_dir: str | None = None
    timing: bool = False
    families: list = field(default_factory=lambda: ["binomial"])
    N: list = field(default_factory=lambda: [3])
    nbar_max: float = 10.0
    nbar_min: float = 0.0
    alpha_step: float = 0.25
    kappa_t: list = field(default_factory=lambda: [1e-3])
    ratio: float = 1.0
    schemes: list = field(default_factory=lambda: ["pretty_good"])
    flavor: str = "knill"
    mid_alpha: float = 5.0
    data_bins: int | None = None
    mid_bins: int | None = None
    optimal: bool = False
    be_bounds: list = field(default_factory=lambda: [3e-3, 0.15])
    be_rel_tol: float = 0.05
    be_nbar_max: float | None = None
    wigner_extent: float = 4.0
    wigner_points: int = 41
    verify_dim: int = 48

    def semantic(self) -> dict:
        """Fields that affect computed values (not output paths, workers or timing)."""
        d = asdict(self)
        for k in ("output", "workers", "cache_dir", "timing"):
            d.pop(k)
        return d


def _validate(cfg: SweepConfig, lines: dict[str, int], source: str) -> None:
    from .ec import FLAVORS, SCHEMES

    def fail(key, msg):
        loc = f"{source}:{lines[key]}" if key in lines else source
        raise ConfigError(f"{loc}: {msg}")

    if not cfg.experiment:
        fail("experiment", "missing required key 'experiment' in [sweep]")
    if cfg.experiment not in EXPERIMENTS:
        fail("experiment", f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if not cfg.output:
        fail("output", "missing required key 'output' in [sweep]")
    if cfg.workers < 1:
        fail("workers", "workers must be >= 1")
    for fam in cfg.families:
        if fam not in PARAM_NAME:
            fail("families", f"unsupported family {fam!r}; choose from {', '.join(PARAM_NAME)}")
    if any(n < 1 for n in cfg.N):
        fail("N", "N values must be >= 1")
    if cfg.nbar_max <= 0 or cfg.alpha_step <= 0:
        fail("nbar_max", "nbar_max and alpha_step must be positive")
    if any(k < 0 for k in cfg.kappa_t):
        fail("kappa_t", "kappa_t values must be >= 0")
    if cfg.ratio < 0:
        fail("ratio", "ratio must be >= 0")
    for s in cfg.schemes:
        if s not in SCHEMES:
            fail("schemes", f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
    if cfg.flavor not in FLAVORS:
        fail("flavor", f"unknown flavor {cfg.flavor!r}")
    if len(cfg.be_bounds) != 2 or not 0 < cfg.be_bounds[0] < cfg.be_bounds[1]:
        fail("be_bounds", "bounds must be two increasing positive numbers")
    if cfg.wigner_points < 2:
        fail("wigner_points", "points must be >= 2")


def parse_config(text: str, source: str = "<config>") -> SweepConfig:
    """Parse flat ``key = value`` text with ``[section]`` headers.

    ``#`` and ``;`` start comments. Unknown sections or keys, duplicates and
    malformed values raise ``ConfigError`` naming the offending line.
    """
    cfg = SweepConfig()
    section = None
    lines: dict[str, int] = {}
    seen: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"{source}:{lineno}: key outside of any section")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{section}]")
        if (section, key) in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} in [{section}]")
        seen.add((section, key))
        attr, conv = SCHEMA[section][key]
        try:
            setattr(cfg, attr, conv(value))
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        lines[attr] = lineno
    _validate(cfg, lines, source)
    return cfg


def load_config(path: str | os.PathLike) -> SweepConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))


# --------------------------------------------------------------------------
# tasks

class Task(NamedTuple):
    """One grid point; tuples sort in the output row order."""

    family: str
    N: int
    param_name: str
    param: float
    kappa_t: float
    kappa_phi_t: float
    scheme: str
    extra: str = ""


class ResultRow(NamedTuple):
    experiment: str
    family: str
    N: int | None
    param: str
    nbar: float | None
    kappa_t: float | None
    kappa_phi_t: float | None
    scheme: str
    metric: str
    value: Any
    runtime_s: float | None
    cache_hit: bool


def _code(task: Task):
    from .codes import standard_code
    value = task.param if task.param_name == "alpha" else int(task.param)
    return standard_code(task.family, task.N, **{task.param_name: value})


def _grid(cfg: SweepConfig, family: str, N: int, nbar_max: float | None = None):
    from .ec import nbar_grid
    return nbar_grid(family, N, nbar_max or cfg.nbar_max, alpha_step=cfg.alpha_step,
                     nbar_min=cfg.nbar_min)


def _param_of(code) -> tuple[str, float]:
    name = PARAM_NAME[code.family]
    return name, float(code.param_dict[name])


def _grid_params(cfg: SweepConfig, family: str, N: int, cache: "ResultCache | None"):
    """Parameter values of the code grid, cached so warm reruns build no codes."""
    key = hashlib.sha256(json.dumps(
        {"version": __version__, "grid": [family, N, cfg.nbar_max, cfg.alpha_step, cfg.nbar_min]},
        sort_keys=True).encode()).hexdigest()
    hit = cache.get(key) if cache is not None else None
    if hit is not None:
        return [(name, float(v)) for name, v in hit["params"]]
    params = [_param_of(c) for c in _grid(cfg, family, N)]
    if cache is not None:
        cache.put(key, {"params": params})
    return params


def build_tasks(cfg: SweepConfig, cache: "ResultCache | None" = None) -> list[Task]:
    tasks: list[Task] = []
    exp = cfg.experiment
    if exp == "verify_identities":
        return [Task("identities", 0, "", 0.0, 0.0, 0.0, "")]
    for fam in cfg.families:
        for N in cfg.N:
            if exp in ("diagnostics", "wigner"):
                for name, value in _grid_params(cfg, fam, N, cache):
                    tasks.append(Task(fam, N, name, value, 0.0, 0.0, ""))
            elif exp == "ec_sweep_nbar":
                params = _grid_params(cfg, fam, N, cache)
                schemes = list(cfg.schemes) + (["optimal"] if cfg.optimal else [])
                for kt in cfg.kappa_t:
                    for name, value in params:
                        for s in schemes:
                            tasks.append(Task(fam, N, name, value, kt, cfg.ratio * kt, s))
            elif exp == "ec_sweep_noise":
                for kt in cfg.kappa_t:
                    for s in cfg.schemes:
                        tasks.append(Task(fam, N, "", 0.0, kt, cfg.ratio * kt, s))
            elif exp == "break_even":
                for s in cfg.schemes:
                    tasks.append(Task(fam, N, "", 0.0, 0.0, 0.0, s))
    if exp in ("ec_sweep_nbar", "ec_sweep_noise"):
        for kt in cfg.kappa_t:
            tasks.append(Task("trivial", 1, "", 0.0, kt, cfg.ratio * kt, "none"))
    return sorted(set(tasks))


def identity_suite(dim: int = 48) -> list[tuple[str, float, float]]:
    """``(name, value, threshold)`` for the exact identities and channel checks."""
    from .channels import NoiseParams, lindblad_oracle, loss_dephasing_kraus
    from .gates import ErrorOp, GateSpec, propagation_residual

    out = []
    for kind in ("Z", "S", "T", "crot", "controlled_R"):
        two = kind in ("crot", "controlled_R")
        worst = 0.0
        for N in range(1, 5):
            for M in (range(1, 5) if two else (1,)):
                for k in range(-3, 4):
                    r = propagation_residual(GateSpec(kind, N, M), ErrorOp(k, 0.3), dim=dim)
                    worst = max(worst, r)
        out.append((f"propagation_residual:{kind}", worst, 1e-12))
    noise = NoiseParams(0.1, 0.1)
    ch = loss_dephasing_kraus(30, noise)
    out.append(("kraus_completeness_defect", ch.completeness_defect, 1e-10))
    diff = float(np.max(np.abs(ch.superoperator() - lindblad_oracle(30, noise))))
    out.append(("kraus_vs_lindblad", diff, 1e-8))
    chc = loss_dephasing_kraus(30, noise, compress=True)
    diff_c = float(np.max(np.abs(chc.superoperator() - lindblad_oracle(30, noise))))
    out.append(("compressed_kraus_vs_lindblad", diff_c, 1e-8))
    return out


def evaluate_task(experiment: str, task: Task, settings: dict) -> dict:
    """Compute one grid point. Returns ``{"nbar": float|None, "metrics": [[name, value], ...]}``."""
    from .channels import NoiseParams
    from .ec import (EcConfig, best_infidelity, break_even_threshold, default_mid_code,
                     optimal_recovery, run_ec, trivial_baseline)

    cfg = SweepConfig(**{k: v for k, v in settings.items()})
    if experiment == "verify_identities":
        return {"nbar": None, "metrics": [[name, v] for name, v, _ in identity_suite(cfg.verify_dim)]}
    if task.family == "trivial":
        return {"nbar": None, "metrics": [["infidelity", trivial_baseline(NoiseParams(task.kappa_t, task.kappa_phi_t))]]}
    ec_kw = dict(flavor=cfg.flavor, mid_ancilla_code=default_mid_code(cfg.mid_alpha),
                 data_bins=cfg.data_bins, mid_bins=cfg.mid_bins)
    if experiment == "diagnostics":
        code = _code(task)
        d = code.diagnostics
        return {"nbar": code.nbar, "metrics": [
            ["abs_mean_modular_phase", abs(d.mean_modular_phase)],
            ["delta_canonical", d.delta_canonical],
            ["delta_heterodyne", d.delta_heterodyne]]}
    if experiment == "wigner":
        from .fock import wigner_grid
        code = _code(task)
        xs = np.linspace(-cfg.wigner_extent, cfg.wigner_extent, cfg.wigner_points)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        W = wigner_grid(code.plus(), X + 1j * Y).values
        metrics = [[f"wigner({x:.6g},{y:.6g})", float(w)]
                   for x, y, w in zip(X.ravel(), Y.ravel(), W.ravel())]
        return {"nbar": code.nbar, "metrics": metrics}
    noise = NoiseParams(task.kappa_t, task.kappa_phi_t)
    if experiment == "ec_sweep_nbar":
        code = _code(task)
        if task.scheme == "optimal":
            r = optimal_recovery(code, noise)
        else:
            r = run_ec(EcConfig(code, noise, task.scheme, **ec_kw))
        return {"nbar": code.nbar, "metrics": [["infidelity", r.infidelity]]}
    if experiment == "ec_sweep_noise":
        codes = _grid(cfg, task.family, task.N)
        inf, code = best_infidelity(codes, noise, task.scheme, **ec_kw)
        name, value = _param_of(code)
        return {"nbar": code.nbar, "metrics": [["infidelity", inf], [f"best_{name}", value]]}
    if experiment == "break_even":
        nbar_max = cfg.be_nbar_max or 6.0 * task.N
        kt = break_even_threshold(task.family, task.N, task.scheme, bounds=tuple(cfg.be_bounds),
                                  nbar_max=nbar_max, rel_tol=cfg.be_rel_tol,
                                  dephasing_ratio=cfg.ratio, flavor=cfg.flavor)
        return {"nbar": None, "metrics": [["break_even_kappa_t", kt]]}
    raise ConfigError(f"unknown experiment {experiment!r}")


def _safe_evaluate(args) -> tuple[dict, float]:
    experiment, task, settings = args
    t0 = time.perf_counter()
    try:
        payload = evaluate_task(experiment, Task(*task), settings)
    except Exception as exc:  # recorded as an error row; the sweep continues
        payload = {"nbar": None, "metrics": [["error", f"{type(exc).__name__}: {exc}"]]}
    return payload, time.perf_counter() - t0


# --------------------------------------------------------------------------
# cache

def default_cache_dir() -> Path:
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "rotcodes"


def task_key(experiment: str, task: Task, settings: dict) -> str:
    blob = json.dumps({"version": __version__, "experiment": experiment, "task": list(task),
                       "settings": settings}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


class ResultCache:
    """Content-addressed store of computed payloads, one JSON file per key.

    Writes go through a temporary file and ``os.replace`` so readers never
    see partial entries. Hits refresh the entry's mtime, which drives LRU
    eviction in ``cache_gc``.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        (self.root / "entries").mkdir(parents=True, exist_ok=True)
        (self.root / "leases").mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.root / "entries" / f"{key}.json"

    def get(self, key: str) -> dict | None:
        p = self.path(key)
        try:
            data = json.loads(p.read_text())
        except (OSError, ValueError):
            return None
        try:
            os.utime(p)
        except OSError:
            pass
        return data

    def put(self, key: str, payload: dict) -> None:
        p = self.path(key)
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".tmp-")
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh)
        os.replace(tmp, p)

    def lease(self, keys) -> Path:
        """Mark ``keys`` as in use by this process until the lease file is removed."""
        p = self.root / "leases" / f"{os.getpid()}-{uuid.uuid4().hex}.lease"
        p.write_text(f"{os.getpid()}\n" + "\n".join(keys) + "\n")
        return p


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def _leased_keys(root: Path) -> set[str]:
    keys: set[str] = set()
    for lease in (root / "leases").glob("*.lease"):
        try:
            lines = lease.read_text().splitlines()
            pid = int(lines[0])
        except (OSError, ValueError, IndexError):
            continue
        if _pid_alive(pid):
            keys.update(l for l in lines[1:] if l)
        else:
            lease.unlink(missing_ok=True)
    return keys


def cache_gc(cache_dir: str | os.PathLike, max_bytes: int) -> int:
    """Evict least-recently-used entries until the cache fits in ``max_bytes``.

    Entries named in a live lease are never evicted. Returns bytes freed.
    """
    root = Path(cache_dir)
    entries_dir = root / "entries"
    if not entries_dir.is_dir():
        return 0
    protected = _leased_keys(root) if (root / "leases").is_dir() else set()
    entries = []
    for p in entries_dir.glob("*.json"):
        try:
            st = p.stat()
        except OSError:
            continue
        entries.append((st.st_mtime, p.name, p, st.st_size))
    total = sum(e[3] for e in entries)
    freed = 0
    for _, _, p, size in sorted(entries):
        if total - freed <= max_bytes:
            break
        if p.stem in protected:
            continue
        try:
            p.unlink()
        except OSError:
            continue
        freed += size
    return freed


# --------------------------------------------------------------------------
# running

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _rows_for(experiment: str, task: Task, payload: dict, hit: bool) -> list[ResultRow]:
    noise_free = experiment in ("diagnostics", "wigner", "verify_identities", "break_even")
    param = f"{task.param_name}={_fmt(task.param if task.param_name == 'alpha' else int(task.param))}" \
        if task.param_name else ""
    rows = []
    for metric, value in payload["metrics"]:
        rows.append(ResultRow(
            experiment, task.family, task.N if task.N else None, param, payload.get("nbar"),
            None if noise_free else task.kappa_t, None if noise_free else task.kappa_phi_t,
            task.scheme, metric, value, None, hit))
    return rows


def write_csv(rows: list[ResultRow], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buf.getvalue())


def run_sweep(cfg: SweepConfig, cache_dir: str | os.PathLike | None = None,
              log=sys.stderr) -> list[ResultRow]:
    """Evaluate every grid point of ``cfg`` (cached) and write the CSV."""
    cache = ResultCache(cache_dir or cfg.cache_dir or default_cache_dir())
    settings = cfg.semantic()
    tasks = build_tasks(cfg, cache)
    keys = [task_key(cfg.experiment, t, settings) for t in tasks]
    lease = cache.lease(keys)
    try:
        payloads: list[dict | None] = [cache.get(k) for k in keys]
        hits = [p is not None for p in payloads]
        todo = [i for i, p in enumerate(payloads) if p is None]
        runtimes: dict[int, float] = {}
        print(f"rotcodes: {len(tasks)} points, {len(tasks) - len(todo)} cached, "
              f"{len(todo)} to compute with {cfg.workers} worker(s)", file=log)
        jobs = [(cfg.experiment, tuple(tasks[i]), settings) for i in todo]
        if cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = pool.map(_safe_evaluate, jobs)
                for n, (i, (payload, dt)) in enumerate(zip(todo, results), start=1):
                    payloads[i], runtimes[i] = payload, dt
                    cache.put(keys[i], payload)
                    print(f"  [{n}/{len(todo)}] {tasks[i]} {dt:.2f}s", file=log)
        else:
            for n, (i, job) in enumerate(zip(todo, jobs), start=1):
                payload, dt = _safe_evaluate(job)
                payloads[i], runtimes[i] = payload, dt
                cache.put(keys[i], payload)
                print(f"  [{n}/{len(todo)}] {tasks[i]} {dt:.2f}s", file=log)
    finally:
        lease.unlink(missing_ok=True)

    rows: list[ResultRow] = []
    timing: list[list[str]] = []
    for i, (task, payload) in enumerate(zip(tasks, payloads)):
        rows.extend(_rows_for(cfg.experiment, task, payload, hits[i]))
        if i in runtimes:
            timing.append([cfg.experiment, task.family, _fmt(task.N), task.scheme, _fmt(runtimes[i])])
    write_csv(rows, cfg.output)
    if cfg.timing:
        # wall-clock times live in a sidecar so the main CSV stays reproducible
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("experiment", "family", "N", "scheme", "runtime_s"))
        w.writerows(timing)
        Path(str(cfg.output) + ".timing.csv").write_text(buf.getvalue())
    return rows


# --------------------------------------------------------------------------
# entry point

def _env_int(name: str) -> int | None:
    v = os.environ.get(name)
    if v is None or v == "":
        return None
    try:
        n = int(v)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {v!r}") from None
    if n < 1:
        raise ConfigError(f"{name} must be >= 1, got {n}")
    return n


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    workers = args.workers or _env_int("ROTCODES_WORKERS")
    if workers:
        cfg.workers = workers
    if args.output:
        cfg.output = args.output
    cache_dir = args.cache_dir or os.environ.get("ROTCODES_CACHE_DIR") or cfg.cache_dir
    rows = run_sweep(cfg, cache_dir)
    errors = sum(r.metric == "error" for r in rows)
    print(f"rotcodes: wrote {len(rows)} rows to {cfg.output}"
          + (f" ({errors} failed points)" if errors else ""), file=sys.stderr)
    if cfg.experiment == "verify_identities":
        thresholds = {name: thr for name, _, thr in identity_suite_thresholds()}
        bad = [r for r in rows if r.metric == "error"
               or (r.metric in thresholds and not r.value <= thresholds[r.metric])]
        return 1 if bad else 0
    return 0


def identity_suite_thresholds() -> list[tuple[str, None, float]]:
    kinds = ("Z", "S", "T", "crot", "controlled_R")
    return ([(f"propagation_residual:{k}", None, 1e-12) for k in kinds]
            + [("kraus_completeness_defect", None, 1e-10), ("kraus_vs_lindblad", None, 1e-8),
               ("compressed_kraus_vs_lindblad", None, 1e-8)])


def _cmd_verify(args) -> int:
    ok = True
    for name, value, thr in identity_suite(args.dim):
        passed = value <= thr
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name} = {value:.3e} (threshold {thr:.0e})")
    return 0 if ok else 1


def _cmd_cache_gc(args) -> int:
    root = args.cache_dir or os.environ.get("ROTCODES_CACHE_DIR") or default_cache_dir()
    freed = cache_gc(root, args.max_bytes)
    print(f"freed {freed} bytes from {root}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="rotcodes", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rotcodes {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a sweep described by a config file")
    p.add_argument("config")
    p.add_argument("--workers", type=int)
    p.add_argument("--cache-dir")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="check exact identities and channel construction")
    p.add_argument("--dim", type=int, default=48)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("cache-gc", help="evict least-recently-used cache entries")
    p.add_argument("--max-bytes", type=int, required=True)
    p.add_argument("--cache-dir")
    p.set_defaults(func=_cmd_cache_gc)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"rotcodes: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
