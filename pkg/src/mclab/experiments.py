"""Seeded experiment pipelines, method comparison and run manifests."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import ConfigError, MclabError
from .exact import mc_naive, mc_neutral, oracle_curve
from .krylov import squeezing_table, write_squeezing_csv
from .montecarlo import REGULARITY_TOL, regularity_gap, replicate, replication_study, write_replication_csv
from .reservoir import (
    GENERATOR_KINDS,
    GeneratorSpec,
    LinearESN,
    MaskSpec,
    generate,
    gram_exact,
    standardize,
)
from .seeding import derive_seed
from .subspace import mc_osm, mc_osm_plus

EXPERIMENTS = (
    "fig1_inflation",
    "fig2_gram_eigs",
    "fig3_squeezing",
    "fig4_mask_compare",
    "fig5_matrix_compare",
    "eigplot",
    "custom",
)
METHOD_NAMES = ("naive", "eigen_neutral", "montecarlo", "osm", "osm_plus")
FIG5_KINDS = ("gaussian", "uniform", "sparse_gaussian", "orthogonal_gaussian", "conditioned_sparse_gaussian")
FIG2_KINDS = ("gaussian", "uniform", "sparse_gaussian", "orthogonal_gaussian", "cyclic")
DESK_N = 30
DESK_T_MAX = 3000

_DEFAULT_GENERATOR = {
    "fig1_inflation": "orthogonal_gaussian",
    "fig3_squeezing": "gaussian",
    "fig4_mask_compare": "sparse_gaussian",
    "fig5_matrix_compare": "gaussian",
    "fig2_gram_eigs": "gaussian",
    "eigplot": "gaussian",
    "custom": "gaussian",
}


def _fmt(x: float) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Complete description of one run. ``to_dict`` echoes every field, defaults included."""

    experiment: str
    seed: int
    generator: dict[str, Any]
    T_grid: list[int] = field(default_factory=lambda: list(range(1000, 10001, 500)))
    tau_max: int | None = None
    m: int | str = "auto"
    L: int = 1000
    methods: list[str] = field(default_factory=lambda: ["naive", "osm", "osm_plus"])
    out_dir: str = "out"
    n_rep: int = 20
    mask_kinds: list[str] = field(default_factory=lambda: ["gaussian", "uniform"])
    kinds: list[str] | None = None
    N_grid: list[int] = field(default_factory=lambda: [50, 150])
    svg: bool = False
    desk: bool = False

    @property
    def N(self) -> int:
        return int(self.generator["N"])

    def generator_spec(self, kind: str | None = None, index: int = 0) -> GeneratorSpec:
        g = dict(self.generator)
        if kind is not None and kind != g["kind"]:
            g = {"kind": kind, "N": g["N"], "sparsity": g.get("sparsity", 0.1),
                 "condition_target": g.get("condition_target", 0.7), "rho_target": g.get("rho_target")}
        if g["kind"] == "delay_shift":
            g["rho_target"] = None
        if g.get("seed") is None or kind is not None:
            g["seed"] = derive_seed(self.seed, self.experiment, index)
        return GeneratorSpec.from_dict(g)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _default_tau_max(experiment: str, N: int) -> int:
    if experiment == "fig1_inflation":
        return 5 * N
    return math.ceil(1.5 * N)


def config_from_dict(raw: dict[str, Any], desk: bool = False, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Validate a raw document, apply defaults and command-line overrides."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a key-value document")
    raw = dict(raw)
    exp = raw.pop("experiment", None)
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    if seed is not None:
        raw["seed"] = seed
    if "seed" not in raw:
        raise ConfigError("seed is mandatory")
    try:
        root_seed = int(raw.pop("seed"))
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed must be an integer") from exc
    if not 0 <= root_seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    gen = dict(raw.pop("generator", {}) or {})
    gen.setdefault("kind", _DEFAULT_GENERATOR[exp])
    gen.setdefault("N", 100)
    if gen["kind"] not in GENERATOR_KINDS:
        raise ConfigError(f"unknown generator kind {gen['kind']!r}")
    if gen["kind"] == "delay_shift":
        gen["rho_target"] = None
    else:
        gen.setdefault("rho_target", 0.9)
    gen.setdefault("sparsity", 0.1)
    gen.setdefault("condition_target", 0.7)
    gen.setdefault("seed", None)
    if exp == "fig3_squeezing":
        gen.setdefault("mask", "ones")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"experiment", "seed", "generator"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    try:
        cfg = ExperimentConfig(experiment=exp, seed=root_seed, generator=gen, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if out is not None:
        cfg.out_dir = str(out)
    if desk:
        cfg.desk = True
    if cfg.desk:
        gen["N"] = min(int(gen["N"]), DESK_N)
        cfg.T_grid = [t for t in cfg.T_grid if t <= DESK_T_MAX] or [1000, 2000, 3000]
        cfg.N_grid = sorted({min(int(n), DESK_N) for n in cfg.N_grid})
        if cfg.tau_max is not None:
            cfg.tau_max = min(cfg.tau_max, _default_tau_max(exp, gen["N"]))
    if cfg.tau_max is None:
        cfg.tau_max = _default_tau_max(exp, int(gen["N"]))
    if cfg.kinds is None:
        cfg.kinds = list(FIG2_KINDS if exp == "fig2_gram_eigs" else FIG5_KINDS)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    try:
        cfg.generator_spec()
        for k in cfg.kinds or []:
            if k not in GENERATOR_KINDS:
                raise ConfigError(f"unknown generator kind {k!r}")
        for k in cfg.mask_kinds:
            MaskSpec(k)
    except MclabError as exc:
        raise ConfigError(str(exc)) from exc
    bad = [m for m in cfg.methods if m not in METHOD_NAMES]
    if bad:
        raise ConfigError(f"unknown methods: {', '.join(bad)}")
    if cfg.experiment == "custom" and not cfg.methods:
        raise ConfigError("custom runs need at least one method")
    if any(int(t) <= 0 for t in cfg.T_grid) or not cfg.T_grid:
        raise ConfigError("T_grid must hold positive integers")
    if int(cfg.tau_max) < 1:
        raise ConfigError("tau_max must be positive")
    if cfg.experiment == "fig1_inflation" and cfg.tau_max >= min(cfg.T_grid):
        raise ConfigError("tau_max must be below every T in T_grid")
    if int(cfg.L) < 1 or int(cfg.n_rep) < 1:
        raise ConfigError("L and n_rep must be positive")
    if cfg.m != "auto":
        try:
            if int(cfg.m) < 1:
                raise ValueError
        except (TypeError, ValueError) as exc:
            raise ConfigError("m must be 'auto' or a positive integer") from exc


def load_config(path: str | Path, desk: bool = False, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Read a JSON or TOML document."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # python < 3.11
                import tomli as tomllib
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw, desk=desk, seed=seed, out=out)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config: dict[str, Any]
    version: str = __version__
    timings: dict[str, float] = field(default_factory=dict)
    files: list[dict[str, str]] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)
    attempted: int = 0
    exit_code: int = 0

    def add_file(self, path: Path, root: Path) -> None:
        self.files.append({"path": str(Path(path).relative_to(root)), "sha256": sha256_file(path)})

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def write(self, out_dir: Path) -> Path:
        p = Path(out_dir) / "manifest.json"
        p.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return p


class _Stage:
    def __init__(self, manifest: RunManifest, name: str):
        self.m, self.name = manifest, name

    def __enter__(self) -> None:
        self.t = time.perf_counter()

    def __exit__(self, *exc: Any) -> None:
        self.m.timings[self.name] = round(time.perf_counter() - self.t, 6)


# ---------------------------------------------------------------------------
# method comparison
# ---------------------------------------------------------------------------


@dataclass
class ComparisonTable:
    taus: np.ndarray
    columns: dict[str, np.ndarray]
    failures: dict[str, str]

    @property
    def totals(self) -> dict[str, float]:
        return {k: float(np.sum(v)) for k, v in self.columns.items()}

    def to_text(self) -> str:
        names = list(self.columns)
        lines = [",".join(["tau"] + names)]
        lines += [",".join([str(int(t))] + [_fmt(self.columns[n][i]) for n in names]) for i, t in enumerate(self.taus)]
        lines.append(",".join(["total"] + [_fmt(self.totals[n]) for n in names]))
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path


def montecarlo_curve(sys: LinearESN, tau_max: int, T: int, seed: int, n_rep: int = 1) -> np.ndarray:
    """Replication mean of the sample estimator, on the regular realization of ``sys``.

    Non-regular systems are standardized first; the estimator only targets
    the capacity when the state covariance is the identity.
    """
    if regularity_gap(sys) > REGULARITY_TOL:
        sys = standardize(sys, gram_exact(sys))
    return replicate(sys, T, tau_max, n_rep, seed).mean(axis=0)


def compare_methods(
    sys: LinearESN,
    tau_max: int,
    methods: list[str],
    *,
    m: int | str = "auto",
    L: int = 1000,
    T: int = 100_000,
    seed: int = 0,
    mask_spec: MaskSpec | None = None,
) -> ComparisonTable:
    """Per-lag capacities from each method, plus the closed form when one exists.

    A failing method leaves a NaN column and an entry in ``failures``; the
    other methods still run. Curves longer or shorter than ``tau_max`` are cut
    or zero-padded.
    """
    if not methods:
        raise ConfigError("methods must be nonempty")
    tau_max = int(tau_max)

    def fit(v: np.ndarray) -> np.ndarray:
        out = np.zeros(tau_max)
        n = min(tau_max, v.shape[0])
        out[:n] = v[:n]
        return out

    m_eff = m if m != "auto" else max(tau_max, math.ceil(1.5 * sys.N))
    runners: dict[str, Callable[[], np.ndarray]] = {
        "naive": lambda: mc_naive(sys, tau_max).values,
        "eigen_neutral": lambda: mc_neutral(sys, tau_max).values,
        "montecarlo": lambda: montecarlo_curve(sys, tau_max, T, derive_seed(seed, "montecarlo")),
        "osm": lambda: mc_osm(sys, m_eff).curve.values,
        "osm_plus": lambda: mc_osm_plus(
            sys, mask_spec or MaskSpec("gaussian"), m_eff, L, derive_seed(seed, "osm_plus")
        ).curve.values,
    }
    cols: dict[str, np.ndarray] = {}
    failures: dict[str, str] = {}
    for name in methods:
        if name not in runners:
            raise ConfigError(f"unknown method {name!r}")
        try:
            cols[name] = fit(np.asarray(runners[name](), dtype=float))
        except (MclabError, np.linalg.LinAlgError, ValueError) as exc:
            cols[name] = np.full(tau_max, np.nan)
            failures[name] = f"{type(exc).__name__}: {exc}"
    oc = oracle_curve(sys, tau_max)
    if oc is not None:
        cols["oracle"] = np.asarray(oc.values)
    return ComparisonTable(np.arange(tau_max), cols, failures)


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def _write_rows(path: Path, header: list[str], rows: list[list[Any]]) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, (int, str, np.integer)) else _fmt(x) for x in r])
    return path


def standardized_system(spec: GeneratorSpec) -> LinearESN:
    sys = generate(spec)
    return standardize(sys, gram_exact(sys))


def _fig1(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[Path]:
    sys = standardized_system(cfg.generator_spec())
    tau_max = int(cfg.tau_max)
    man.attempted += 1
    tot: dict[int, tuple[float, float]] = {}
    with _Stage(man, "replications"):
        rows = replication_study(
            sys, cfg.T_grid, range(tau_max), cfg.n_rep, derive_seed(cfg.seed, "fig1", "reps"), totals=tot
        )
    cells = write_replication_csv(rows, out / "fig1_cells.csv")
    trows = [[T, mean, se, sys.N, mean - sys.N] for T, (mean, se) in tot.items()]
    tpath = _write_rows(out / "fig1_totals.csv", ["T", "mean_total", "se_total", "N", "excess"], trows)
    return [cells, tpath]


def _fig2(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[Path]:
    rows = []
    idx = 0
    for N in cfg.N_grid:
        for kind in cfg.kinds or FIG2_KINDS:
            man.attempted += 1
            g = dict(cfg.generator, kind=kind, N=int(N))
            spec = ExperimentConfig(cfg.experiment, cfg.seed, g).generator_spec(kind, idx)
            idx += 1
            try:
                G = gram_exact(generate(spec)).g_x
            except MclabError as exc:
                man.failures[f"{kind}/N={N}"] = str(exc)
                continue
            ev = np.sort(np.abs(np.linalg.eigvalsh(G)))[::-1]
            rows += [[kind, int(N), i + 1, float(v)] for i, v in enumerate(ev)]
    return [_write_rows(out / "fig2_gram_eigs.csv", ["kind", "N", "index", "eigenvalue"], rows)]


def _fig3(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[Path]:
    sys = generate(cfg.generator_spec())
    j_max = 5 * sys.N if cfg.m == "auto" else int(cfg.m)
    man.attempted += 1
    return [write_squeezing_csv(squeezing_table(sys, j_max), out / "fig3_squeezing.csv")]


def _curves(
    cfg: ExperimentConfig, sys: LinearESN, prefix: str, out: Path, man: RunManifest, masks: list[str]
) -> tuple[list[Path], list[list[Any]]]:
    files, totals = [], []
    m = "auto" if cfg.m == "auto" else int(cfg.m)
    for method in cfg.methods:
        runs = masks if method == "osm_plus" else [None]
        for mk in runs:
            tag = method if mk is None else f"{method}_{mk}"
            man.attempted += 1
            try:
                if method == "osm_plus":
                    res = mc_osm_plus(sys, MaskSpec(mk), m, cfg.L, derive_seed(cfg.seed, prefix, tag))
                    files.append(res.to_csv(out / f"{prefix}_{tag}.csv"))
                    total = res.curve.total
                elif method == "osm":
                    res = mc_osm(sys, m)
                    files.append(res.to_csv(out / f"{prefix}_{tag}.csv"))
                    total = res.curve.total
                elif method == "montecarlo":
                    T = max(cfg.T_grid)
                    v = montecarlo_curve(sys, int(cfg.tau_max), T, derive_seed(cfg.seed, prefix, tag), cfg.n_rep)
                    files.append(_write_rows(out / f"{prefix}_{tag}.csv", ["tau", "mc"], [[t, x] for t, x in enumerate(v)]))
                    total = float(v.sum())
                else:
                    fn = mc_naive if method == "naive" else lambda s, t: mc_neutral(s.A, t)
                    curve = fn(sys, int(cfg.tau_max))
                    files.append(curve.to_csv(out / f"{prefix}_{tag}.csv"))
                    total = curve.total
                totals.append([prefix, tag, total])
            except (MclabError, np.linalg.LinAlgError) as exc:
                man.failures[f"{prefix}/{tag}"] = f"{type(exc).__name__}: {exc}"
    return files, totals


def _sidecars(files: list[Path]) -> list[Path]:
    extra = []
    for f in files:
        side = f.with_suffix(".meta.json")
        if side.exists():
            extra.append(side)
    return files + extra


def _fig4(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[Path]:
    sys = generate(cfg.generator_spec())
    files, totals = _curves(cfg, sys, "fig4", out, man, list(cfg.mask_kinds))
    files.append(_write_rows(out / "fig4_totals.csv", ["figure", "method", "total"], totals))
    return _sidecars(files)


def _fig5(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[Path]:
    files, totals = [], []
    for i, kind in enumerate(cfg.kinds or FIG5_KINDS):
        try:
            sys = generate(cfg.generator_spec(kind, i))
        except MclabError as exc:
            man.failures[f"fig5_{kind}"] = str(exc)
            continue
        f, t = _curves(cfg, sys, f"fig5_{kind}", out, man, list(cfg.mask_kinds[:1]))
        files += f
        totals += t
    files.append(_write_rows(out / "fig5_totals.csv", ["figure", "method", "total"], totals))
    return _sidecars(files)


def eigenvalues_sorted(A: np.ndarray) -> np.ndarray:
    lam = np.linalg.eigvals(A)
    order = np.lexsort((np.round(lam.imag, 12), np.round(lam.real, 12)))
    return lam[order]


def _eigplot(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[Path]:
    sys = generate(cfg.generator_spec())
    man.attempted += 1
    lam = eigenvalues_sorted(sys.A)
    return [_write_rows(out / "eigplot.csv", ["re", "im"], [[float(z.real), float(z.imag)] for z in lam])]


def _custom(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[Path]:
    sys = generate(cfg.generator_spec())
    table = compare_methods(
        sys, int(cfg.tau_max), list(cfg.methods), m=cfg.m, L=cfg.L, T=max(cfg.T_grid), seed=cfg.seed,
        mask_spec=MaskSpec(cfg.mask_kinds[0]),
    )
    man.attempted += len(cfg.methods)
    man.failures.update(table.failures)
    return [table.to_csv(out / "comparison.csv")]


_PIPELINES: dict[str, Callable[[ExperimentConfig, Path, RunManifest], list[Path]]] = {
    "fig1_inflation": _fig1,
    "fig2_gram_eigs": _fig2,
    "fig3_squeezing": _fig3,
    "fig4_mask_compare": _fig4,
    "fig5_matrix_compare": _fig5,
    "eigplot": _eigplot,
    "custom": _custom,
}


def run(cfg: ExperimentConfig) -> RunManifest:
    """Execute one experiment, write its CSVs and ``manifest.json`` into ``cfg.out_dir``."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(config=cfg.to_dict())
    with _Stage(man, "total"):
        files = _PIPELINES[cfg.experiment](cfg, out, man)
        if cfg.svg:
            from .plots import render

            try:
                files += render(cfg.experiment, out, files)
            except ImportError as exc:
                man.failures["svg"] = str(exc)
    for f in files:
        man.add_file(f, out)
    failed = len([k for k in man.failures if k != "svg"])
    man.exit_code = 1 if man.attempted and failed >= man.attempted else 0
    man.write(out)
    return man
