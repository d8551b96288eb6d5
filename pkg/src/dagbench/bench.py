"""Benchmark orchestration: config, trial matrix, oracle lambda1 selection, reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import FormatError, NonConvergenceError, NumericalError, ParameterError
from .graph import Dag, GraphKind, generate, read_edge_list
from .acyclicity import AcyclicityKind
from .learners import LAMBDA1_GRID, LearnerConfig, Method, fit, notears_alm_config
from .solvers import AlmConfig, CentralPathConfig, InnerConfig
from .metrics import shd, sid
from .misspec import CANONICAL_ORDER, ScenarioKind, ScenarioSpec, compose
from .scm import Dataset, GpScm, NoiseDist, NoiseSpec, make_linear_scm, sample_gp

__all__ = [
    "GraphSpec",
    "BenchConfig",
    "EvalRecord",
    "TRIAL_FIELDS",
    "run_benchmark",
    "run_semisynthetic",
    "run_sachs",
    "evaluate_learners",
    "run_trial",
    "summarize",
    "format_table",
    "load_sachs",
    "sachs_graph",
    "load_preset",
    "SACHS_COLUMNS",
]

log = logging.getLogger(__name__)

TRIAL_FIELDS = ["graph", "d", "k", "scenario", "learner", "seed", "lambda1", "shd", "sid", "runtime_s", "converged"]
SORT_DEFAULT = "bic"


@dataclass
class GraphSpec:
    """A random-graph family at size d, or a fixed graph (``dag`` set)."""

    kind: str = "ER"
    degree: float = 2
    d: int = 10
    dag: Dag | None = None
    name: str | None = None

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return self.kind

    @property
    def k(self) -> float:
        if self.dag is not None:
            return round(2 * self.dag.n_edges / self.dag.d, 3)
        return self.degree

    def to_dict(self) -> dict:
        if self.dag is not None:
            return {"name": self.label, "d": self.d, "edges": self.dag.edges()}
        return {"kind": self.kind, "degree": self.degree, "d": self.d}

    @classmethod
    def from_dict(cls, raw: dict) -> "GraphSpec":
        if "edges" in raw:
            edges = raw["edges"]
            dag = read_edge_list(edges) if isinstance(edges, (str, Path)) else Dag.from_edges(raw["d"], edges)
            return cls(kind="fixed", degree=0, d=dag.d, dag=dag, name=raw.get("name", "fixed"))
        GraphKind(raw.get("kind", "ER"), raw.get("degree", 2))
        return cls(kind=raw.get("kind", "ER"), degree=raw.get("degree", 2), d=int(raw.get("d", 10)))


def _scenario_from(raw) -> list[ScenarioSpec]:
    if isinstance(raw, str):
        return [ScenarioSpec(ScenarioKind(raw))]
    if isinstance(raw, dict):
        return [ScenarioSpec.from_dict(raw)]
    if isinstance(raw, ScenarioSpec):
        return [raw]
    return [s for r in raw for s in _scenario_from(r)]


def scenario_tag(specs: list[ScenarioSpec]) -> str:
    kinds = [s.kind for s in specs if s.kind is not ScenarioKind.VANILLA]
    if kinds == [ScenarioKind.MECHANISM_VIOLATION]:
        return "mechanismviolation"
    # same tag compose() produces; computed here so trial keys need no data
    return "+".join(k.value.lower() for k in CANONICAL_ORDER if k in kinds) or "vanilla"


def _learner_from(raw) -> LearnerConfig:
    if isinstance(raw, LearnerConfig):
        return raw
    if isinstance(raw, str):
        raw = {"method": raw}
    raw = dict(raw)
    method = Method(raw.pop("method"))
    if "lambda1" not in raw:
        sort = method in (Method.VAR_SORTNREGRESS, Method.R2_SORTNREGRESS)
        raw["lambda1"] = SORT_DEFAULT if sort else 0.0 if method is Method.RANDOM else list(LAMBDA1_GRID)
    c = raw.get("constraint")
    if isinstance(c, str):
        raw["constraint"] = AcyclicityKind(c)
    elif isinstance(c, dict):
        raw["constraint"] = AcyclicityKind(**c)
    if isinstance(raw.get("alm"), dict):
        alm = dict(raw["alm"])
        alm["inner"] = InnerConfig(**alm.get("inner", asdict(notears_alm_config().inner)))
        raw["alm"] = AlmConfig(**alm)
    if isinstance(raw.get("central_path"), dict):
        cp = dict(raw["central_path"])
        if "inner" in cp:
            cp["inner"] = InnerConfig(**cp["inner"])
        for key in ("s", "mu"):
            if key in cp:
                cp[key] = tuple(cp[key])
        raw["central_path"] = CentralPathConfig(**cp)
    return LearnerConfig(method, **raw)


@dataclass
class BenchConfig:
    """Experiment matrix.

    Attributes:
        graphs: graph families and sizes.
        scenarios: one entry per scenario; an entry is a kind name, a
            ``{"kind", "params"}`` mapping, or a list of those (composition).
        learners: learner configs; lambda1 lists are searched per dataset.
        n: samples per dataset.
        reps: datasets per cell.
        seed: seed base.
        out: output directory.
        jobs: worker processes.
        noise: "Gaussian" or "Exponential" SEM noise.
        selection: "oracle" keeps the SHD-minimizing lambda1; "fixed" uses
            the first grid value only.
        record_runtime: write wall-clock seconds (False writes 0 so reruns
            are byte-identical).
    """

    graphs: list = field(default_factory=lambda: [GraphSpec()])
    scenarios: list = field(default_factory=lambda: [[ScenarioSpec(ScenarioKind.VANILLA)]])
    learners: list = field(default_factory=lambda: [_learner_from("Dagma")])
    n: int = 2000
    reps: int = 10
    seed: int = 0
    out: str = "results"
    jobs: int = 1
    noise: str = "Gaussian"
    selection: str = "oracle"
    record_runtime: bool = True

    def __post_init__(self):
        self.graphs = [g if isinstance(g, GraphSpec) else GraphSpec.from_dict(g) for g in self.graphs]
        self.scenarios = [_scenario_from(s) for s in self.scenarios]
        self.learners = [_learner_from(l) for l in self.learners]
        NoiseDist(self.noise)
        if self.reps < 1:
            raise ParameterError("reps must be >= 1")
        if self.jobs < 1:
            raise ParameterError("jobs must be >= 1")
        if self.selection not in ("oracle", "fixed"):
            raise ParameterError("selection must be 'oracle' or 'fixed'")
        if not self.graphs or not self.scenarios or not self.learners:
            raise ParameterError("graphs, scenarios and learners must be non-empty")
        for g in self.graphs:
            if self.n < g.d + 1:
                raise ParameterError(f"n={self.n} must be at least d+1={g.d + 1}")
        for specs in self.scenarios:
            kinds = [s.kind for s in specs]
            if ScenarioKind.MECHANISM_VIOLATION in kinds and len(kinds) > 1:
                raise ParameterError("mechanism violation cannot be composed with other scenarios")

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "BenchConfig":
        text = Path(path).read_text()
        raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        return cls.from_dict(raw or {})

    def to_dict(self) -> dict:
        learners = []
        for l in self.learners:
            learners.append(
                {
                    "method": l.method.value,
                    "label": l.name,
                    "lambda1": l.lambda1 if isinstance(l.lambda1, str) else list(l.grid()),
                    "lambda2": l.lambda2,
                    "tau": l.tau,
                    "constraint": l.constraint.kind.value,
                    "alm": asdict(l.alm),
                    "central_path": asdict(l.central_path),
                }
            )
        return {
            "graphs": [g.to_dict() for g in self.graphs],
            "scenarios": [[s.to_dict() for s in specs] for specs in self.scenarios],
            "learners": learners,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "out": self.out,
            "jobs": self.jobs,
            "noise": self.noise,
            "selection": self.selection,
            "record_runtime": self.record_runtime,
        }


@dataclass
class EvalRecord:
    graph: str
    d: int
    k: float
    scenario: str
    learner: str
    seed: int
    lambda1: object = None
    shd: int | None = None
    sid: int | None = None
    runtime_s: float | None = None
    converged: bool = False

    def key(self):
        return (self.graph, self.d, self.scenario, self.learner, self.seed)

    def row(self) -> list:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(round(v, 6))
            return str(v)

        return [fmt(getattr(self, f)) for f in TRIAL_FIELDS]


def _derive_seed(base: int, *key) -> int:
    """Trial seed from a digest of its key, so adding cells leaves other trials untouched."""
    digest = hashlib.sha256(json.dumps([str(k) for k in key]).encode()).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32)
    return int(np.random.SeedSequence([base, *words.tolist()]).generate_state(1, np.uint32)[0])


def _make_dataset(g: GraphSpec, specs, n: int, noise: str, seed: int) -> Dataset:
    ss = np.random.SeedSequence(seed)
    s_graph, s_weights, s_data = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    dag = g.dag if g.dag is not None else generate(GraphKind(g.kind, g.degree), g.d, s_graph)
    noise_spec = NoiseSpec.standard(dag.d, NoiseDist(noise))
    if any(s.kind is ScenarioKind.MECHANISM_VIOLATION for s in specs):
        return sample_gp(GpScm(dag, noise_spec), n, s_data, scenario="mechanismviolation")
    scm = make_linear_scm(dag, noise_spec, s_weights)
    return compose(specs, scm, n, s_data)


_FAILURES = (NonConvergenceError, NumericalError, FloatingPointError, np.linalg.LinAlgError)


def run_trial(args) -> tuple[list[EvalRecord], list[dict]]:
    """All learners on one (graph, scenario, rep) dataset."""
    g, specs, learners, n, noise, seed, selection, record_runtime, want_trace = args
    data = _make_dataset(g, specs, n, noise, seed)
    return evaluate_learners(data, data.truth, learners, g.label, g.k, scenario_tag(specs), seed,
                             selection, record_runtime, want_trace)


def evaluate_learners(data: Dataset, truth: Dag, learners, graph: str, k, scenario: str, seed: int,
                      selection: str = "oracle", record_runtime: bool = True, want_trace: bool = False):
    """Fit each learner over its lambda1 grid and keep the SHD-best point (ties: smaller lambda1)."""
    records, traces = [], []
    for lc in learners:
        grid = lc.grid()
        if selection == "fixed":
            grid = grid[:1]
        grid = sorted(grid, key=lambda v: (-1.0 if isinstance(v, str) else float(v)))
        best = None
        for lam in grid:
            sink = []
            try:
                out = fit(lc, data, lam, seed=_derive_seed(seed, lc.name), trace=sink.append if want_trace else None)
            except _FAILURES as exc:
                log.info("%s failed at lambda1=%s: %s", lc.name, lam, exc)
                continue
            finally:
                for rec in sink:
                    traces.append({"graph": graph, "d": truth.d, "scenario": scenario, "learner": lc.name,
                                   "seed": seed, "lambda1": lam, **_jsonable(rec)})
            s = shd(out.dag, truth)
            if best is None or s < best[1]:
                best = (lam, s, out)
        rec = EvalRecord(graph, truth.d, k, scenario, lc.name, seed)
        if best is not None:
            lam, s, out = best
            rec.lambda1 = lam
            rec.shd = s
            rec.sid = sid(out.dag, truth)
            rec.runtime_s = out.runtime_s if record_runtime else 0.0
            rec.converged = True
        records.append(rec)
    return records, traces


def _jsonable(rec: dict) -> dict:
    return {k: (float(v) if isinstance(v, (np.floating, np.integer)) else v) for k, v in rec.items()
            if isinstance(v, (int, float, str, bool, np.floating, np.integer))}


def _tasks(cfg: BenchConfig, want_trace: bool):
    for g in cfg.graphs:
        for specs in cfg.scenarios:
            tag = scenario_tag(specs)
            for rep in range(cfg.reps):
                seed = _derive_seed(cfg.seed, g.label, g.k, g.d, tag, cfg.noise, rep)
                yield (g, specs, cfg.learners, cfg.n, cfg.noise, seed, cfg.selection, cfg.record_runtime, want_trace)


def _sort_key(rec: EvalRecord):
    return (rec.graph, rec.d, rec.scenario, rec.learner, rec.seed)


def execute(cfg: BenchConfig, want_trace: bool = False) -> tuple[list[EvalRecord], list[dict]]:
    """Run every trial and return records sorted by key (independent of ``jobs``)."""
    tasks = list(_tasks(cfg, want_trace))
    if cfg.jobs == 1:
        results = [run_trial(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_trial, tasks))
    records = sorted((r for rs, _ in results for r in rs), key=_sort_key)
    traces = [t for _, ts in results for t in ts]
    traces.sort(key=lambda t: (t["graph"], t["d"], t["scenario"], t["learner"], t["seed"], str(t["lambda1"])))
    return records, traces


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def summarize(records) -> list[dict]:
    """Per-cell mean and sample std ("m±s") of SHD, SID and runtime, plus a failures count."""
    records = list(records)
    if not records:
        raise ValueError("summarize needs at least one record")
    cells = {}
    for r in records:
        cells.setdefault((r.graph, r.d, r.k, r.scenario, r.learner), []).append(r)
    rows = []
    for (graph, d, k, scenario, learner) in sorted(cells, key=lambda c: (c[0], c[1], c[3], c[4])):
        rs = cells[(graph, d, k, scenario, learner)]
        ok = [r for r in rs if r.converged]
        row = {"graph": graph, "d": d, "k": k, "scenario": scenario, "learner": learner,
               "trials": len(ok), "failures": len(rs) - len(ok)}
        for name in ("shd", "sid", "runtime_s"):
            if ok:
                m, s = _mean_std([getattr(r, name) for r in ok])
                row[name] = f"{m:.1f}±{s:.1f}"
                row[name + "_mean"] = m
            else:
                row[name] = "n/a"
                row[name + "_mean"] = None
        rows.append(row)
    return rows


SUMMARY_FIELDS = ["graph", "d", "k", "scenario", "learner", "trials", "failures", "shd", "sid", "runtime_s"]


def format_table(rows: list[dict], fmt: str = "md") -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([r[f] for f in SUMMARY_FIELDS])
        return buf.getvalue()
    if fmt != "md":
        raise ValueError(f"unknown format {fmt!r}")
    head = ["graph", "d", "scenario", "learner", "SHD", "SID", "runtime (s)", "failures"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        graph = f"{r['graph']}-{r['k']:g}" if isinstance(r["k"], (int, float)) else r["graph"]
        lines.append(f"| {graph} | {r['d']} | {r['scenario']} | {r['learner']} | {r['shd']} | {r['sid']} | "
                     f"{r['runtime_s']} | {r['failures']} |")
    return "\n".join(lines) + "\n"


def write_trials(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_FIELDS)
        for r in records:
            w.writerow(r.row())


@dataclass
class Report:
    out: Path
    records: list
    summary: list
    failed_cells: list

    @property
    def ok(self) -> bool:
        return not self.failed_cells


def run_benchmark(cfg: BenchConfig, formats=("csv", "md"), trace: bool = False) -> Report:
    """Run the matrix and write ``trials.csv``, summary tables and ``manifest.json`` into ``cfg.out``."""
    records, traces = execute(cfg, trace)
    return write_reports(Path(cfg.out), records, traces if trace else [], formats, cfg.to_dict())


def write_reports(out: Path, records, traces, formats, config: dict) -> Report:
    out.mkdir(parents=True, exist_ok=True)
    write_trials(records, out / "trials.csv")
    rows = summarize(records)
    for fmt in formats:
        (out / f"summary.{fmt}").write_text(format_table(rows, fmt))
    if traces:
        with open(out / "traces.jsonl", "w") as fh:
            for t in traces:
                fh.write(json.dumps(t) + "\n")
    failed = [(r["graph"], r["d"], r["scenario"], r["learner"]) for r in rows if r["trials"] == 0]
    manifest = {
        "package": "dagbench",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config,
        "n_records": len(records),
        "failed_cells": failed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    return Report(out, records, rows, failed)


def run_sachs(data: Dataset, truth: Dag, learners, out, formats=("csv", "md"), trace: bool = False,
              record_runtime: bool = True) -> Report:
    """Evaluate learners once on the real Sachs table against the consensus graph."""
    learners = [_learner_from(l) for l in learners]
    k = round(2 * truth.n_edges / truth.d, 3)
    records, traces = evaluate_learners(data, truth, learners, "Sachs", k, "real", 0,
                                        record_runtime=record_runtime, want_trace=trace)
    config = {"data": "sachs", "log1p": data.meta.get("log1p", False),
              "learners": [{"method": l.method.value, "lambda1": l.lambda1 if isinstance(l.lambda1, str)
                            else l.grid()} for l in learners]}
    return write_reports(Path(out), records, traces, formats, config)


def run_semisynthetic(truth: Dag, cfg: BenchConfig, name: str = "Sachs", **kw) -> Report:
    """``run_benchmark`` with the graph fixed to ``truth`` (fresh linear SEM weights per rep)."""
    g = GraphSpec(kind="fixed", degree=0, d=truth.d, dag=truth, name=name)
    cfg.graphs = [g]
    if cfg.n < truth.d + 1:
        raise ParameterError(f"n={cfg.n} must be at least d+1={truth.d + 1}")
    return run_benchmark(cfg, **kw)


SACHS_COLUMNS = ["praf", "pmek", "plcg", "PIP2", "PIP3", "p44/42", "pakts473", "PKA", "PKC", "P38", "pjnk"]


def _data_path(name: str):
    return resources.files("dagbench") / "data" / name


def sachs_graph() -> Dag:
    """The bundled 17-edge consensus network, nodes in ``SACHS_COLUMNS`` order."""
    with resources.as_file(_data_path("sachs_consensus.edges")) as p:
        return read_edge_list(p)


def load_sachs(path=None, log1p: bool = False) -> tuple[Dataset, Dag]:
    """Read the Sachs flow-cytometry table (11 named columns) and the consensus graph.

    Raises:
        FormatError: empty file, wrong header or column count, or a row that
            does not parse to finite numbers (the message names the row).
    """
    if path is None:
        with resources.as_file(_data_path("sachs.csv")) as p:
            text = Path(p).read_text()
        path = "sachs.csv"
    else:
        text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in header]
    if len(header) != 11:
        raise FormatError(f"{path}: expected 11 columns, header has {len(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 11:
            raise FormatError(f"{path}: row {lineno} has {len(row)} fields, expected 11")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise FormatError(f"{path}: row {lineno} is not numeric: {row!r}") from None
        if not all(np.isfinite(vals)):
            raise FormatError(f"{path}: row {lineno} has non-finite values")
        rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    X = np.array(rows)
    if header != SACHS_COLUMNS:
        # accept any column order as long as the names match
        if sorted(header) != sorted(SACHS_COLUMNS):
            raise FormatError(f"{path}: unexpected column names {header}")
        X = X[:, [header.index(c) for c in SACHS_COLUMNS]]
    if log1p:
        if np.any(X <= -1):
            raise FormatError(f"{path}: log1p needs values > -1")
        X = np.log1p(X)
    truth = sachs_graph()
    return Dataset(X, truth, "sachs", None, "sachs", {"log1p": log1p}), truth


def load_preset(name: str) -> BenchConfig:
    """Load a bundled config such as ``paper-er2-d10``."""
    res = resources.files("dagbench") / "presets" / f"{name}.yaml"
    if not res.is_file():
        raise ParameterError(f"unknown preset {name!r}")
    return BenchConfig.from_dict(yaml.safe_load(res.read_text()))
