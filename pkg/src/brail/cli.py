"""Command-line entry point and benchmark harness.

Verbs: ``simulate``, ``fit``, ``benchmark`` and ``graph``, each reading a
JSON config (``--config``) and writing under ``--out``. Replicate ``r``
uses seed ``base_seed + r``, and all randomness is derived from that seed,
so outputs do not depend on ``--threads``. Timings go to ``manifest.json``
only, so every CSV is reproducible byte for byte.
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import baselines as bl
from .algorithm import BrailConfig, fit_brail
from .data import Domain, load_csv, schema_for, standardize, write_csv
from .errors import BrailError, ConfigError, NumericError, ParseError, RejectedInputError
from .glm import as_family
from .graphsel import (CombineRule, NeighborhoodMethod, build_graph, chain_design,
                       estimate_frequencies, graph_nodes)
from .simgen import DesignKind, GibbsParams, SimDesign, ground_truth_rows, score, simulate

log = logging.getLogger(__name__)

ESTIMATORS = ("brail", "lasso_global", "lasso_per_block", "separate_lassos", "adaptive_lasso")
EXIT_CODES = {ParseError: 3, ConfigError: 2, RejectedInputError: 2, NumericError: 4,
              BrailError: 1}


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class DataRef:
    """An external dataset: a samples-by-features CSV, a block schema, a response."""

    x_path: str
    schema: dict
    y_path: str
    y_column: str = None
    family: str = "gaussian"


@dataclass(frozen=True)
class MethodSpec:
    name: str
    estimator: str
    rule: dict = None
    options: dict = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        if self.estimator != "brail" and self.rule is None:
            raise ConfigError(f"method {self.name!r} needs a selection rule")


@dataclass(frozen=True)
class GraphSpec:
    method: str = "brail"
    combine: str = "and"
    threshold: float = 0.9
    tiers: list = None
    options: dict = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    design: object
    methods: tuple = ()
    replicates: int = 1
    base_seed: int = 0
    output_dir: str = "out"
    graph: GraphSpec = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"method names must be unique, got {names}")


def _known(cls, d, where):
    allowed = {f.name for f in fields(cls)}
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def design_from_dict(d):
    d = dict(d)
    if "data" in d or "x_path" in d:
        d = d.get("data", d)
        _known(DataRef, d, "data")
        return DataRef(**d)
    kind = d.get("kind", "iid")
    if kind == "chain":
        extra = set(d) - {"kind", "n", "p", "partial_corr"}
        if extra:
            raise ConfigError(f"unknown keys in chain design: {sorted(extra)}")
        return {"kind": "chain", "n": int(d.get("n", 2000)), "p": int(d.get("p", 3)),
                "partial_corr": float(d.get("partial_corr", 0.5))}
    if "gibbs" in d:
        _known(GibbsParams, d["gibbs"], "design.gibbs")
        d["gibbs"] = GibbsParams(**d["gibbs"])
    _known(SimDesign, d, "design")
    for key in ("widths", "domains", "n_true"):
        if key in d:
            d[key] = tuple(d[key])
    try:
        return SimDesign(**d)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid design: {exc}") from None


def config_from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"name", "design", "methods", "replicates", "base_seed", "output_dir", "graph"}
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    if "design" not in d:
        raise ConfigError("config needs a 'design' section")
    methods = []
    for m in d.get("methods", []):
        _known(MethodSpec, m, "methods[]")
        if "name" not in m or "estimator" not in m:
            raise ConfigError("each method needs 'name' and 'estimator'")
        methods.append(MethodSpec(**m))
    graph = None
    if d.get("graph") is not None:
        _known(GraphSpec, d["graph"], "graph")
        graph = GraphSpec(**d["graph"])
    return ExperimentConfig(
        name=str(d.get("name", "experiment")),
        design=design_from_dict(d["design"]),
        methods=tuple(methods),
        replicates=int(d.get("replicates", 1)),
        base_seed=int(d.get("base_seed", 0)),
        output_dir=str(d.get("output_dir", "out")),
        graph=graph,
    )


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON config: {exc.msg}", row=exc.lineno) from None
    return config_from_dict(raw)


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (Domain, DesignKind)) or hasattr(obj, "value"):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_echo(config):
    return _jsonable(config)


def config_hash(config):
    text = json.dumps(config_echo(config), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# building estimators from specs

def make_rule(d, seed, truth=None, blocks=None):
    d = dict(d or {})
    kind = d.pop("kind", None)
    if kind == "oracle":
        if truth is None:
            raise ConfigError("the oracle rule needs simulated data with known truth")
        per_block = tuple(int(np.count_nonzero(truth.beta[b.columns])) for b in blocks)
        return bl.OracleFirstK(sum(per_block), per_block)
    if kind == "cv":
        return bl.CrossValidation(int(d.get("folds", 5)), seed)
    if kind == "ebic":
        return bl.ExtendedBic(float(d.get("gamma", 0.5)))
    if kind == "stability":
        return bl.Stability(float(d.get("tau", 0.8)), int(d.get("n_bootstrap", 100)),
                            int(d.get("folds", 5)), seed,
                            tuple(d.get("gamma_range", (0.5, 1.5))))
    raise ConfigError(f"unknown selection rule kind {kind!r}")


def brail_config(options, seed):
    options = dict(options or {})
    _known(BrailConfig, options, "brail options")
    if "gamma_range" in options:
        options["gamma_range"] = tuple(options["gamma_range"])
    return BrailConfig(**{**options, "rng_seed": seed})


def run_method(spec, mv, y, family, seed, truth=None):
    """Fit one method; returns ``(coefficients, n_iterations)``."""
    opts = dict(spec.options or {})
    if spec.estimator == "brail":
        res = fit_brail(mv, y, family, brail_config(opts, seed))
        return res.coefficients, res.n_iterations
    rule = make_rule(spec.rule, seed, truth, mv.blocks)
    if spec.estimator == "lasso_global":
        fit = bl.lasso_global(mv, y, family, rule)
    elif spec.estimator == "lasso_per_block":
        support = truth.support if truth is not None else None
        fit = bl.lasso_per_block(mv, y, family, rule, support, **opts)
    elif spec.estimator == "separate_lassos":
        fit = bl.separate_lassos(mv, y, family, rule)
    else:
        fit = bl.adaptive_lasso(mv, y, family, rule, **opts)
    return fit.coefficients, fit.n_iterations


# ---------------------------------------------------------------------------
# datasets

def dataset(config, seed):
    """``(MultiViewDesign, y, family, truth_or_None)`` for one replicate."""
    design = config.design
    if isinstance(design, DataRef):
        raw, blocks, names = load_csv(design.x_path, design.schema)
        mv = standardize(raw, blocks, names)
        y = read_response(design.y_path, design.y_column, mv.n)
        family = as_family(design.family)
        return mv, family.validate_response(y), family, None
    if isinstance(design, dict):
        raise ConfigError("the chain design is only available to the graph verb")
    design = replace(design, rng_seed=seed)
    mv, y, truth = simulate(design)
    return mv, y, design.response, truth


def read_response(path, column, n):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty response file") from None
        if column is None:
            if len(header) != 1:
                raise ConfigError("response file has several columns; set y_column")
            j = 0
        elif column in header:
            j = header.index(column)
        else:
            raise ParseError("response column not in header", column=column)
        values = []
        for r, rec in enumerate(reader, start=1):
            if not rec:
                continue
            try:
                values.append(float(rec[j]))
            except (ValueError, IndexError):
                raise ParseError("invalid response value", row=r, column=header[j]) from None
    if len(values) != n:
        raise RejectedInputError(f"response has {len(values)} rows, design has {n}")
    return np.array(values)


# ---------------------------------------------------------------------------
# benchmark

RECORD_FIELDS = ["replicate", "seed", "method", "status", "tpr", "fdp", "score",
                 "n_selected", "n_iterations", "error", "config_hash"]


def _fmt(x):
    if isinstance(x, float):
        return repr(float(x))
    return "" if x is None else str(x)


def replicate_records(config, r, h=None):
    """Run every method on replicate ``r``; returns a list of row dicts."""
    seed = config.base_seed + r
    h = h or config_hash(config)
    mv, y, family, truth = dataset(config, seed)
    if truth is None:
        raise ConfigError("benchmarks need simulated data with known truth")
    rows = []
    for spec in config.methods:
        row = {"replicate": r, "seed": seed, "method": spec.name, "config_hash": h}
        try:
            coef, iters = run_method(spec, mv, y, family, seed, truth)
            m = score(np.flatnonzero(coef), truth, mv.blocks)
            row.update(status="ok", tpr=m.tpr, fdp=m.fdp, score=m.score,
                       n_selected=int(np.count_nonzero(coef)), n_iterations=int(iters),
                       error="")
            for b in mv.blocks:
                row[f"tpr_{b.name}"] = m.block_tpr[b.name]
                row[f"fdp_{b.name}"] = m.block_fdp[b.name]
        except (BrailError, np.linalg.LinAlgError) as exc:
            log.warning("replicate %d, method %s failed: %s", r, spec.name, exc)
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


def _block_names(config):
    design = config.design
    if isinstance(design, SimDesign):
        return [f"X{k + 1}" for k in range(len(design.widths))]
    return list(design.schema)


def write_records(path, rows, block_names):
    cols = RECORD_FIELDS + [f"{m}_{b}" for b in block_names for m in ("tpr", "fdp")]
    tmp = path + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in cols])
    os.replace(tmp, path)


def read_records(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key, val in row.items():
            if key.startswith(("tpr", "fdp", "score")) and val != "":
                row[key] = float(val)
    return rows


@dataclass
class ResultTable:
    """Per-method mean and standard error (sd / sqrt(m)) over successful replicates."""

    rows: dict
    metrics: list
    replicates: int

    @classmethod
    def from_records(cls, records, methods, metrics):
        rows = {}
        for name in methods:
            ok = [r for r in records if r["method"] == name and r["status"] == "ok"]
            failed = sum(1 for r in records if r["method"] == name and r["status"] != "ok")
            entry = {"n_ok": len(ok), "n_failed": failed}
            for metric in metrics:
                vals = np.array([float(r[metric]) for r in ok])
                if vals.size == 0:
                    mean, se = math.nan, math.nan
                elif vals.size == 1:
                    mean, se = float(vals[0]), 0.0
                else:
                    mean = float(vals.mean())
                    se = float(vals.std(ddof=1) / math.sqrt(vals.size))
                entry[metric] = (mean, se)
            entry["se_flag"] = "single_replicate" if len(ok) == 1 else ""
            rows[name] = entry
        return cls(rows, list(metrics), len({r["replicate"] for r in records}))

    def mean(self, method, metric):
        return self.rows[method][metric][0]

    def stderr(self, method, metric):
        return self.rows[method][metric][1]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["method", "n_ok", "n_failed"]
            for m in self.metrics:
                header += [f"{m}_mean", f"{m}_se"]
            writer.writerow(header + ["se_flag"])
            for name, entry in self.rows.items():
                line = [name, entry["n_ok"], entry["n_failed"]]
                for m in self.metrics:
                    line += [_fmt(entry[m][0]), _fmt(entry[m][1])]
                writer.writerow(line + [entry["se_flag"]])

    def text(self):
        """Aligned view with ``mean (stderr)`` cells."""
        header = ["method"] + self.metrics + ["failed"]
        body = []
        for name, entry in self.rows.items():
            cells = [name]
            for m in self.metrics:
                mean, se = entry[m]
                cells.append("nan" if math.isnan(mean) else f"{mean:.2f} ({se:.1e})")
            cells.append(str(entry["n_failed"]))
            body.append(cells)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                 for r in [header] + body]
        return "\n".join(lines) + "\n"


def _metrics_for(block_names):
    return ["tpr", "fdp", "score"] + [f"{m}_{b}" for b in block_names for m in ("tpr", "fdp")]


def run_experiment(config, threads=1, out_dir=None):
    """Run (or resume) a benchmark; returns ``(ResultTable, records, directory)``.

    Replicate files already present with a matching config hash are reused.
    The table is always recomputed from the files on disk.
    """
    if not config.methods:
        raise ConfigError("a benchmark needs at least one method")
    base = out_dir or config.output_dir
    directory = os.path.join(base, config.name)
    os.makedirs(directory, exist_ok=True)
    h = config_hash(config)
    block_names = _block_names(config)
    started = time.time()
    timings = {}

    def path_of(r):
        return os.path.join(directory, f"replicate_{r}.csv")

    def done(r):
        p = path_of(r)
        if not os.path.exists(p):
            return False
        try:
            rows = read_records(p)
        except (OSError, csv.Error, ValueError):
            return False
        return bool(rows) and all(row.get("config_hash") == h for row in rows)

    todo = [r for r in range(config.replicates) if not done(r)]

    def work(r):
        t0 = time.time()
        rows = replicate_records(config, r, h)
        write_records(path_of(r), rows, block_names)
        timings[r] = time.time() - t0
        return r

    if threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, todo))
    else:
        for r in todo:
            work(r)

    records = []
    for r in range(config.replicates):
        records.extend(read_records(path_of(r)))
    table = ResultTable.from_records(records, [m.name for m in config.methods],
                                     _metrics_for(block_names))
    table.write_csv(os.path.join(directory, "table.csv"))
    with open(os.path.join(directory, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(table.text())
    failures = {name: e["n_failed"] for name, e in table.rows.items()}
    write_manifest(directory, config, {
        "verb": "benchmark", "config_hash": h, "resumed_replicates":
            sorted(set(range(config.replicates)) - set(todo)),
        "failures": failures, "threads": threads,
        "timings_seconds": {"total": time.time() - started,
                            "replicates": {str(k): v for k, v in sorted(timings.items())}},
    })
    return table, records, directory


def write_manifest(directory, config, extra):
    manifest = {"config": config_echo(config), "base_seed": config.base_seed,
                "python": platform.python_version(), "numpy": np.__version__}
    manifest.update(extra)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# simulate / fit / graph

def run_simulate(config, out_dir=None):
    """Write replicate-0 data (raw X, y, truth, schema) for ``base_seed``."""
    if not isinstance(config.design, SimDesign):
        raise ConfigError("simulate needs a simulation design")
    directory = os.path.join(out_dir or config.output_dir, config.name)
    os.makedirs(directory, exist_ok=True)
    design = replace(config.design, rng_seed=config.base_seed)
    from .simgen import gen_design, gen_response

    rng = np.random.default_rng(design.rng_seed)
    raw, blocks, truth = gen_design(design, rng)
    mv = standardize(raw, blocks)
    y = gen_response(mv.X, truth.beta, design.response, rng, design.noise_sd)
    names = mv.names()
    write_csv(os.path.join(directory, "X.csv"), raw, names)
    write_csv(os.path.join(directory, "y.csv"), y[:, None], ["y"])
    with open(os.path.join(directory, "truth.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "name", "block", "coefficient"])
        for row in ground_truth_rows(truth):
            writer.writerow([row["feature"], names[row["feature"]], row["block"],
                             _fmt(float(row["coefficient"]))])
    with open(os.path.join(directory, "schema.json"), "w", encoding="utf-8") as fh:
        json.dump(schema_for(blocks, np.array(names, dtype=object)), fh, indent=2)
    write_manifest(directory, config, {"verb": "simulate", "seed": design.rng_seed,
                                       "n": mv.n, "p": mv.p})
    return directory


def run_fit(config, out_dir=None):
    """Fit every configured method once on the seed-``base_seed`` data."""
    if not config.methods:
        raise ConfigError("fit needs at least one method")
    directory = os.path.join(out_dir or config.output_dir, config.name)
    os.makedirs(directory, exist_ok=True)
    t0 = time.time()
    mv, y, family, truth = dataset(config, config.base_seed)
    names = mv.names()
    rows, timings = [], {}
    for spec in config.methods:
        t1 = time.time()
        coef, iters = run_method(spec, mv, y, family, config.base_seed, truth)
        timings[spec.name] = time.time() - t1
        raw_coef = mv.to_raw_scale(coef)
        for j in np.flatnonzero(coef):
            rows.append([spec.name, names[j], mv.blocks[mv.block_of(j)].name,
                         _fmt(float(coef[j])), _fmt(float(raw_coef[j]))])
    with open(os.path.join(directory, "coefficients.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "feature", "block", "coefficient", "raw_coefficient"])
        writer.writerows(rows)
    write_manifest(directory, config, {"verb": "fit", "seed": config.base_seed,
                                       "timings_seconds": {"total": time.time() - t0,
                                                           **timings}})
    return directory


def graph_design(config, seed):
    design = config.design
    if isinstance(design, dict) and design.get("kind") == "chain":
        return chain_design(design["n"], np.random.default_rng(seed),
                            design["partial_corr"], design["p"])
    if isinstance(design, DataRef):
        raw, blocks, names = load_csv(design.x_path, design.schema)
        return standardize(raw, blocks, names)
    mv, _, _, _ = dataset(config, seed)
    return mv


def graph_method_config(spec, seed):
    method = NeighborhoodMethod(spec.method)
    opts = dict(spec.options or {})
    if method is NeighborhoodMethod.BRAIL:
        return method, brail_config(opts, seed)
    return method, make_rule({"kind": "stability", **opts}, seed)


def run_graph(config, threads=1, out_dir=None):
    """Node-wise graph estimation; writes edges.csv, nodes.csv, frequencies.csv."""
    spec = config.graph or GraphSpec()
    directory = os.path.join(out_dir or config.output_dir, config.name)
    os.makedirs(directory, exist_ok=True)
    t0 = time.time()
    mv = graph_design(config, config.base_seed)
    if mv.n < 2 or mv.p < 2:
        raise ConfigError("graph estimation needs at least 2 samples and 2 nodes")
    method, cfg = graph_method_config(spec, config.base_seed)
    F, skipped = estimate_frequencies(mv, method, cfg, spec.tiers, threads)
    nodes = graph_nodes(mv)
    graph = build_graph(F, nodes, CombineRule(spec.combine), spec.threshold)
    graph.write_edges(os.path.join(directory, "edges.csv"))
    graph.write_nodes(os.path.join(directory, "nodes.csv"))
    write_csv(os.path.join(directory, "frequencies.csv"), F, [n[0] for n in nodes])
    counts = {rule.value: build_graph(F, nodes, rule, spec.threshold).n_edges()
              for rule in CombineRule}
    write_manifest(directory, config, {
        "verb": "graph", "seed": config.base_seed, "n_edges": graph.n_edges(),
        "edge_counts": counts, "skipped_nodes": skipped, "threads": threads,
        "timings_seconds": {"total": time.time() - t0}})
    return graph, directory


# ---------------------------------------------------------------------------
# argument parsing

def build_parser():
    parser = argparse.ArgumentParser(prog="brail", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in [("simulate", "generate a dataset with ground truth"),
                            ("fit", "fit the configured methods once"),
                            ("benchmark", "run replicated method comparisons"),
                            ("graph", "estimate a mixed graph node by node")]:
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, base_seed=args.seed)
        if args.verb == "simulate":
            directory = run_simulate(config, args.out)
        elif args.verb == "fit":
            directory = run_fit(config, args.out)
        elif args.verb == "benchmark":
            table, _, directory = run_experiment(config, args.threads, args.out)
            sys.stdout.write(table.text())
        else:
            graph, directory = run_graph(config, args.threads, args.out)
            print(f"{graph.n_edges()} edges")
        print(f"wrote {directory}")
    except BrailError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        for cls, code in EXIT_CODES.items():
            if isinstance(exc, cls):
                return code
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
