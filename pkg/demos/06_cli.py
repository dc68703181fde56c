"""The command-line workflow: simulate data, fit it from CSV, benchmark, estimate a graph.

Equivalent shell commands:
    brail simulate  --config demos/configs/benchmark_iid.json --out runs
    brail benchmark --config demos/configs/benchmark_iid.json --out runs --threads 4
    brail graph     --config demos/configs/graph_chain.json --out runs
"""

import json
import os
import tempfile

from brail.cli import main

here = os.path.dirname(os.path.abspath(__file__))
out = tempfile.mkdtemp(prefix="brail_demo_")

with open(os.path.join(here, "configs", "benchmark_iid.json")) as fh:
    cfg = json.load(fh)
cfg.update(name="demo", replicates=2)
cfg["design"].update(widths=[30, 30, 30], n_true=[3, 3, 3])
cfg["methods"] = cfg["methods"][:3]
bench = os.path.join(out, "bench.json")
with open(bench, "w") as fh:
    json.dump(cfg, fh)

main(["simulate", "--config", bench, "--out", out])
sim = os.path.join(out, "demo")
print(sorted(os.listdir(sim)))

# fit the simulated CSVs as if they were external data
with open(os.path.join(sim, "schema.json")) as fh:
    schema = json.load(fh)
fit_cfg = {"name": "fit", "design": {"data": {
    "x_path": os.path.join(sim, "X.csv"), "y_path": os.path.join(sim, "y.csv"),
    "schema": schema, "family": "gaussian"}},
    "methods": [{"name": "brail", "estimator": "brail"}]}
fit_path = os.path.join(out, "fit.json")
with open(fit_path, "w") as fh:
    json.dump(fit_cfg, fh)
main(["fit", "--config", fit_path, "--out", out])
with open(os.path.join(out, "fit", "coefficients.csv")) as fh:
    print("".join(fh.readlines()[:5]))

main(["benchmark", "--config", bench, "--out", os.path.join(out, "bench"), "--threads", "2"])
main(["graph", "--config", os.path.join(here, "configs", "graph_chain.json"), "--out", out])
print("outputs in", out)
