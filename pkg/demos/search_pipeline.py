"""End to end on the bundled synthetic task: generate, search, train.

Each modality carries one of two class bits, so a good architecture has to
fuse both. The search runs twice against the same ledger to show that the
second pass is free.

    python3 demos/search_pipeline.py [workdir]
"""

import json
import sys
import tempfile
from pathlib import Path

from mixmas.data import generate_synthetic, load_dataset, load_manifest
from mixmas.search import full_train, run_search
from mixmas.synthetic import bundled_config, bundled_spec
from mixmas.training import TrainConfig

work = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp())
generate_synthetic(bundled_spec(0), work / "data")
dataset = load_dataset(load_manifest(work / "data" / "manifest.json"))
cfg = bundled_config(0)

for label in ("cold", "warm"):
    result = run_search(dataset, cfg, work / "ledger.jsonl", out=work / "arch.json",
                        progress=lambda m: print("  " + m))
    s = result.stats
    print(f"{label}: {s.trainings} trainings, {s.param_updates} updates, {s.cache_hits} cache hits\n")

spec = result.spec
print(json.dumps({k: spec[k] for k in ("encoders", "fusion", "fusion_network")}, indent=2))
for epochs in (0, 30):
    _, report, _ = full_train(spec, dataset, TrainConfig(epochs=epochs, scheduler=True))
    print(f"{epochs:>2} epochs: test {report.metric} {report.score:.3f}")
print(f"\nartifacts in {work}")
