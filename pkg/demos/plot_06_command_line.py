"""
The same workflow from the command line
=======================================

The ``dtmp`` command wraps generation, training, evaluation and profile
export. This script drives it through ``dtmp.cli.main`` with a small
configuration so it finishes quickly; the equivalent shell commands are
printed as it goes.
"""

import json
import tempfile
from pathlib import Path

from dtmp.cli import main

work = Path(tempfile.mkdtemp(prefix="dtmp-demo-"))
config = {"model": {"hidden": 8, "skip": 16, "head_hidden": 16, "n_modules": 3, "dilations": [1, 2, 4]},
          "max_epochs": 3}
(work / "config.json").write_text(json.dumps(config, indent=2))

steps = [
    ["synth", "--seed", "0", "--out", str(work / "data")],
    ["train", "--config", str(work / "config.json"), "--data", str(work / "data"), "--seed", "0",
     "--out", str(work / "run")],
    ["eval", "--checkpoint", str(work / "run" / "checkpoint"), "--data", str(work / "data"),
     "--out", str(work / "eval")],
    ["eval", "--baseline", "ha", "--data", str(work / "data"), "--out", str(work / "eval")],
    ["profiles", "--checkpoint", str(work / "run" / "checkpoint"), "--node", "2", "--out", str(work / "profiles")],
]
for argv in steps:
    print("$ dtmp", " ".join(argv))
    assert main(argv) == 0

print("run directory:", sorted(p.name for p in (work / "run").iterdir()))
