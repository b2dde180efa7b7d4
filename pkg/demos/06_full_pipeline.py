"""Run the whole pipeline through the command-line entry point.

Simulates a panel, writes a run configuration, and drives
ingest -> factor -> cluster -> fit -> evaluate -> report exactly as
``vmemsec run --config ...`` would from a shell.
"""

import json
import tempfile
from pathlib import Path

import vmemsec as v
from vmemsec.cli import main
from _common import simulated_sec_panel

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    _, _, panel = simulated_sec_panel(n_periods=1200, seed=5)
    v.save_panel_csv(panel, tmp / "panel.csv")

    config = {
        "input": str(tmp / "panel.csv"),
        "split_date": "2002-06-01",
        "models": ["s-vmem", "s-vmem-sec", "c-vmem-sec"],
        "fit": {"outer_tolerance": 1e-4},
        "evaluate": {"mcs": True, "n_bootstrap": 500, "block_length": 20},
        "output_dir": str(tmp / "run"),
        "seed": 0,
    }
    (tmp / "config.json").write_text(json.dumps(config, indent=2))

    print("running: vmemsec run --config config.json")
    rc = main(["run", "--config", str(tmp / "config.json")])
    print(f"exit code: {rc}")

    print("\nartifacts:")
    manifest = json.loads((tmp / "run" / "manifest.json").read_text())
    for name in manifest["artifacts"]:
        print(f"   {name}")

    print("\nsummary.csv:")
    print((tmp / "run" / "summary.csv").read_text())
