"""The whole pipeline through the command-line interface, start to finish.

Equivalent shell session:

    fairint synth --n 4000 --beta 2.0 --rho 0.8 --seed 1 --out work/data.csv
    fairint probe --csv work/data.csv --schema work/data.schema.json
    fairint train --config work/experiment.json
    fairint eval    --model work/run/model.bin --csv work/data.csv
    fairint explain --model work/run/model.bin --csv work/data.csv
    fairint sweep --config work/experiment.json --grid "0,0;2,30"

Every artifact is a plain file: rerunning any command with the same
inputs and seed rewrites byte-identical output.
"""

import json
import tempfile
from pathlib import Path

from fairint.cli import main

work = Path(tempfile.mkdtemp(prefix="fairint-demo-"))
print(f"working under {work}\n")

steps = [
    ["synth", "--n", "4000", "--beta", "2.0", "--rho", "0.8", "--seed", "1",
     "--out", str(work / "data.csv")],
    ["probe", "--csv", str(work / "data.csv"), "--schema", str(work / "data.schema.json")],
]

config = {
    "dataset": {"csv_path": str(work / "data.csv"), "schema_path": str(work / "data.schema.json")},
    "model": {},
    "train": {"lambda_ifc": 2.0, "lambda_fc": 30.0, "learning_rate": 3e-3,
              "batch_size": 128, "max_epochs": 25, "patience": 25, "seed": 0},
    "output_dir": str(work / "run"),
}
(work / "experiment.json").write_text(json.dumps(config, indent=2))

steps += [
    ["train", "--config", str(work / "experiment.json")],
    ["eval", "--model", str(work / "run" / "model.bin"), "--csv", str(work / "data.csv")],
    ["explain", "--model", str(work / "run" / "model.bin"), "--csv", str(work / "data.csv")],
    ["sweep", "--config", str(work / "experiment.json"), "--grid", "0,0;2,30"],
]

for argv in steps:
    print(f"$ fairint {' '.join(argv)}")
    code = main(argv)
    assert code == 0, f"exit code {code}"
    print()

print("artifacts:")
for path in sorted(work.rglob("*")):
    if path.is_file():
        print(f"  {path.relative_to(work)}  ({path.stat().st_size} bytes)")
