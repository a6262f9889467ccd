"""Regenerate the bundled case files: ``python3 cases/generate.py``."""

import json
from pathlib import Path

import numpy as np

from derplan.synthetic import ieee33_document, toy5_document

HERE = Path(__file__).resolve().parent


def main() -> None:
    doc, history = toy5_document()
    (HERE / "toy5.json").write_text(json.dumps(doc, indent=1) + "\n")
    header = ",".join(f"sample{k + 1}" for k in range(history.shape[1]))
    np.savetxt(HERE / "toy5_pv_history.csv", history, delimiter=",", fmt="%.4f", header=header, comments="")
    (HERE / "ieee33_template.json").write_text(json.dumps(ieee33_document(), indent=1) + "\n")


if __name__ == "__main__":
    main()
