"""Regenerate the 5-sample evaluation fixture used by the acceptance suite.

    python scripts/make_eval_fixture.py tests/fixtures/eval5
"""

import sys
from pathlib import Path

import numpy as np
import yaml

from camdepth.core import write_u16_png


def main(out):
    out = Path(out)
    rng = np.random.default_rng(20240501)
    samples = []
    for i in range(5):
        h, w = 8, 10
        gt = rng.integers(400, 6000, (h, w)).astype(np.uint16)  # millimeters
        gt[rng.random((h, w)) < 0.1] = 0
        pred = np.clip(gt * rng.uniform(0.8, 1.3, (h, w)) + rng.normal(0, 30, (h, w)), 1, 65535)
        pred = pred.astype(np.uint16)
        pred[rng.random((h, w)) < 0.2 + 0.05 * i] = 0  # holed prompt-style prediction
        sid = f"f{i}"
        write_u16_png(out / "gt" / f"{sid}.png", gt)
        write_u16_png(out / "pred" / f"{sid}.png", pred)
        samples.append({"id": sid, "rgb": f"gt/{sid}.png", "gt_depth": f"gt/{sid}.png",
                        "pred_depth": f"pred/{sid}.png"})
    (out / "manifest.yaml").write_text(yaml.safe_dump({"samples": samples}, sort_keys=False))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/eval5")
