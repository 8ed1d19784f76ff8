"""Write a small synthetic RGB-D dataset with a manifest, for trying out the CLI.

    python3 scripts/make_toy_dataset.py data/toy --n 8
"""

import argparse
from pathlib import Path

import numpy as np
import yaml

from camdepth.core import DepthMap, ImageRGB, Intrinsics, save_depth, save_rgb


def scene(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    z = 1.2 + rng.uniform(0.005, 0.02) * xx + rng.uniform(0.0, 0.01) * yy
    for _ in range(rng.integers(1, 4)):
        y0, x0 = rng.integers(0, h - h // 4), rng.integers(0, w - w // 4)
        bh, bw = rng.integers(h // 8, h // 3), rng.integers(w // 8, w // 3)
        z[y0:y0 + bh, x0:x0 + bw] = rng.uniform(0.5, 1.0)
    shade = 210 - 90 * (z - z.min()) / np.ptp(z)
    shade[: h // 8, w - w // 6:] = 10  # unlit corner
    rgb = np.clip(shade[..., None] + rng.normal(0, 20, (h, w, 3)), 0, 255).astype(np.uint8)
    return ImageRGB(rgb), DepthMap(z)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--size", type=int, nargs=2, default=(120, 160), metavar=("H", "W"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    h, w = args.size
    rng = np.random.default_rng(args.seed)
    samples = []
    for i in range(args.n):
        rgb, depth = scene(rng, h, w)
        sid = f"t{i:03d}"
        save_rgb(rgb, args.out / "rgb" / f"{sid}.png")
        save_depth(depth, args.out / "gt" / f"{sid}.png")
        samples.append({"id": sid, "rgb": f"rgb/{sid}.png", "gt_depth": f"gt/{sid}.png",
                        "intrinsics": "cam"})
    k = Intrinsics(fx=0.9 * w, fy=0.9 * w, cx=(w - 1) / 2, cy=(h - 1) / 2, width=w, height=h,
                   depth_scale=1000)
    manifest = {"metadata": {"scene": "toy", "seed": args.seed}, "intrinsics": {"cam": k.to_dict()},
                "samples": samples}
    (args.out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False))
    print(f"wrote {args.n} samples to {args.out}")


if __name__ == "__main__":
    main()
