#!/usr/bin/env python3
"""Strong-repulsion oscillation study: wavelength versus detection radius.

Runs the radius-1 and radius-2 top-hat recipes and reports the dominant
spatial frequency of each final profile; the wavelength ratio should be
close to 2.
"""

import argparse
import dataclasses
import pathlib
import sys

from crossfv import parse_config, run_experiment

CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/oscillation")
    args = parser.parse_args(argv)

    modes = {}
    for recipe in ("oscillation_tophat_r1", "oscillation_tophat_r2"):
        cfg = parse_config(CONFIG_DIR / f"{recipe}.json")
        cfg = dataclasses.replace(cfg, out_dir=str(pathlib.Path(args.out) / recipe))
        result = run_experiment(cfg)
        mode = result.summary["dominant_modes"][0]["modes"][0]
        modes[recipe] = abs(mode)
        print(f"{recipe}: dominant mode of species 1 = {mode}")
    ratio = modes["oscillation_tophat_r1"] / modes["oscillation_tophat_r2"]
    print(f"wavelength ratio (radius 2 / radius 1): {ratio:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
