#!/usr/bin/env python3
"""
Strouhal Harness - long square-cylinder runs and the shedding-frequency table
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.cases import CYLINDER_ASPECT_RATIOS, CYLINDER_STROUHAL, preset  # noqa: E402
from src.errors import SolverError  # noqa: E402
from src.runner import run_case  # noqa: E402

# Setup logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


class StrouhalHarness:
    def __init__(self, output_root: Path, end_time: float, overrides):
        self.output_root = output_root
        self.end_time = end_time
        self.overrides = list(overrides)
        self.results = {}

    def run_aspect(self, aspect: int) -> float:
        """Run one aspect ratio and return its Strouhal number"""
        name = f"squareCylinder({aspect})"
        logger.info(f"Running {name} to t={self.end_time}")
        config = preset(name, [f"step.end_time={self.end_time}", *self.overrides])
        summary = run_case(config, out=self.output_root / f"hd{aspect}")
        strouhal = summary.diagnostics.get("v_wake_strouhal")
        if strouhal is None:
            raise SolverError(f"{name}: no spectrum from the wake probe")
        return strouhal

    def run(self, aspects) -> bool:
        ok = True
        for aspect in aspects:
            try:
                st = self.run_aspect(aspect)
            except SolverError as exc:
                logger.error(f"h/d={aspect}: {exc}")
                ok = False
                continue
            reference = CYLINDER_STROUHAL[aspect]
            self.results[aspect] = st
            within = abs(st - reference) <= 0.01
            ok &= within
            logger.info(f"h/d={aspect}: St={st:.4f} (reference {reference:.3f}) {'ok' if within else 'OUTSIDE'}")
        self.write_table()
        return ok

    def write_table(self):
        path = self.output_root / "strouhal.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = [(a, st, CYLINDER_STROUHAL[a]) for a, st in sorted(self.results.items())]
        np.savetxt(path, np.array(rows).reshape(-1, 3), delimiter=",", fmt=["%d", "%.6f", "%.3f"],
                   header="aspect,strouhal,reference", comments="")
        logger.info(f"Table written to {path}")


def main():
    parser = argparse.ArgumentParser(description="Square-cylinder Strouhal sweep")
    parser.add_argument("--aspect", type=int, action="append", choices=CYLINDER_ASPECT_RATIOS,
                        help="Aspect ratio h/d (repeatable, default all)")
    parser.add_argument("--end-time", type=float, default=400.0, help="Simulated time per run")
    parser.add_argument("--out", type=Path, default=Path("output/strouhal"), help="Output root")
    parser.add_argument("--set", dest="overrides", action="append", default=[], help="Config override key=value")
    args = parser.parse_args()

    harness = StrouhalHarness(args.out, args.end_time, args.overrides)
    if harness.run(args.aspect or CYLINDER_ASPECT_RATIOS):
        logger.info("All Strouhal numbers within 0.01 of the reference table")
        sys.exit(0)
    logger.error("Strouhal sweep failed")
    sys.exit(1)


if __name__ == "__main__":
    main()
