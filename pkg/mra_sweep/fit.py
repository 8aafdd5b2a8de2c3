"""Scaling-exponent fits: least squares of log risk against log of one sweep axis."""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import linregress

# ensure project root is importable when run as a script
sys.path.insert(0, str(Path(__file__).parent.parent))
from core.errors import FitError, MRAError
from core.logger import get_logger, setup_logger
from core.models import RiskReport

logger = get_logger("sweep.fit")

AXES = ("sigma", "n", "k")
MIN_POINTS = 3


def _select_cells(report: RiskReport, method: Optional[str]) -> List[Dict[str, Any]]:
    cells = [c for c in report.cells if "mean_loss" in c]
    methods = sorted({c["method"] for c in cells})
    if method is None:
        if len(methods) > 1:
            raise FitError("report holds several methods; choose one", methods=methods)
        return cells
    return [c for c in cells if c["method"] == method]


def fit_scaling_exponent(report: RiskReport, axis: str, method: Optional[str] = None,
                         trimmed: bool = False, normalize_n: bool = False) -> Dict[str, float]:
    """OLS of log(mean loss) on log(axis value).

    With normalize_n the response is log(N * mean loss), which is the right one
    when N is tied to sigma by the sweep. `trimmed` fits the trimmed means instead.
    """
    if axis not in AXES:
        raise FitError(f"unknown axis: {axis}", axes=AXES)
    cells = _select_cells(report, method)

    held = [a for a in AXES if a != axis and not (normalize_n and a == "n")]
    for other in held:
        values = {c[other] for c in cells}
        if len(values) > 1:
            raise FitError(f"axis {other} is not fixed", values=sorted(values))
    xs = [c[axis] for c in cells]
    if len(set(xs)) != len(xs):
        raise FitError(f"several cells share a value of {axis}", values=sorted(xs))
    if len(cells) < MIN_POINTS:
        raise FitError(f"need at least {MIN_POINTS} points along {axis}", points=len(cells))

    key = "trimmed_mean_loss" if trimmed else "mean_loss"
    risks = np.array([c[key] for c in cells], dtype=float)
    if np.any(~(risks > 0)) or np.any(np.asarray(xs, dtype=float) <= 0):
        raise FitError("log fit needs positive losses and axis values",
                       losses=risks.tolist(), values=xs)
    if normalize_n:
        risks = risks * np.array([c["n"] for c in cells], dtype=float)

    fit = linregress(np.log(np.asarray(xs, dtype=float)), np.log(risks))
    result = {
        "axis": axis,
        "slope": float(fit.slope),
        "intercept": float(fit.intercept),
        "stderr": float(fit.stderr),
        "intercept_stderr": float(fit.intercept_stderr),
        "points": len(cells),
        "trimmed": bool(trimmed),
        "normalize_n": bool(normalize_n),
    }
    name = f"{method or cells[0]['method']}:{axis}"
    report.fits[name] = result
    logger.debug("fit %s: slope %.4f +/- %.4f", name, result["slope"], result["stderr"])
    return result


def main(argv: Optional[Sequence[str]] = None):
    """`fit`: fit a scaling exponent to a finished sweep."""
    from mra_sweep.mra_sweep import load_report, save_fits

    parser = argparse.ArgumentParser(prog="mra fit", description="Fit a risk scaling exponent")
    parser.add_argument("--report", required=True, help="sweep output directory, report.json or results.csv")
    parser.add_argument("--axis", required=True, choices=AXES)
    parser.add_argument("--method", default=None)
    parser.add_argument("--trimmed", action="store_true", help="fit the trimmed means")
    parser.add_argument("--normalize-n", action="store_true", default=None,
                        help="fit log(N * loss); default on when the sweep ties N to sigma")
    args = parser.parse_args(argv)

    setup_logger()
    try:
        report = load_report(args.report)
        normalize_n = args.normalize_n
        if normalize_n is None:
            normalize_n = bool(report.config and report.config.n_scaling and args.axis != "n")
        result = fit_scaling_exponent(report, args.axis, method=args.method,
                                      trimmed=args.trimmed, normalize_n=normalize_n)
        save_fits(report, args.report)
    except MRAError as e:
        print(f"[MRA] Error: {e}", file=sys.stderr)
        sys.exit(1)

    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
