"""Excess risk and regret curves of the limit experiment, with ratio table.

    python3 scripts/limit_experiment_curves.py --out results/limit
"""
import argparse
import json
from dataclasses import asdict
from pathlib import Path

from robust_forecast.limit_experiment import (
    Ex7Config, ex7_excess_regret_curve, ex7_excess_risk_curve, ratio_table, summary, write_curves_csv,
)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--h0-max", type=float, default=8.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--out", default="results/limit")
    args = p.parse_args()
    cfg = Ex7Config(-args.h0_max, args.h0_max, args.step)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"config": asdict(cfg)}
    for name, curves in (("risk", ex7_excess_risk_curve(cfg)), ("regret", ex7_excess_regret_curve(cfg))):
        write_curves_csv(curves, out / f"{name}_curves.csv")
        report[name] = {"summary": summary(curves), "ratios": ratio_table(curves)}
        for rule, s in report[name]["summary"].items():
            print(f"{name:6s} {rule:22s} threshold={s['threshold']:+.4f} "
                  f"integrated={s['integrated']:.4f} max={s['max']:.4f}")
    (out / "summary.json").write_text(json.dumps(report, indent=2) + "\n")


if __name__ == "__main__":
    main()
