#!/usr/bin/env python3
"""Smoke test for the clpanel Python bindings.

Builds the extension module if needed, imports it, and exercises the main
entry points end to end on synthetic data.

Usage: python3 python/smoke_test.py
"""

import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_module() -> Path:
    subprocess.run(
        [
            "cargo",
            "build",
            "--release",
            "-p",
            "clpanel-py",
            "--features",
            "extension-module",
        ],
        cwd=ROOT,
        check=True,
    )
    src = ROOT / "target" / "release" / "libclpanel.so"
    ext = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    stage = Path(tempfile.mkdtemp(prefix="clpanel-py-"))
    dst = stage / f"clpanel{ext}"
    shutil.copy2(src, dst)
    return stage


def main() -> None:
    sys.path.insert(0, str(build_module()))
    import clpanel

    # Index identities.
    assert clpanel.compute_gap(3, 1) == 0.75
    assert clpanel.compute_gap(5, 5) == 0.5
    assert clpanel.compute_treat_ratio(0.2, 0.1) == 100.0
    print("ok: index identities")

    # Grouped panel + classifier recovers the two slope groups.
    panel, labels = clpanel.generate_grouped_panel(
        n_units=40, n_periods=48, noise_sigma=0.1, seed=3
    )
    assert panel.n_units == 40 and panel.n_periods == 48
    fit = clpanel.fit_classo(panel, "y", ["x1"], k=2, c=0.25, seed=3)
    assert fit.converged
    # Group labels are identified only up to permutation.
    pairs = set(zip(labels, fit.assignment))
    assert len(pairs) == 2, f"misclassified: {pairs}"
    print("ok: classo group recovery")

    # Triple difference recovers an injected effect.
    stacked, treated = clpanel.generate_ddd_panel(
        n_units=30, n_periods=60, n_treated=10, effect_level=-0.5, seed=7
    )
    flags = [1.0 if treated[stacked.units.index(u)] else 0.0 for u in stacked.units]
    coef, se = clpanel.estimate_ddd(stacked, "Sq", estimator="ppml")
    assert abs(coef - (-0.5)) < 2 * se, f"ddd {coef} +- {se}"
    print(f"ok: ddd recovery ({coef:.3f} +- {se:.3f})")

    steps = clpanel.estimate_event_study(stacked, "Sq", estimator="ols")
    assert len(steps) == 40
    print("ok: event study has 40 coefficients")

    placebo = clpanel.run_placebo(stacked, "Sq", reps=20, seed=1, estimator="ols")
    placebo2 = clpanel.run_placebo(stacked, "Sq", reps=20, seed=1, estimator="ols")
    assert placebo["estimates"] == placebo2["estimates"]
    assert placebo["p_value"] <= 1.0
    print(f"ok: placebo deterministic (p={placebo['p_value']:.3f})")

    # Full pipeline from a generated demo config.
    with tempfile.TemporaryDirectory() as tmp:
        cfg = clpanel.write_demo_inputs(Path(tmp) / "demo", seed=0)
        log = clpanel.run_pipeline(cfg)
        assert any("placebo" in line for line in log)
        report = clpanel.emit_report(Path(tmp) / "demo" / "out")
        assert "Pipeline report" in report
    print("ok: pipeline + report")

    print("smoke test passed")


if __name__ == "__main__":
    main()
