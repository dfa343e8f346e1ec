"""Smoke test for the kgz Python extension.

Build it with `maturin develop -m crates/python/Cargo.toml`, or with
`cargo build --release -p kgz-python --features extension-module`, in which
case the library is loaded straight from target/release (override with
KGZ_LIB=/path/to/libkgz.so).
"""

import importlib.machinery
import importlib.util
import math
import os
import sys
from pathlib import Path


def load_kgz():
    try:
        import kgz

        return kgz
    except ImportError:
        pass
    root = Path(__file__).resolve().parent.parent
    candidates = [os.environ.get("KGZ_LIB")] + [
        str(root / "target" / "release" / name) for name in ("libkgz.so", "libkgz.dylib", "kgz.dll")
    ]
    for path in filter(None, candidates):
        if Path(path).exists():
            loader = importlib.machinery.ExtensionFileLoader("kgz", path)
            spec = importlib.util.spec_from_file_location("kgz", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("kgz extension not found; build crates/python first")


def main():
    kgz = load_kgz()

    grid = kgz.Grid(96, 14.0)
    assert grid.points_per_axis == 96 and abs(grid.spacing - 28.0 / 96) < 1e-15

    data = kgz.InitialData.profile(grid, 1e-2, width=1.0)
    assert 0 < data.support_radius() < 10

    traj = kgz.evolve(data, 4.0, 0.1, snap_every=5, track_duhamel=True)
    times = traj.times()
    assert len(traj) == len(times) == 9 and abs(times[-1] - 4.0) < 1e-12

    e, n = traj.energies()
    assert all(v > 0 and math.isfinite(v) for v in e + n[1:])

    field = traj.field(0, "E")
    assert len(field) == 2 and len(field[0]) == 96 and len(field[0][0]) == 96

    direct = kgz.evolve_direct(data, 4.0, 0.1)
    gap = max(abs(a - b) for a, b in zip(traj.field(len(traj) - 1, "n")[0][40], direct.field(len(direct) - 1, "n")[0][40]))
    assert gap < 1e-12, gap

    t = [1.0 + 0.25 * k for k in range(60)]
    slope, (lo, hi), rms = kgz.fit_envelope(t, [2.0 / s for s in t], 2.0, 10.0)
    assert abs(slope + 1) < 1e-12 and lo <= slope <= hi and rms < 1e-12

    try:
        kgz.fit_envelope(t, [-1.0] * len(t), 2.0, 10.0)
    except ValueError:
        pass
    else:
        raise AssertionError("nonpositive values must be rejected")

    t_max, tail = traj.scatter_data(1.0)
    assert 0 < t_max <= 4.0 and math.isfinite(tail)

    passed, summary = kgz.run("points_per_axis = 96\nL = 14\nT = 3\ndt = 0.1\namplitude = 0\nscattering = false\n")
    assert passed and "skipped" in summary

    results = kgz.check(seed=1)
    assert results and all(ok for *_, ok in results), results

    print(f"kgz smoke test ok: {len(results)} checks, E energy {e[0]:.3e}")


if __name__ == "__main__":
    main()
