"""Convergence of the discrete minimizer to the Barenblatt profile.

Besides the uniform mass grid used by the ``converge`` command this compares
two grids that refine towards the support edges, and both the
piecewise-constant density and its affine interpolant.
"""

import argparse

import numpy as np

from lagflow import MassGrid, ModelParams, reference_profile
from lagflow.equilibria import discrete_minimizer, lp_error
from lagflow.mass_mesh import affine_interpolant, density_from_state
from scipy import integrate


def affine_l2(s, ref):
    uh = affine_interpolant(s)
    r = ref.radius
    pts = np.union1d(uh.nodes, [-r, r])
    pts = pts[(pts >= -r) & (pts <= r)] if np.isfinite(r) else pts
    lo, hi = min(pts[0], uh.nodes[0]), max(pts[-1], uh.nodes[-1])
    pts = np.union1d(pts, [lo, hi])
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += integrate.quad(lambda x: (float(uh(x)) - float(ref(x))) ** 2, a, b, epsabs=1e-16)[0]
    return np.sqrt(total)


def grids(K, profile):
    k = np.arange(K + 1)
    yield "uniform", MassGrid.uniform_grid(K)
    yield "cosine", MassGrid.nonuniform_grid(0.5 * (1 - np.cos(np.pi * k / K)))
    x = np.linspace(-profile.radius, profile.radius, K + 1)
    xi = profile.cdf(x)
    xi[0], xi[-1] = 0.0, 1.0
    yield "equal-width", MassGrid.nonuniform_grid(xi)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Ks", default="25,50,100,200,400")
    args = ap.parse_args()
    Ks = [int(k) for k in args.Ks.split(",")]
    params = ModelParams(1.0, 5.0)
    ref = reference_profile(params)
    table: dict[str, list[tuple[float, float]]] = {}
    for K in Ks:
        for name, grid in grids(K, ref):
            s = discrete_minimizer(params, grid)
            table.setdefault(name, []).append((lp_error(density_from_state(s), ref), affine_l2(s, ref)))
    logK = np.log(Ks)
    print(f"{'grid':>12} {'L2 slope (cells)':>18} {'L2 slope (affine)':>18}")
    for name, vals in table.items():
        v = np.array(vals)
        s0 = np.polyfit(logK, np.log(v[:, 0]), 1)[0]
        s1 = np.polyfit(logK, np.log(v[:, 1]), 1)[0]
        print(f"{name:>12} {s0:>18.3f} {s1:>18.3f}")
