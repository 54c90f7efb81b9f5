"""Time the numba kernels against their numpy fallbacks on a study-sized mesh.

    python3 benchmarks/bench_kernels.py [--epsilon 1/16] [--repeat 5]

Both variants are imported directly, so the env flag is not needed here.
"""
import argparse
import time
from fractions import Fraction

import numpy as np

from signorini_hom import kernels
from signorini_hom.assembly import CoefficientField, InterfaceCoefficient, assemble
from signorini_hom.geometry import CellGeometry, build_epsilon_mesh


def best_of(fn, repeat):
    fn()  # warm-up, includes numba compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--epsilon", default="1/16")
    p.add_argument("--resolution", type=int, default=8)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()

    mesh = build_epsilon_mesh(CellGeometry(), float(Fraction(args.epsilon)), args.resolution)
    V, T = mesh.vertices, mesh.triangles
    areas, grads = kernels.p1_gradients_numpy(V, T)
    coeffs = np.broadcast_to(np.eye(2), (len(T), 2, 2)).copy()
    system = assemble(mesh, CoefficientField.isotropic(1.0, 2.0), InterfaceCoefficient(1.0), -1.0,
                      lambda x, y: np.sin(2 * np.pi * x))
    M, F, free = system.reduced()
    M = M.tocsr()
    diag = M.diagonal()
    constrained = np.zeros(len(F), np.bool_)
    constrained[::7] = True
    x0 = np.zeros(len(F))
    widx = (np.arange(len(T)) % 16).astype(np.int64)
    vals = np.random.default_rng(0).normal(size=(len(T), 2))

    cases = {
        "p1_gradients": lambda k: (lambda: getattr(kernels, f"p1_gradients_{k}")(V, T)),
        "element_stiffness": lambda k: (lambda: getattr(kernels, f"element_stiffness_{k}")(areas, grads, coeffs)),
        "psor_sweep": lambda k: (lambda: getattr(kernels, f"psor_sweep_{k}")(
            M.indptr, M.indices, M.data, diag, F, x0.copy(), constrained, 1.5)),
        "window_sums": lambda k: (lambda: getattr(kernels, f"window_sums_{k}")(widx, vals, 16)),
    }
    print(f"mesh: {mesh.n_vertices} nodes, {len(T)} triangles, {len(F)} free dofs")
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, make in cases.items():
        t_np = best_of(make("numpy"), args.repeat)
        t_nb = best_of(make("numba"), args.repeat)
        print(f"{name:<20}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
