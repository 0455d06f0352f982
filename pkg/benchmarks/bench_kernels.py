"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py --count 200000 --size 512
"""

import argparse
import time

import numpy as np

from exgs.rasterizer import RenderConfig, render
from exgs.restore import RestoreRequest, inpaint_baseline
from exgs.synth import SynthSpec, make_orbit_cameras, make_scene


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--count", type=int, default=200_000)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    cloud = make_scene(SynthSpec("textured-room", args.count, seed=0, extent=4.0, sh_degree=0))
    cam = make_orbit_cameras(1, 1.0, width=args.size, height=args.size, elevation=0.2)[0]
    out = render(cloud, cam)
    hole = out.accum_opacity.copy()
    hole[args.size // 3: args.size // 2, args.size // 3: args.size // 2] = 0.0
    req = RestoreRequest(out.color, hole, iterations=200)

    cases = {
        "render": lambda b: render(cloud, cam, RenderConfig(backend=b), workers=args.workers),
        "score": lambda b: render(cloud, cam, RenderConfig(t_min=1e-4, tally="literal", backend=b)),
        "restore": lambda b: inpaint_baseline(req, backend=b),
    }
    print(f"{args.count} Gaussians, {args.size}x{args.size}, best of {args.repeat}")
    print(f"{'kernel':<10}{'numba s':>10}{'numpy s':>10}{'speedup':>10}")
    for name, fn in cases.items():
        fn("numba")  # compile
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        print(f"{name:<10}{t_nb:>10.3f}{t_np:>10.3f}{t_np / t_nb:>9.1f}x")
    a = render(cloud, cam, RenderConfig(backend="numba")).color
    b = render(cloud, cam, RenderConfig(backend="numpy")).color
    print(f"max |numba - numpy| render difference: {np.abs(a - b).max():.2e}")


if __name__ == "__main__":
    main()
