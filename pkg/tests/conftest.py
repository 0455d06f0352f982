import numpy as np
import pytest

from exgs.model import Camera, GaussianCloud, opacity_to_logit
from exgs.synth import look_at

SH_C0 = 0.28209479177387814


def dc_for(rgb):
    """DC coefficients that evaluate to ``rgb``."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def one_gaussian(mean=(0, 0, 5), scale=0.1, opacity=0.8, rgb=(1, 0, 0)):
    return GaussianCloud(
        means=[mean],
        scale_log=[[np.log(scale)] * 3],
        rotation=[[1, 0, 0, 0]],
        opacity_logit=[opacity_to_logit(opacity)],
        sh_dc=[dc_for(rgb)],
    )


def axis_camera(size=64, f=100.0):
    return Camera(size, size, f, f, size / 2, size / 2, np.eye(4))


def random_cloud(rng, n, spread=1.0, sh_degree=0, log_scale=(-3.5, -1.5), logit=(1.0, 2.0)):
    rest = rng.normal(0, 0.1, (n, 3 * ((sh_degree + 1) ** 2 - 1))) if sh_degree else None
    return GaussianCloud(
        means=rng.uniform(-spread, spread, (n, 3)),
        scale_log=rng.uniform(*log_scale, (n, 3)),
        rotation=rng.normal(size=(n, 4)),
        opacity_logit=rng.normal(logit[0], logit[1], n),
        sh_dc=rng.normal(0, 1.2, (n, 3)),
        sh_rest=rest,
        sh_degree=sh_degree,
    )


def random_camera(rng, size=64, distance=(3.0, 5.0)):
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    pos = d * rng.uniform(*distance)
    f = rng.uniform(0.6, 1.2) * size
    w = int(size)
    h = int(rng.integers(size // 2, size + 1))
    return Camera(w, h, f, f, rng.uniform(0.4, 0.6) * w, rng.uniform(0.4, 0.6) * h,
                  look_at(pos, rng.normal(0, 0.2, 3), up=(0, 1, 0)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
