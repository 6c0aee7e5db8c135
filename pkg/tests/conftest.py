import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from cmfd.affine import AffineTransform
from cmfd.optimizer import ClusterState, MatchGeometry

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_ACCEPTANCE = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def textured_image(rng, h=128, w=128, smooth=1.5):
    """Smoothed noise scaled to [0, 255]: plenty of keypoints and no flat windows."""
    from scipy import ndimage

    z = ndimage.gaussian_filter(rng.normal(size=(h, w)), smooth)
    z = (z - z.min()) / (z.max() - z.min())
    return 255.0 * z


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_instance(rng, C, Np, K, p_invalid=0.2, p_inactive=0.0, weight="descriptor"):
    """A random geometry plus a random (normalised) state on it."""
    x = rng.uniform(0, 100, (Np, 2))
    y = rng.uniform(0, 100, (Np, K, 2))
    dd = rng.uniform(0.05, 2.0, (Np, K))
    valid = rng.random((Np, K)) >= p_invalid
    valid[:, 0] = True
    geom = MatchGeometry.from_arrays(x, y, dd, valid, pair_weight=weight)
    U = rng.uniform(0.05, 1.0, (C, Np))
    U /= U.sum(axis=0, keepdims=True)
    V = np.hstack([rng.uniform(0, 100, (C, 2)), np.ones((C, 1))])
    H = np.stack([random_affine(rng).matrix() for _ in range(C)])
    alpha = np.where(valid, rng.uniform(0.05, 1.0, (Np, K)), 0.0)
    alpha /= alpha.sum(axis=1, keepdims=True)
    active = rng.random(Np) >= p_inactive
    active[0] = True
    state = ClusterState(U=U, V=V, H=H, alpha=alpha, active=active)
    return geom, state


def random_affine(rng):
    return AffineTransform.from_params(rng.uniform(-math.pi, math.pi), rng.uniform(0.6, 1.5),
                                       rng.uniform(0.6, 1.5), rng.uniform(-30, 30),
                                       rng.uniform(-30, 30))


def planted_transform(theta_deg, sx, sy, src_center=(150.0, 150.0), dst_center=(350.0, 320.0)):
    """Affine with the given rotation/scales that carries ``src_center`` to ``dst_center``."""
    a = AffineTransform.from_params(math.radians(theta_deg), sx, sy)
    t = np.asarray(dst_center) - a.linear @ np.asarray(src_center)
    return AffineTransform(a.a11, a.a12, a.a21, a.a22, float(t[0]), float(t[1]))


def planted_matches(h, rng, n=24, K=3, src_center=(150.0, 150.0), spread=50.0):
    """Noiseless matched set: nearest neighbour is the exact image, the rest are decoys."""
    x = np.asarray(src_center) + rng.uniform(-spread, spread, (n, 2))
    y = rng.uniform(0, 512, (n, K, 2))
    y[:, 0] = h.apply(x)
    dd = rng.uniform(0.3, 1.0, (n, K))
    dd[:, 0] = rng.uniform(0.0, 0.1, n)
    return x, y, dd
