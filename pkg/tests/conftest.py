import numpy as np
import pytest

from regbench.bench.synthetic import attach_synthetic_frames, make_synthetic_pair
from regbench.cloud import PointCloud, subsample
from regbench.correspondence import CorrespondenceSet, synthesize_correspondences
from regbench.estimators import EstimationContext
from regbench.geometry import RigidTransform, random_rotation


# one line per acceptance criterion, echoed in the terminal summary
VERDICTS: dict[int, str] = {}


def record_verdict(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    VERDICTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[number])


@pytest.fixture(scope="session")
def pair():
    return make_synthetic_pair(seed=1)


@pytest.fixture(scope="session")
def mr(pair):
    return pair.scene.mesh_resolution


def make_context(pair, n=50, pcc=1.0, seed=0, frames=True, **kw):
    """Synthetic correspondence set with subsamples, ready for any estimator."""
    mr = pair.scene.mesh_resolution
    cs = synthesize_correspondences(pair.model, pair.scene, pair.gt, n, pcc, seed=seed)
    if frames:
        cs = attach_synthetic_frames(cs, pair.gt, 2 * mr, seed)
    ms = subsample(pair.model, 100, seed)
    ss = subsample(pair.scene, 8000, seed + 1)
    return EstimationContext(cs, mr, ms, ss, rng_seed=seed, **kw)


def random_transform(rng, scale=10.0):
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))


def correspondences_from(model_pts, scene_pts):
    n = len(model_pts)
    return CorrespondenceSet(np.arange(n), np.arange(n), model_pts, scene_pts)


def blob(rng, n=500, scale=10.0):
    return PointCloud(rng.uniform(-scale, scale, size=(n, 3)))
