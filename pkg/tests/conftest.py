import numpy as np
import pytest

from p2p.tracks import BehaviorClass, LabelSet, Track


def make_track(xs, ys=None, w=10.0, h=10.0, fps=25.0, labels=None, track_id="t", start_frame=0):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.zeros_like(xs) if ys is None else np.asarray(ys, dtype=np.float64)
    return Track.from_arrays(track_id, np.stack([xs, ys], axis=1), (w, h), fps, labels, start_frame=start_frame)


def linear_track(n, v=(2.0, 0.0), p0=(100.0, 100.0), **kw):
    t = np.arange(n, dtype=np.float64)
    return make_track(p0[0] + v[0] * t, p0[1] + v[1] * t, **kw)


DRONE = LabelSet(is_drone=True, behavior=BehaviorClass.PASS_BY, intent=0.0)


@pytest.fixture
def drone_labels():
    return DRONE


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        status, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
