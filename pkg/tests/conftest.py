import numpy as np
import pytest

from stpool.representation import Scene, Track


def central_diff(f, tensor, flat_index, h=1e-5):
    """Central finite difference of scalar-valued f() wrt one tensor entry."""
    old = tensor.data.flat[flat_index]
    tensor.data.flat[flat_index] = old + h
    up = f()
    tensor.data.flat[flat_index] = old - h
    down = f()
    tensor.data.flat[flat_index] = old
    return (up - down) / (2.0 * h)


def assert_grads_match(f, tensors, rtol=1e-4, atol=1e-6, h=1e-5, max_entries=64, seed=0):
    """Compare reverse-mode gradients against central differences.

    ``f`` must run a fresh forward/backward pass, populate ``tensor.grad``,
    and return the scalar loss value. Entries are subsampled for large
    tensors.
    """
    rng = np.random.default_rng(seed)
    f()
    snapshots = []
    for t in tensors:
        assert t.grad is not None, "gradient missing after backward"
        snapshots.append(t.grad.copy())
    for t, grad in zip(tensors, snapshots):
        n = t.data.size
        idx = np.arange(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
        for i in idx:
            expected = central_diff(f, t, i, h=h)
            got = grad.flat[i]
            err = abs(got - expected)
            tol = atol + rtol * max(abs(expected), abs(got))
            assert err <= tol, (
                f"gradient mismatch at flat index {i}: reverse-mode {got}, "
                f"central difference {expected} (err {err}, tol {tol})"
            )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_scene(
    target_positions,
    target_times=None,
    neighbors=(),
    future_positions=None,
    future_times=None,
    target_type="vehicle",
    truth=None,
):
    """Small scene builder for tests.

    ``neighbors`` is a sequence of (agent_type, times, positions) triples;
    the target gets agent id 0.
    """
    target_positions = np.asarray(target_positions, dtype=float)
    n = target_positions.shape[0]
    if target_times is None:
        target_times = 0.5 * np.arange(n)
    target_times = np.asarray(target_times, dtype=float)
    if future_positions is None:
        v = target_positions[-1] - target_positions[-2]
        dt = target_times[-1] - target_times[-2]
        future_positions = target_positions[-1] + np.arange(1, 4)[:, None] * v
        future_times = target_times[-1] + np.arange(1, 4) * dt
    future_positions = np.asarray(future_positions, dtype=float)
    if future_times is None:
        future_times = target_times[-1] + 0.5 * np.arange(1, future_positions.shape[0] + 1)
    tracks = {0: Track(0, target_type, target_times, target_positions)}
    for i, (atype, times, positions) in enumerate(neighbors, start=1):
        tracks[i] = Track(i, atype, np.asarray(times, float), np.asarray(positions, float))
    return Scene(
        target_id=0,
        tracks=tracks,
        future_times=np.asarray(future_times, float),
        future_positions=future_positions,
        prediction_time=float(target_times[-1]),
        truth=truth or {},
    )
