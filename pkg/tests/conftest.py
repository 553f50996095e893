import pytest

import codicast as cc


@pytest.fixture
def small_series():
    return cc.make_synthetic(8, 16, 2, 10, seed=123)


@pytest.fixture
def norm_stats(small_series):
    return cc.fit_norm(small_series)


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """The desk-scale experiment suite (5 seeds + one N=5 sweep run),
    trained once per session in parallel worker processes."""
    from desk import run_desk_experiments
    return run_desk_experiments(tmp_path_factory.mktemp("desk"))


def fd_gradient_check(make_loss, tensors, rng, eps=1e-5, coords_per_tensor=25,
                      tol=1e-4, min_margin=0.0):
    """Compare analytic gradients against central finite differences.

    Relative error uses max(|analytic|, |fd|, 1e-6) as denominator to
    avoid blowing up on near-zero gradients.  Returns the worst error.
    """
    for t in tensors:
        t.zero_grad()
    loss = make_loss()
    loss.backward()
    worst = 0.0
    checked = 0
    for t in tensors:
        grad = t.grad
        assert grad is not None, "tensor received no gradient"
        flat = t.data.reshape(-1)
        count = min(coords_per_tensor, flat.size)
        idx = rng.choice(flat.size, size=count, replace=False)
        for i in idx:
            if min_margin and abs(flat[i]) < min_margin:
                continue
            orig = flat[i]
            flat[i] = orig + eps
            up = make_loss().item()
            flat[i] = orig - eps
            down = make_loss().item()
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            analytic = grad.reshape(-1)[i]
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
            worst = max(worst, rel)
            checked += 1
    assert checked > 0
    assert worst <= tol, f"worst relative gradient error {worst:.3e} > {tol:.0e}"
    return worst
