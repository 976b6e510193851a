"""Smoke test for the kinetic_gibbs extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
then run:
    python python/smoke_test.py
"""

import math

import kinetic_gibbs as kg


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    p = kg.ProblemParams.reference()
    report = kg.ConstantsReport(p, 1e-6)
    assert close(report.contraction_rate, 0.2, 1e-12)
    assert close(report["K3"], 3.4, 1e-12)
    assert close(report.eta_max, 7.509e-6, 1e-3)
    assert close(report.gibbs_gap, 0.8466, 1e-4)
    assert "c_dot" in report.as_dict()
    p.beta = 2.0
    assert kg.ConstantsReport(p, 1e-6).gibbs_gap != report.gibbs_gap

    model = kg.Model.quadratic(kappa=1.0, dim=1)
    assert model.gradient([2.0]) == [2.0]
    run = kg.sample(model, eta=0.05, steps=4000, n_chains=256, seed=3, keep_snapshots=True)
    assert run.n_chains == 256 and not run.diverged
    mean, cov = run.pooled_moments()
    w2 = kg.w2_gaussians(mean, cov, [0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    assert w2 < 0.1, w2
    again = kg.sample(model, eta=0.05, steps=4000, n_chains=256, seed=3)
    assert again.terminal == run.terminal
    m2 = run.lyapunov_moments(report.contraction_rate)
    assert len(m2) == len(run.record_iters) and all(math.isfinite(x) for x in m2)

    x = [[0.0], [1.0], [3.0]]
    y = [[2.5], [0.2], [1.1]]
    d, perm = kg.w2_empirical(x, y)
    assert perm == [1, 2, 0]
    assert close(d, math.sqrt((0.2**2 + 0.1**2 + 0.5**2) / 3), 1e-12)

    m, s = kg.ou_moments(1.0, 2.0, 1.0, 50.0, [1.0, -1.0], [[0.0, 0.0], [0.0, 0.0]])
    assert max(abs(v) for v in m) < 1e-12
    assert close(s[0][0], 1.0, 1e-9) and close(s[1][1], 1.0, 1e-9)

    logistic = kg.Model.logistic([[1.0, 0.0], [0.0, 1.0], [-1.0, 1.0]], [1, 0, 1], [0.0, 0.0], 3)
    assert logistic.dim == 2 and logistic.potential([0.0, 0.0]) > 0.0

    try:
        kg.Model.quadratic(kappa=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative curvature accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
