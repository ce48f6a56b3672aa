"""End-to-end acceptance checks, one group of tests per criterion.

A summary line per criterion is printed at the end of the session (see
``pytest_terminal_summary`` in conftest).
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import sech2_pulse
from skewpulse.evolve import evolve, smooth_perturbation
from skewpulse.hamiltonian import HamiltonianFamily, asymptotic_split, evans_gap, integrate_unstable
from skewpulse.index import criterion_integral, scan_tau, spectral_flow_F, verdict
from skewpulse.model import build_scalar_bistable, check_hypotheses
from skewpulse.pulse import profile_quadrature, solve_pulse
from skewpulse.spectrum import discretize_L, eigen_report, spectrum_pipeline
from skewpulse.symplectic import (
    J,
    SampledPath,
    hormander_index,
    lambda_R,
    maslov_index_pair,
    principal_sines,
    random_lagrangian,
    random_symplectic,
    triple_index,
    triple_index_via_transversal,
)

pytestmark = pytest.mark.acceptance

FIXTURES = ["scalar", "fhn_a_low", "fhn_a_high", "fhn_b_low", "wide_low", "wide_high"]
FHN_FIXTURES = FIXTURES[1:]


@pytest.fixture(scope="module")
def analysed(request):
    """Per-fixture tau scan, spectral flow and spectrum, computed once."""
    cache = {}

    def get(name):
        if name not in cache:
            model, prof = request.getfixturevalue(name)
            scan = scan_tau(model, prof)
            sf, sf_recs = spectral_flow_F(model, prof)
            spec = spectrum_pipeline(model, prof)
            cache[name] = dict(model=model, profile=prof, scan=scan, sf=sf, sf_recs=sf_recs, spec=spec)
        return cache[name]

    return get


# ---------------------------------------------------------------------------
# 1. scalar oracle


def test_criterion_1_scalar_oracle():
    start = time.perf_counter()
    model = build_scalar_bistable()
    prof = solve_pulse(model, half_width=30.0)
    assert np.max(np.abs(prof.w[:, 0] - sech2_pulse(prof.grid))) < 1e-8

    hyp = check_hypotheses(model, prof)
    op = discretize_L(model, prof, np.linspace(-30.0, 30.0, 2001))
    rep = eigen_report(op, model, prof, hyp.lambda_hat)
    for target in (1.25, 0.0, -0.75):
        assert np.min(np.abs(rep.eigenvalues - target)) < 2e-3
    assert rep.n_plus == 1

    assert scan_tau(model, prof).i_w0 == 1
    assert spectral_flow_F(model, prof, lambda_max=hyp.lambda_hat)[0] == 1

    w0 = prof.w + smooth_perturbation(prof.grid, 1, 1e-4, seed=1)
    run = evolve(model, w0, 0.01, 8.0, grid=prof.grid, reference=prof, snapshots=160)
    assert run.growth_rate == pytest.approx(1.25, rel=0.1)
    elapsed = time.perf_counter() - start
    print(f"criterion 1: growth rate {run.growth_rate:.4f}, {elapsed:.1f} s")
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 2. index equality chain


@pytest.mark.parametrize("name", FIXTURES)
def test_criterion_2_index_chain(analysed, name):
    res = analysed(name)
    assert res["scan"].i_w0 == res["sf"]
    spec = res["spec"]
    if spec.sufficiency_ok:
        assert spec.n_plus == res["scan"].i_w0
    print(f"criterion 2 [{name}]: i_w0={res['scan'].i_w0} sf={res['sf']} n_plus={spec.n_plus} "
          f"sufficiency={spec.sufficiency_ok}")


# ---------------------------------------------------------------------------
# 3. crossing positivity


@pytest.mark.parametrize("name", FIXTURES)
def test_criterion_3_positive_crossings(analysed, name):
    for rec in analysed(name)["scan"].crossings:
        assert min(rec.form_eigenvalues) > 0
        assert rec.signature == rec.intersection_dim


# ---------------------------------------------------------------------------
# 4. hyperbolicity and transversality at infinity


@pytest.mark.parametrize("name", FHN_FIXTURES)
def test_criterion_4_hyperbolic_and_transversal(request, name):
    model, prof = request.getfixturevalue(name)
    hyp = check_hypotheses(model, prof)
    fam = HamiltonianFamily(model, prof)
    lr = lambda_R(model.n, model.j)
    worst_gap, worst_angle = np.inf, np.inf
    for lam in (0.0, hyp.lambda_hat / 2, hyp.lambda_hat):
        for eps in (0.0, hyp.epsilon_max):
            vp, vm, gap = asymptotic_split(fam.at(lam=lam, eps=eps))
            angle = min(np.arcsin(min(1.0, principal_sines(lr, v)[0])) for v in (vp, vm))
            worst_gap, worst_angle = min(worst_gap, gap), min(worst_angle, angle)
    assert worst_gap > 1e-6
    assert worst_angle > 1e-3


# ---------------------------------------------------------------------------
# 5. criterion threshold on the wide FHN fixture


def test_criterion_5_above_tau0_unstable(analysed):
    res = analysed("wide_high")
    model, prof, spec = res["model"], res["profile"], res["spec"]
    crit = criterion_integral(model, prof)
    v = verdict(res["scan"].i_w0, crit.value, spec.sufficiency_ok, spec.zero_simple)
    assert crit.value < 0
    assert v.kind == "Unstable"
    assert len(spec.real_positive()) > 0 and max(spec.real_positive()) > spec.re_tol
    start = prof.w + smooth_perturbation(prof.grid, 2, 1e-4, seed=0)
    run = evolve(model, start, 0.01, 1200.0, grid=prof.grid, reference=prof, snapshots=300)
    print(f"criterion 5 [tau = 1.5 tau0]: eigenvalues {sorted(spec.real_positive())[::-1]}, growth {run.growth_rate:.4g}")
    assert run.growth_rate > 0


def test_criterion_5_below_tau0_stable(analysed):
    res = analysed("wide_low")
    model, prof, spec = res["model"], res["profile"], res["spec"]
    assert model.params["tau"] < model.params["gamma"] ** 2
    assert res["scan"].i_w0 == 0
    crit = criterion_integral(model, prof)
    v = verdict(res["scan"].i_w0, crit.value, spec.sufficiency_ok, spec.zero_simple)
    assert v.kind == "StableSufficient"
    start = prof.w + smooth_perturbation(prof.grid, 2, 1e-4, seed=0)
    run = evolve(model, start, 0.01, 400.0, grid=prof.grid, reference=prof, snapshots=200)
    print(f"criterion 5 [tau = 0.5 tau0]: growth on second half {run.growth_rate:.4g}")
    assert run.growth_rate < 0


# ---------------------------------------------------------------------------
# 6. symplectic toolkit


def _flow(l0, s):
    gen = J(l0.shape[1]) @ s
    return lambda t: expm(t * gen) @ l0


def _random_flow(rng, n):
    l0 = random_lagrangian(n, rng).columns
    s = rng.standard_normal((2 * n, 2 * n))
    return l0, _flow(l0, s + s.T)


def _transversal_at_ends(path, v, a, b, margin=1e-3):
    return min(principal_sines(path(a), v)[0], principal_sines(path(b), v)[0]) > margin


def test_criterion_6_symplectic_suite():
    start = time.perf_counter()
    ts = np.linspace(0.0, 1.0, 41)

    # isotropy of random frames and of frames transported by a Hamiltonian flow
    rng = np.random.default_rng(100)
    for n in (1, 2, 3):
        for _ in range(20):
            assert random_lagrangian(n, rng).isotropy_defect <= 1e-10
    path = integrate_unstable(HamiltonianFamily(*_scalar_pair(), lam=0.3))
    assert path.worst_isotropy <= 1e-10

    done = 0
    seed = 0
    while done < 50:
        rng = np.random.default_rng(1000 + seed)
        seed += 1
        n = 1 + seed % 2
        l0, flow = _random_flow(rng, n)
        v = random_lagrangian(n, rng).columns
        if not _transversal_at_ends(flow, v, 0.0, 1.0):
            continue
        frames = [flow(t) for t in ts]
        base = SampledPath(ts, frames)
        index = maslov_index_pair(v, base, ts, adaptive=True)[0]
        # homotopy: nudge one interior sample
        k = int(rng.integers(1, ts.size - 1))
        nudged = list(frames)
        nudged[k] = random_symplectic(n, rng, scale=1e-3) @ frames[k]
        moved = SampledPath(ts, nudged)
        assert maslov_index_pair(v, moved, ts, adaptive=True)[0] == index
        # reversal
        back = SampledPath(ts, frames[::-1])
        assert maslov_index_pair(v, back, ts, adaptive=True)[0] == -index
        # concatenation at a transversal junction
        cut = next(c for c in ts[5:-5] if principal_sines(base(c), v)[0] > 1e-3)
        left = maslov_index_pair(v, base, ts[ts <= cut], adaptive=True)[0]
        right = maslov_index_pair(v, base, ts[ts >= cut], adaptive=True)[0]
        assert left + right == index
        done += 1

    # triple index: two formulas, 200 triples
    rng = np.random.default_rng(7)
    for k in range(200):
        n = 1 + k % 2
        a, b, c = (random_lagrangian(n, rng) for _ in range(3))
        assert triple_index(a, b, c) == triple_index_via_transversal(a, b, c)

    # Hormander index: two formulas (checked inside) and the path-difference identity
    for k in range(50):
        rng = np.random.default_rng(5000 + k)
        n = 1 + k % 2
        l0, flow = _random_flow(rng, n)
        v0, v1 = random_lagrangian(n, rng), random_lagrangian(n, rng)
        grid = np.linspace(0.0, 1.0, 201)
        diff = (maslov_index_pair(v1, flow, grid, adaptive=True)[0]
                - maslov_index_pair(v0, flow, grid, adaptive=True)[0])
        assert hormander_index(l0, flow(1.0), v0, v1) == diff

    elapsed = time.perf_counter() - start
    print(f"criterion 6: {elapsed:.1f} s")
    assert elapsed < 120.0


def _scalar_pair():
    model = build_scalar_bistable()
    return model, solve_pulse(model, half_width=30.0)


# ---------------------------------------------------------------------------
# 7. spectral-flow properties


@pytest.mark.parametrize("name", ["scalar", "fhn_a_low"])
def test_criterion_7_additivity_and_bound(analysed, name):
    res = analysed(name)
    model, prof = res["model"], res["profile"]
    lam_hat = check_hypotheses(model, prof).lambda_hat
    cut = 0.37 * lam_hat
    left, _ = spectral_flow_F(model, prof, lambda_max=cut)
    right, _ = spectral_flow_F(model, prof, lambda_min=cut, lambda_max=lam_hat)
    assert left + right == res["sf"]
    assert abs(res["sf"]) <= sum(r.intersection_dim for r in res["sf_recs"])


@pytest.mark.parametrize("name", ["scalar", "wide_low"])
def test_criterion_7_epsilon_invariance(analysed, name):
    res = analysed(name)
    model, prof = res["model"], res["profile"]
    eps_max = check_hypotheses(model, prof).epsilon_max
    for eps in (eps_max / 2, eps_max):
        assert spectral_flow_F(model, prof, eps=eps)[0] == res["sf"]


# ---------------------------------------------------------------------------
# 8. epsilon perturbation of the zero crossing


@pytest.mark.parametrize("name", ["scalar", "fhn_a_low", "wide_low"])
def test_criterion_8_translation_kernel_broken(request, name):
    model, prof = request.getfixturevalue(name)
    fam = HamiltonianFamily(model, prof)
    eps_max = check_hypotheses(model, prof).epsilon_max
    assert evans_gap(fam) < 1e-4
    assert evans_gap(fam.at(eps=eps_max)) > 1e-3


def _predicted_shift(model, prof, eps):
    # first order: the zero eigenvalue moves to -eps |w0'|^2 / <QM w0', w0'>
    l2 = profile_quadrature(prof, np.ones(model.n), np.ones(model.n)).value
    qm = profile_quadrature(prof, model.m, model.q).value
    return -eps * l2 / qm


@pytest.mark.parametrize("name", ["scalar", "fhn_a_low"])
def test_criterion_8_zero_crossing_leaves_downward(request, name):
    model, prof = request.getfixturevalue(name)
    eps = 1e-4
    predicted = _predicted_shift(model, prof, eps)
    assert predicted < 0
    # the crossing has left [0, 10 |predicted|] through lambda = 0
    sf, recs = spectral_flow_F(model, prof, eps=eps, lambda_max=10 * abs(predicted))
    assert sf == 0 and recs == []


def test_criterion_8_zero_crossing_moves_up_above_tau0(fhn_a_high):
    model, prof = fhn_a_high
    eps = 1e-4
    predicted = _predicted_shift(model, prof, eps)
    assert predicted > 0
    _, recs = spectral_flow_F(model, prof, eps=eps, lambda_max=10 * predicted)
    locs = [r.location for r in recs if r.location > 0]
    assert min(locs, key=lambda x: abs(x - predicted)) == pytest.approx(predicted, rel=0.02)
    assert not any(r.location == 0.0 for r in recs)
