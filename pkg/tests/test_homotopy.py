import numpy as np
import pytest

from flowtop.errors import BeyondInjectivityRadius, ResolutionTooCoarse
from flowtop.fields import LinearContraction, SphereGradientFrame, TorusTranslation
from flowtop.flow import FlowRealization
from flowtop.homotopy import (chain_displacements_ok, chain_times, export_homotopies_csv, geodesic_homotopy,
                              null_homotopy_witness, push_map, stepwise_homotopy_chain, winding_batch,
                              winding_number, witness_batch)
from flowtop.manifolds import Euclidean, FlatTorus, Sphere
from flowtop.spheremaps import make_fixture

T2 = FlatTorus.unit(2)


def test_constant_homotopy():
    s = make_fixture("circle", Euclidean(2), 32, radius_length=1.0)
    h = geodesic_homotopy(s, s, 5)
    assert h.grid.shape == (32, 6, 2)
    assert np.array_equal(h.grid, np.repeat(s.image[:, None], 6, axis=1))


def test_endpoints_exact_and_grid_on_geodesics():
    S = Sphere(2)
    a = make_fixture("circle", S, 32, radius_length=0.5)
    R = FlowRealization.sample(SphereGradientFrame(S), 0.2, 0.01, 0, 0)
    b = push_map(a, R, 0.2)
    h = geodesic_homotopy(a, b, 4)
    assert np.array_equal(h.start(), a.image) and np.array_equal(h.end(), b.image)
    d = S.dist(a.image, b.image)
    for j in range(5):
        assert np.allclose(S.dist(a.image, h.grid[:, j]), j / 4 * d, atol=1e-9)


def test_refinement_keeps_grid_points():
    S = Sphere(2)
    a = make_fixture("circle", S, 16, radius_length=0.4)
    b = a.with_image(S.exp(a.image, S.project_tangent(a.image, np.array([0.1, 0.2, 0.0]))))
    coarse = geodesic_homotopy(a, b, 3)
    fine = geodesic_homotopy(a, b, 6)
    assert np.max(np.abs(fine.grid[:, ::2] - coarse.grid)) <= 1e-12


def test_antipodal_displacement_refused():
    s = make_fixture("identity_sphere", Sphere(2), 1)
    with pytest.raises(BeyondInjectivityRadius) as info:
        geodesic_homotopy(s, s.with_image(-s.image), 4)
    assert info.value.index == 0


def test_too_coarse_parameter_grid():
    s = make_fixture("circle", Euclidean(2), 16, radius_length=0.1)
    far = s.with_image(s.image + np.array([0.95, 0.0]))
    with pytest.raises(ResolutionTooCoarse):
        geodesic_homotopy(s, far, 1, r_inj=1.0)


def test_chain_times():
    assert chain_times(0.0, 0.1) == [0.0]
    assert np.allclose(chain_times(0.35, 0.1), [0, 0.1, 0.2, 0.3, 0.35])
    assert np.allclose(chain_times(0.3, 0.1), [0, 0.1, 0.2, 0.3])


def test_chain_shares_boundaries_and_lands_on_flow():
    loop = make_fixture("torus_winding", T2, 64)
    R = FlowRealization.sample(TorusTranslation(T2, 0.3), 1.0, 0.01, 2, 0)
    ch = stepwise_homotopy_chain(loop, R, 1.0, 0.1)
    assert ch.ok and len(ch.homotopies) == 10
    for a, b in zip(ch.homotopies, ch.homotopies[1:]):
        assert np.array_equal(a.end(), b.start())
    assert np.array_equal(ch.homotopies[0].start(), loop.image)
    assert np.allclose(ch.homotopies[-1].end(), push_map(loop, R, 1.0).image, atol=1e-12)


def test_chain_rejects_small_delta():
    loop = make_fixture("torus_winding", T2, 64)
    R = FlowRealization.sample(TorusTranslation(T2, 0.3), 1.0, 0.01, 2, 0)
    with pytest.raises(ValueError):
        stepwise_homotopy_chain(loop, R, 1.0, 0.05)


def test_chain_break_is_reported():
    s = make_fixture("circle", Euclidean(2), 16, radius_length=0.01)
    R = FlowRealization.sample(LinearContraction(2, 0.0, 1.0), 1.0, 0.01, 2, 0)
    ch = stepwise_homotopy_chain(s, R, 1.0, 0.5, r_inj=0.05)
    assert not ch.ok and ch.broken_step == 0 and ch.broken_vertex == 0 and ch.homotopies == []


def test_vectorized_chain_matches_loop():
    M = Euclidean(2)
    imgs = np.zeros((3, 4, 5, 2))
    imgs[1, 2:, 0, 0] = 2.0
    ok, first = chain_displacements_ok(M, imgs, 1.0)
    assert list(ok) == [True, False, True] and list(first) == [-1, 1, -1]


def test_winding_numbers():
    loop = make_fixture("torus_winding", T2, 64)
    assert list(winding_number(loop)) == [1, 0]
    diag = make_fixture("torus_winding", T2, 64, winding=[1, 1])
    assert list(winding_number(diag)) == [1, 1]
    small = make_fixture("circle", T2, 32, radius_length=0.1)
    assert list(winding_number(small)) == [0, 0]
    R = FlowRealization.sample(TorusTranslation(T2, 0.5), 2.0, 0.01, 5, 0)
    assert list(winding_number(push_map(loop, R, 2.0))) == [1, 0]


def test_winding_needs_fine_loop():
    coarse = make_fixture("torus_winding", T2, 2)
    with pytest.raises(ResolutionTooCoarse):
        winding_batch(T2, coarse.image[None])


def test_null_homotopy_witness():
    small = make_fixture("circle", T2, 32, radius_length=0.05)
    w = null_homotopy_witness(small, small.image)
    assert w is not None and w.radius <= 0.1 + 1e-12
    assert np.max(T2.dist(small.image, w.center)) <= w.radius + 1e-12
    loop = make_fixture("torus_winding", T2, 64)
    assert null_homotopy_witness(loop, loop.image) is None
    found, _, radius, diam = witness_batch(T2, np.stack([small.image, small.image]), 0.5)
    assert found.all() and np.all(radius <= diam)


def test_export_csv(tmp_path):
    s = make_fixture("circle", Euclidean(2), 8, radius_length=1.0)
    R = FlowRealization.sample(LinearContraction(2, 1.0, 0.1), 0.2, 0.01, 0, 0)
    ch = stepwise_homotopy_chain(s, R, 0.2, 0.1, S=2)
    path = tmp_path / "h.csv"
    export_homotopies_csv(path, ch.homotopies)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "trial,step,vertex,s_index,x0,x1"
    assert len(rows) == 1 + 2 * 8 * 3
