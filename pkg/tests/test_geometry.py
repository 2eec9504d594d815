import numpy as np
import pytest

from conftest import MID_BOX, feasible_designs, regular_designs
from shipgen.designspace import HULL_SPACE, InfeasibleDesignError, check_constraints, sample_uniform
from shipgen.geometry.curvature import gaussian_curvature, hull_curvature
from shipgen.geometry.hydrostatics import HydroRecord, hydrostatic_table, hydrostatics
from shipgen.geometry.maxbox import containment_margin, grid_search, maxbox
from shipgen.geometry.mesh import (
    gen_mesh, is_closed, mesh_feasibility, point_cloud_csv, read_stl, to_stl,
)
from shipgen.geometry.surface import half_breadth

# ---------------------------------------------------------------- surface


def test_half_breadth_examples():
    v = MID_BOX
    assert half_breadth(v, 0.5, 1.0) == pytest.approx(v[0] * v[1])
    for h in (0.3, 0.7, 1.0):
        assert half_breadth(v, 1.0, h) == 0.0
    # hand evaluation at xi = 0.9 in the bow taper, zeta = 0.25
    loa, bd, lb, pb, bk, zk, pc, rb = v[0], v[1], v[3], v[5], v[7], v[8], v[9], v[10]
    u = 1.0 - (1.0 - 0.9) / lb
    b = 1.0 - u ** pb
    k = rb * u * u
    s = bk + (1.0 - bk) * (0.25 / zk) ** pc
    h = k + 0.25 * (1.0 - k)
    assert half_breadth(v, 0.9, h) == pytest.approx(loa * bd * b * s, rel=1e-12)
    # below the local keel there is no hull
    assert half_breadth(v, 0.9, 0.5 * k) == 0.0


def test_half_breadth_rejects_bad_input():
    v = MID_BOX.copy()
    v[7] = -0.1
    with pytest.raises(InfeasibleDesignError):
        half_breadth(v, 0.5, 0.5)
    with pytest.raises(ValueError):
        half_breadth(MID_BOX, 1.2, 0.5)


# ---------------------------------------------------------------- mesh


def test_mesh_is_closed_genus_zero_and_deterministic():
    v = feasible_designs(1, seed=3)[0]
    m = gen_mesh(v, 32, 32)
    assert m.euler_characteristic() == 2
    assert is_closed(m) and mesh_feasibility(m)
    again = gen_mesh(v, 32, 32)
    assert np.array_equal(m.vertices, again.vertices) and np.array_equal(m.faces, again.faces)


def test_mesh_mirror_symmetry():
    v = feasible_designs(1, seed=4)[0]
    V = gen_mesh(v, 24, 16).vertices
    mirrored = V * np.array([1.0, -1.0, 1.0]) + 0.0
    key = lambda a: a[np.lexsort(a.T[::-1])]
    assert np.array_equal(key(V), key(mirrored))


def test_closed_at_every_resolution():
    for v in feasible_designs(6, seed=5):
        for n in (16, 23):
            m = gen_mesh(v, n, n)
            assert is_closed(m) and m.euler_characteristic() == 2


def test_removing_a_face_opens_the_mesh():
    m = gen_mesh(feasible_designs(1)[0], 16, 16)
    assert not mesh_feasibility(m.without_face(7))


def test_mesh_volume_matches_hydrostatics():
    for v in feasible_designs(3, seed=6):
        vol = gen_mesh(v, 128, 128).volume() / v[0] ** 3
        ref = hydrostatics(v, 1.0).volume
        assert abs(vol / ref - 1.0) < 0.01


def test_mesh_requires_feasible_and_resolution():
    v = MID_BOX.copy()
    v[3] = v[4] = 0.6
    with pytest.raises(InfeasibleDesignError):
        gen_mesh(v, 16, 16)
    with pytest.raises(ValueError):
        gen_mesh(MID_BOX, 4, 16)


def test_algebraic_and_mesh_checks_agree_report():
    p = sample_uniform(9, 3000)
    feas = p[HULL_SPACE.feasible(p)][:100]
    inf = p[~HULL_SPACE.feasible(p)][:100]
    ok_f = np.mean([mesh_feasibility(gen_mesh(v, 16, 16, check=False)) for v in feas])
    ok_i = np.mean([mesh_feasibility(gen_mesh(v, 16, 16, check=False)) for v in inf])
    print(f"mesh-valid: feasible {ok_f:.3f}, infeasible {ok_i:.3f}")
    assert ok_f >= 0.99
    # the algebraic set is conservative: some infeasible vectors still mesh cleanly
    assert ok_i < 1.0


def test_stl_and_point_cloud_export():
    m = gen_mesh(feasible_designs(1)[0], 16, 16)
    data = to_stl(m)
    assert len(data) == 84 + 50 * len(m.faces)
    normals, tri = read_stl(data)
    np.testing.assert_allclose(tri, m.vertices[m.faces], rtol=1e-6, atol=1e-5 * m.vertices.max())
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-5)
    lines = point_cloud_csv(m).splitlines()
    assert lines[0] == "x,y,z" and len(lines) == len(m.vertices) + 1


# ---------------------------------------------------------------- hydrostatics


def test_volume_inside_bounding_box():
    for v in feasible_designs(50, seed=7):
        r = hydrostatics(v, 1.0)
        assert 0.0 < r.volume <= 2.0 * v[1] * v[2]
        assert r.awp <= 2.0 * v[1] and r.lwl <= 1.0


def test_hydrostatics_scale_invariant():
    for v in feasible_designs(5, seed=8):
        a, b = v.copy(), v.copy()
        a[0], b[0] = 10.0, 400.0
        for d in (0.5, 1.0):
            ra, rb = hydrostatics(a, d).as_dict(), hydrostatics(b, d).as_dict()
            for k in ra:
                assert ra[k] == pytest.approx(rb[k], rel=1e-12, abs=1e-15)


def test_monotone_in_draft():
    for v in feasible_designs(20, seed=9):
        tab = hydrostatic_table(v, 1.0)
        for name in ("volume", "wetted", "awp", "i_t", "draft"):
            vals = np.array([getattr(r, name) for r in tab])
            assert np.all(np.diff(vals) >= -1e-12 * vals.max()), name


def test_marks_refinement():
    for v in feasible_designs(30, seed=10):
        coarse = hydrostatics(v, 1.0).volume
        fine = hydrostatics(v, 1.0, n_marks=200).volume
        assert abs(coarse / fine - 1.0) < 0.02


def test_record_fields():
    r = hydrostatics(MID_BOX, 0.5)
    assert isinstance(r, HydroRecord)
    assert r.draft == pytest.approx(0.5 * MID_BOX[2])
    assert 0.0 < r.vcb < r.draft and 0.0 < r.lcb < 1.0 and 0.0 < r.lcf < 1.0
    with pytest.raises(ValueError):
        hydrostatics(MID_BOX, 0.0)


# ---------------------------------------------------------------- curvature


def test_cylinder_has_no_gaussian_curvature():
    th, z = np.meshgrid(np.linspace(0.2, 2.5, 60), np.linspace(0.0, 3.0, 40), indexing="ij")
    X, Y = np.cos(th), np.sin(th)
    assert abs(gaussian_curvature((X, Y, z))) < 1e-6


def test_sphere_curvature_converges():
    R = 2.5
    th, ph = np.meshgrid(np.linspace(0.3, np.pi - 0.3, 200), np.linspace(0.0, 1.5 * np.pi, 200),
                         indexing="ij")
    X = R * np.sin(th) * np.cos(ph)
    Y = R * np.sin(th) * np.sin(ph)
    Z = R * np.cos(th)
    assert gaussian_curvature((X, Y, Z)) == pytest.approx(1.0 / R ** 2, rel=0.01)


def test_degenerate_grid_raises():
    with pytest.raises(ValueError):
        gaussian_curvature((np.zeros((2, 5)), np.zeros((2, 5)), np.zeros((2, 5))))
    with pytest.raises(ValueError):
        gaussian_curvature((np.zeros((5, 5)), np.zeros((5, 5)), np.zeros((5, 5))))


def test_hull_curvature_grid_convergence():
    for v in regular_designs(10):
        a = hull_curvature(v, 64)
        b = hull_curvature(v, 256)
        assert a > 0.0 and abs(a / b - 1.0) < 0.10


def test_hull_curvature_scale_free():
    v = feasible_designs(1, seed=11)[0]
    w = v.copy()
    w[0] = 17.0
    assert hull_curvature(v) == pytest.approx(hull_curvature(w), rel=1e-12)


# ---------------------------------------------------------------- maxbox


def test_maxbox_contained_and_inscribed():
    for v in feasible_designs(30, seed=12):
        box = maxbox(v, seed=1)
        assert containment_margin(v, box) >= -1e-12 * v[0]
        assert box.depth <= v[2] + 1e-15 and box.x0 >= 0.0 and box.x0 + box.length <= 1.0 + 1e-12
        ratio = box.volume / hydrostatics(v, 1.0).volume
        assert 0.0 < ratio < 1.0


def test_maxbox_beats_grid_search():
    for v in feasible_designs(15, seed=13):
        assert grid_search(v).volume <= 1.05 * maxbox(v, seed=2).volume


def test_maxbox_deterministic_and_monotone_in_starts():
    v = feasible_designs(1, seed=14)[0]
    assert maxbox(v, seed=5) == maxbox(v, seed=5)
    vols = [maxbox(v, seed=5, n_starts=n).volume for n in (1, 2, 4, 8, 16, 32)]
    assert all(b >= a for a, b in zip(vols, vols[1:]))


def test_maxbox_rejects_infeasible():
    v = MID_BOX.copy()
    v[2] = 0.0
    with pytest.raises(Exception):
        maxbox(v)
    assert check_constraints(MID_BOX).feasible
