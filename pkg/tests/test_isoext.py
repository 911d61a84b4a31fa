"""Isosurface extraction: accuracy, topology, differentiability, regularizers."""

import numpy as np
import pytest

from meshlift import diffcore as dc
from meshlift import isoext
from meshlift.geometry import ShapeSDF, Sphere
from fdutil import scalarize


def sphere_grid(resolution, radius=0.6):
    return isoext.ScalarGrid.from_function(ShapeSDF(Sphere(radius=radius)).eval, resolution)


class TestExtraction:
    def test_sphere_topology_and_accuracy(self):
        grid = sphere_grid(32)
        mesh = isoext.extract_mesh(grid)
        assert isoext.euler_characteristic(mesh) == 2
        assert isoext.is_closed_manifold(mesh)
        r = np.linalg.norm(mesh.vertices.data, axis=1)
        assert np.abs(r - 0.6).max() < 1.5 * grid.cell_size

    def test_half_space_exact_interpolation(self):
        # Plane x = 0.5 cuts cell-aligned lattice edges; linear SDF makes the
        # crossing exact.
        grid = isoext.ScalarGrid.from_function(lambda p: p[:, 0] - 0.5, 8)
        mesh = isoext.extract_mesh(grid)
        assert not mesh.is_empty()
        np.testing.assert_allclose(mesh.vertices.data[:, 0], 0.5, atol=1e-9)

    def test_all_positive_grid_empty(self):
        grid = isoext.ScalarGrid.from_function(lambda p: np.ones(len(p)), 8)
        assert isoext.extract_mesh(grid).is_empty()

    def test_nan_rejected(self):
        sdf = np.ones((4, 4, 4))
        sdf[1, 1, 1] = np.nan
        grid = isoext.ScalarGrid(sdf=dc.Array(sdf), deformation=dc.Array(np.zeros((3, 4, 4, 4))),
                                 cell_size=0.5)
        with pytest.raises(ValueError, match="NaN"):
            isoext.extract_mesh(grid)

    def test_outward_winding(self):
        mesh = isoext.extract_mesh(sphere_grid(24))
        v, t = mesh.vertices.data, mesh.triangles
        vol = np.einsum("ij,ij->i", v[t[:, 0]], np.cross(v[t[:, 1]], v[t[:, 2]])).sum() / 6
        assert vol > 0

    def test_no_degenerate_triangles(self):
        mesh = isoext.extract_mesh(sphere_grid(24))
        assert mesh.face_areas().min() > 1e-12

    def test_deformation_moves_vertices(self):
        grid = sphere_grid(12)
        deformed = isoext.ScalarGrid(
            sdf=dc.Array(grid.sdf.data.copy()),
            deformation=dc.Array(np.full((3, 12, 12, 12), 0.2)),
            cell_size=grid.cell_size)
        m0 = isoext.extract_mesh(grid)
        m1 = isoext.extract_mesh(deformed)
        shift = m1.vertices.data.mean(axis=0) - m0.vertices.data.mean(axis=0)
        np.testing.assert_allclose(shift, 0.2 * grid.cell_size, atol=1e-6)

    def test_translation_equivariance(self):
        # Shifting the SDF field by one cell shifts the mesh by one cell.
        r = 20
        axis = np.linspace(-1, 1, r)
        cell = axis[1] - axis[0]
        xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([xx, yy, zz], -1).reshape(-1, 3)
        shape = ShapeSDF(Sphere(radius=0.45))
        s0 = shape.eval(pts).reshape(r, r, r)
        s1 = shape.eval(pts - np.array([cell, 0, 0])).reshape(r, r, r)
        zero_def = np.zeros((3, r, r, r))
        m0 = isoext.extract_mesh(isoext.ScalarGrid(dc.Array(s0), dc.Array(zero_def), cell))
        m1 = isoext.extract_mesh(isoext.ScalarGrid(dc.Array(s1), dc.Array(zero_def), cell))
        a = np.array(sorted(map(tuple, np.round(m0.vertices.data + [cell, 0, 0], 9))))
        b = np.array(sorted(map(tuple, np.round(m1.vertices.data, 9))))
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_refinement_convergence_order(self):
        errs, hs = [], []
        for r in (16, 32, 64):
            grid = sphere_grid(r)
            mesh = isoext.extract_mesh(grid)
            err = np.abs(np.linalg.norm(mesh.vertices.data, axis=1) - 0.6).max()
            errs.append(err)
            hs.append(grid.cell_size)
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 1.7


class TestVertexGradients:
    def test_hand_differentiated_crossing(self):
        # s_a = -1, s_b = +1: t = 0.5 and dt/ds_a = -s_b/(s_a-s_b)^2 = -0.25.
        sdf = np.ones((2, 2, 2))
        sdf[0] = -1.0
        grid = isoext.ScalarGrid(dc.Array(sdf), dc.Array(np.zeros((3, 2, 2, 2))),
                                 cell_size=1.0, origin=np.zeros(3))
        mesh = isoext.extract_mesh(grid)
        jac = isoext.vertex_gradients(mesh, grid)
        np.testing.assert_allclose(jac.t, 0.5)
        # Vertex moves along +x as t grows; dt/ds_a = -0.25 on every vertex.
        np.testing.assert_allclose(jac.dv_dsa[:, 0], -0.25, atol=1e-12)

    def test_scale_invariance_of_crossing(self):
        sdf = np.ones((3, 3, 3))
        sdf[0] = -0.7
        grid1 = isoext.ScalarGrid(dc.Array(sdf), dc.Array(np.zeros((3, 3, 3, 3))), 1.0,
                                  origin=np.zeros(3))
        grid2 = isoext.ScalarGrid(dc.Array(2 * sdf), dc.Array(np.zeros((3, 3, 3, 3))), 1.0,
                                  origin=np.zeros(3))
        m1 = isoext.extract_mesh(grid1)
        m2 = isoext.extract_mesh(grid2)
        np.testing.assert_allclose(m1.vertices.data, m2.vertices.data, atol=1e-12)

    def _random_grid(self, seed, r=8):
        rng = np.random.default_rng(seed)
        # Smooth random field with a safe sign margin: blobby offset sphere.
        axis = np.linspace(-1, 1, r)
        xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([xx, yy, zz], -1).reshape(-1, 3)
        center = rng.uniform(-0.2, 0.2, 3)
        sdf = (np.linalg.norm(pts - center, axis=1) - 0.55).reshape(r, r, r)
        deform = rng.uniform(-0.3, 0.3, (3, r, r, r))
        return isoext.ScalarGrid(dc.Array(sdf), dc.Array(deform), cell_size=2 / (r - 1))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_vertex_positions_match_fd(self, seed):
        grid = self._random_grid(seed)
        rng = np.random.default_rng(100 + seed)
        mesh0 = isoext.extract_mesh(grid)
        w = rng.standard_normal(mesh0.vertices.data.shape)

        sdf0 = grid.sdf.data.copy()
        def0 = grid.deformation.data.copy()

        def loss_for(sdf_val, def_val):
            g = isoext.ScalarGrid(dc.Array(sdf_val), dc.Array(def_val), grid.cell_size,
                                  origin=grid.origin)
            m = isoext.extract_mesh(g)
            return float((m.vertices.data * w).sum())

        gsdf = dc.Array(sdf0, requires_grad=True)
        gdef = dc.Array(def0, requires_grad=True)
        g = isoext.ScalarGrid(gsdf, gdef, grid.cell_size, origin=grid.origin)
        with dc.Tape() as tape:
            mesh = isoext.extract_mesh(g)
            loss = scalarize(mesh.vertices, w)
        dc.backward(tape, loss)

        h = 1e-6
        # Check a subset of sdf entries (those near the surface carry signal).
        flat = sdf0.reshape(-1)
        hot = np.argsort(np.abs(flat))[:20]
        for i in hot:
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_for(sdf0, def0)
            flat[i] = orig - h
            fm = loss_for(sdf0, def0)
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            np.testing.assert_allclose(gsdf.grad.reshape(-1)[i], fd, rtol=1e-4, atol=1e-7)
        # And a subset of deformation entries.
        dflat = def0.reshape(-1)
        for i in np.arange(0, dflat.size, dflat.size // 17):
            orig = dflat[i]
            dflat[i] = orig + h
            fp = loss_for(sdf0, def0)
            dflat[i] = orig - h
            fm = loss_for(sdf0, def0)
            dflat[i] = orig
            fd = (fp - fm) / (2 * h)
            np.testing.assert_allclose(gdef.grad.reshape(-1)[i], fd, rtol=1e-4, atol=1e-7)


class TestRegLoss:
    def test_flat_case_terms(self):
        # Linear SDF, zero deformation, planar mesh.
        grid = isoext.ScalarGrid.from_function(lambda p: p[:, 0] - 0.47, 10)
        mesh = isoext.extract_mesh(grid)
        lap = isoext.extract._laplacian_term(mesh)
        assert lap is None or lap.item() < 1e-8
        only_def = isoext.reg_loss(grid, mesh, isoext.RegWeights(tv=0, deform=1, laplacian=0))
        assert only_def.item() == 0.0

    def test_deformation_term_quadratic(self):
        r = 6
        sdf = np.linspace(-1, 1, r)[:, None, None] * np.ones((r, r, r))
        d1 = np.full((3, r, r, r), 0.1)
        d2 = np.full((3, r, r, r), 0.2)
        g1 = isoext.ScalarGrid(dc.Array(sdf), dc.Array(d1), 0.4)
        g2 = isoext.ScalarGrid(dc.Array(sdf), dc.Array(d2), 0.4)
        w = isoext.RegWeights(tv=0.0, deform=1.0, laplacian=0.0)
        m = isoext.extract_mesh(g1)
        assert isoext.reg_loss(g2, m, w).item() == pytest.approx(
            4 * isoext.reg_loss(g1, m, w).item())

    def test_zero_gradient_at_flat_field(self):
        r = 5
        sdf = dc.Array(np.full((r, r, r), 0.3), requires_grad=True)
        deform = dc.Array(np.zeros((3, r, r, r)), requires_grad=True)
        grid = isoext.ScalarGrid(sdf, deform, 0.5)
        with dc.Tape() as tape:
            loss = isoext.reg_loss(grid, isoext.extract_mesh(grid), isoext.RegWeights())
        dc.backward(tape, loss)
        assert sdf.grad is None or np.abs(sdf.grad).max() == 0.0
        assert deform.grad is None or np.abs(deform.grad).max() == 0.0

    def test_reg_loss_gradient_matches_fd(self):
        rng = np.random.default_rng(7)
        r = 6
        sdf0 = rng.standard_normal((r, r, r)) * 0.5 + 0.05
        def0 = rng.uniform(-0.3, 0.3, (3, r, r, r))
        w = isoext.RegWeights(tv=0.7, deform=1.3, laplacian=2.0)

        def loss_for(sv, dv):
            g = isoext.ScalarGrid(dc.Array(sv), dc.Array(dv), 2 / (r - 1))
            return isoext.reg_loss(g, isoext.extract_mesh(g), w).item()

        sdf = dc.Array(sdf0, requires_grad=True)
        deform = dc.Array(def0, requires_grad=True)
        grid = isoext.ScalarGrid(sdf, deform, 2 / (r - 1))
        with dc.Tape() as tape:
            loss = isoext.reg_loss(grid, isoext.extract_mesh(grid), w)
        dc.backward(tape, loss)

        h = 1e-6
        flat = sdf0.reshape(-1)
        idx = np.argsort(np.abs(flat))[5:20]  # sign-safe margin
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_for(sdf0, def0)
            flat[i] = orig - h
            fm = loss_for(sdf0, def0)
            flat[i] = orig
            np.testing.assert_allclose(sdf.grad.reshape(-1)[i], (fp - fm) / (2 * h),
                                       rtol=1e-4, atol=1e-7)


class TestObjRoundTrip:
    def test_save_load(self, tmp_path):
        mesh = isoext.extract_mesh(sphere_grid(12))
        path = tmp_path / "m.obj"
        isoext.save_obj(mesh, path)
        back = isoext.load_obj(path)
        np.testing.assert_array_equal(back.vertices.data, mesh.vertices.data)
        np.testing.assert_array_equal(back.triangles, mesh.triangles)
