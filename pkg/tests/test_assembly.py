"""Assembled operators: symmetry, definiteness, nullspace, exact spectra."""

import dataclasses

import numpy as np
import pytest
import scipy.linalg

from maxwell_rb.assembly import (ParametrizedSystem, assemble, read_matrix,
                                 write_matrix)
from maxwell_rb.errors import ConfigError, DegenerateCellError
from maxwell_rb.mesh import build_mesh

from oracles import discrete_brick_eigenvalues, interior_vertex_count

_ZERO_SPLIT = 1e-6   # gap between gradient nullspace and physical modes


def _dense_spectrum(pair):
    return scipy.linalg.eigh(pair.A.toarray(), pair.B.toarray(),
                             eigvals_only=True)


class TestOperators:
    def test_symmetry_exact(self, cube3_pair):
        assert (cube3_pair.A != cube3_pair.A.T).nnz == 0
        assert (cube3_pair.B != cube3_pair.B.T).nnz == 0

    def test_mass_spd(self, cube3_pair):
        w = np.linalg.eigvalsh(cube3_pair.B.toarray())
        assert w.min() > 0

    def test_stiffness_psd(self, cube3_pair):
        w = np.linalg.eigvalsh(cube3_pair.A.toarray())
        assert w.min() > -1e-10 * w.max()

    def test_gradients_in_nullspace(self, cube3_pair, cube3_grad):
        AG = cube3_pair.A @ cube3_grad.G
        scale = abs(cube3_pair.A).max()
        assert np.max(np.abs(AG.toarray())) < 1e-12 * scale

    def test_empty_mesh_rejected(self):
        with pytest.raises(ConfigError):
            assemble(build_mesh((1.0, 1.0, 1.0), (1, 1, 1)))

    def test_inverted_cell_rejected(self, cube2):
        mirrored = dataclasses.replace(
            cube2, vertices=cube2.vertices * np.array([-1.0, 1.0, 1.0])
        )
        with pytest.raises(DegenerateCellError):
            assemble(mirrored)


class TestSpectrum:
    @pytest.mark.parametrize("dims,res", [
        ((1.0, 1.0, 1.0), (2, 2, 2)),
        ((1.0, 1.0, 1.0), (3, 3, 3)),
        ((1.0, 1.1, 1.2), (3, 3, 3)),
        ((1.0, 1.1, 0.6), (4, 3, 5)),
    ])
    def test_matches_closed_form(self, dims, res):
        """Nonzero generalized eigenvalues equal the separable exact values."""
        mesh = build_mesh(dims, res)
        values = _dense_spectrum(assemble(mesh))
        nv = interior_vertex_count(res)
        zeros, physical = values[:nv], values[nv:]
        assert np.max(np.abs(zeros)) < _ZERO_SPLIT
        oracle = discrete_brick_eigenvalues(dims, res)
        assert physical.size == oracle.size
        assert np.max(np.abs(physical - oracle) / oracle) < 1e-10

    def test_nullspace_dimension(self, cube2, cube3):
        for mesh in (cube2, cube3):
            values = _dense_spectrum(assemble(mesh))
            n_zero = int(np.count_nonzero(np.abs(values) < _ZERO_SPLIT))
            assert n_zero == mesh.n_interior_vertices


@pytest.fixture(scope="module")
def morph():
    m0 = build_mesh((1.0, 1.0, 1.0), (3, 3, 3))
    m1 = build_mesh((1.0, 1.1, 1.2), (3, 3, 3))
    return ParametrizedSystem(assemble(m0), assemble(m1))


class TestParametrizedSystem:
    def test_size_mismatch_rejected(self):
        p0 = assemble(build_mesh((1.0, 1.0, 1.0), (2, 2, 2)))
        p1 = assemble(build_mesh((1.0, 1.0, 1.0), (3, 3, 3)))
        with pytest.raises(ConfigError):
            ParametrizedSystem(p0, p1)

    def test_endpoints_reproduced(self, morph):
        for t, ref in ((0.0, morph.endpoint0), (1.0, morph.endpoint1)):
            pair = morph.interpolate(t)
            assert np.max(np.abs((pair.A - ref.A).toarray())) == 0.0
            assert np.max(np.abs((pair.B - ref.B).toarray())) == 0.0

    def test_affine_in_t(self, morph):
        t = 0.3125   # exactly representable, so the identity is exact
        pair = morph.interpolate(t)
        for name in ("A", "B"):
            got = getattr(pair, name).toarray()
            want = ((1 - t) * getattr(morph.endpoint0, name)
                    + t * getattr(morph.endpoint1, name)).toarray()
            assert np.array_equal(got, want)

    @pytest.mark.parametrize("t", [-0.1, 1.0000001, np.nan])
    def test_t_out_of_range(self, morph, t):
        with pytest.raises(ConfigError):
            morph.interpolate(t)

    def test_constant_morph_is_bit_exact(self, cube3):
        psys = ParametrizedSystem(assemble(cube3), assemble(cube3))
        mid = psys.interpolate(0.1)
        assert np.array_equal(mid.A.data, psys.endpoint0.A.data)
        assert np.array_equal(mid.B.data, psys.endpoint0.B.data)


class TestMatrixIO:
    def test_round_trip(self, tmp_path, cube3_pair):
        path = tmp_path / "A.mtx"
        write_matrix(cube3_pair.A, path)
        back = read_matrix(path, expected_n=cube3_pair.n)
        assert np.max(np.abs((back - cube3_pair.A).toarray())) < 1e-15

    def test_shape_guard(self, tmp_path):
        import scipy.io
        import scipy.sparse as sp

        path = tmp_path / "rect.mtx"
        scipy.io.mmwrite(str(path), sp.random(4, 3, density=0.5, random_state=0))
        with pytest.raises(ConfigError):
            read_matrix(path)
