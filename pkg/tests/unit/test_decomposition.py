"""Unit tests for the spectral decomposition."""

import numpy as np
import pytest

from fiberfem.core import ConfigurationError
from fiberfem.engine.assembly import FemSystem
from fiberfem.engine.decomposition import (
    Decomposition,
    ensure_complete,
    index_set,
    orient_eigenvectors,
)
from fiberfem.engine.linear_solvers import EigenBasis, SpdFactorization, smallest_eigenpairs


@pytest.fixture(scope="module")
def basis(system_8x16: FemSystem) -> EigenBasis:
    """Oriented first four eigenpairs of the 8x16 mesh."""
    raw = smallest_eigenpairs(system_8x16.stiffness, system_8x16.mass, 4)
    return orient_eigenvectors(raw, system_8x16.mass)


@pytest.fixture(scope="module", params=[[1], [1, 2], [2, 3]], ids=["J1", "J12", "J23"])
def decomposition(request: pytest.FixtureRequest, basis: EigenBasis, system_8x16: FemSystem) -> Decomposition:
    """Decomposition for several index sets."""
    return Decomposition.build(
        basis,
        request.param,
        system_8x16.stiffness,
        system_8x16.mass,
        SpdFactorization(system_8x16.stiffness),
    )


def _random(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


class TestIndexSet:
    """Tests for index_set and ensure_complete."""

    VALUES = np.array([12.337, 19.739, 32.076, 41.946])

    @pytest.mark.parametrize(
        ("interval", "expected"),
        [
            ((8.6, 16.1), [1]),
            ((10.0, 25.0), [1, 2]),
            ((4.0, 14.0), [1]),
            ((20.0, 45.0), [3, 4]),
            ((12.337, 12.337), [1]),
        ],
    )
    def test_labels(self, interval: tuple[float, float], expected: list[int]) -> None:
        """Test 1-based labels of eigenvalues in the closed interval."""
        assert index_set(self.VALUES, interval) == expected

    def test_empty(self) -> None:
        """Test an interval between eigenvalues gives an empty set."""
        assert index_set(self.VALUES, (13.0, 19.0)) == []

    def test_reversed_interval(self) -> None:
        """Test a reversed interval raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            index_set(self.VALUES, (16.0, 8.0))

    def test_complete(self) -> None:
        """Test a spectrum reaching beyond the interval passes."""
        ensure_complete(self.VALUES, (10.0, 25.0))

    def test_incomplete(self) -> None:
        """Test a spectrum ending inside the interval asks for more eigenpairs."""
        with pytest.raises(ConfigurationError) as exc_info:
            ensure_complete(self.VALUES[:2], (10.0, 25.0))
        assert exc_info.value.config_key == "k"


class TestOrientation:
    """Tests for deterministic eigenvector signs."""

    def test_positive_mass_sum(self, basis: EigenBasis, system_8x16: FemSystem) -> None:
        """Test the ground state has positive integral."""
        psi = basis.eigenvectors[:, 0]
        assert (system_8x16.mass @ psi).sum() > 0
        assert np.all(psi > 0)

    def test_sign_independent_of_input(self, basis: EigenBasis, system_8x16: FemSystem) -> None:
        """Test flipping the input signs does not change the oriented basis."""
        flipped = basis.with_vectors(-basis.eigenvectors)
        again = orient_eigenvectors(flipped, system_8x16.mass)
        assert np.array_equal(again.eigenvectors, basis.eigenvectors)

    def test_antisymmetric_mode_uses_first_entry(self, basis: EigenBasis) -> None:
        """Test the mode odd under the half-turn is oriented by its first significant entry."""
        psi = basis.eigenvectors[:, 1]
        peak = np.abs(psi).max()
        first = np.flatnonzero(np.abs(psi) > 1e-6 * peak)[0]
        assert psi[first] > 0


class TestProjections:
    """Tests for the X and Y projections."""

    def test_idempotent(self, decomposition: Decomposition) -> None:
        """Test both projections are idempotent."""
        u = _random(decomposition.size, 1)
        for project in (decomposition.project_X, decomposition.project_Y):
            once = project(u, "vertical")
            assert np.allclose(project(once, "vertical"), once, atol=1e-10)

    def test_parts_sum_to_identity(self, decomposition: Decomposition) -> None:
        """Test vertical plus horizontal parts give the input."""
        u = _random(decomposition.size, 2)
        for project in (decomposition.project_X, decomposition.project_Y):
            total = project(u, "vertical") + project(u, "horizontal")
            assert np.allclose(total, u, atol=1e-12)

    def test_x_orthogonal(self, decomposition: Decomposition) -> None:
        """Test vertical and horizontal parts are orthogonal in u^T K v."""
        u, v = _random(decomposition.size, 3), _random(decomposition.size, 4)
        inner = decomposition.x_inner(
            decomposition.project_X(u, "vertical"), decomposition.project_X(v, "horizontal")
        )
        assert abs(inner) <= 1e-8 * decomposition.x_norm(u) * decomposition.x_norm(v)

    def test_y_orthogonal(self, decomposition: Decomposition) -> None:
        """Test vertical and horizontal parts are orthogonal in r^T K^-1 s."""
        r, s = _random(decomposition.size, 5), _random(decomposition.size, 6)
        inner = decomposition.y_inner(
            decomposition.project_Y(r, "vertical"), decomposition.project_Y(s, "horizontal")
        )
        assert abs(inner) <= 1e-8 * decomposition.y_norm(r) * decomposition.y_norm(s)

    def test_y_norm_pythagoras(self, decomposition: Decomposition) -> None:
        """Test ||r||_Y^2 splits into the squared norms of the vertical and horizontal parts."""
        r = _random(decomposition.size, 9)
        vertical = decomposition.y_norm(decomposition.project_Y(r, "vertical"))
        horizontal = decomposition.y_norm(decomposition.project_Y(r, "horizontal"))

        assert vertical**2 + horizontal**2 == pytest.approx(decomposition.y_norm(r) ** 2, rel=1e-8)

    def test_stiffness_maps_horizontal_to_horizontal(self, decomposition: Decomposition) -> None:
        """Test K sends horizontal X vectors to horizontal Y vectors."""
        w = decomposition.project_X(_random(decomposition.size, 7), "horizontal")
        assert np.allclose(decomposition.heights_Y(decomposition.stiffness @ w), 0.0, atol=1e-7)


class TestHeights:
    """Tests for the orthonormal height coordinates."""

    def test_basis_heights(self, decomposition: Decomposition) -> None:
        """Test phi_X and phi_Y have unit-vector heights and unit norms."""
        eye = np.eye(decomposition.dimension)
        for i, label in enumerate(decomposition.labels):
            assert np.allclose(decomposition.heights_X(decomposition.phi_X(label)), eye[i], atol=1e-10)
            assert np.allclose(decomposition.heights_Y(decomposition.phi_Y(label)), eye[i], atol=1e-10)
            assert decomposition.x_norm(decomposition.phi_X(label)) == pytest.approx(1.0, rel=1e-9)
            assert decomposition.y_norm(decomposition.phi_Y(label)) == pytest.approx(1.0, rel=1e-8)

    def test_stiffness_maps_phi_x_to_phi_y(self, decomposition: Decomposition) -> None:
        """Test heights_Y(K phi_X_j) is the j-th unit vector."""
        eye = np.eye(decomposition.dimension)
        for i, label in enumerate(decomposition.labels):
            image = decomposition.stiffness @ decomposition.phi_X(label)
            assert np.allclose(decomposition.heights_Y(image), eye[i], atol=1e-8)

    def test_vertical_from_heights(self, decomposition: Decomposition) -> None:
        """Test heights_X inverts vertical_from_heights."""
        v = np.arange(1.0, decomposition.dimension + 1.0)
        assert np.allclose(decomposition.heights_X(decomposition.vertical_from_heights(v)), v, atol=1e-9)

    def test_dual_from_heights(self, decomposition: Decomposition) -> None:
        """Test heights_Y inverts dual_from_heights."""
        z = -np.arange(1.0, decomposition.dimension + 1.0)
        assert np.allclose(decomposition.heights_Y(decomposition.dual_from_heights(z)), z, atol=1e-9)

    def test_heights_x_match_projection_norm(self, decomposition: Decomposition) -> None:
        """Test |heights_X(u)| equals the X norm of the vertical part."""
        u = _random(decomposition.size, 8)
        heights = decomposition.heights_X(u)
        vertical = decomposition.project_X(u, "vertical")
        assert np.linalg.norm(heights) == pytest.approx(decomposition.x_norm(vertical), rel=1e-8)


class TestBuild:
    """Tests for Decomposition.build."""

    def test_label_beyond_basis(self, basis: EigenBasis, system_8x16: FemSystem) -> None:
        """Test a label above k raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            Decomposition.build(basis, [5], system_8x16.stiffness, system_8x16.mass)

    def test_empty_index_set(self, basis: EigenBasis, system_8x16: FemSystem) -> None:
        """Test an empty J makes every vector horizontal."""
        empty = Decomposition.build(basis, [], system_8x16.stiffness, system_8x16.mass)
        u = _random(system_8x16.size, 9)

        assert empty.dimension == 0
        assert np.allclose(empty.project_X(u, "horizontal"), u)
        assert empty.heights_Y(u).shape == (0,)
