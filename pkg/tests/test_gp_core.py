"""Tests of the rescaled, masked, rotated square-exponential process."""

import numpy as np
import pytest

from gpadapt import (
    PointSet,
    ProjectionSpec,
    build_gram,
    derive_rng,
    effective_input,
    path_from_white,
    sample_path,
    sq_exp_cov,
)
from gpadapt.priors import HyperConfig, projection_matrix, sample_hyper


def _spec(scale=1.0, mask=(1, 1), rotation=None, extra_axis=False):
    mask = np.asarray(mask)
    if rotation is None:
        rotation = np.eye(mask.shape[0])
    return ProjectionSpec(
        scale=scale, mask=mask, rotation=rotation, extra_axis=extra_axis
    )


def test_spec_rejects_bad_fields():
    with pytest.raises(ValueError):
        _spec(scale=0.0)
    with pytest.raises(ValueError):
        _spec(scale=-1.0)
    with pytest.raises(ValueError):
        _spec(mask=(1, 2))
    with pytest.raises(ValueError):
        _spec(rotation=np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_spec_all_masked_pins_scale_to_one():
    # no active axis: the rescaling has nothing to act on, so it must be 1
    with pytest.raises(ValueError):
        _spec(scale=2.0, mask=(0, 0))
    spec = _spec(scale=1.0, mask=(0, 0))
    assert spec.active_count == 0
    # with the auxiliary axis the rescaling still acts, so any scale is fine
    spec = _spec(scale=2.0, mask=(0, 0), extra_axis=True)
    assert spec.scale == 2.0


def test_effective_input_drops_masked_coordinates():
    spec = _spec(scale=1.7, mask=(1, 0))
    a = effective_input(np.array([0.3, 0.9]), spec)
    b = effective_input(np.array([0.3, -0.4]), spec)
    assert np.array_equal(a, b)
    assert a[1] == 0.0
    assert a[0] == pytest.approx(1.7 * 0.3)


def test_effective_input_rotates_before_masking():
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    spec = _spec(scale=2.0, mask=(1, 0), rotation=rot)
    out = effective_input(np.array([0.3, 0.5]), spec)
    # the first rotated coordinate is x2, the second gets masked
    assert out == pytest.approx([2.0 * 0.5, 0.0])


def test_effective_input_aux_column():
    spec = _spec(scale=3.0, mask=(1, 0), extra_axis=True)
    out = effective_input(np.array([[0.1, 0.2], [0.3, 0.4]]), spec, u=[0.5, 1.0])
    assert out.shape == (2, 3)
    assert out[:, 2] == pytest.approx([1.5, 3.0])
    with pytest.raises(ValueError):
        effective_input(np.array([0.1, 0.2]), spec)
    with pytest.raises(ValueError):
        effective_input(np.array([0.1, 0.2]), _spec(), u=0.5)


def test_sq_exp_cov_basics():
    assert sq_exp_cov([0.2, 0.4], [0.2, 0.4]) == 1.0
    assert sq_exp_cov([0.0], [1.0]) == pytest.approx(np.exp(-1.0))
    assert sq_exp_cov([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.exp(-25.0))
    with pytest.raises(ValueError):
        sq_exp_cov([0.0], [0.0, 1.0])


def test_point_set_validation():
    with pytest.raises(ValueError):
        PointSet(np.array([[1.2, 0.0]]))
    with pytest.raises(ValueError):
        PointSet(np.array([[0.1, 0.0]]), aux=np.array([1.5]))
    with pytest.raises(ValueError):
        PointSet(np.array([[0.1, 0.0], [0.2, 0.0]]), aux=np.array([0.5]))
    pts = PointSet(np.array([[0.1, 0.0], [0.2, 0.0]]), aux=np.array([0.5, 1.0]))
    assert len(pts) == 2


def test_gram_diag_is_one_and_entries_positive():
    rng = derive_rng(0, "gram")
    x = rng.random((20, 3)) * 0.5 - 0.25
    gram = build_gram(PointSet(x), _spec(scale=1.3, mask=(1, 1, 0)))
    assert np.all(np.diag(gram.matrix) == 1.0)
    assert gram.matrix.min() > 0.0
    assert gram.matrix.max() <= 1.0
    assert np.allclose(gram.matrix, gram.matrix.T)


def test_cholesky_reproduces_representative_matrix():
    rng = derive_rng(1, "chol")
    x = rng.random((15, 2)) - 0.5
    gram = build_gram(PointSet(x), _spec(scale=0.8))
    m = gram.latent_dim
    rebuilt = gram.chol @ gram.chol.T
    target = gram.matrix[np.ix_(gram.rep_index, gram.rep_index)] + gram.jitter * np.eye(m)
    assert np.allclose(rebuilt, target, atol=1e-12)
    assert gram.n_sites == 15
    assert m == 15  # generic points share nothing


def test_masked_ties_collapse_to_shared_sites():
    # points that differ only in the masked coordinate are the same site
    x = np.array([[0.3, 0.1], [0.3, -0.7], [0.1, 0.2], [0.1, 0.9]])
    gram = build_gram(PointSet(x), _spec(scale=2.4, mask=(1, 0)))
    assert gram.latent_dim == 2
    assert gram.matrix[0, 1] == 1.0
    assert gram.matrix[2, 3] == 1.0
    assert gram.site_map[0] == gram.site_map[1]
    path = sample_path(gram, derive_rng(2, "path"))
    assert path[0] == path[1]  # exact, not approximate
    assert path[2] == path[3]
    assert path[0] != path[2]


def test_all_masked_gives_single_constant_site():
    x = derive_rng(3, "const").random((10, 3)) * 0.4
    gram = build_gram(PointSet(x), _spec(scale=1.0, mask=(0, 0, 0)))
    assert gram.latent_dim == 1
    path = sample_path(gram, derive_rng(3, "cpath"))
    assert np.all(path == path[0])


def test_gram_depends_on_rotation_only_through_projection():
    # with every axis active the projection is the identity whatever the
    # rotation, so the gram must not change
    rng = derive_rng(4, "rotfree")
    x = rng.random((12, 3)) * 0.5 - 0.25
    q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    g1 = build_gram(PointSet(x), _spec(scale=1.5, mask=(1, 1, 1)))
    g2 = build_gram(PointSet(x), _spec(scale=1.5, mask=(1, 1, 1), rotation=q))
    assert np.allclose(g1.matrix, g2.matrix, atol=1e-12)


def test_equal_projections_give_unit_covariance():
    # pairs x, z with Rx = Rz are indistinguishable to the process
    rng = derive_rng(5, "proj")
    for trial in range(20):
        d = int(rng.integers(2, 6))
        cfg = HyperConfig(dim=d)
        spec = sample_hyper(cfg, rng)
        x = rng.random(d) * 0.3 - 0.15
        v = rng.random(d) * 0.2
        r = projection_matrix(spec.mask, spec.rotation)
        z = x + (np.eye(d) - r) @ v
        if np.sqrt((z**2).sum()) > 1.0:
            continue
        gram = build_gram(PointSet(np.stack([x, z])), spec)
        assert gram.matrix[0, 1] == 1.0


def test_jitter_ladder_handles_near_ties():
    # distinct points far closer than the kernel can resolve still factor
    base = np.array([0.25, -0.1])
    x = np.stack([base, base + 1e-7, base + np.array([0.3, 0.0])])
    gram = build_gram(PointSet(x), _spec())
    assert gram.latent_dim == 3
    assert gram.jitter in (1e-10, 1e-8, 1e-6, 1e-4)
    assert np.all(np.isfinite(gram.chol))


def test_path_from_white_uses_leading_coordinates():
    x = derive_rng(6, "white").random((5, 2)) * 0.4
    gram = build_gram(PointSet(x), _spec())
    white = derive_rng(7, "w").standard_normal(9)
    p1 = path_from_white(gram, white)
    p2 = path_from_white(gram, white[:5])
    assert np.array_equal(p1, p2)
    with pytest.raises(ValueError):
        path_from_white(gram, white[:4])


def test_sample_path_deterministic_per_seed():
    x = derive_rng(8, "det").random((6, 2)) * 0.3
    gram = build_gram(PointSet(x), _spec(scale=2.0))
    p1 = sample_path(gram, derive_rng(9, "draw"))
    p2 = sample_path(gram, derive_rng(9, "draw"))
    assert np.array_equal(p1, p2)
