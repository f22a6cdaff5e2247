import numpy as np
import pytest

from prommask.exceptions import DataValidationError
from prommask.kspace import inverse_transform, zero_fill_reconstruct
from prommask.metrics import nmse
from prommask.phantom import (
    FAMILIES,
    EllipseSpec,
    PhantomFamily,
    make_family,
    render_phantom,
    sample_family,
)


def test_render_trivial():
    np.testing.assert_array_equal(render_phantom([], (8, 6)), 0)
    np.testing.assert_array_equal(render_phantom([EllipseSpec((0, 0), (2, 2))], (8, 6)), 1)


def test_disjoint_ellipses_never_add():
    specs = [EllipseSpec((-0.5, 0), (0.3, 0.6), 0.0, 0.5), EllipseSpec((0.5, 0), (0.3, 0.6), 0.4, 0.7)]
    image = render_phantom(specs, (64, 64))
    masks = [render_phantom([EllipseSpec(s.center, s.semi_axes, s.rotation, 1.0)], (64, 64)) for s in specs]
    assert not np.any((masks[0] > 0) & (masks[1] > 0))
    assert set(np.unique(image)) == {0.0, 0.5, 0.7}


def test_rotation_quarter_turn():
    wide = render_phantom([EllipseSpec((0, 0), (0.8, 0.2))], (32, 32))
    tall = render_phantom([EllipseSpec((0, 0), (0.8, 0.2), np.pi / 2)], (32, 32))
    np.testing.assert_array_equal(wide, tall.T)


def test_negative_intensity_clipped():
    image = render_phantom([EllipseSpec((0, 0), (0.5, 0.5), 0.0, -1.0)], (8, 8))
    assert image.min() == 0


def test_no_jitter_gives_identical_items():
    fam = PhantomFamily((EllipseSpec((0, 0), (0.5, 0.3)),), seed=4)
    items = sample_family(fam, 3, (16, 16))
    for k, t in items[1:]:
        np.testing.assert_array_equal(t, items[0][1])


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_family_self_consistent_and_deterministic(name):
    items = sample_family(make_family(name, seed=2), 4, (32, 32))
    again = sample_family(make_family(name, seed=2), 4, (32, 32))
    for (k, t), (k2, t2) in zip(items, again):
        np.testing.assert_array_equal(k, k2)
        assert t.max() > 0
        np.testing.assert_allclose(np.abs(inverse_transform(k)), t, atol=1e-9)
        assert nmse(zero_fill_reconstruct(k, np.ones(t.shape)), t) <= 1e-10
    other = sample_family(make_family(name, seed=3), 4, (32, 32))
    assert not np.array_equal(items[0][1], other[0][1])


def test_errors():
    with pytest.raises(DataValidationError):
        make_family("knee")
    with pytest.raises(DataValidationError):
        sample_family(make_family("striped"), 0, (8, 8))
    with pytest.raises(DataValidationError):
        EllipseSpec((0, 0), (0.0, 1.0))
    with pytest.raises(DataValidationError):
        PhantomFamily((), axes_jitter=1.0)
