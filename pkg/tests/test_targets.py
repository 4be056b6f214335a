import numpy as np
import pytest

from tsrobust import (
    InvalidInput,
    TargetSpec,
    build_target,
    drifting,
    flipping,
    local_offset,
    named_transform,
    normalized_region_steps,
    scaling,
)


CLEAN = np.array([10.0, -2.0, 4.0, 0.5])


def test_scaling_amplifies():
    spec = scaling(2.5)
    assert np.array_equal(build_target(spec, CLEAN), 2.5 * CLEAN)
    with pytest.raises(InvalidInput):
        scaling(-1.0)
    with pytest.raises(InvalidInput):
        scaling(0.0)


def test_flipping_mirrors():
    assert np.array_equal(build_target(flipping(), CLEAN), -CLEAN)
    assert np.array_equal(build_target(flipping(-0.5), CLEAN), -0.5 * CLEAN)
    with pytest.raises(InvalidInput):
        flipping(0.5)


def test_drifting_adds_linear_ramp_one_based():
    spec = drifting(0.1)
    expected = CLEAN + 0.1 * np.arange(1, 5)
    assert np.allclose(build_target(spec, CLEAN), expected, atol=0)


def test_local_offset_midband():
    spec = local_offset(3.0, (0.25, 0.75), horizon=4)
    out = build_target(spec, CLEAN)
    # floor(0.25*4)=1 through ceil(0.75*4)-1=2
    expected = CLEAN + np.array([0.0, 3.0, 3.0, 0.0])
    assert np.array_equal(out, expected)


def test_normalized_region_steps_edges():
    assert list(normalized_region_steps(0.0, 1.0, 8)) == list(range(8))
    assert list(normalized_region_steps(0.5, 1.0, 8)) == [4, 5, 6, 7]
    assert list(normalized_region_steps(0.0, 0.5, 8)) == [0, 1, 2, 3]
    # floor(0.49*4)=1 through ceil(0.51*4)-1=2
    assert list(normalized_region_steps(0.49, 0.51, 4)) == [1, 2]
    assert list(normalized_region_steps(0.75, 1.0, 48)) == list(range(36, 48))
    for bad in [(-0.1, 0.5), (0.5, 0.5), (0.2, 1.1)]:
        with pytest.raises(InvalidInput):
            normalized_region_steps(bad[0], bad[1], 8)


def test_identity_transform_returns_clean():
    assert np.array_equal(build_target(TargetSpec(), CLEAN), CLEAN)


def test_affine_commutes_with_input_scaling():
    # scaling the clean forecast scales the scaled/flipped target exactly
    for spec in (scaling(3.0), flipping()):
        lhs = build_target(spec, 2.0 * CLEAN)
        rhs = 2.0 * build_target(spec, CLEAN)
        assert np.array_equal(lhs, rhs)


def test_at_most_one_bias_family():
    with pytest.raises(InvalidInput):
        TargetSpec(scale=1.0, drift=0.1, offsets=((0, 1.0),))


def test_offsets_validated_against_horizon():
    spec = local_offset(1.0, (0.5, 1.0), horizon=4)
    with pytest.raises(InvalidInput):
        build_target(spec, CLEAN[:2])


def test_dict_round_trip():
    for spec in (
        scaling(1.5),
        flipping(-2.0),
        drifting(-0.25),
        local_offset(0.5, (0.0, 0.5), horizon=4),
        TargetSpec(),
    ):
        assert TargetSpec.from_dict(spec.to_dict()) == spec


def test_named_transform_registry():
    assert named_transform("scaling", factor=2.0) == scaling(2.0)
    assert named_transform("flipping") == flipping()
    assert named_transform("drifting", slope=0.1) == drifting(0.1)
    assert named_transform(
        "local_offset", shift=1.0, region=(0.0, 0.5), horizon=6
    ) == local_offset(1.0, (0.0, 0.5), horizon=6)
    with pytest.raises(InvalidInput):
        named_transform("unknown")
