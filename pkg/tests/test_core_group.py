import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sspo.core_group import (
    Trajectory,
    TrajectoryGroup,
    intra_sequence_dispersion,
    normalize_advantages,
    sequence_ratio,
    token_ratios,
)
from sspo.errors import InvalidGroupError, NumericError, ValidationError
from sspo.policy import PolicyParams, sample_response
from sspo.rng import substream

from conftest import make_traj

ratio_lists = st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=64)


class TestNormalizeAdvantages:
    def test_degenerate_group_is_zero(self):
        np.testing.assert_array_equal(normalize_advantages([0.5, 0.5, 0.5], 1e-8), [0, 0, 0])

    def test_two_member_group(self):
        np.testing.assert_allclose(normalize_advantages([1, 0], 1e-8), [1, -1], atol=1e-15)

    def test_one_success_in_four(self):
        # mean 1/4, population std sqrt(3)/4; values from 30-digit arithmetic
        expected = [1.7320508075688772, -0.5773502691896258, -0.5773502691896258, -0.5773502691896258]
        np.testing.assert_allclose(normalize_advantages([1, 0, 0, 0], 1e-8), expected, rtol=1e-14)

    def test_rejects_singleton_group(self):
        with pytest.raises(InvalidGroupError):
            normalize_advantages([1.0])

    def test_rejects_out_of_range_reward(self):
        with pytest.raises(ValidationError):
            normalize_advantages([1.5, 0.0])

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=32))
    def test_zero_mean(self, rewards):
        adv = normalize_advantages(rewards, 1e-8)
        assert abs(adv.mean()) <= 1e-12
        assert abs(adv.sum()) <= 1e-9 * len(rewards)


class TestSequenceRatio:
    @pytest.mark.parametrize(
        "ratios, expected",
        [([1, 1, 1], 1.0), ([4, 1], 2.0), ([math.e**2, math.e**-2], 1.0)],
    )
    def test_examples(self, ratios, expected):
        assert sequence_ratio(ratios) == pytest.approx(expected, abs=1e-14)

    def test_empty_raises(self):
        with pytest.raises(ValidationError):
            sequence_ratio([])

    @given(ratio_lists)
    def test_log_space_identity(self, ratios):
        r = np.array(ratios)
        assert sequence_ratio(r) == pytest.approx(math.exp(np.mean(np.log(r))), rel=1e-12)

    @given(ratio_lists, st.floats(0.01, 100))
    def test_scaling(self, ratios, c):
        r = np.array(ratios)
        assert sequence_ratio(c * r) == pytest.approx(c * sequence_ratio(r), rel=1e-10)
        assert intra_sequence_dispersion(c * r) == pytest.approx(
            intra_sequence_dispersion(r), rel=1e-10, abs=1e-10
        )


class TestDispersion:
    def test_constant(self):
        assert intra_sequence_dispersion([1.7, 1.7, 1.7]) == pytest.approx(0.0, abs=1e-15)

    def test_symmetric_pair(self):
        assert intra_sequence_dispersion([math.e, 1 / math.e]) == pytest.approx(1.0, rel=1e-14)

    def test_one_outlier(self):
        assert intra_sequence_dispersion([1, 1, math.e**2]) == pytest.approx(8 / 9, rel=1e-14)

    def test_empty_raises(self):
        with pytest.raises(ValidationError):
            intra_sequence_dispersion([])


class TestTokenRatios:
    def test_on_policy_all_ones(self):
        params = PolicyParams(5, 1, 2, substream(3).standard_normal((10, 5)))
        traj = sample_response(params, (1,), 1, 6, substream(4))
        assert np.max(np.abs(token_ratios(traj, params) - 1.0)) <= 1e-12

    def test_ln2_gives_two(self):
        params = PolicyParams(4, 1, 1)
        traj = make_traj([2], [math.log(0.25) - math.log(2.0)])
        assert token_ratios(traj, params)[0] == pytest.approx(2.0, rel=1e-14)

    def test_negative_half(self):
        params = PolicyParams(4, 1, 1)
        traj = make_traj([2], [math.log(0.25) + 0.5])
        assert token_ratios(traj, params)[0] == pytest.approx(0.60653066, abs=5e-9)

    def test_overflow_names_token(self):
        params = PolicyParams(4, 1, 1)
        traj = make_traj([2, 3], [-0.1, -1000.0])
        with pytest.raises(NumericError) as exc:
            token_ratios(traj, params)
        assert exc.value.where == (traj, 1)


class TestTypes:
    def test_trajectory_invariants(self):
        with pytest.raises(ValidationError):
            make_traj([1, 2], [-0.1])
        with pytest.raises(ValidationError):
            make_traj([1], [0.1])
        with pytest.raises(ValidationError):
            make_traj([1], [-0.1], reward=2.0)
        with pytest.raises(ValidationError):
            make_traj([], [])
        assert make_traj([1, 2, 3], [-1, -1, -1]).length == 3

    def test_group_requires_shared_prompt(self):
        a = make_traj([1], [-1.0], prompt_id=0)
        b = make_traj([1], [-1.0], prompt_id=1)
        with pytest.raises(InvalidGroupError):
            TrajectoryGroup((a, b))

    def test_from_trajectories(self):
        trajs = [make_traj([1], [-1.0], reward=r) for r in (1.0, 0.0)]
        group = TrajectoryGroup.from_trajectories(trajs)
        np.testing.assert_allclose(group.advantages, [1.0, -1.0])
