import math

import numpy as np
import pytest

from sspo.errors import ValidationError
from sspo.policy import (
    ContextState,
    PolicyParams,
    entropy,
    grad_log_prob,
    log_prob,
    probs,
    sample_response,
    state_index,
)
from sspo.rng import substream


class TestStateIndex:
    def test_zero(self):
        assert state_index(0, [0, 0], 10) == 0

    def test_older_token_first(self):
        assert state_index(0, [3, 7], 10) == 37

    def test_bucket_offset(self):
        assert state_index(2, [3, 7], 10, 4) == 237

    def test_bijective(self):
        V, k, P = 3, 2, 2
        seen = {
            state_index(b, [a, c], V, P) for b in range(P) for a in range(V) for c in range(V)
        }
        assert seen == set(range(P * V**k))

    @pytest.mark.parametrize("bucket, ctx", [(0, [10, 0]), (4, [0, 0]), (-1, [0, 0])])
    def test_out_of_range(self, bucket, ctx):
        with pytest.raises(ValidationError):
            state_index(bucket, ctx, 10, 4)

    def test_response_states_match_state_index(self):
        params = PolicyParams(5, 2, 3)
        tokens = [3, 1, 4, 4]
        ctxs = [[0, 0], [0, 3], [3, 1], [1, 4]]
        expected = [state_index(2, c, 5, 3) for c in ctxs]
        np.testing.assert_array_equal(params.response_states(2, tokens), expected)


class TestLogProb:
    def test_uniform(self):
        params = PolicyParams(8, 1, 1)
        assert log_prob(params, 0, 3) == pytest.approx(-2.0794415416798357, rel=1e-14)

    def test_hand_softmax(self):
        params = PolicyParams(3, 1, 1)
        params.logits[0] = [math.log(3), 0, 0]
        assert log_prob(params, ContextState(0, (0,)), 0) == pytest.approx(
            -0.5108256237659907, rel=1e-13
        )

    def test_normalised(self):
        params = PolicyParams(6, 1, 2, 5 * substream(0).standard_normal((12, 6)))
        for row in range(12):
            total = sum(math.exp(log_prob(params, row, t)) for t in range(6))
            assert abs(total - 1.0) <= 1e-12

    def test_large_logits_stable(self):
        params = PolicyParams(3, 1, 1, [[1e6, 0, 0], [0, 0, 0], [0, 0, 0]])
        assert log_prob(params, 0, 0) == 0.0
        assert np.isfinite(log_prob(params, 0, 1))


class TestGradLogProb:
    def test_uniform(self):
        row, g = grad_log_prob(PolicyParams(4, 1, 1), 0, 2)
        assert row == 0
        np.testing.assert_allclose(g, [-0.25, -0.25, 0.75, -0.25], atol=1e-15)

    def test_sums_to_zero(self):
        params = PolicyParams(6, 1, 1, substream(1).standard_normal((6, 6)))
        for row in range(6):
            for tok in range(6):
                assert abs(grad_log_prob(params, row, tok)[1].sum()) <= 1e-12

    def test_matches_finite_differences(self):
        params = PolicyParams(5, 1, 1, substream(2).standard_normal((5, 5)))
        h = 1e-5
        for row, tok in [(0, 1), (3, 4), (4, 0)]:
            _, g = grad_log_prob(params, row, tok)
            for j in range(5):
                p = params.copy()
                p.logits[row, j] += h
                up = log_prob(p, row, tok)
                p.logits[row, j] -= 2 * h
                down = log_prob(p, row, tok)
                fd = (up - down) / (2 * h)
                assert fd == pytest.approx(g[j], rel=1e-6, abs=1e-10)


class TestEntropy:
    def test_uniform(self):
        assert entropy(PolicyParams(8, 1, 1), 0) == pytest.approx(math.log(8), rel=1e-14)

    def test_deterministic_limit(self):
        params = PolicyParams(4, 1, 1)
        params.logits[0, 2] = 1e3
        assert entropy(params, 0) == pytest.approx(0.0, abs=1e-12)

    def test_hand_value(self):
        params = PolicyParams(3, 1, 1)
        params.logits[0] = [math.log(3), 0, 0]
        assert entropy(params, 0) == pytest.approx(0.9502705392332346, rel=1e-13)


class TestSampling:
    def test_deterministic_policy(self):
        V = 5
        params = PolicyParams(V, 1, 1)
        # BOS(0) -> 2 -> 3 -> EOS
        params.logits[0, 2] = params.logits[2, 3] = params.logits[3, V - 1] = 1e6
        for s in range(5):
            traj = sample_response(params, (1,), 0, 10, substream(s))
            assert traj.response_tokens == (2, 3, V - 1)

    def test_truncation_at_max_len(self):
        params = PolicyParams(4, 1, 1)
        params.logits[:, 1] = 1e6
        traj = sample_response(params, (0,), 0, 3, substream(0))
        assert traj.response_tokens == (1, 1, 1)

    def test_recorded_logps_self_consistent(self):
        params = PolicyParams(6, 2, 3, substream(9).standard_normal((108, 6)))
        for s in range(20):
            traj = sample_response(params, (2,), 2, 8, substream(s))
            again = params.sequence_log_probs(2, traj.response_tokens)
            assert np.max(np.abs(again - traj.behavior_logps)) <= 1e-12

    def test_monte_carlo_frequencies(self):
        params = PolicyParams(4, 1, 1)
        params.logits[0] = [0.5, -1.0, 1.0, 0.2]
        p = probs(params, 0)
        rng = substream(123)
        n = 100_000
        counts = np.zeros(4)
        for _ in range(n):
            counts[sample_response(params, (0,), 0, 1, rng).response_tokens[0]] += 1
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 3 * sigma)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        params = PolicyParams(5, 2, 3, substream(5).standard_normal((75, 5)) * 1e3)
        path = tmp_path / "p.bin"
        params.save(path)
        loaded = PolicyParams.load(path)
        assert loaded == params
        assert loaded.logits.tobytes() == params.logits.tobytes()

    def test_header_layout(self):
        blob = PolicyParams(3, 1, 2).to_bytes()
        assert blob[:8] == b"SSPOPOL1"
        assert blob[8:20] == (3).to_bytes(4, "little") + (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
        assert len(blob) == 20 + 6 * 3 * 8

    def test_rejects_truncated(self):
        with pytest.raises(ValidationError):
            PolicyParams.from_bytes(PolicyParams(3, 1, 2).to_bytes()[:-1])

    def test_rejects_bad_magic(self):
        with pytest.raises(ValidationError):
            PolicyParams.from_bytes(b"XXXXXXXX" + PolicyParams(3, 1, 2).to_bytes()[8:])
