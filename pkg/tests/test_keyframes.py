from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recap.backends import Frame
from recap.config import RunConfig
from recap.errors import InputError
from recap.keyframes import VideoSource, sample_frames, select_keyframes

from conftest import TOY_DIM, make_vector_frames
from oracles import keyframe_simulation_oracle


def unit_frames(vectors: np.ndarray, video_id: str = "v") -> list[Frame]:
    vectors = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    return [Frame(f"{video_id}/{i}", vector=vectors[i]) for i in range(vectors.shape[0])]


class TestSampleFrames:
    def test_single_frame_video(self):
        video = VideoSource("v", make_vector_frames(1, seed=0), native_fps=1.0)
        for fps in (0.5, 1.0, 3.0, 30.0):
            sampled = sample_frames(video, fps)
            assert sampled == [video.frames[0]]

    def test_default_rate_is_three(self):
        assert RunConfig().frame_rate == 3.0

    def test_ten_second_video_at_three_fps(self):
        # timestamp arithmetic oracle: 10 s at native 30 fps, sampled at 3 fps
        video = VideoSource("v", make_vector_frames(300, seed=1), native_fps=30.0)
        sampled = sample_frames(video, 3.0)
        expected_indices = [int(np.floor(k / 3.0 * 30.0)) for k in range(30)]
        assert len(sampled) == 30
        assert [video.frames.index(f) for f in sampled] == expected_indices

    def test_includes_time_zero(self):
        video = VideoSource("v", make_vector_frames(10, seed=2), native_fps=5.0)
        assert sample_frames(video, 2.0)[0] is video.frames[0]

    def test_oversampling_collapses_duplicates(self):
        video = VideoSource("v", make_vector_frames(3, seed=3), native_fps=1.0)
        sampled = sample_frames(video, 10.0)
        assert sampled == video.frames  # each index appears once

    def test_invalid_inputs(self):
        video = VideoSource("v", make_vector_frames(3, seed=4), native_fps=1.0)
        with pytest.raises(InputError):
            sample_frames(video, 0.0)
        with pytest.raises(InputError):
            sample_frames(VideoSource("v", [], native_fps=1.0), 3.0)


class TestSelectKeyframes:
    def test_identical_frames_keep_only_first(self, suite):
        payload = np.random.default_rng(5).standard_normal(TOY_DIM)
        frames = [Frame(f"v/{i}", vector=payload.copy()) for i in range(10)]
        keys = select_keyframes(frames, suite.image_text_scorer, 0.9)
        assert keys.frames == [frames[0]]
        assert keys.count == 1

    def test_default_threshold(self):
        assert RunConfig().keyframe_threshold == 0.9

    def test_hand_set_sequence_matches_simulation_oracle(self, suite):
        # 6 frames engineered so some repeat the anchor direction
        rng = np.random.default_rng(8)
        a, b, c = (rng.standard_normal(TOY_DIM) for _ in range(3))
        vectors = np.stack([a, a * 1.01 + 0.001 * b, b, b * 0.99 + 0.001 * c, c, a])
        frames = unit_frames(vectors)
        keys = select_keyframes(frames, suite.image_text_scorer, 0.9)
        unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
        expected = keyframe_simulation_oracle([list(v) for v in unit], 0.9)
        assert keys.indices == expected

    def test_randomized_against_oracle(self, suite):
        rng = np.random.default_rng(99)
        for _ in range(30):
            n = int(rng.integers(1, 20))
            vectors = rng.standard_normal((n, TOY_DIM))
            threshold = float(rng.uniform(0.05, 1.0))
            frames = unit_frames(vectors)
            keys = select_keyframes(frames, suite.image_text_scorer, threshold)
            unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
            assert keys.indices == keyframe_simulation_oracle([list(v) for v in unit], threshold)

    def test_always_contains_frame_zero(self, suite):
        frames = make_vector_frames(7, seed=10)
        keys = select_keyframes(frames, suite.image_text_scorer, 0.5)
        assert keys.frames[0] is frames[0]

    def test_tiny_threshold_with_nonnegative_similarities(self, suite):
        base = np.abs(np.random.default_rng(11).standard_normal(TOY_DIM)) + 0.1
        vectors = np.stack([base * (1 + 0.01 * i) for i in range(6)])  # all pairwise sims > 0
        frames = unit_frames(vectors)
        keys = select_keyframes(frames, suite.image_text_scorer, 1e-9)
        assert keys.frames == [frames[0]]

    def test_output_is_subsequence(self, suite):
        frames = make_vector_frames(15, seed=12)
        keys = select_keyframes(frames, suite.image_text_scorer, 0.3)
        assert keys.indices == sorted(set(keys.indices))
        for idx, frame in zip(keys.indices, keys.frames):
            assert frames[idx] is frame

    @settings(max_examples=40, deadline=None)
    @given(
        sim=st.floats(-1.0, 1.0, allow_nan=False),
        low=st.floats(0.01, 0.99),
        high=st.floats(0.01, 0.99),
    )
    def test_monotone_admission_per_comparison(self, sim, low, high):
        # a frame rejected at a higher threshold is never admitted at a lower one
        if low > high:
            low, high = high, low
        admitted_low = sim < low
        admitted_high = sim < high
        assert not (admitted_low and not admitted_high)

    def test_threshold_validation(self, suite):
        frames = make_vector_frames(3, seed=13)
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(InputError):
                select_keyframes(frames, suite.image_text_scorer, bad)
        with pytest.raises(InputError):
            select_keyframes([], suite.image_text_scorer, 0.9)
