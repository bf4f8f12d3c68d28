import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cslid import dsp
from cslid.augment import (
    AugmentPolicy,
    MaskPlan,
    Provenance,
    augment_batch,
    apply_plan,
    language_mask_plan,
    plan_for,
    sample_random_plan,
    time_warp,
    utterance_rng,
    warp_source_positions,
)
from cslid.errors import DimensionError, InvalidWarpError
from cslid.io import ManifestEntry
from cslid.labels import english_segments, frame_labels, parse_transcript

FRAMING = dsp.FramingConfig()


def _spec(rng, tau=120, v=80):
    return dsp.Spectrogram(rng.normal(size=(tau, v)) + 5.0, FRAMING)


def _interval_union(intervals):
    cells = set()
    for a, b in intervals:
        cells.update(range(a, b))
    return cells


class TestSampling:
    def test_bounds(self):
        policy = AugmentPolicy(time_warp_W=10, freq_mask_F=27, n_freq_masks=2, time_mask_T=40, n_time_masks=2)
        rng = np.random.default_rng(0)
        for _ in range(2000):
            tau = int(rng.integers(1, 300))
            plan = sample_random_plan(policy, (tau, 80), rng)
            for a, b in plan.freq_masks:
                assert 0 < b - a < 27 and 0 <= a < 80 - (b - a)
            for a, b in plan.time_masks:
                assert 0 < b - a < 40 and 0 <= a < tau - (b - a)
            if plan.warp is not None:
                center, d = plan.warp
                assert 10 < center < tau - 10 and abs(d) <= 10

    def test_degenerate_policy_gives_empty_plan(self):
        policy = AugmentPolicy(time_warp_W=0, freq_mask_F=0, time_mask_T=0)
        plan = sample_random_plan(policy, (100, 80), np.random.default_rng(1))
        assert plan.is_empty()

    def test_short_input_skips_warp(self):
        plan = sample_random_plan(AugmentPolicy(time_warp_W=10), (21, 80), np.random.default_rng(2))
        assert plan.warp is None

    def test_seeded_determinism(self):
        policy = AugmentPolicy()
        a = sample_random_plan(policy, (200, 80), utterance_rng(7, 3))
        b = sample_random_plan(policy, (200, 80), utterance_rng(7, 3))
        assert a == b

    def test_plan_dict_roundtrip(self):
        plan = MaskPlan(warp=(50, -3), freq_masks=((1, 5),), time_masks=((10, 12), (40, 60)), provenance=Provenance.RANDOM)
        assert MaskPlan.from_dict(plan.to_dict()) == plan

    def test_policy_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError):
            AugmentPolicy.from_dict({"time_warp": 3})


class TestApply:
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_masked_cell_census(self, seed):
        rng = np.random.default_rng(seed)
        tau, v = int(rng.integers(30, 150)), 80
        s = _spec(rng, tau, v)
        policy = AugmentPolicy(time_warp_W=0, freq_mask_F=30, n_freq_masks=3, time_mask_T=50, n_time_masks=3)
        plan = sample_random_plan(policy, (tau, v), rng)
        out = apply_plan(s, plan)
        nf = len(_interval_union(plan.freq_masks))
        nt = len(_interval_union(plan.time_masks))
        assert int(np.sum(out.values == 0.0)) == nf * tau + nt * v - nf * nt

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_idempotent_without_warp(self, seed):
        rng = np.random.default_rng(seed)
        s = _spec(rng)
        plan = sample_random_plan(AugmentPolicy(time_warp_W=0, n_time_masks=2), s.shape, rng)
        once = apply_plan(s, plan)
        np.testing.assert_array_equal(apply_plan(once, plan).values, once.values)

    def test_out_of_range_masks(self, rng):
        s = _spec(rng, 50, 80)
        with pytest.raises(DimensionError):
            apply_plan(s, MaskPlan(freq_masks=((70, 81),)))
        with pytest.raises(DimensionError):
            apply_plan(s, MaskPlan(time_masks=((10, 10),)))

    def test_requires_mean_normalized(self, rng):
        s = dsp.Spectrogram(rng.normal(size=(20, 8)), FRAMING, mean_normalized=False)
        with pytest.raises(DimensionError):
            apply_plan(s, MaskPlan(time_masks=((0, 2),)))

    def test_input_untouched(self, rng):
        s = _spec(rng)
        before = s.values.copy()
        apply_plan(s, MaskPlan(warp=(50, 4), freq_masks=((0, 10),), time_masks=((5, 9),)))
        np.testing.assert_array_equal(s.values, before)


class TestTimeWarp:
    def test_matches_interp_reference(self, rng):
        s = _spec(rng, 60, 5)
        center, d = 25, 6
        out = time_warp(s, center, d).values
        # reference: output frame j reads source position given by np.interp over the two anchors
        src = np.interp(np.arange(60), [0, center + d, 59], [0, center, 59])
        for ch in range(5):
            np.testing.assert_allclose(out[:, ch], np.interp(src, np.arange(60), s.values[:, ch]), atol=1e-12)

    def test_endpoints_and_anchor(self):
        src = warp_source_positions(100, 40, -7)
        assert src[0] == 0.0 and src[-1] == 99.0 and src[33] == pytest.approx(40.0)
        assert np.all(np.diff(src) > 0)

    def test_zero_displacement_is_identity(self, rng):
        s = _spec(rng)
        assert time_warp(s, 50, 0) is s

    def test_invalid(self, rng):
        s = _spec(rng, 50, 4)
        with pytest.raises(InvalidWarpError):
            time_warp(s, 5, 3, max_warp=10)
        with pytest.raises(InvalidWarpError):
            time_warp(s, 40, 15)


class TestLanguageMask:
    @given(st.text(alphabet="SGE", min_size=1, max_size=40))
    def test_masks_exactly_english_frames(self, text):
        t = parse_transcript(text)
        n = len(text) * 20
        plan = language_mask_plan(t, FRAMING, n)
        assert len(plan.time_masks) == len(english_segments(t, 20, n))
        masked = _interval_union(plan.time_masks)
        labels = frame_labels(t, 20, n)
        assert masked == {i for i, c in enumerate(labels) if c == "E"}
        assert plan.warp is None and plan.freq_masks == ()
        assert plan.provenance is Provenance.LANGUAGE_TRANSCRIPT

    def test_worked_example(self):
        plan = language_mask_plan(parse_transcript("SSSGGGEEGG"), FRAMING, 200)
        assert plan.time_masks == ((120, 160),)

    def test_all_native_changes_only_frequency_rows(self, rng):
        t = parse_transcript("GGGGGG")
        s = _spec(rng, 120, 80)
        policy = AugmentPolicy(use_language_mask=True, freq_mask_F=20)
        plan = plan_for(policy, s, t, np.random.default_rng(3))
        assert plan.freq_masks and not plan.time_masks and plan.warp is None
        out = apply_plan(s, plan)
        changed = np.any(out.values != s.values, axis=0)
        assert set(np.flatnonzero(changed)) == _interval_union(plan.freq_masks)


class TestStream:
    def _entries(self, n):
        return [ManifestEntry(utt=f"u{i}", audio=f"u{i}.wav", transcript="GGEE") for i in range(n)]

    def _loader(self, entry):
        if entry.utt == "u1":
            raise FileNotFoundError(entry.audio)
        seed = int(entry.utt[1:])
        return _spec(np.random.default_rng(seed), 80, 80), parse_transcript(entry.transcript)

    def test_skips_bad_entries(self):
        stream = augment_batch(self._entries(4), AugmentPolicy(use_language_mask=True), loader=self._loader)
        items = list(stream)
        assert [i.utt for i in items] == ["u0", "u2", "u3"]
        assert (stream.n_skipped, stream.n_emitted) == (1, 3)
        assert items[0].plan.time_masks == ((40, 80),)

    def test_deterministic(self):
        a = list(augment_batch(self._entries(3), AugmentPolicy(rng_seed=5), loader=self._loader))
        b = list(augment_batch(self._entries(3), AugmentPolicy(rng_seed=5), loader=self._loader))
        assert [x.augmented.values.tobytes() for x in a] == [x.augmented.values.tobytes() for x in b]
