import numpy as np
import pytest
from hypothesis import given, strategies as st

from genrestat import ingest, synthkit
from genrestat.errors import ContractViolation, InvalidSignatureError
from genrestat.genres import GENRES

from conftest import averaged_spectrum


def _short_recipes(n=9, overlap=0.0):
    recipes = synthkit.default_recipes(16, duration_range=(5.0, 10.0), overlap=overlap)
    return recipes[:n]


class TestEventClip:
    def test_tone_peak(self):
        sig = synthkit.EventSignature(0, "tone", 1000.0)
        w = synthkit.gen_event_clip(sig, 5.0, seed=7)
        assert len(w.samples) == 160000
        assert w.sample_rate == 32000
        peak = int(np.argmax(averaged_spectrum(w.samples)))
        assert abs(peak - 1000 * 1024 / 32000) <= 1

    def test_snr_at_least_20db(self):
        sig = synthkit.EventSignature(0, "tone", 1000.0)
        x = synthkit.gen_event_clip(sig, 5.0, seed=3).samples
        t = np.arange(len(x)) / 32000
        basis = np.stack([np.sin(2 * np.pi * 1000 * t), np.cos(2 * np.pi * 1000 * t)], axis=1)
        coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
        resid = x - basis @ coef
        snr = 10 * np.log10(np.sum((basis @ coef) ** 2) / np.sum(resid ** 2))
        assert snr >= 19.9

    def test_zero_duration(self):
        with pytest.raises(ContractViolation):
            synthkit.gen_event_clip(synthkit.EventSignature(0, "tone", 440.0), 0.0, seed=1)

    def test_deterministic(self):
        sig = synthkit.EventSignature(3, "am_noise", 2000.0, 600.0, 4.0)
        a = synthkit.gen_event_clip(sig, 1.5, seed=11).samples
        b = synthkit.gen_event_clip(sig, 1.5, seed=11).samples
        assert np.array_equal(a, b)
        c = synthkit.gen_event_clip(sig, 1.5, seed=12).samples
        assert not np.array_equal(a, c)

    @pytest.mark.parametrize("centre,bw", [(17000.0, 0.0), (15900.0, 400.0), (-5.0, 0.0), (100.0, 300.0)])
    def test_band_outside_nyquist(self, centre, bw):
        sig = synthkit.EventSignature(0, "noise_band", centre, bw)
        with pytest.raises(InvalidSignatureError):
            synthkit.gen_event_clip(sig, 1.0, seed=0)

    def test_modulated_kinds_need_rate(self):
        with pytest.raises(InvalidSignatureError):
            synthkit.gen_event_clip(synthkit.EventSignature(0, "chirp", 1000.0, 200.0), 1.0, seed=0)

    @pytest.mark.parametrize("sig", synthkit.default_signatures(16), ids=lambda s: f"ev{s.event_id}-{s.kind}")
    def test_default_signatures_bounded(self, sig):
        x = synthkit.gen_event_clip(sig, 1.0, seed=5).samples
        assert np.all(np.isfinite(x))
        assert np.max(np.abs(x)) <= 1.0
        assert 50 < sig.center_hz < 14000


class TestRecipes:
    def test_default_recipes_are_distributions(self):
        for r in synthkit.default_recipes():
            assert r.event_mixture.sum() == pytest.approx(1.0, abs=1e-12)
            assert r.overlap_mixture.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(r.event_mixture > 0)
        assert [r.genre for r in synthkit.default_recipes()] == list(GENRES)

    def test_bad_mixture(self):
        with pytest.raises(ContractViolation):
            synthkit.GenreRecipe("Drama", [0.5, 0.6])
        with pytest.raises(ContractViolation):
            synthkit.GenreRecipe("Drama", [1.5, -0.5])

    def test_short_duration_rejected(self):
        with pytest.raises(ContractViolation):
            synthkit.GenreRecipe("Drama", [0.5, 0.5], duration_range=(4.0, 10.0))

    def test_recipe_file_round_trip(self, tmp_path):
        recipes, sigs = synthkit.default_recipes(), synthkit.default_signatures()
        synthkit.save_recipes(tmp_path / "r.json", recipes, sigs)
        back, back_sigs = synthkit.load_recipes(tmp_path / "r.json")
        assert back_sigs == sigs
        for a, b in zip(recipes, back):
            assert a.genre == b.genre
            assert np.array_equal(a.event_mixture, b.event_mixture)
            assert np.array_equal(a.overlap_mixture, b.overlap_mixture)
            assert (a.overlap, a.overlap_gain_db, a.max_overlaps) == (b.overlap, b.overlap_gain_db, b.max_overlaps)

    @pytest.mark.parametrize("g", range(9))
    def test_event_frequencies_match_mixture(self, g):
        recipe = synthkit.default_recipes(duration_range=(500.0, 600.0))[g]
        rng = np.random.default_rng([2024, g])
        events = np.concatenate([synthkit.draw_programme(recipe, rng)[0] for _ in range(40)])
        assert len(events) >= 4000
        freq = np.bincount(events, minlength=16) / len(events)
        assert 0.5 * np.abs(freq - recipe.event_mixture).sum() < 0.05

    @given(seed=st.integers(0, 2**32 - 1), g=st.integers(0, 8))
    def test_draw_programme_shape(self, seed, g):
        recipe = synthkit.default_recipes()[g]
        events, extras = synthkit.draw_programme(recipe, np.random.default_rng(seed))
        assert 12 <= len(events) <= 24  # 60-120 s of 5 s clips
        assert len(extras) == len(events)
        for ev, more in zip(events, extras):
            assert len(more) <= recipe.max_overlaps
            assert len(set(more) | {int(ev)}) == len(more) + 1


class TestCorpus:
    def test_counts_and_determinism(self, tmp_path):
        recipes = synthkit.default_recipes(16, duration_range=(5.0, 5.0), overlap=0.0)
        m1 = synthkit.gen_corpus(recipes, 28, 42, tmp_path / "a")
        assert len(m1) == 252
        genres = [g for _, _, g in m1.rows]
        assert all(genres.count(g) == 28 for g in GENRES)
        m2 = synthkit.gen_corpus(recipes[:3], 2, 42, tmp_path / "b")
        m3 = synthkit.gen_corpus(recipes[:3], 2, 42, tmp_path / "c")
        assert m2.rows == m3.rows
        for _, rel, _ in m2.rows:
            assert (tmp_path / "b" / rel).read_bytes() == (tmp_path / "c" / rel).read_bytes()
        assert (tmp_path / "b" / "manifest.csv").read_bytes() == (tmp_path / "c" / "manifest.csv").read_bytes()

    def test_durations_are_whole_segments(self, tmp_path):
        m = synthkit.gen_corpus(_short_recipes(2, overlap=0.8), 3, 5, tmp_path)
        for _, rel, _ in m.rows:
            w = ingest.load_audio(m.resolve(rel))
            assert len(w.samples) % ingest.SEGMENT_SAMPLES == 0

    def test_manifest_round_trip(self, tmp_path):
        m = synthkit.gen_corpus(_short_recipes(2), 2, 1, tmp_path)
        back = synthkit.DatasetManifest.read(tmp_path / "manifest.csv")
        assert back.rows == m.rows
        assert (tmp_path / "manifest.csv").read_text().splitlines()[0] == "programme_id,path,genre"

    def test_ground_truth_file(self, tmp_path):
        m = synthkit.gen_corpus(_short_recipes(2, overlap=1.0), 2, 1, tmp_path)
        lines = (tmp_path / "segments.csv").read_text().splitlines()
        assert lines[0] == "programme_id,index,event_id,overlap_event_ids"
        n_segments = sum(len(ingest.load_audio(m.resolve(rel)).samples) // 160000 for _, rel, _ in m.rows)
        assert len(lines) - 1 == n_segments

    def test_one_recipe_rejected(self, tmp_path):
        with pytest.raises(ContractViolation):
            synthkit.gen_corpus(_short_recipes(1), 2, 0, tmp_path)

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            synthkit.gen_corpus(_short_recipes(2), 1, 0, blocker / "sub")


class TestClipSet:
    def test_targets(self, tmp_path):
        sigs = synthkit.default_signatures(4)
        rows = synthkit.gen_clip_set(sigs, 3, 9, tmp_path, overlap=0.7)
        assert len(rows) == 12
        back = synthkit.read_clip_manifest(tmp_path / "clips.csv")
        t = synthkit.clip_targets(back, 4)
        assert np.allclose(t.sum(axis=1), 1.0)
        for (_, ev, targets), row in zip(back, t):
            assert row.argmax() == ev or row[ev] == row.max()
            assert ev in targets
        assert {p.name for p, _, _ in back} == {p.name for p in (tmp_path / "clips").iterdir()}

    def test_single_event_clips_are_one_hot(self, tmp_path):
        synthkit.gen_clip_set(synthkit.default_signatures(3), 2, 0, tmp_path)
        back = synthkit.read_clip_manifest(tmp_path / "clips.csv")
        assert np.array_equal(synthkit.clip_targets(back, 3), np.repeat(np.eye(3), 2, axis=0))
