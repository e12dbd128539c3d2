import numpy as np
import pytest

from irunet.data import (DatasetManifest, ManifestRow, batch_iter, build_manifest,
                         epoch_plan, materialize_batch)

from conftest import write_corpus


class TestBuildManifest:
    def test_round_robin_balance_102_images(self, tmp_path):
        clean = tmp_path / "clean"
        write_corpus(clean, 102, size=16)
        manifest = build_manifest(clean, range(51), base_seed=5)
        counts = manifest.sigma_counts()
        assert sorted(counts) == list(range(51))
        assert all(c == 2 for c in counts.values())

    def test_deterministic_bytes(self, tmp_path, corpus8):
        clean_dir, _ = corpus8
        a_path = tmp_path / "a.csv"
        b_path = tmp_path / "b.csv"
        build_manifest(clean_dir, [0, 10, 25], base_seed=9).save(a_path)
        build_manifest(clean_dir, [0, 10, 25], base_seed=9).save(b_path)
        assert a_path.read_bytes() == b_path.read_bytes()

    def test_split_ratio(self, tmp_path):
        clean = tmp_path / "clean"
        write_corpus(clean, 10, size=16)
        manifest = build_manifest(clean, [25], base_seed=1, split_ratio=0.8)
        assert len(manifest.split_rows("train")) == 8
        assert len(manifest.split_rows("test")) == 2

    def test_empty_directory_rejected(self, tmp_path):
        empty = tmp_path / "nothing"
        empty.mkdir()
        with pytest.raises(ValueError, match="no readable images"):
            build_manifest(empty, [25], base_seed=1)

    def test_sigma_out_of_range_rejected(self, corpus8):
        clean_dir, _ = corpus8
        with pytest.raises(ValueError):
            build_manifest(clean_dir, [51], base_seed=1)

    def test_per_row_seeds_unique(self, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, [25], base_seed=1)
        seeds = [r.seed for r in manifest.rows]
        assert len(seeds) == len(set(seeds))


class TestManifestIO:
    def test_save_load_round_trip(self, tmp_path, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, [0, 25, 50], base_seed=3)
        path = tmp_path / "manifest.csv"
        manifest.save(path)
        loaded = DatasetManifest.load(path)
        assert [(r.sigma, r.seed, r.split) for r in loaded.rows] == \
               [(r.sigma, r.seed, r.split) for r in manifest.rows]
        # resolved paths point at the same files
        assert [loaded.resolve(r) for r in loaded.rows]

    def test_header_and_lf_endings(self, tmp_path, corpus8):
        clean_dir, _ = corpus8
        path = tmp_path / "m.csv"
        build_manifest(clean_dir, [25], base_seed=3).save(path)
        raw = path.read_bytes()
        assert raw.startswith(b"clean_path,sigma,seed,split\n")
        assert b"\r" not in raw

    def test_missing_file_listed_on_load(self, tmp_path, corpus8):
        clean_dir, names = corpus8
        path = tmp_path / "m.csv"
        build_manifest(clean_dir, [25], base_seed=3).save(path)
        (clean_dir / names[0]).unlink()
        with pytest.raises(FileNotFoundError, match=names[0]):
            DatasetManifest.load(path)

    def test_duplicate_rows_rejected(self):
        row = ManifestRow("a.png", 25, 7, "train")
        with pytest.raises(ValueError, match="unique"):
            DatasetManifest([row, row])

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("nope\n")
        with pytest.raises(ValueError, match="header"):
            DatasetManifest.load(path)

    def test_bad_split_rejected(self):
        with pytest.raises(ValueError, match="split"):
            ManifestRow("a.png", 25, 7, "validation")


class TestBatchIter:
    def test_identical_epochs_for_same_seed(self, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, [10, 25], base_seed=4, split_ratio=1.0)
        a = list(batch_iter(manifest, "train", 3, epoch_seed=7))
        b = list(batch_iter(manifest, "train", 3, epoch_seed=7))
        assert len(a) == len(b) == 3  # 8 rows in batches of 3
        for (na, ca, sa), (nb, cb, sb) in zip(a, b):
            assert np.array_equal(na.data, nb.data)
            assert np.array_equal(ca.data, cb.data)
            assert np.array_equal(sa, sb)

    def test_different_epoch_seed_changes_order(self, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, list(range(8)), base_seed=4, split_ratio=1.0)
        a = np.concatenate([s for _, _, s in batch_iter(manifest, "train", 2, epoch_seed=1)])
        b = np.concatenate([s for _, _, s in batch_iter(manifest, "train", 2, epoch_seed=2)])
        assert not np.array_equal(a, b)

    def test_values_normalized(self, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, [50], base_seed=4, split_ratio=1.0)
        for noisy, clean, _ in batch_iter(manifest, "train", 4, epoch_seed=7):
            for t in (noisy, clean):
                assert t.data.min() >= 0.0 and t.data.max() <= 1.0
            assert noisy.shape == clean.shape == (4, 3, 32, 32)

    def test_epoch_sigma_multiset_matches_manifest(self, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, [0, 10, 25, 40], base_seed=4, split_ratio=1.0)
        seen = np.concatenate([s for _, _, s in batch_iter(manifest, "train", 3, epoch_seed=9)])
        expected = sorted(r.sigma for r in manifest.split_rows("train"))
        assert sorted(seen.tolist()) == expected

    def test_mixed_dimensions_rejected(self, tmp_path):
        clean = tmp_path / "clean"
        write_corpus(clean, 2, size=16, tag="s")
        write_corpus(clean, 2, size=32, tag="t")
        manifest = build_manifest(clean, [25], base_seed=1, split_ratio=1.0)
        with pytest.raises(ValueError, match="mixed dimensions"):
            for _ in batch_iter(manifest, "train", 4, epoch_seed=1):
                pass

    def test_batch_size_validated(self, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, [25], base_seed=1, split_ratio=1.0)
        with pytest.raises(ValueError, match="batch_size"):
            epoch_plan(manifest.rows, 0, 1)

    def test_empty_split_rejected(self, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, [25], base_seed=1, split_ratio=1.0)
        with pytest.raises(ValueError, match="empty"):
            list(batch_iter(manifest, "test", 2, epoch_seed=1))

    def test_cache_is_used(self, corpus8):
        clean_dir, _ = corpus8
        manifest = build_manifest(clean_dir, [25], base_seed=1, split_ratio=1.0)
        cache = {}
        list(batch_iter(manifest, "train", 4, epoch_seed=1, cache=cache))
        assert len(cache) == 8
        noisy, clean, sigmas = materialize_batch(manifest, manifest.rows[:2], cache=cache)
        assert noisy.shape == (2, 3, 32, 32)
