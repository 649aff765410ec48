"""Data pipeline tests: manifest, codecs, augmentation, toy generator."""

from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from crossmlp.data import (CROP_INFLATE, MANIFEST_HEADER, TOY_CLASSES,
                           TOY_PALETTE, AugmentParams, ManifestEntry,
                           batches_per_epoch, draw_augments, epoch_order,
                           generate_toy_dataset, iterate_epoch, load_batch,
                           load_image, load_pair, load_semantic,
                           read_manifest, save_image, save_semantic,
                           semantic_to_indices, write_manifest)
from crossmlp.errors import DataError, DomainError


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    manifest = generate_toy_dataset(root, n=10, size=64, seed=0)
    return manifest, read_manifest(manifest)


class TestManifest:
    def test_round_trip(self, tmp_path):
        entries = [
            ManifestEntry(f"s{i}", tmp_path / f"{i}a.png",
                          tmp_path / f"{i}b.png", tmp_path / f"{i}c.png")
            for i in range(3)
        ]
        path = tmp_path / "manifest.tsv"
        write_manifest(path, entries)
        got = read_manifest(path)
        assert [e.sample_id for e in got] == ["s0", "s1", "s2"]
        assert got[0].source == tmp_path / "0a.png"
        assert got[2].semantic == tmp_path / "2c.png"

    def test_header_line(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        write_manifest(path, [ManifestEntry("a", Path("x"), Path("y"), Path("z"))])
        assert path.read_text().splitlines()[0] == MANIFEST_HEADER

    def test_paths_stored_relative(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        write_manifest(path, [ManifestEntry(
            "a", tmp_path / "img" / "x.png", tmp_path / "img" / "y.png",
            tmp_path / "img" / "z.png")])
        body = path.read_text().splitlines()[1]
        assert body == "a\timg/x.png\timg/y.png\timg/z.png"

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tx\ty\tz\n")
        with pytest.raises(DataError):
            read_manifest(path)

    def test_wrong_field_count_names_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text(f"{MANIFEST_HEADER}\na\tx\ty\n")
        with pytest.raises(DataError, match=":2:"):
            read_manifest(path)

    def test_empty_manifest_rejected(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text(f"{MANIFEST_HEADER}\n")
        with pytest.raises(DataError):
            read_manifest(path)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text(f"{MANIFEST_HEADER}\n\na\tx\ty\tz\n\n")
        assert len(read_manifest(path)) == 1


class TestImageCodecs:
    def test_image_round_trip_and_range(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.uniform(-1, 1, (16, 16, 3)).astype(np.float32)
        path = tmp_path / "img.png"
        save_image(path, arr)
        back = load_image(path)
        assert back.dtype == np.float32
        assert back.min() >= -1.0 and back.max() <= 1.0
        # 8-bit quantization costs at most half a level
        assert np.abs(back - arr).max() <= (1.0 / 127.5) / 2 + 1e-6

    def test_load_resizes(self, tmp_path):
        path = tmp_path / "img.png"
        save_image(path, np.zeros((32, 32, 3)))
        assert load_image(path, size=16).shape == (16, 16, 3)

    def test_nonsquare_center_cropped(self, tmp_path):
        """A wide image keeps its central square: paint the center column
        white on black and it must survive the crop."""
        arr = np.zeros((10, 30, 3), dtype=np.uint8)
        arr[:, 15] = 255
        path = tmp_path / "wide.png"
        Image.fromarray(arr, mode="RGB").save(path)
        out = load_image(path)
        assert out.shape == (10, 10, 3)
        assert out[:, 5].min() > 0.9

    def test_center_crop_window(self, tmp_path):
        """center_crop takes a centered sub-square before resizing."""
        arr = np.zeros((32, 32, 3), dtype=np.uint8)
        arr[8:24, 8:24] = 255  # white 16x16 center block
        path = tmp_path / "img.png"
        Image.fromarray(arr, mode="RGB").save(path)
        out = load_image(path, center_crop=16)
        assert out.shape == (16, 16, 3)
        assert out.min() > 0.9  # only the white block remains

    def test_unreadable_image_raises_data_error(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_text("not a png")
        with pytest.raises(DataError):
            load_image(path)

    def test_semantic_round_trip_one_hot(self, tmp_path):
        idx = np.array([[0, 1], [2, 3]], dtype=np.uint8)
        path = tmp_path / "sem.png"
        save_semantic(path, idx)
        onehot = load_semantic(path, classes=4)
        assert onehot.shape == (2, 2, 4)
        assert set(np.unique(onehot)) == {-1.0, 1.0}
        np.testing.assert_array_equal(onehot.argmax(axis=-1), idx)
        # exactly one positive plane per pixel
        np.testing.assert_array_equal((onehot > 0).sum(axis=-1), 1)

    def test_semantic_out_of_range_index(self, tmp_path):
        path = tmp_path / "sem.png"
        save_semantic(path, np.full((4, 4), 3, dtype=np.uint8))
        with pytest.raises(DataError):
            load_semantic(path, classes=3)

    def test_semantic_nearest_resize_keeps_indices(self, tmp_path):
        idx = np.zeros((16, 16), dtype=np.uint8)
        idx[8:, :] = 2
        path = tmp_path / "sem.png"
        save_semantic(path, idx)
        onehot = load_semantic(path, classes=3, size=8)
        got = onehot.argmax(axis=-1)
        assert set(np.unique(got)) == {0, 2}

    def test_semantic_to_indices(self):
        sem = torch.full((3, 2, 2), -1.0)
        sem[1, 0, 0] = 1.0
        sem[2, 1, 1] = 1.0
        sem[0, 0, 1] = 1.0
        sem[0, 1, 0] = 1.0
        idx = semantic_to_indices(sem)
        np.testing.assert_array_equal(idx, [[1, 0], [0, 2]])


class TestToyDataset:
    def test_file_count(self, toy, tmp_path):
        manifest, entries = toy
        pngs = sorted(manifest.parent.glob("*.png"))
        assert len(pngs) == 10 * 3
        assert len(entries) == 10

    def test_eight_samples_make_24_files(self, tmp_path):
        manifest = generate_toy_dataset(tmp_path, n=8, size=64, seed=1)
        assert len(list(tmp_path.glob("*.png"))) == 24

    def test_deterministic_bytes(self, tmp_path):
        m1 = generate_toy_dataset(tmp_path / "a", n=3, size=32, seed=5)
        m2 = generate_toy_dataset(tmp_path / "b", n=3, size=32, seed=5)
        for e1, e2 in zip(read_manifest(m1), read_manifest(m2)):
            assert e1.source.read_bytes() == e2.source.read_bytes()
            assert e1.target.read_bytes() == e2.target.read_bytes()
            assert e1.semantic.read_bytes() == e2.semantic.read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        m1 = generate_toy_dataset(tmp_path / "a", n=1, size=32, seed=0)
        m2 = generate_toy_dataset(tmp_path / "b", n=1, size=32, seed=1)
        a = read_manifest(m1)[0].source.read_bytes()
        b = read_manifest(m2)[0].source.read_bytes()
        assert a != b

    def test_semantic_maps_use_all_expected_classes(self, toy):
        _, entries = toy
        seen = set()
        for e in entries:
            onehot = load_semantic(e.semantic, TOY_CLASSES)
            seen |= set(np.unique(onehot.argmax(axis=-1)).tolist())
        # sky, grass and road always render; buildings nearly always
        assert {0, 1, 2} <= seen <= {0, 1, 2, 3}

    def test_rejects_bad_parameters(self, tmp_path):
        with pytest.raises(DomainError):
            generate_toy_dataset(tmp_path, n=0, size=64, seed=0)
        with pytest.raises(DomainError):
            generate_toy_dataset(tmp_path, n=1, size=12, seed=0)
        with pytest.raises(DomainError):
            generate_toy_dataset(tmp_path, n=1, size=30, seed=0)

    def test_loaded_values_in_range(self, toy):
        _, entries = toy
        pair = load_pair(entries[0], TOY_CLASSES, image_size=64)
        assert pair.source.shape == (3, 64, 64)
        assert pair.target.shape == (3, 64, 64)
        assert pair.semantic.shape == (TOY_CLASSES, 64, 64)
        for t in (pair.source, pair.target):
            assert t.min().item() >= -1.0 and t.max().item() <= 1.0
        assert set(torch.unique(pair.semantic).tolist()) <= {-1.0, 1.0}


class TestAugmentation:
    def test_triple_stays_aligned(self, tmp_path):
        """Painting a bright marker at the same spot in all three maps, any
        augmentation draw must move it to the same place in all three."""
        size = 32
        rgb = np.zeros((size, size, 3), dtype=np.float32) - 1.0
        rgb[6:10, 20:24] = 1.0
        idx = np.zeros((size, size), dtype=np.uint8)
        idx[6:10, 20:24] = 2
        save_image(tmp_path / "src.png", rgb)
        save_image(tmp_path / "tgt.png", rgb)
        save_semantic(tmp_path / "sem.png", idx)
        entry = ManifestEntry("m", tmp_path / "src.png", tmp_path / "tgt.png",
                              tmp_path / "sem.png")
        for params in (AugmentParams(False, 0.0, 0.0),
                       AugmentParams(True, 0.3, 0.9),
                       AugmentParams(True, 0.99, 0.01)):
            pair = load_pair(entry, classes=3, image_size=size, augment=params)
            m_src = (pair.source.mean(dim=0) > 0).float()
            m_tgt = (pair.target.mean(dim=0) > 0).float()
            m_sem = (pair.semantic[2] > 0).float()
            assert m_src.sum() > 0  # marker survived the crop
            assert torch.equal(m_src, m_tgt)
            # nearest-vs-bilinear resampling can disagree on marker edges
            overlap = (m_src * m_sem).sum() / m_src.sum()
            assert overlap.item() > 0.5

    def test_flip_is_mirror(self, tmp_path):
        size = 32
        rgb = np.zeros((size, size, 3), dtype=np.float32) - 1.0
        rgb[:, :4] = 1.0  # bright left edge
        save_image(tmp_path / "src.png", rgb)
        save_image(tmp_path / "tgt.png", rgb)
        save_semantic(tmp_path / "sem.png", np.zeros((size, size), dtype=np.uint8))
        entry = ManifestEntry("m", tmp_path / "src.png", tmp_path / "tgt.png",
                              tmp_path / "sem.png")
        flipped = load_pair(entry, 1, size, AugmentParams(True, 0.0, 0.0))
        plain = load_pair(entry, 1, size, AugmentParams(False, 0.0, 0.0))
        assert torch.equal(flipped.source, plain.source.flip(-1))

    def test_crop_inflation_convention(self):
        assert CROP_INFLATE == 286 / 256

    def test_augment_requires_image_size(self, toy):
        _, entries = toy
        with pytest.raises(DomainError):
            load_pair(entries[0], TOY_CLASSES, None, AugmentParams(False, 0, 0))

    def test_draws_are_stateless(self):
        a = draw_augments(6, seed=3, epoch=2)
        b = draw_augments(6, seed=3, epoch=2)
        assert a == b
        c = draw_augments(6, seed=3, epoch=3)
        assert a != c


class TestBatching:
    def test_batch_sizes_include_final_partial(self, toy):
        """10 samples at batch size 4 split as [4, 4, 2]."""
        _, entries = toy
        sizes = [src.shape[0] for _, _, src, _, _ in
                 iterate_epoch(entries, TOY_CLASSES, 64, 4, seed=0, epoch=0)]
        assert sizes == [4, 4, 2]
        assert batches_per_epoch(10, 4) == 3

    def test_shuffle_off_keeps_manifest_order(self, toy):
        _, entries = toy
        ids = []
        for _, batch_ids, _, _, _ in iterate_epoch(
                entries, TOY_CLASSES, 64, 4, seed=0, epoch=0, shuffle=False):
            ids += batch_ids
        assert ids == [e.sample_id for e in entries]

    def test_epoch_order_statelessness(self):
        a = epoch_order(10, seed=1, epoch=4)
        b = epoch_order(10, seed=1, epoch=4)
        np.testing.assert_array_equal(a, b)
        c = epoch_order(10, seed=1, epoch=5)
        assert not np.array_equal(a, c)
        assert sorted(a.tolist()) == list(range(10))

    def test_epoch_order_no_shuffle(self):
        np.testing.assert_array_equal(epoch_order(5, 0, 0, shuffle=False),
                                      np.arange(5))

    def test_start_batch_resumes_identically(self, toy):
        _, entries = toy
        full = list(iterate_epoch(entries, TOY_CLASSES, 64, 4, seed=2, epoch=1))
        tail = list(iterate_epoch(entries, TOY_CLASSES, 64, 4, seed=2, epoch=1,
                                  start_batch=2))
        assert [b for b, *_ in tail] == [2]
        assert tail[0][1] == full[2][1]
        assert torch.equal(tail[0][2], full[2][2])

    def test_empty_batch_rejected(self):
        with pytest.raises(DomainError):
            load_batch([], TOY_CLASSES, 64)

    def test_batch_shapes(self, toy):
        _, entries = toy
        ids, src, tgt, sem = load_batch(entries[:3], TOY_CLASSES, 32)
        assert len(ids) == 3
        assert src.shape == (3, 3, 32, 32)
        assert tgt.shape == (3, 3, 32, 32)
        assert sem.shape == (3, TOY_CLASSES, 32, 32)
