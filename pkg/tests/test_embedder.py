import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curator.dataset import Dataset, Sample
from curator.embedder import (
    EMBED_DIM,
    EmbedderSpec,
    EmbeddingMatrix,
    embed_dataset_class,
    embed_image,
    embed_samples,
    export_embeddings,
    import_embeddings,
)
from helpers import make_dataset, make_image


class TestEmbedImage:
    def test_zero_image_stays_zero(self):
        vec = embed_image(np.zeros((16, 16), dtype=np.uint8))
        assert vec.shape == (EMBED_DIM,)
        assert np.all(vec == 0.0)

    def test_all_255_embeds_to_one_sixteenth(self):
        # 256 ones have L2 norm exactly 16
        vec = embed_image(np.full((16, 16), 255, dtype=np.uint8))
        assert np.max(np.abs(vec - 1.0 / 16.0)) < 1e-9

    def test_output_length_256(self):
        for shape in [(16, 16), (8, 8), (31, 9), (100, 40)]:
            assert embed_image(make_image(1, *shape)).shape == (EMBED_DIM,)

    def test_constant_nonzero_images_normalize_identically(self):
        a = embed_image(np.full((16, 16), 10, dtype=np.uint8))
        b = embed_image(np.full((24, 40), 200, dtype=np.uint8))
        assert np.array_equal(a, b)

    def test_unnormalized_range_and_linearity(self):
        spec = EmbedderSpec(l2_normalize=False)
        one = embed_image(np.full((16, 16), 1, dtype=np.uint8), spec)
        fifty = embed_image(np.full((16, 16), 50, dtype=np.uint8), spec)
        assert np.allclose(fifty, 50.0 * one)

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**31),
        h=st.integers(min_value=8, max_value=40),
        w=st.integers(min_value=8, max_value=40),
    )
    def test_norm_and_range_properties(self, seed, h, w):
        img = make_image(seed, h, w)
        raw = embed_image(img, EmbedderSpec(l2_normalize=False))
        assert raw.min() >= 0.0 and raw.max() <= 1.0
        normed = embed_image(img)
        norm = np.linalg.norm(normed)
        assert norm == 0.0 or abs(norm - 1.0) < 1e-9

    def test_deterministic(self):
        img = make_image(77, 20, 12)
        assert np.array_equal(embed_image(img), embed_image(img.copy()))


class TestEmbedClass:
    def test_rows_in_dataset_order(self):
        d = make_dataset({"ii": 3})
        m = embed_dataset_class(d, "ii")
        assert m.ids == tuple(s.id for s in d.samples["ii"])
        assert m.rows.shape == (3, EMBED_DIM)

    def test_identical_images_identical_rows(self):
        img = make_image(5)
        d = Dataset.from_samples(
            "d", "train",
            [Sample(id="i/a", label="i", image=img), Sample(id="i/b", label="i", image=img.copy())],
        )
        m = embed_dataset_class(d, "i")
        assert np.array_equal(m.rows[0], m.rows[1])

    def test_imported_missing_id(self, tmp_path):
        d = make_dataset({"i": 2})
        partial = EmbeddingMatrix(ids=("i/fixture-000",), rows=np.ones((1, EMBED_DIM), dtype="<f4"))
        path = export_embeddings(partial, tmp_path / "e.bin")
        spec = EmbedderSpec(kind="imported", path=str(path))
        with pytest.raises(ValueError, match="i/fixture-001"):
            embed_dataset_class(d, "i", spec)

    def test_imported_round_trip_through_class(self, tmp_path):
        d = make_dataset({"v": 2})
        baseline = embed_samples(list(d.iter_samples()))
        f32 = EmbeddingMatrix(ids=baseline.ids, rows=baseline.rows.astype("<f4"))
        path = export_embeddings(f32, tmp_path / "e.bin")
        m = embed_dataset_class(d, "v", EmbedderSpec(kind="imported", path=str(path)))
        assert np.array_equal(m.rows, f32.rows[-2:].astype(np.float64))


class TestEmbeddingsFile:
    def _random_matrix(self, n, seed=0):
        rng = np.random.default_rng(seed)
        rows = rng.normal(size=(n, EMBED_DIM)).astype("<f4").astype(np.float64)
        return EmbeddingMatrix(ids=tuple(f"i/s{k}" for k in range(n)), rows=rows)

    def test_round_trip(self, tmp_path):
        m = self._random_matrix(5, seed=3)
        back = import_embeddings(export_embeddings(m, tmp_path / "e.bin"))
        assert back.ids == m.ids
        assert np.array_equal(back.rows, m.rows)

    def test_empty_matrix_round_trips(self, tmp_path):
        m = EmbeddingMatrix(ids=(), rows=np.zeros((0, EMBED_DIM)))
        back = import_embeddings(export_embeddings(m, tmp_path / "e.bin"))
        assert back.ids == () and back.rows.shape == (0, EMBED_DIM)

    def test_wrong_dim_rejected(self, tmp_path):
        payload = b"EMB1" + struct.pack("<II", 0, 128)
        path = tmp_path / "bad.bin"
        path.write_bytes(payload)
        with pytest.raises(ValueError, match=r"embedding dim 128 != 256"):
            import_embeddings(path)

    def test_truncated_rejected(self, tmp_path):
        m = self._random_matrix(2)
        path = export_embeddings(m, tmp_path / "e.bin")
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(ValueError, match="truncated"):
            import_embeddings(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        row = np.zeros(EMBED_DIM, dtype="<f4").tobytes()
        payload = b"EMB1" + struct.pack("<II", 2, EMBED_DIM)
        for _ in range(2):
            payload += struct.pack("<H", 3) + b"i/a" + row
        path = tmp_path / "dup.bin"
        path.write_bytes(payload)
        with pytest.raises(ValueError, match="duplicate id"):
            import_embeddings(path)

    def test_csv_import(self, tmp_path):
        m = self._random_matrix(3, seed=9)
        lines = ["id," + ",".join(f"v{k}" for k in range(EMBED_DIM))]
        for sample_id, row in zip(m.ids, m.rows):
            lines.append(sample_id + "," + ",".join(repr(float(x)) for x in row))
        path = tmp_path / "e.csv"
        path.write_text("\n".join(lines) + "\n")
        back = import_embeddings(path)
        assert back.ids == m.ids
        assert np.array_equal(back.rows, m.rows)

    def test_csv_wrong_width(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("id," + ",".join(f"v{k}" for k in range(128)) + "\n")
        with pytest.raises(ValueError, match="embedding dim 128 != 256"):
            import_embeddings(path)

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("sample," + ",".join(f"v{k}" for k in range(EMBED_DIM)) + "\n")
        with pytest.raises(ValueError, match="bad header"):
            import_embeddings(path)
