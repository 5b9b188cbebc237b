import numpy as np
import pytest

from polytrack.corpus import BatchStream, ingest_uci, write_uci
from polytrack.exceptions import IdOutOfRange, ParseError
from polytrack.synthetic import sample_documents


def _write(path, text):
    path.write_text(text)
    return path


def test_toy_file(tmp_path):
    doc = _write(tmp_path / "d.uci", "2\n3\n4\n1 1 2\n1 3 1\n2 2 5\n2 3 1\n")
    voc = _write(tmp_path / "v.txt", "apple\nbanana\ncherry\n")
    batch, vocab = ingest_uci(doc, voc)
    np.testing.assert_array_equal(batch.counts.toarray(), [[2, 0, 1], [0, 5, 1]])
    assert vocab == ["apple", "banana", "cherry"]


def test_duplicate_pairs_summed(tmp_path):
    doc = _write(tmp_path / "d.uci", "1\n2\n2\n1 1 2\n1 1 3\n")
    np.testing.assert_array_equal(ingest_uci(doc)[0].counts.toarray(), [[5, 0]])


def test_word_id_past_vocabulary(tmp_path):
    doc = _write(tmp_path / "d.uci", "1\n3\n1\n1 4 1\n")
    with pytest.raises(IdOutOfRange) as info:
        ingest_uci(doc)
    assert info.value.line == 4


def test_nnz_mismatch(tmp_path):
    doc = _write(tmp_path / "d.uci", "1\n3\n3\n1 1 1\n1 2 1\n")
    with pytest.raises(ParseError):
        ingest_uci(doc)


@pytest.mark.parametrize("text", ["1\n3\n", "1\nx\n1\n1 1 1\n", "1\n3\n1\n1 1 0\n", "1\n3\n1\n1 1\n"])
def test_malformed(tmp_path, text):
    with pytest.raises(ParseError):
        ingest_uci(_write(tmp_path / "d.uci", text))


def test_vocab_length_checked(tmp_path):
    doc = _write(tmp_path / "d.uci", "1\n3\n1\n1 1 1\n")
    with pytest.raises(ParseError):
        ingest_uci(doc, _write(tmp_path / "v.txt", "a\nb\n"))


def test_uci_round_trip(tmp_path, rng):
    batch = sample_documents(rng.dirichlet(np.ones(20), size=2), 15, 30, 0.3, rng)
    write_uci(tmp_path / "b.uci", batch)
    back, _ = ingest_uci(tmp_path / "b.uci")
    assert (back.counts != batch.counts).nnz == 0


def test_stream_write_open(tmp_path, rng):
    topics = rng.dirichlet(np.ones(10), size=2)
    batches = {(t, j): sample_documents(topics, 5, 20, 0.5, rng) for t in (1, 2, 4) for j in (0, 1, 10)}
    del batches[(2, 1)]
    BatchStream.write(tmp_path, batches, [f"w{i}" for i in range(10)])
    stream = BatchStream.open(tmp_path)
    assert stream.timesteps == [1, 2, 4]
    assert stream.groups == ["0", "1", "10"]
    assert stream.batch(2, "1") is None
    assert (stream.batch(4, "10").counts != batches[(4, 10)].counts).nnz == 0
    assert (tmp_path / "t4" / "g10.uci").exists()


def test_stream_rejects_decreasing_time(tmp_path):
    (tmp_path / "vocab.txt").write_text("a\n")
    (tmp_path / "manifest.tsv").write_text("t\tgroup\tpath\n2\t0\tx\n1\t0\ty\n")
    with pytest.raises(ParseError):
        BatchStream.open(tmp_path)


def test_stream_rejects_repeated_group(tmp_path):
    (tmp_path / "vocab.txt").write_text("a\n")
    (tmp_path / "manifest.tsv").write_text("1\t0\tx\n1\t0\ty\n")
    with pytest.raises(ParseError):
        BatchStream.open(tmp_path)
