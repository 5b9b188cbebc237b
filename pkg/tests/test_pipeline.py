import numpy as np
import pytest

from polytrack.corpus import BatchStream
from polytrack.exceptions import InvariantViolation, ParseError
from polytrack.hyper import ModelHyperparams
from polytrack.pipeline import REPORT_COLUMNS, load_checkpoint, run_model
from polytrack.synthetic import sample_corpus

V = 30


@pytest.fixture
def corpus(tmp_path):
    truth, batches, _ = sample_corpus(V, 4, 2, 4, 40, 60, np.random.default_rng(5))
    stream = BatchStream.write(tmp_path / "stream", batches, [f"w{i}" for i in range(V)])
    return stream, batches


def _all_docs(batches):
    return np.vstack([b.normalized() for b in batches.values()])


@pytest.mark.parametrize("kind", ["sdm", "sddm", "dm"])
def test_runs_and_writes_outputs(corpus, tmp_path, kind):
    stream, batches = corpus
    res = run_model(kind, stream, seed=1, out_dir=tmp_path / "out")
    th = res.thetas
    assert th.shape[0] >= 1
    np.testing.assert_allclose(np.linalg.norm(th, axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(res.topics.sum(axis=1), 1.0, atol=1e-9)
    header = (tmp_path / "out" / "report.csv").read_text().splitlines()[0]
    assert header.split(",") == REPORT_COLUMNS[kind]
    assert len(res.report) == (2 if kind == "dm" else 4)
    # the reference is the mean of every document seen
    np.testing.assert_allclose(res.ref.mean, _all_docs(batches).mean(axis=0), atol=1e-12)


def test_report_floats_full_precision(corpus, tmp_path):
    stream, _ = corpus
    run_model("sdm", stream, out_dir=tmp_path / "out")
    rows = (tmp_path / "out" / "report.csv").read_text().splitlines()[1:]
    shifts = [float(r.split(",")[-1]) for r in rows]
    assert all(np.isfinite(shifts))


@pytest.mark.parametrize("kind", ["sdm", "sddm"])
def test_empty_timestep_keeps_topics_dormant(tmp_path, kind):
    _, batches, _ = sample_corpus(V, 3, 1, 3, 30, 60, np.random.default_rng(2))
    del batches[(2, 0)]
    stream = BatchStream.write(tmp_path / "s", batches, [f"w{i}" for i in range(V)])
    stream.entries[2] = {}
    res = run_model(kind, stream)
    row = dict(zip(REPORT_COLUMNS[kind], res.report[1]))
    assert row["t"] == 2 and row["n_docs"] == 0 and row["n_estimates"] == 0
    assert row["matched"] == 0 and row["new"] == 0
    assert row["dormant"] == res.report[0][3] == row["n_topics"]
    assert row["max_shift"] == 0.0


@pytest.mark.parametrize("kind", ["sdm", "sddm"])
def test_resume_is_bit_exact(corpus, tmp_path, kind):
    stream, _ = corpus
    full = run_model(kind, stream, seed=3)
    ck = tmp_path / "ck.json"
    part = run_model(kind, stream, seed=3, checkpoint=ck, stop_after=2)
    assert not part.completed
    assert load_checkpoint(ck)["steps_done"] == 2
    rest = run_model(kind, stream, seed=3, resume=ck)
    np.testing.assert_array_equal(rest.thetas, full.thetas)
    assert rest.report == full.report
    np.testing.assert_array_equal(rest.ref.mean, full.ref.mean)


def test_resume_rejects_other_configuration(corpus, tmp_path):
    stream, _ = corpus
    ck = tmp_path / "ck.json"
    run_model("sdm", stream, seed=3, checkpoint=ck, stop_after=1)
    with pytest.raises(InvariantViolation):
        run_model("sdm", stream, seed=4, resume=ck)
    with pytest.raises(InvariantViolation):
        run_model("sddm", stream, seed=3, resume=ck)


@pytest.mark.parametrize("kind", ["sdm", "sddm", "dm"])
def test_thread_count_does_not_change_outputs(corpus, tmp_path, kind):
    stream, _ = corpus
    run_model(kind, stream, seed=9, threads=1, out_dir=tmp_path / "a")
    run_model(kind, stream, seed=9, threads=4, out_dir=tmp_path / "b")
    for name in ("report.csv", "topics.csv", "thetas.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_errors_name_the_timestep(corpus):
    stream, _ = corpus
    path = stream.root / stream.entries[3]["1"]
    path.write_text("1\n5\n1\n1 1 1\n")
    with pytest.raises(ParseError, match="timestep 3"):
        run_model("sddm", stream)


def test_not_converged_is_a_warning(corpus):
    stream, _ = corpus
    with pytest.warns(RuntimeWarning):
        res = run_model("dm", stream, max_sweeps=0)
    assert not res.converged


def test_explicit_hyper(corpus):
    stream, _ = corpus
    h = ModelHyperparams(tau0=50.0, tau1=50.0, gamma0=1.0)
    res = run_model("sdm", stream, hyper=h)
    assert res.state.hyper == h
