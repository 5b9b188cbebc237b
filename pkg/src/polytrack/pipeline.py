"""Estimate, embed and match over a batch stream, with checkpoints and reports.

Per timestep every group's batch is estimated independently (in a thread
pool); the reference point absorbs all of the step's documents before any of
its estimates are embedded.  Model state is only touched by the orchestrating
thread.

* ``sdm``  pools all groups of a timestep into one batch.
* ``dm``   pools each group's documents over all timesteps and matches once.
* ``sddm`` keeps groups apart at every timestep.
"""
import csv
import json
import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dm import DEFAULT_MAX_SWEEPS, dm_run
from .estimator import DocBatch, EstimatorConfig, estimate_topics, save_topics
from .exceptions import InvariantViolation, PolytrackError
from .geometry import ReferencePoint, embed, inverse_embed, update_reference
from .hyper import ModelHyperparams
from .sddm import SddmState, sddm_step, step_rng
from .sdm import GlobalTopicTrajectory, SdmState, sdm_step

logger = logging.getLogger(__name__)

KINDS = ("sdm", "dm", "sddm")
CHECKPOINT_VERSION = 1
INVARIANT_ATOL = 1e-8

REPORT_COLUMNS = {
    "sdm": ["t", "n_docs", "n_estimates", "n_topics", "matched", "new", "dormant", "max_shift"],
    "sddm": ["t", "n_docs", "n_estimates", "n_topics", "matched", "new", "dormant", "max_shift",
             "sweeps", "converged"],
    "dm": ["group", "n_docs", "n_estimates", "n_topics", "shared", "sweeps", "converged"],
}


@dataclass
class RunResult:
    kind: str
    state: object
    ref: ReferencePoint
    report: list
    timings: list = field(default_factory=list)
    converged: bool = True
    completed: bool = True

    @property
    def thetas(self):
        if self.kind == "sdm":
            return self.state.thetas
        return self.state.global_thetas

    @property
    def topics(self):
        """Global topics mapped back to the simplex about the final reference."""
        th = self.thetas
        if th.shape[0] == 0:
            return np.zeros((0, self.ref.vocab_size))
        return inverse_embed(th, self.ref)


def estimator_seed(seed, t, group):
    return int(np.random.SeedSequence([int(seed), int(t), int(group)]).generate_state(1)[0])


def _estimate_one(batch, ref, config, seed):
    if batch is None or batch.n_docs == 0:
        return None
    topics = estimate_topics(batch, ref, replace(config, seed=seed)).topics
    return embed(topics, ref)


def _estimate_all(pool, jobs, ref, config):
    """``jobs`` is a list of (batch, seed); results come back in job order."""
    futures = [pool.submit(_estimate_one, b, ref, config, s) for b, s in jobs]
    return [f.result() for f in futures]


def _absorb(ref, batches):
    for b in batches:
        if b is not None and b.n_docs:
            update_reference(ref, b.normalized())


def _check_directions(thetas, where):
    if thetas.shape[0] == 0:
        return
    if not np.all(np.isfinite(thetas)):
        raise InvariantViolation(f"{where}: non-finite global topic")
    if np.abs(np.linalg.norm(thetas, axis=1) - 1.0).max() > INVARIANT_ATOL:
        raise InvariantViolation(f"{where}: global topic left the unit sphere")
    if np.abs(thetas.sum(axis=1)).max() > INVARIANT_ATOL:
        raise InvariantViolation(f"{where}: global topic left the sum-zero hyperplane")


def _max_shift(prev, new):
    n = min(prev.shape[0], new.shape[0])
    if n == 0:
        return 0.0
    # chord form stays exact for tiny angles, unlike arccos of a dot product
    chord = np.linalg.norm(prev[:n] - new[:n], axis=1)
    return float((2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))).max())


# ---------------------------------------------------------------- checkpoints

def _sdm_to_json(state):
    return {
        "t": state.t,
        "thetas": [tr.theta.tolist() for tr in state.trajectories],
        "popularity": [tr.popularity for tr in state.trajectories],
        "born_at": [tr.born_at for tr in state.trajectories],
    }


def _sdm_from_json(d, hyper):
    trajs = [GlobalTopicTrajectory(np.array(th), int(m), int(b))
             for th, m, b in zip(d["thetas"], d["popularity"], d["born_at"])]
    return SdmState(trajectories=trajs, t=int(d["t"]), hyper=hyper)


def _sddm_to_json(state):
    return {
        "t": state.t,
        "J": state.J,
        "thetas": state.global_thetas.tolist(),
        "group_popularity": state.group_popularity.tolist(),
        "born_at": state.born_at.tolist(),
    }


def _sddm_from_json(d, hyper, vocab_size):
    J = int(d["J"])
    thetas = np.array(d["thetas"], dtype=float).reshape(-1, vocab_size)
    pop = np.array(d["group_popularity"], dtype=int).reshape(J, thetas.shape[0])
    return SddmState(thetas, pop, J, int(d["t"]), hyper, np.array(d["born_at"], dtype=int))


def save_checkpoint(path, kind, seed, hyper, ref, state_json, report, steps_done, groups):
    """Write the run state as JSON (floats round-trip exactly through ``repr``)."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "seed": seed,
        "hyper": hyper.to_dict(),
        "ref": {"mean": ref.mean.tolist(), "doc_count": ref.doc_count},
        "steps_done": steps_done,
        "groups": groups,
        "state": state_json,
        "report": report,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload))
    os.replace(tmp, path)


def load_checkpoint(path):
    d = json.loads(Path(path).read_text())
    if d.get("version") != CHECKPOINT_VERSION or d.get("kind") not in KINDS:
        raise InvariantViolation(f"{path}: not a checkpoint this version can read")
    d["hyper"] = ModelHyperparams(**d["hyper"])
    d["ref"] = ReferencePoint(np.array(d["ref"]["mean"], dtype=float), int(d["ref"]["doc_count"]))
    return d


# ---------------------------------------------------------------- driver

def _diagnose(exc, where):
    """Prefix the error message with the step it came from."""
    exc.args = (f"{where}: {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
    return exc


def run_model(kind, stream, hyper=None, seed=0, threads=1, out_dir=None, checkpoint=None,
              resume=None, estimator_config=None, max_sweeps=DEFAULT_MAX_SWEEPS, stop_after=None):
    """Run one of the matching models over a :class:`~polytrack.corpus.BatchStream`.

    Parameters
    ----------
    kind : {"sdm", "dm", "sddm"}
    stream : BatchStream
    hyper : ModelHyperparams, optional
        Defaults for ``kind`` when omitted.
    seed : int
        Determines every random choice; outputs do not depend on ``threads``.
    threads : int
        Estimator jobs run concurrently on this many threads.
    out_dir : path, optional
        Receives ``report.csv``, ``timings.csv``, ``topics.csv`` and ``thetas.csv``.
    checkpoint : path, optional
        Rewritten after every processed timestep.
    resume : path, optional
        Checkpoint to continue from.
    stop_after : int, optional
        Stop once this many timesteps are done (the run is then incomplete).

    Returns
    -------
    RunResult
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    hyper = hyper or ModelHyperparams.defaults(kind)
    config = estimator_config or EstimatorConfig()
    threads = max(1, int(threads))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        if kind == "dm":
            result = _run_dm(stream, hyper, seed, pool, config, checkpoint, resume, max_sweeps)
        else:
            result = _run_streaming(kind, stream, hyper, seed, pool, config, checkpoint, resume,
                                    max_sweeps, stop_after)
    if out_dir is not None:
        write_outputs(out_dir, result)
    if not result.converged:
        warnings.warn("some matching did not reach a fixed point", RuntimeWarning)
    return result


def _run_streaming(kind, stream, hyper, seed, pool, config, checkpoint, resume, max_sweeps,
                   stop_after):
    labels = stream.groups
    V = stream.vocab_size
    last_t = max(stream.timesteps) if len(stream) else 0
    if resume is not None:
        ck = load_checkpoint(resume)
        if ck["kind"] != kind or ck["seed"] != seed or ck["hyper"] != hyper or ck["groups"] != labels:
            raise InvariantViolation("checkpoint does not belong to this run configuration")
        ref, report, start = ck["ref"], ck["report"], ck["steps_done"]
        state = (_sdm_from_json(ck["state"], hyper) if kind == "sdm"
                 else _sddm_from_json(ck["state"], hyper, V))
    else:
        ref, report, start = ReferencePoint.uniform(V), [], 0
        state = SdmState(hyper=hyper) if kind == "sdm" else SddmState.empty(len(labels), V, hyper)

    timings = []
    converged = True
    for t in range(start + 1, last_t + 1):
        if stop_after is not None and t > stop_after:
            return RunResult(kind, state, ref, report, timings, converged, completed=False)
        tic = time.perf_counter()
        where = f"timestep {t}"
        try:
            groups = stream.entries.get(t, {})
            batches = [stream.batch(t, g) if g in groups else None for g in labels]
            _absorb(ref, batches)
            n_docs = sum(b.n_docs for b in batches if b is not None)
            prev = state.thetas if kind == "sdm" else state.global_thetas
            if kind == "sdm":
                present = [b for b in batches if b is not None and b.n_docs]
                pooled = DocBatch.concat(present) if present else None
                (est,) = _estimate_all(pool, [(pooled, estimator_seed(seed, t, 0))], ref, config)
                est = np.zeros((0, V)) if est is None else est
                state = sdm_step(state, est)
                step = state.last_step
                row = [t, n_docs, est.shape[0], state.n_topics, step.matched, step.new, step.dormant,
                       _max_shift(prev, state.thetas)]
                new_thetas = state.thetas
            else:
                jobs = [(b, estimator_seed(seed, t, j)) for j, b in enumerate(batches)]
                ests = _estimate_all(pool, jobs, ref, config)
                state = sddm_step(state, ests, step_rng(seed, t), max_sweeps)
                step = state.last_step
                converged &= step.converged
                if not step.converged:
                    logger.warning("%s: no fixed point after %d sweeps", where, step.n_sweeps)
                n_est = sum(0 if e is None else e.shape[0] for e in ests)
                row = [t, n_docs, n_est, state.n_topics, step.matched, step.new, step.dormant,
                       _max_shift(prev, state.global_thetas), step.n_sweeps, int(step.converged)]
                new_thetas = state.global_thetas
            _check_directions(new_thetas, where)
        except PolytrackError as exc:
            _diagnose(exc, where)
            raise
        report.append(row)
        timings.append([t, time.perf_counter() - tic])
        if checkpoint is not None:
            sj = _sdm_to_json(state) if kind == "sdm" else _sddm_to_json(state)
            save_checkpoint(checkpoint, kind, seed, hyper, ref, sj, report, t, labels)
    return RunResult(kind, state, ref, report, timings, converged)


def _run_dm(stream, hyper, seed, pool, config, checkpoint, resume, max_sweeps):
    labels = stream.groups
    V = stream.vocab_size
    tic = time.perf_counter()
    ref = ReferencePoint.uniform(V)
    pooled = []
    for label in labels:
        parts = [stream.batch(t, label) for t in stream.timesteps if label in stream.entries[t]]
        pooled.append(DocBatch.concat(parts))
    # one cross-group reference, complete before anything is embedded
    _absorb(ref, pooled)
    try:
        jobs = [(b, estimator_seed(seed, 1, j)) for j, b in enumerate(pooled)]
        ests = _estimate_all(pool, jobs, ref, config)
        state = dm_run([np.zeros((0, V)) if e is None else e for e in ests], hyper,
                       np.random.default_rng(seed), max_sweeps)
        _check_directions(state.global_thetas, "matching")
    except PolytrackError as exc:
        _diagnose(exc, "distributed matching")
        raise
    if not state.converged:
        logger.warning("no fixed point after %d sweeps", state.n_sweeps)
    counts = state.counts()
    report = []
    for j, assign in enumerate(state.group_assignments):
        shared = int((counts[assign] > 1).sum()) if assign.size else 0
        report.append([labels[j], pooled[j].n_docs, assign.size, state.n_topics, shared,
                       state.n_sweeps, int(state.converged)])
    result = RunResult("dm", state, ref, report, [["all", time.perf_counter() - tic]],
                       state.converged)
    if checkpoint is not None:
        sj = {"thetas": state.global_thetas.tolist(), "counts": counts.tolist(),
              "assignments": [a.tolist() for a in state.group_assignments]}
        save_checkpoint(checkpoint, "dm", seed, hyper, ref, sj, report, len(stream), labels)
    return result


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_outputs(out_dir, result):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "report.csv", REPORT_COLUMNS[result.kind], result.report)
    write_csv(out / "timings.csv", ["t", "seconds"], result.timings)
    save_topics(out / "topics.csv", result.topics)
    save_topics(out / "thetas.csv", result.thetas)
