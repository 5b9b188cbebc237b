"""UCI docword files and on-disk batch streams.

A stream lives under one root directory::

    root/vocab.txt            one word per line
    root/manifest.tsv         t <TAB> group <TAB> relative path
    root/t<index>/g<label>.uci

Timesteps are listed in increasing order; a group may be missing from any
timestep.
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .estimator import DocBatch
from .exceptions import IdOutOfRange, ParseError


def read_vocab(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def _ints(line, lineno, n):
    parts = line.split()
    if len(parts) != n:
        raise ParseError(f"expected {n} integers, got {len(parts)}", line=lineno)
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ParseError(f"not an integer in {line.strip()!r}", line=lineno) from None


def ingest_uci(docword_path, vocab_path=None):
    """Read a UCI docword file (header ``D``, ``W``, ``NNZ``; then ``doc word count``).

    Ids are 1-based in the file and 0-based in the returned batch.  Repeated
    (doc, word) pairs are summed.  Returns ``(batch, vocab)``; ``vocab`` is
    None without ``vocab_path``.
    """
    with open(docword_path, encoding="utf-8") as fh:
        lines = [(n, ln) for n, ln in enumerate(fh, start=1) if ln.strip()]
    if len(lines) < 3:
        raise ParseError("header needs three lines: D, W, NNZ", line=len(lines) + 1)
    (n_d, d_line), (n_w, w_line), (n_z, z_line) = lines[:3]
    D = _ints(d_line, n_d, 1)[0]
    W = _ints(w_line, n_w, 1)[0]
    NNZ = _ints(z_line, n_z, 1)[0]
    if min(D, W, NNZ) < 0:
        raise ParseError("header values must be non-negative", line=n_d)

    body = lines[3:]
    if len(body) != NNZ:
        raise ParseError(f"header says NNZ={NNZ} but found {len(body)} entries",
                         line=body[-1][0] if body else n_z)
    rows = np.empty(NNZ, dtype=np.int64)
    cols = np.empty(NNZ, dtype=np.int64)
    vals = np.empty(NNZ, dtype=np.int64)
    for e, (lineno, line) in enumerate(body):
        d, w, c = _ints(line, lineno, 3)
        if not 1 <= d <= D:
            raise IdOutOfRange(f"docID {d} outside 1..{D}", line=lineno)
        if not 1 <= w <= W:
            raise IdOutOfRange(f"wordID {w} outside 1..{W}", line=lineno)
        if c < 1:
            raise ParseError(f"count must be positive, got {c}", line=lineno)
        rows[e], cols[e], vals[e] = d - 1, w - 1, c
    counts = sp.coo_matrix((vals, (rows, cols)), shape=(D, W)).tocsr()
    counts.sum_duplicates()
    try:
        batch = DocBatch(counts)
    except ValueError as exc:
        raise ParseError(str(exc)) from None

    vocab = None
    if vocab_path is not None:
        vocab = read_vocab(vocab_path)
        if len(vocab) != W:
            raise ParseError(f"vocabulary has {len(vocab)} words but W={W}")
    return batch, vocab


def write_uci(path, batch):
    coo = batch.counts.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{batch.n_docs}\n{batch.vocab_size}\n{coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r + 1} {c + 1} {v}\n")


@dataclass
class BatchStream:
    """Grouped, timestamped document batches stored under ``root``.

    Attributes
    ----------
    root : Path
    entries : dict
        ``{t: {group_label: relative_path}}`` in increasing ``t``.
    vocab : list of str
    """

    root: Path
    entries: dict
    vocab: list = field(default_factory=list)

    @property
    def vocab_size(self):
        return len(self.vocab)

    @property
    def timesteps(self):
        return list(self.entries)

    @property
    def groups(self):
        """All group labels, sorted (their position is the group index)."""
        labels = set()
        for g in self.entries.values():
            labels.update(g)
        return sorted(labels, key=_label_key)

    def batch(self, t, label):
        path = self.entries[t].get(label)
        if path is None:
            return None
        batch, _ = ingest_uci(self.root / path)
        if batch.vocab_size != self.vocab_size:
            raise ParseError(f"{path}: W={batch.vocab_size} but vocabulary has {self.vocab_size} words")
        return batch

    def __len__(self):
        return len(self.entries)

    @classmethod
    def open(cls, root):
        root = Path(root)
        vocab = read_vocab(root / "vocab.txt")
        entries = {}
        with open(root / "manifest.tsv", encoding="utf-8", newline="") as fh:
            last_t = None
            for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
                if not row or row[0].startswith("#") or row[0] == "t":
                    continue
                if len(row) != 3:
                    raise ParseError("manifest rows need t, group and path", line=lineno)
                try:
                    t = int(row[0])
                except ValueError:
                    raise ParseError(f"bad timestep {row[0]!r}", line=lineno, column=1) from None
                if t != last_t:
                    if last_t is not None and t < last_t:
                        raise ParseError("timesteps must be increasing", line=lineno, column=1)
                    entries.setdefault(t, {})
                    last_t = t
                if row[1] in entries[t]:
                    raise ParseError(f"group {row[1]!r} listed twice at t={t}", line=lineno, column=2)
                entries[t][row[1]] = row[2]
        return cls(root, entries, vocab)

    @classmethod
    def write(cls, root, batches, vocab):
        """Lay out ``{(t, label): DocBatch}`` under ``root`` and return the stream."""
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        (root / "vocab.txt").write_text("".join(f"{w}\n" for w in vocab), encoding="utf-8")
        entries = {}
        for t, label in sorted(batches, key=lambda k: (k[0], _label_key(str(k[1])))):
            rel = f"t{t}/g{label}.uci"
            (root / f"t{t}").mkdir(exist_ok=True)
            write_uci(root / rel, batches[(t, label)])
            entries.setdefault(t, {})[str(label)] = rel
        with open(root / "manifest.tsv", "w", encoding="utf-8") as fh:
            fh.write("t\tgroup\tpath\n")
            for t, groups in entries.items():
                for label, rel in groups.items():
                    fh.write(f"{t}\t{label}\t{rel}\n")
        return cls(root, entries, list(vocab))


def _label_key(label):
    return (0, int(label), "") if label.isdigit() else (1, 0, label)
