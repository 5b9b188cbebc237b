"""Command-line entry point (``polytrack``).

Exit codes: 0 success, 2 unreadable input, 3 matching did not converge,
4 internal invariant violated, 1 any other package error.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .corpus import BatchStream, ingest_uci, read_vocab, write_uci
from .estimator import EstimatorConfig, load_topics, save_topics
from .evaluation import eval_matching_accuracy, eval_perplexity
from .exceptions import InvariantViolation, NotConverged, ParseError, PolytrackError
from .geometry import inverse_embed
from .hyper import ModelHyperparams
from .pipeline import load_checkpoint, run_model
from .synthetic import GroundTruth, sample_corpus, sample_documents

EXIT_OK, EXIT_ERROR, EXIT_PARSE, EXIT_NOT_CONVERGED, EXIT_INVARIANT = 0, 1, 2, 3, 4

logger = logging.getLogger("polytrack")


def _add_model_args(p, kind):
    d = ModelHyperparams.defaults(kind)
    p.add_argument("stream", help="batch stream root (vocab.txt, manifest.tsv)")
    p.add_argument("--out", required=True, help="output directory")
    if kind != "dm":
        p.add_argument("--tau0", type=float, default=d.tau0)
    p.add_argument("--tau1", type=float, default=d.tau1)
    p.add_argument("--gamma0", type=float, default=d.gamma0)
    p.add_argument("--saturation", type=int, default=250)
    p.add_argument("--new-topic-cap", type=int, default=1)
    p.add_argument("--pop-cap", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--checkpoint", help="checkpoint file, rewritten after every timestep")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--max-sweeps", type=int, default=100)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=30)
    p.add_argument("--elbow-threshold", type=float, default=0.05)
    p.set_defaults(kind=kind, func=cmd_run)


def build_parser():
    parser = argparse.ArgumentParser(prog="polytrack", description="Streaming and distributed matching of topic polytopes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="write a synthetic grouped, timestamped corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=1000)
    p.add_argument("--timesteps", type=int, default=10)
    p.add_argument("--groups", type=int, default=5)
    p.add_argument("--topics", type=int, default=10)
    p.add_argument("--docs", type=int, default=20000, help="training documents in total")
    p.add_argument("--doc-len", type=int, default=100)
    p.add_argument("--heldout", type=int, default=1000)
    p.add_argument("--activity", type=float, default=0.6)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    for kind in ("sdm", "dm", "sddm"):
        _add_model_args(sub.add_parser(f"{kind}-run", help=f"run {kind.upper()} over a stream"), kind)

    p = sub.add_parser("eval-perplexity", help="fold-in perplexity of topics on held-out documents")
    p.add_argument("--topics", required=True, help="topic CSV")
    p.add_argument("--heldout", required=True, help="UCI docword file")
    p.add_argument("--em-iters", type=int, default=50)
    p.add_argument("--alpha", type=float, default=0.1)
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("match-accuracy", help="score recovered directions against ground truth")
    p.add_argument("--thetas", required=True, help="CSV of inferred directions")
    p.add_argument("--truth", required=True, help="ground-truth directory")
    p.add_argument("--angle", type=float, default=0.2)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("export-topics", help="simplex topics from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("top-words", help="print the heaviest words of each topic")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--topics", help="topic CSV")
    src.add_argument("--checkpoint")
    p.add_argument("--vocab", required=True)
    p.add_argument("-n", type=int, default=10)
    p.set_defaults(func=cmd_top_words)
    return parser


def cmd_synth(args):
    rng = np.random.default_rng(args.seed)
    per_batch = max(2, args.docs // (args.timesteps * args.groups))
    truth, batches, simplex = sample_corpus(
        args.vocab_size, args.timesteps, args.groups, args.topics, per_batch, args.doc_len, rng,
        activity=args.activity, alpha=args.alpha,
    )
    out = Path(args.out)
    vocab = [f"w{i}" for i in range(args.vocab_size)]
    BatchStream.write(out / "stream", {(t, j): b for (t, j), b in batches.items()}, vocab)
    truth.save(out / "truth")
    T = args.timesteps
    final = truth.activity[T - 1].any(axis=0)
    heldout = sample_documents(simplex[final, T], args.heldout, args.doc_len, args.alpha, rng)
    write_uci(out / "heldout.uci", heldout)
    save_topics(out / "true_topics.csv", simplex[:, T])
    print(f"wrote {len(batches)} batches of {per_batch} documents to {out / 'stream'}")
    return EXIT_OK


def cmd_run(args):
    hyper = ModelHyperparams(
        tau0=getattr(args, "tau0", 0.0), tau1=args.tau1, gamma0=args.gamma0,
        saturation=args.saturation, new_topic_cap_c=args.new_topic_cap, popularity_cap=args.pop_cap,
    )
    config = EstimatorConfig(k_min=args.k_min, k_max=args.k_max, threshold=args.elbow_threshold)
    stream = BatchStream.open(args.stream)
    result = run_model(args.kind, stream, hyper, seed=args.seed, threads=args.threads,
                       out_dir=args.out, checkpoint=args.checkpoint, resume=args.resume,
                       estimator_config=config, max_sweeps=args.max_sweeps)
    print(f"{args.kind}: {result.thetas.shape[0]} global topics; outputs in {args.out}")
    if not result.converged:
        raise NotConverged("matching did not reach a fixed point")
    return EXIT_OK


def cmd_perplexity(args):
    topics = load_topics(args.topics).topics
    heldout, _ = ingest_uci(args.heldout)
    if heldout.vocab_size != topics.shape[1]:
        raise ParseError(f"held-out W={heldout.vocab_size} but topics have {topics.shape[1]} columns")
    print(format(eval_perplexity(topics, heldout, args.em_iters, args.alpha), ".17g"))
    return EXIT_OK


def _read_matrix(path):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def cmd_accuracy(args):
    inferred = _read_matrix(args.thetas)
    truth = GroundTruth.load(args.truth)
    print(format(eval_matching_accuracy(inferred, truth, args.angle), ".17g"))
    return EXIT_OK


def _checkpoint_topics(path):
    ck = load_checkpoint(path)
    thetas = np.array(ck["state"]["thetas"], dtype=float).reshape(-1, ck["ref"].vocab_size)
    if thetas.shape[0] == 0:
        return thetas
    return inverse_embed(thetas, ck["ref"])


def cmd_export(args):
    save_topics(args.out, _checkpoint_topics(args.checkpoint))
    return EXIT_OK


def cmd_top_words(args):
    topics = load_topics(args.topics).topics if args.topics else _checkpoint_topics(args.checkpoint)
    vocab = read_vocab(args.vocab)
    if len(vocab) != topics.shape[1]:
        raise ParseError(f"vocabulary has {len(vocab)} words, topics have {topics.shape[1]} columns")
    for i, row in enumerate(topics):
        top = np.argsort(-row, kind="stable")[: args.n]
        print(f"topic {i}: " + " ".join(vocab[w] for w in top))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NotConverged as exc:
        print(f"warning: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except PolytrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
