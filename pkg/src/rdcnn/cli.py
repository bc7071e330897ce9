"""Command-line entry point: ``rdcnn <subcommand> [flags]``.

Exit codes:
    0  success, all outputs written and validated
    1  unexpected internal error
    2  bad command-line usage
    3  input data or file format error
    4  invalid parameters or contract violation (shapes, ranges, config)
    5  output failed post-write validation
"""

import argparse
import csv
import logging
import shlex
import sys
import time

import numpy as np

from . import analysis, datasets, formats, network, retrieval, svm
from ._backend import kernels as _kernels
from .errors import ConfigError, FormatError, RdcnnError

log = logging.getLogger("rdcnn")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_DATA, EXIT_CONTRACT, EXIT_OUTPUT = range(6)


class OutputValidationError(RdcnnError):
    pass


# -- shared flag groups ---------------------------------------------------------

def _add_dataset_flags(p, required=True):
    p.add_argument("--format", choices=["mnist", "cifar10", "cifar100", "stl10", "raw"], required=required)
    p.add_argument("--data", required=required, help="dataset directory (or RDIM file for raw)")
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--limit", type=int, default=None, help="use only the first N images")
    p.add_argument("--pad-to", type=int, default=None, help="zero-pad MNIST images to this square size")


def _add_network_flags(p):
    p.add_argument("--kernel-size", type=int, default=5)
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--num-kernels", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalization", choices=[m.value for m in network.Normalization], default="unit")
    p.add_argument("--bias", dest="bias_enabled", action="store_true", help="enable random per-block biases")
    p.add_argument("--threads", type=int, default=network.default_threads())
    p.add_argument("--memory-budget-mb", type=int, default=1024,
                   help="stream features through a memory-mapped file above this size")


def _add_svm_flags(p):
    p.add_argument("--dataset-name", default=None, help="picks the default C (mnist 0.01, cifar/stl10 0.5)")
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--svm-bias", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=1e-2)
    p.add_argument("--max-iter", type=int, default=1000)


def build_parser():
    parser = argparse.ArgumentParser(prog="rdcnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract random depthwise features to an RDCF file")
    _add_dataset_flags(p)
    _add_network_flags(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a one-vs-rest linear SVM on an RDCF file")
    p.add_argument("--features", required=True)
    _add_svm_flags(p)
    p.add_argument("--threads", type=int, default=network.default_threads())
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="top-1..top-K accuracy of a model on an RDCF file")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--output", default=None, help="metrics CSV (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retrieve", help="exact k-NN retrieval over a gallery RDCF file")
    p.add_argument("--gallery", required=True)
    p.add_argument("--gallery-ids", default=None, help="text file, one item id per gallery row")
    p.add_argument("--query-index", type=int, action="append", default=None,
                   help="gallery row to use as a query (repeatable)")
    p.add_argument("--query-features", default=None, help="RDCF file of query vectors")
    p.add_argument("--query-ids", default=None, help="text file, one query id per query row")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--metric", choices=["cosine", "euclidean"], default="cosine")
    p.add_argument("--ground-truth", default=None, help="CSV query_id,item_id,score")
    p.add_argument("--output", required=True)
    p.add_argument("--metrics-output", default=None)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("analyze", help="separability and augmentation statistics")
    asub = p.add_subparsers(dest="analysis", required=True)
    a = asub.add_parser("js-ratio", help="avgJS across/within-class ratio")
    _add_dataset_flags(a, required=False)
    a.add_argument("--features", default=None, help="RDCF file with labels (feature space)")
    a.add_argument("--class-a", type=int, required=True)
    a.add_argument("--class-b", type=int, required=True)
    a.add_argument("--per-class", type=int, default=None, help="use the first N images of each class")
    a.add_argument("--pixel-bins", type=int, default=analysis.PIXEL_BINS)
    a.add_argument("--feature-bins", type=int, default=analysis.FEATURE_BINS)
    a.add_argument("--smoothing", type=float, default=analysis.SMOOTHING)
    a.add_argument("--output", default=None)
    a.set_defaults(func=cmd_js_ratio)
    a = asub.add_parser("aug-cosine", help="cosine of each augmented feature row to its original")
    a.add_argument("--original", required=True)
    a.add_argument("--augmented", required=True)
    a.add_argument("--pairing", default=None, help="text file: original row index per augmented row")
    a.add_argument("--output", default=None)
    a.set_defaults(func=cmd_aug_cosine)

    p = sub.add_parser("augment", help="write augmented images (RDIM) and their pairing")
    _add_dataset_flags(p)
    p.add_argument("--mode", choices=["flip-rotate", "cutout"], default="flip-rotate")
    p.add_argument("--per-image", type=int, default=10)
    p.add_argument("--max-degrees", type=float, default=15.0)
    p.add_argument("--cutout-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--pairing-output", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("sweep", help="kernel-size x blocks grid: extract, train, score")
    _add_dataset_flags(p)
    p.add_argument("--test-limit", type=int, default=None)
    p.add_argument("--kernel-sizes", default="3,5")
    p.add_argument("--block-counts", default="1,2")
    p.add_argument("--num-kernels", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalization", choices=[m.value for m in network.Normalization], default="unit")
    p.add_argument("--threads", type=int, default=network.default_threads())
    _add_svm_flags(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_sweep)

    for action in sub.choices.values():
        _add_print_config(action)
    for action in asub.choices.values():
        _add_print_config(action)
    return parser


def _add_print_config(p):
    p.add_argument("--print-config", action="store_true",
                   help="print the fully resolved command line and exit")


def render_config(parser, args):
    """Resolved flags as a command line that reproduces this run."""
    words = [args.command]
    sub = _subparser(parser, args.command)
    if args.command == "analyze":
        words.append(args.analysis)
        sub = _subparser(sub, args.analysis)
    for act in sub._actions:
        if not act.option_strings or act.dest in ("help", "print_config"):
            continue
        value = getattr(args, act.dest, None)
        flag = act.option_strings[-1] if act.option_strings[-1].startswith("--") else act.option_strings[0]
        if isinstance(act, argparse._StoreTrueAction):
            if value:
                words.append(flag)
        elif value is None:
            continue
        elif isinstance(value, list):
            for v in value:
                words += [flag, str(v)]
        else:
            words += [flag, str(value)]
    return shlex.join(words)


def _subparser(parser, name):
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[name]
    raise KeyError(name)


# -- subcommands -----------------------------------------------------------------

def _load_dataset(args):
    ds = datasets.load(args.format, args.data, args.split, pad_to=args.pad_to)
    return ds.head(args.limit)


def _network_config(args, channels):
    return network.NetworkConfig(
        kernel_size=args.kernel_size, blocks=args.blocks, num_kernels=args.num_kernels,
        seed=args.seed, input_channels=channels,
        normalization=args.normalization, bias_enabled=args.bias_enabled,
    )


def _validate_features(values):
    if not np.isfinite(values).all():
        raise OutputValidationError("feature matrix contains non-finite values")
    if values.size and (values.min() < -1.0 or values.max() > 1.0):
        raise OutputValidationError(f"features outside [-1, 1]: [{values.min()}, {values.max()}]")


def cmd_extract(args):
    ds = _load_dataset(args)
    cfg = _network_config(args, ds.shape[0])
    log.info("extract %s/%s: %d images %s, config %s, %d threads, %s backend",
             args.format, args.split, len(ds), ds.shape, cfg, args.threads, _kernels.NAME)
    t0 = time.perf_counter()
    size = len(ds) * cfg.num_kernels * 4
    if size > args.memory_budget_mb << 20:
        writer = formats.FeatureFileWriter(args.output, len(ds), cfg.num_kernels, ds.labels)
        network.extract_features(ds.images, cfg, threads=args.threads, out=writer.values)
        _validate_features(writer.values)
        writer.close()
    else:
        fm = network.extract_features(ds.images, cfg, ds.labels, threads=args.threads)
        _validate_features(fm.values)
        formats.write_features(fm, args.output)
    log.info("wrote %s (%d x %d) in %.1fs; feature range check passed",
             args.output, len(ds), cfg.num_kernels, time.perf_counter() - t0)


def _svm_config(args):
    c = args.c
    if c is None:
        if args.dataset_name is None:
            raise ConfigError("give --c or --dataset-name to pick C")
        key = args.dataset_name.lower()
        if key not in svm.DEFAULT_C:
            raise ConfigError(f"no default C for dataset {args.dataset_name!r}; pass --c")
        c = svm.DEFAULT_C[key]
    return svm.SvmConfig(c=c, bias=args.svm_bias, tolerance=args.tolerance, max_iterations=args.max_iter)


def cmd_train(args):
    fm = formats.read_features(args.features)
    cfg = _svm_config(args)
    log.info("train on %s (%d x %d), %s", args.features, fm.n_samples, fm.n_features, cfg)
    t0 = time.perf_counter()
    model = svm.svm_train(fm, config=cfg, threads=args.threads)
    formats.write_model(model, args.output)
    acc = svm.topk_accuracy(svm.svm_discriminants(model, fm), fm.labels, 1, model.classes)
    log.info("trained %d classes in %.1fs (iterations %s); train top-1 %.4f",
             model.classes.size, time.perf_counter() - t0, model.iterations.tolist(), acc)


def topk_table(model, fm, max_k):
    if fm.labels is None:
        raise FormatError("evaluation needs labels in the feature file")
    scores = svm.svm_discriminants(model, fm)
    max_k = min(max_k, model.classes.size)
    return [(f"top{k}_accuracy", svm.topk_accuracy(scores, fm.labels, k, model.classes))
            for k in range(1, max_k + 1)]


def _write_metric_rows(rows, path, header=("metric", "value")):
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if path:
            fh.close()


def cmd_eval(args):
    model = formats.read_model(args.model)
    fm = formats.read_features(args.features)
    rows = topk_table(model, fm, args.top_k)
    _write_metric_rows(rows, args.output)
    for name, value in rows:
        log.info("%s = %.4f", name, value)


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def cmd_retrieve(args):
    gallery = formats.read_features(args.gallery)
    ids = _read_lines(args.gallery_ids) if args.gallery_ids else [str(i) for i in range(gallery.n_samples)]
    if args.query_features:
        q = formats.read_features(args.query_features).values
        qids = _read_lines(args.query_ids) if args.query_ids else [f"q{i}" for i in range(len(q))]
        queries = list(zip(qids, q))
    elif args.query_index:
        for i in args.query_index:
            if not 0 <= i < gallery.n_samples:
                raise ConfigError(f"query index {i} outside gallery of {gallery.n_samples} rows")
        queries = [(ids[i], gallery.values[i]) for i in args.query_index]
    else:
        raise ConfigError("give --query-index or --query-features")
    results = [retrieval.knn_query(gallery, vec, args.k, item_ids=ids, query_id=qid, metric=args.metric)
               for qid, vec in queries]
    retrieval.write_results(results, args.output)
    if args.ground_truth:
        truth = retrieval.read_ground_truth(args.ground_truth)
        rows = []
        for res in results:
            if res.query_id not in truth:
                log.warning("no ground truth for query %s", res.query_id)
                continue
            gt = truth[res.query_id]
            for k in range(1, min(args.k, len(gt.entries)) + 1):
                rows.append((res.query_id, k, retrieval.precision_at_k(res, gt, k),
                             retrieval.intersection_score_sum(res, gt, k)))
        _write_metric_rows(rows, args.metrics_output,
                           header=("query_id", "k", "precision", "score_sum"))


def _class_rows(images_or_values, labels, cls, limit):
    idx = np.flatnonzero(labels == cls)
    if limit is not None:
        idx = idx[:limit]
    return images_or_values[idx]


def _js_rows(prefix, rows_a, rows_b, bins, value_range, smoothing):
    ha = analysis.class_histograms(rows_a, bins, value_range, smoothing)
    hb = analysis.class_histograms(rows_b, bins, value_range, smoothing)
    rep = analysis.avg_js_ratio(ha, hb)
    return [(f"{prefix}_avg_js_across", rep.avg_js_across),
            (f"{prefix}_avg_js_within_a", rep.avg_js_within_a),
            (f"{prefix}_avg_js_within_b", rep.avg_js_within_b),
            (f"{prefix}_ratio", rep.ratio)]


def cmd_js_ratio(args):
    if not args.features and not (args.format and args.data):
        raise ConfigError("give --features and/or --format/--data")
    rows = [("class_a", args.class_a), ("class_b", args.class_b)]
    if args.format and args.data:
        ds = _load_dataset(args)
        pix_a = _class_rows(ds.images, ds.labels, args.class_a, args.per_class)
        pix_b = _class_rows(ds.images, ds.labels, args.class_b, args.per_class)
        rows += _js_rows("pixel", network.normalize(pix_a, "unit").reshape(len(pix_a), -1),
                         network.normalize(pix_b, "unit").reshape(len(pix_b), -1),
                         args.pixel_bins, (0.0, 1.0), args.smoothing)
    if args.features:
        fm = formats.read_features(args.features)
        if fm.labels is None:
            raise FormatError("js-ratio needs labels in the feature file", path=args.features)
        rows += _js_rows("feature",
                         _class_rows(fm.values, fm.labels, args.class_a, args.per_class),
                         _class_rows(fm.values, fm.labels, args.class_b, args.per_class),
                         args.feature_bins, (-1.0, 1.0), args.smoothing)
    _write_metric_rows(rows, args.output)


def cmd_aug_cosine(args):
    orig = formats.read_features(args.original)
    aug = formats.read_features(args.augmented)
    pairing = [int(x) for x in _read_lines(args.pairing)] if args.pairing else None
    values = analysis.augmentation_cosine_distribution(orig, aug, pairing)
    fh = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for v in values:
            fh.write(f"{v!r}\n")
    finally:
        if args.output:
            fh.close()
    if values:
        log.info("%d cosines: mean %.4f min %.4f", len(values), float(np.mean(values)), min(values))


def cmd_augment(args):
    ds = _load_dataset(args)
    aug, pairing = datasets.augment_dataset(
        ds.images, mode=args.mode, per_image=args.per_image, max_degrees=args.max_degrees,
        cutout_size=args.cutout_size, seed=args.seed,
    )
    formats.write_images(aug, args.output, ds.labels[pairing])
    with open(args.pairing_output, "w", encoding="utf-8") as fh:
        fh.writelines(f"{i}\n" for i in pairing)
    log.info("wrote %d augmented images to %s", len(aug), args.output)


def cmd_sweep(args):
    train = _load_dataset(args)
    test = datasets.load(args.format, args.data, "test", pad_to=args.pad_to).head(args.test_limit)
    svm_cfg = _svm_config(args)
    rows = []
    for k in (int(v) for v in args.kernel_sizes.split(",")):
        for b in (int(v) for v in args.block_counts.split(",")):
            cfg = network.NetworkConfig(kernel_size=k, blocks=b, num_kernels=args.num_kernels,
                                        seed=args.seed, input_channels=train.shape[0],
                                        normalization=args.normalization)
            t0 = time.perf_counter()
            ftr = network.extract_features(train.images, cfg, train.labels, threads=args.threads)
            fte = network.extract_features(test.images, cfg, test.labels, threads=args.threads)
            model = svm.svm_train(ftr, config=svm_cfg, threads=args.threads)
            tr = svm.topk_accuracy(svm.svm_discriminants(model, ftr), ftr.labels, 1, model.classes)
            te = svm.topk_accuracy(svm.svm_discriminants(model, fte), fte.labels, 1, model.classes)
            dt = time.perf_counter() - t0
            log.info("k=%d b=%d m=%d: train %.4f test %.4f (%.1fs)", k, b, args.num_kernels, tr, te, dt)
            rows.append((k, b, args.num_kernels, tr, te, round(dt, 3)))
    _write_metric_rows(rows, args.output,
                       header=("kernel_size", "blocks", "num_kernels", "train_accuracy", "test_accuracy", "seconds"))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_config:
        print(render_config(parser, args))
        return EXIT_OK
    log.info("run: %s", render_config(parser, args))
    try:
        args.func(args)
    except OutputValidationError as exc:
        log.error("%s", exc)
        return EXIT_OUTPUT
    except (FormatError, FileNotFoundError) as exc:
        log.error("%s", exc)
        print(f"rdcnn: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RdcnnError, ValueError) as exc:
        print(f"rdcnn: error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"rdcnn: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
