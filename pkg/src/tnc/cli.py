"""Command-line interface: ``tnc <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data/file error, 4 numeric or
equivalence failure. Reports go to stdout as JSON; logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import evaluation, noise, persistence, simulator, training
from .compiler import compile_model
from .dataset import default_data_dir, load_mnist_binary, load_pgm
from .errors import (
    DataFormatError,
    PersistenceError,
    SelectionError,
    ShapeError,
    TncError,
)
from .features import dataset_features, encode_batch, encode_product, frequency_of, image_features
from .mps import contract_batch
from .pipeline import prepare, reduce, train_full

log = logging.getLogger("tnc")

EQUIV_TOL = 1e-10
EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class CheckFailed(Exception):
    """Numeric comparison outside tolerance."""


def _parse_ntildes(text: str) -> List[int]:
    out: List[int] = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _config(args) -> training.TrainConfig:
    kw = {"seed": args.seed}
    for name in ("n_samples", "sweeps", "learning_rate"):
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    return training.TrainConfig(**kw)


def _emit(obj, out: Optional[str] = None) -> None:
    text = json.dumps(obj, indent=1, allow_nan=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load(path):
    return persistence.load_model(path)


def _test_features(model, data_dir):
    """Test split features rescaled with the model's stored statistics."""
    if model.rescale is None:
        raise PersistenceError("model file has no rescale statistics")
    test = load_mnist_binary(data_dir, "test")
    feats, _ = dataset_features(test.images, model.rescale)
    return feats, np.asarray(test.labels)


def cmd_train(args) -> int:
    cfg = _config(args)
    train = load_mnist_binary(args.data, "train")
    data = prepare(train, None, cfg)
    full = train_full(data, cfg)
    if args.full_out:
        persistence.save_model(args.full_out, full)
    if args.ntilde == 0:
        model = full
    else:
        _, model = reduce(data, full, args.ntilde, cfg)
    persistence.save_model(args.out, model)
    log.info("selected features %s", [frequency_of(i) for i in (model.selected or [])][:20])
    return 0


def cmd_select(args) -> int:
    mf = _load(args.model)
    sel = training.select_features(mf.model, args.ntilde)
    _emit({
        "chosen": sel.chosen,
        "frequencies": [list(frequency_of(mf.model.selected[i] if mf.model.selected else i)) for i in sel.chosen],
        "entropies": [float(sel.entropies[i]) for i in sel.chosen],
    }, args.out)
    return 0


def cmd_compile(args) -> int:
    mf = _load(args.model)
    circuit = compile_model(mf.model)
    persistence.save_model(args.out, mf.model, circuit)
    return 0


def _circuit(mf):
    return mf.circuit if mf.circuit is not None else compile_model(mf.model)


def cmd_classify(args) -> int:
    mf = _load(args.circuit)
    if mf.model.rescale is None:
        raise PersistenceError("circuit file has no rescale statistics")
    image = load_pgm(args.image)
    feats = image_features(image.pixels, mf.model.rescale)
    state = encode_product(feats.values, mf.model.selected)
    run = simulator.run_scheme_a if args.scheme == "a" else simulator.run_scheme_b
    out = run(_circuit(mf), state)
    _emit({"p0": out.p0, "p1": out.p1, "decision": out.decision, "success_prob": out.success_prob})
    return 0


def cmd_evaluate(args) -> int:
    mf = _load(args.model)
    feats, labels = _test_features(mf.model, args.data)
    mode = {"a": "schemeA", "b": "schemeB", "mps": "mps"}[args.mode]
    target = mf.model if mode == "mps" else _circuit(mf)
    report = evaluation.evaluate(target, feats, labels, mode)
    _emit(report.to_dict(with_bloch=args.bloch), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    train = load_mnist_binary(args.data, "train")
    test = load_mnist_binary(args.data, "test")
    table = evaluation.ntilde_sweep(train, test, _parse_ntildes(args.ntilde_list), cfg, reps=args.reps)
    table.write_csv(args.out)
    _emit({str(k): v for k, v in table.summary().items()})
    return 0


def cmd_noise(args) -> int:
    mf = _load(args.circuit)
    feats, labels = _test_features(mf.model, args.data)
    circuit = _circuit(mf)
    qubits = encode_batch(feats, mf.model.selected)
    cfg = noise.NoiseConfig(
        angle_halfwidth=args.angle_deg,
        eta=args.eta,
        photon_total=None if args.photons <= 0 else args.photons,
        runs=args.runs,
        seed=args.seed,
        redraw=args.redraw,
    )
    schemes = ["A", "B"] if args.scheme == "both" else [args.scheme.upper()]
    reports = {s: noise.monte_carlo_success(circuit, qubits, labels, cfg, scheme=s).to_dict() for s in schemes}
    _emit(reports, args.out)
    return 0


def cmd_equiv(args) -> int:
    mf = _load(args.model)
    feats, _ = _test_features(mf.model, args.data)
    circuit = _circuit(mf)
    qubits = encode_batch(feats, mf.model.selected)
    a = simulator.run_scheme_a_batch(circuit, qubits).raw
    b = simulator.run_scheme_b_batch(circuit, qubits).raw
    oracle = contract_batch(mf.model, qubits) ** 2
    result = {
        "n_images": int(len(qubits)),
        "max_abs_a_vs_b": float(np.abs(a - b).max()),
        "max_abs_a_vs_mps": float(np.abs(a - oracle).max()),
        "tolerance": EQUIV_TOL,
    }
    result["ok"] = result["max_abs_a_vs_b"] <= EQUIV_TOL and result["max_abs_a_vs_mps"] <= EQUIV_TOL
    _emit(result)
    if not result["ok"]:
        raise CheckFailed("scheme outputs disagree beyond tolerance")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tnc", description="Tensor-network binary image classifier and its two-qubit circuit.")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_arg(sp):
        sp.add_argument("--data", default=str(default_data_dir()), help="MNIST IDX directory (default $TNC_DATA_DIR)")

    def train_args(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--n-samples", dest="n_samples", type=int)
        sp.add_argument("--sweeps", type=int)
        sp.add_argument("--lr", dest="learning_rate", type=float)

    sp = sub.add_parser("train", help="train, select and retrain; writes an MPS model file")
    data_arg(sp)
    train_args(sp)
    sp.add_argument("--ntilde", type=int, required=True, help="features to keep (0 keeps all)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--full-out", help="also save the full-feature model")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("select", help="rank sites of a model by entanglement entropy")
    sp.add_argument("--model", required=True)
    sp.add_argument("--ntilde", type=int, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("compile", help="compile an MPS model into a circuit file")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("classify", help="classify one PGM image")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--scheme", choices=("a", "b"), default="a")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("evaluate", help="test-set report")
    data_arg(sp)
    sp.add_argument("--model", "--circuit", dest="model", required=True)
    sp.add_argument("--mode", choices=("mps", "a", "b"), default="a")
    sp.add_argument("--bloch", action="store_true", help="include per-image Bloch coordinates")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="accuracy versus number of kept features, CSV")
    data_arg(sp)
    train_args(sp)
    sp.add_argument("--ntilde-list", default="1-15")
    sp.add_argument("--reps", type=int, default=20)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("noise", help="noisy Monte Carlo success rate")
    data_arg(sp)
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--angle-deg", type=float, default=0.0, help="half-width of uniform angle jitter")
    sp.add_argument("--photons", type=float, default=1e4, help="photons per image; <= 0 disables sampling")
    sp.add_argument("--runs", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--redraw", choices=("image", "run"), default="image")
    sp.add_argument("--scheme", choices=("a", "b", "both"), default="both")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_noise)

    sp = sub.add_parser("equiv-check", help="check Scheme A == Scheme B == MPS on the test set")
    data_arg(sp)
    sp.add_argument("--model", "--circuit", dest="model", required=True)
    sp.set_defaults(func=cmd_equiv)
    return p


def _dispatch(args) -> int:
    if args.threads is None:
        return args.func(args)
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=args.threads):
        return args.func(args)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except SelectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, ShapeError, PersistenceError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CheckFailed, TncError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
