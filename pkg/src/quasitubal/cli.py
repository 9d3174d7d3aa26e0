"""Command-line front end: ``quasitubal {synth,decompose,truncate,compare,verify}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 verification failure.
Any long flag may also come from a JSON file given with ``--config``
(keys use the flag names, e.g. ``{"q-max": 20}``); command-line flags win.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import io as qio
from .decomp import (
    Component,
    QSvd,
    RankRangeError,
    TSvd,
    components_tensor,
    implicit_rank,
    order_components,
    qrank,
    qsvd,
    truncate_explicit,
    truncate_multirank,
    tsvd_finite,
    tsvd_truncate,
)
from .quasitube import NOT_IN_H, EcSeq
from .synth import FAMILIES, SynthSpec, synthesize
from .tensor import (
    FiniteTubalTensor,
    QtTensor,
    finite_to_qt,
    qt_h_norm,
    qt_identity,
    qt_op_norm,
    spectral_norms,
)
from .verify import SUITES, run_suite

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _fmt(x) -> str:
    if x is NOT_IN_H:
        return "not-in-H"
    return format(float(x), ".17g")


def _load(path, kinds: tuple) -> object:
    try:
        obj = qio.read_qtt(path)
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {path}") from exc
    except (qio.QttFormatError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not isinstance(obj, kinds):
        names = "/".join(k.__name__ for k in kinds)
        raise DataError(f"{path}: expected {names}, found {type(obj).__name__}")
    return obj


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required")


# -- commands ---------------------------------------------------------------------------
def cmd_synth(args) -> int:
    _need(args, "family", "m", "p", "out")
    try:
        spec = SynthSpec(args.family, args.m, args.p, band=args.band, seed=args.seed,
                         scale=args.scale, decay=args.decay)
        X = synthesize(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    qio.write_qtt(args.out, X, extra={"synth": spec.to_dict()})
    print(f"h_norm {_fmt(qt_h_norm(X))}")
    print(f"op_norm {_fmt(qt_op_norm(X))}")
    return EXIT_OK


def _top_sigmas(svd: QSvd, n: int = 10) -> list[float]:
    if svd.S.has_tail:
        # the tail singular values repeat infinitely often; list band and tail separately
        return []
    return [c.sigma for c in order_components(svd, n)]


def cmd_decompose(args) -> int:
    _need(args, "input", "out")
    X = _load(args.input, (QtTensor, FiniteTubalTensor))
    if args.mode == "tsvd":
        if not isinstance(X, FiniteTubalTensor):
            raise DataError("tsvd needs a finite tubal tensor (file with a transform descriptor)")
        res = tsvd_finite(X)
        qio.write_qtt(args.out, res)
        sh = res.sigma_hat()
        err = np.linalg.norm(_tsvd_rebuild(res) - X.data)
        print(f"multirank {[int(np.sum(r > 1e-10 * max(r.max(initial=0), 1))) for r in sh]}")
        print(f"top_sigma {[float(x) for x in np.sort(sh.ravel())[::-1][:10]]}")
        print(f"reconstruction_error {_fmt(err)}")
        return EXIT_OK
    if isinstance(X, FiniteTubalTensor):
        try:
            X = finite_to_qt(X)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    svd = qsvd(X)
    qio.write_qtt(args.out, svd)
    ir = implicit_rank(svd)
    print(f"q_rank {qrank(svd)}")
    print(f"implicit_rank {'inf' if ir == float('inf') else ir}")
    if svd.S.has_tail:
        print(f"tail_sigma {[float(x) for x in svd.sigma_at(svd.S.hi + 1)]}")
    print(f"top_sigma {_top_sigmas(svd)}")
    print(f"reconstruction_error {_fmt(qt_op_norm(X - svd.reconstruct()))}")
    return EXIT_OK


def _tsvd_rebuild(res: TSvd) -> np.ndarray:
    n = res.S.shape[2]
    return tsvd_truncate(res, np.full(n, min(res.S.shape[:2]))).data


def _read_multirank(path) -> EcSeq:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if isinstance(d, list):
        return EcSeq(0, [int(x) for x in d], 0)
    try:
        return EcSeq(int(d.get("lo", 0)), [int(x) for x in d.get("values", [])], int(d.get("tail", 0)))
    except (TypeError, ValueError, AttributeError) as exc:
        raise DataError(f"{path}: malformed multirank: {exc}") from exc


def cmd_truncate(args) -> int:
    _need(args, "input", "out")
    chosen = [x for x in (args.q, args.trank, args.multirank) if x is not None]
    if len(chosen) != 1:
        raise UsageError("give exactly one of --q, --trank, --multirank")
    svd = _load(args.input, (QSvd, TSvd))
    if isinstance(svd, TSvd):
        return _truncate_finite(args, svd)
    try:
        if args.q is not None:
            Xt, comps = truncate_explicit(svd, args.q)
            kept = components_tensor(
                [Component(c.sigma, c.l, c.t, _unit(svd.shape[0], c.l), _unit(svd.shape[1], c.l)) for c in comps],
                *svd.shape,
            )
            label = f"q={args.q}"
        else:
            if args.trank is not None:
                rho, label = EcSeq(0, (), args.trank), f"trank={args.trank}"
            else:
                rho, label = _read_multirank(args.multirank), f"multirank={args.multirank}"
            Xt = truncate_multirank(svd, rho)
            m, p = svd.shape
            kept = truncate_multirank(QSvd(qt_identity(m), svd.S, qt_identity(p)), rho)
    except RankRangeError as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    qio.write_qtt(args.out, Xt)
    # residual from the discarded singular values, exactly zero when nothing is dropped
    R = svd.U @ (svd.S - kept) @ svd.V.H
    h, op = qt_h_norm(R), qt_op_norm(R)
    print(f"h_residual {_fmt(h)}")
    print(f"op_residual {_fmt(op)}")
    _append_report(args.report, label, h, op)
    return EXIT_OK


def _unit(n: int, i: int) -> np.ndarray:
    e = np.zeros(n, dtype=complex)
    e[i] = 1.0
    return e


def _truncate_finite(args, res: TSvd) -> int:
    n = res.S.shape[2]
    if args.q is not None:
        raise UsageError("--q needs a quasitubal SVD; use --trank or --multirank for tSVD files")
    if args.trank is not None:
        rho, label = args.trank, f"trank={args.trank}"
    else:
        seq = _read_multirank(args.multirank)
        rho, label = seq.window(0, n).astype(int), f"multirank={args.multirank}"
    try:
        Xt = tsvd_truncate(res, rho)
    except (RankRangeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    qio.write_qtt(args.out, Xt)
    Sh = np.moveaxis(res.S.hat(), 2, 0)
    kk = np.arange(Sh.shape[-1])
    rest = Sh * (kk >= np.broadcast_to(np.asarray(rho), (n,))[:, None])[:, None, :]
    R = np.moveaxis(res.U.hat(), 2, 0) @ rest @ np.conj(np.swapaxes(np.moveaxis(res.V.hat(), 2, 0), 1, 2))
    h = float(np.linalg.norm(R))
    op = float(np.max(spectral_norms(R)))
    print(f"h_residual {_fmt(h)}")
    print(f"op_residual {_fmt(op)}")
    _append_report(args.report, label, h, op)
    return EXIT_OK


def _append_report(path, label, h, op) -> None:
    if path is None:
        return
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(["truncation", "h_residual", "op_residual"])
        w.writerow([label, _fmt(h), _fmt(op)])


def error_curve(X: QtTensor, q_max: int) -> list[tuple[int, float, float]]:
    """Rows ``(q, ||X - X_[q]||_H, ||X - X_[q]||_op)`` for ``q = 0 .. q_max``.

    The residual of each slice is rebuilt from its factors with the kept
    singular values zeroed, so it vanishes exactly once every atom is taken.
    """
    svd = qsvd(X)
    lo, hi = X.lo, X.hi
    U, S, V = (T.window(lo, hi) for T in (svd.U, svd.S, svd.V))
    k = svd.kmin
    kept = np.zeros((hi - lo, k), dtype=bool)
    comps = order_components(svd, q_max)
    rows = []
    for q in range(q_max + 1):
        if q > 0 and q <= len(comps):
            c = comps[q - 1]
            kept[c.t - lo, c.l] = True
        rest = S.copy()
        idx = np.arange(k)
        rest[:, idx, idx] *= ~kept
        R = U @ rest @ np.conj(np.swapaxes(V, 1, 2))
        h = float(np.linalg.norm(R)) if R.size else 0.0
        op = float(np.max(spectral_norms(R), initial=0.0))
        rows.append((q, h, op))
    return rows


def cmd_compare(args) -> int:
    _need(args, "input", "q_max", "out")
    if args.q_max < 0:
        raise UsageError("--q-max must be non-negative")
    X = _load(args.input, (QtTensor,))
    if X.has_tail:
        raise DataError("compare needs a tensor in H (zero tail slice)")
    rows = error_curve(X, args.q_max)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["q", "h_error", "op_error"])
        for q, h, op in rows:
            w.writerow([q, _fmt(h), _fmt(op)])
    print(f"h_norm {_fmt(qt_h_norm(X))}")
    print(f"rows {len(rows)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    _need(args, "suite")
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; expected one of {sorted(SUITES)}")
    report = run_suite(args.suite, args.seed)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


# -- parser -----------------------------------------------------------------------------
COMMANDS = {
    "synth": cmd_synth,
    "decompose": cmd_decompose,
    "truncate": cmd_truncate,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quasitubal", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file supplying default flag values")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic tensor")
    s.add_argument("--family", choices=FAMILIES)
    s.add_argument("--m", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--band", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--decay", type=float)
    s.add_argument("--out")

    d = sub.add_parser("decompose", help="q-SVD or finite tSVD of a tensor file")
    d.add_argument("--in", dest="input")
    d.add_argument("--out")
    d.add_argument("--mode", choices=("qsvd", "tsvd"), default="qsvd")

    t = sub.add_parser("truncate", help="rank truncation from a factor file")
    t.add_argument("--in", dest="input")
    t.add_argument("--out")
    t.add_argument("--q", type=int, help="explicit rank-q truncation")
    t.add_argument("--trank", type=int, help="q-rank (t-rank) truncation")
    t.add_argument("--multirank", help="JSON file: list of ranks or {lo, values, tail}")
    t.add_argument("--report", help="CSV file to append residual norms to")

    c = sub.add_parser("compare", help="error-versus-rank table")
    c.add_argument("--in", dest="input")
    c.add_argument("--q-max", type=int)
    c.add_argument("--out")

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("--suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="also write the JSON report here")
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"config {known.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise DataError(f"config {known.config}: expected a JSON object")
    defaults = {("input" if k == "in" else k.replace("-", "_")): v for k, v in cfg.items()}
    for action in ap._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in defaults.items() if k in dests})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    try:
        _apply_config(ap, argv)
        try:
            args = ap.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"quasitubal: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"quasitubal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"quasitubal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
