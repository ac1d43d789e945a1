"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 input error, 3 internal error.
Diagnostics go to stderr; machine output only to the named files (and a
one-line summary on stdout).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .audio import (load_any, preprocess, spectrogram, write_pgm,
                    write_spectrogram_csv)
from .errors import InvalidInputError, SegwaveError
from .evalue import EmpiricalCalibration, McmcConfig, PriorSpec
from .manifest import RunManifest
from .segmenter import SegConfig, segment
from .simlab import (ALGORITHMS, BenchConfig, SimSpec, records_to_csv, records_to_json,
                     run_benchmark, select_beta, simulate)

log = logging.getLogger("segwave")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")


def parse_grid(text: str) -> list[float]:
    """``lo:hi:logK`` (K log-spaced points), ``lo:hi:K`` (linear) or a comma list."""
    if ":" not in text:
        return _floats(text)
    try:
        lo, hi, spec = text.split(":")
        lo, hi = float(lo), float(hi)
        if spec.startswith("log"):
            k = int(spec[3:])
            if lo <= 0 or hi <= 0:
                raise ValueError
            return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), k)]
        return [float(v) for v in np.linspace(lo, hi, int(spec))]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected lo:hi:logK") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="segwave", description="Variance-change segmentation of acoustic signals.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_input(sp):
        sp.add_argument("--input", required=True, help=".wav, .csv/.txt or raw float64 file")
        sp.add_argument("--sample-rate", type=int, default=None,
                        help="sample rate for raw/csv inputs")
        sp.add_argument("--channel", type=int, default=None)
        sp.add_argument("--decimate", type=int, default=None)

    def add_seg_options(sp, prior_required=True):
        if prior_required:
            sp.add_argument("--prior", choices=["jeffreys", "laplace"], required=True)
            sp.add_argument("--beta", type=float, default=None)
        sp.add_argument("--alpha", type=float, default=0.05)
        sp.add_argument("--resolution", type=int, default=1000)
        sp.add_argument("--min-seg", type=int, default=1000)
        sp.add_argument("--max-changepoints", type=int, default=None)
        sp.add_argument("--chain-length", type=int, default=50_000)
        sp.add_argument("--burn-in", type=int, default=10_000)
        sp.add_argument("--calibration", choices=["chi2", "empirical"], default="chi2")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--timestamps", action="store_true",
                        help="record wall-clock times in the manifest")

    s = sub.add_parser("segment", help="segment a signal")
    add_input(s)
    add_seg_options(s)
    s.add_argument("--output", required=True)
    s.add_argument("--csv", default=None, help="also write changepoints as CSV")

    s = sub.add_parser("simulate", help="draw a synthetic changepoint signal")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=float, default=50)
    s.add_argument("--var-low", type=float, default=1.0)
    s.add_argument("--var-high", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", required=True, help="raw float64 (.bin) or .csv")
    s.add_argument("--truth", required=True, help="JSON with the true changepoints")

    s = sub.add_parser("bench", help="run the synthetic benchmark")
    s.add_argument("--sizes", type=_ints, default=[10_000, 50_000, 100_000])
    s.add_argument("--replicates", type=int, default=10)
    s.add_argument("--k", type=float, default=50)
    s.add_argument("--algorithms", default=",".join(ALGORITHMS))
    s.add_argument("--alpha-grid", type=_floats, default=None)
    s.add_argument("--beta-grid", type=_floats, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--output", required=True)
    s.add_argument("--json", default=None)
    s.add_argument("--timing", action="store_true",
                   help="include the wall-clock column (makes output run-dependent)")

    s = sub.add_parser("select-beta", help="choose the Laplace scale by the BIC elbow")
    add_input(s)
    add_seg_options(s, prior_required=False)
    s.add_argument("--grid", type=parse_grid, default=parse_grid("1e-6:1e-1:log9"))
    s.add_argument("--output", required=True)

    s = sub.add_parser("spectrogram", help="STFT magnitude matrix in dB")
    add_input(s)
    s.add_argument("--window", type=int, default=1024)
    s.add_argument("--hop", type=int, default=512)
    s.add_argument("--output", required=True)
    s.add_argument("--png", default=None, help="8-bit PGM quick-look image")
    return p


# -- helpers ------------------------------------------------------------------

def _seg_config(args, prior: PriorSpec) -> SegConfig:
    try:
        mcmc = McmcConfig(chain_length=args.chain_length, burn_in=args.burn_in)
        return SegConfig(alpha=args.alpha, prior=prior, base_resolution=args.resolution,
                         min_seg_len=args.min_seg, max_changepoints=args.max_changepoints,
                         mcmc=mcmc, seed=args.seed,
                         calibration=EmpiricalCalibration(seed=args.seed)
                         if args.calibration == "empirical" else None)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc


def _prior(args) -> PriorSpec:
    if args.prior == "laplace":
        if args.beta is None:
            raise UsageError("--prior laplace requires --beta")
        try:
            return PriorSpec.laplace(args.beta)
        except InvalidInputError as exc:
            raise UsageError(str(exc)) from exc
    if args.beta is not None:
        raise UsageError("--beta only applies to --prior laplace")
    return PriorSpec.jeffreys()


def _load_signal(args):
    clip = load_any(args.input, args.sample_rate)
    return clip, preprocess(clip, args.channel, args.decimate)


def _json_float(x: float):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _input_meta(args) -> dict:
    return {"input": Path(args.input).name, "channel": args.channel,
            "decimate": args.decimate, "sample_rate": args.sample_rate}


# -- commands -----------------------------------------------------------------

def cmd_segment(args) -> int:
    prior = _prior(args)
    config = _seg_config(args, prior)
    clip, signal = _load_signal(args)
    manifest = RunManifest("segment", {**_input_meta(args), **config.to_dict()},
                           seed=args.seed, source_digest=clip.source_digest,
                           timestamps=args.timestamps).start()
    result = segment(signal, config, threads=args.threads)
    manifest.finish()
    rate = signal.sample_rate_hz
    doc = {
        "manifest": manifest.to_dict(),
        "n": result.n,
        "sample_rate": rate,
        "changepoints": [
            {"index": t, "time_s": None if rate is None else t / rate,
             "ev": r.ev, "sev": r.sev}
            for t, r in zip(result.changepoints, result.reports)
        ],
        "segments": [
            {"start": s.start, "end": s.end, "variance": s.variance,
             "rms_db": _json_float(s.rms_db)}
            for s in result.segments
        ],
    }
    if result.errors:
        doc["errors"] = [{"start": a, "end": b, "message": m} for a, b, m in result.errors]
    _write_text(args.output, json.dumps(doc, indent=2) + "\n")
    if args.csv:
        lines = ["index,time_s,ev,sev"]
        for c in doc["changepoints"]:
            ts = "" if c["time_s"] is None else repr(c["time_s"])
            lines.append(f"{c['index']},{ts},{c['ev']!r},{c['sev']!r}")
        _write_text(args.csv, "\n".join(lines) + "\n")
    print(f"{len(result.changepoints)} changepoints in {result.n} samples")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        spec = SimSpec(n=args.n, expected_k=args.k, var_low=args.var_low,
                       var_high=args.var_high, seed=args.seed, replicates=1)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc
    signal, truth = simulate(spec)
    out = Path(args.output)
    if out.suffix.lower() in (".csv", ".txt"):
        _write_text(out, "".join(f"{v!r}\n" for v in signal.samples.tolist()))
    else:
        out.write_bytes(signal.samples.astype("<f8").tobytes())
    doc = {"n": spec.n, "expected_k": spec.expected_k, "var_low": spec.var_low,
           "var_high": spec.var_high, "seed": spec.seed, "changepoints": truth}
    _write_text(args.truth, json.dumps(doc, indent=2) + "\n")
    print(f"{len(truth)} changepoints in {spec.n} samples")
    return EXIT_OK


def cmd_bench(args) -> int:
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        raise UsageError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
    bench = BenchConfig(seed=args.seed, threads=args.threads)
    if args.alpha_grid:
        bench = replace(bench, alpha_grid=tuple(args.alpha_grid))
    if args.beta_grid:
        bench = replace(bench, beta_grid=tuple(args.beta_grid))
    try:
        specs = [SimSpec(n=n, expected_k=args.k, seed=args.seed, replicates=args.replicates)
                 for n in args.sizes]
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc
    records = run_benchmark(specs, algorithms, bench)
    _write_text(args.output, records_to_csv(records, include_time=args.timing))
    if args.json:
        _write_text(args.json, records_to_json(records, include_time=args.timing))
    for r in records:
        print(f"n={r.n} {r.algorithm}: est_k={r.est_k:.1f} f1={r.f1_standard:.4f}")
    return EXIT_OK


def cmd_select_beta(args) -> int:
    config = _seg_config(args, PriorSpec.jeffreys())
    clip, signal = _load_signal(args)
    sel = select_beta(signal, args.grid, config, threads=args.threads)
    lines = ["beta,bic,n_changepoints,selected"]
    for b, v in sel.curve:
        k = len(sel.changepoints[b]) if b in sel.changepoints else ""
        lines.append(f"{b!r},{v!r},{k},{int(b == sel.beta_star)}")
    _write_text(args.output, "\n".join(lines) + "\n")
    note = " (flat curve, smallest beta)" if sel.flat else ""
    print(f"beta_star={sel.beta_star!r}{note}")
    return EXIT_OK


def cmd_spectrogram(args) -> int:
    clip, signal = _load_signal(args)
    spec = spectrogram(signal, args.window, args.hop)
    write_spectrogram_csv(spec, args.output)
    if args.png:
        write_pgm(spec, args.png)
    print(f"{spec.db.shape[1]} frames x {spec.db.shape[0]} bins")
    return EXIT_OK


COMMANDS = {
    "segment": cmd_segment,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "select-beta": cmd_select_beta,
    "spectrogram": cmd_spectrogram,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"segwave {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SegwaveError, OSError, UnicodeDecodeError) as exc:
        print(f"segwave {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"segwave {args.command}: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
