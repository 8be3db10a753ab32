"""End-to-end volume computation and the command-line interface.

compute_volume rounds the body, certifies the inner ball of the image
exactly, rescales it to contain the unit ball, measures the image volume
by Gaussian cooling, and divides out the accumulated log-determinant.
All volume arithmetic stays in log domain; 2^n and n! scales overflow
doubles long before the estimators care.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from volumetrica.annealing import AnnealConfig, sample_well_rounded, volume_well_rounded
from volumetrica.bodies import (
    AffineMap,
    ConvexBody,
    TransformedBody,
    certified_inner_radius,
    parse_body_file,
)
from volumetrica.errors import (
    BodyFormatError,
    DimensionMismatchError,
    InvariantViolationError,
    NumericalError,
    SamplingFailureError,
    VolumetricaError,
)
from volumetrica.rng import stage_generator
from volumetrica.rounding import IsotropizeConfig, iterative_isotropization, paper_config


@dataclass
class VolumeReport:
    volume: float
    log_volume: float
    eps: float
    seed: int
    mode: str
    body_kind: str
    dim: int
    rounding_phases: int
    cooling_phases: int
    rel_stderr: float
    log_abs_det: float
    image_inner_radius: float
    queries_round: int
    queries_volume: int
    queries_total: int
    phase_summaries: list = field(default_factory=list)
    wall_time_s: float = 0.0

    _KEYS = ("volume", "log_volume", "eps", "seed", "mode", "body_kind", "dim",
             "rounding_phases", "cooling_phases", "rel_stderr", "log_abs_det",
             "image_inner_radius", "queries_round", "queries_volume",
             "queries_total", "phase_summaries")

    def to_text(self, include_timing: bool = True) -> str:
        """Flat JSON with a stable key order; timing fields last and optional."""
        data = {k: getattr(self, k) for k in self._KEYS}
        if include_timing:
            data["wall_time_s"] = self.wall_time_s
        return json.dumps(data, indent=2) + "\n"


def compute_volume(body: ConvexBody, eps: float = 0.1, seed: int = 0,
                   r: float | None = None, R: float | None = None,
                   mode: str = "practical",
                   iso_cfg: IsotropizeConfig | None = None,
                   anneal_cfg: AnnealConfig | None = None,
                   trace_sink: list | None = None) -> VolumeReport:
    """Round, measure, un-transform.  Fails loudly with the stage name."""
    t_start = time.perf_counter()
    n = body.dim
    r = body.inner_radius if r is None else float(r)
    R = body.outer_radius if R is None else float(R)
    if iso_cfg is None:
        iso_cfg = paper_config() if mode == "paper" else IsotropizeConfig()
    anneal_cfg = anneal_cfg or AnnealConfig()

    q0 = body.query_counter
    try:
        _, amap, trace = iterative_isotropization(
            body, r, R, iso_cfg, stage_generator(seed, "round"))
    except VolumetricaError as exc:
        raise type(exc)(f"rounding stage: {exc}") from exc
    queries_round = body.query_counter - q0

    r_img = certified_inner_radius(body, amap)
    if r_img <= 0:
        raise NumericalError("rounding stage: image lost the origin; "
                             f"certified inner radius {r_img:.3g}")
    # normalize so the image contains exactly the unit ball
    amap = amap.compose(np.eye(n) / r_img)
    handle = TransformedBody(amap, body)

    q1 = body.query_counter
    try:
        _, vol_report = volume_well_rounded(
            handle, eps, stage_generator(seed, "volume"), anneal_cfg)
    except VolumetricaError as exc:
        raise type(exc)(f"volume stage: {exc}") from exc
    queries_volume = body.query_counter - q1

    log_volume = vol_report["log_volume"] - amap.log_abs_det
    phase_summaries = [
        {"phase": p["phase"], "sigma2": p["sigma2"], "samples": p["samples"],
         "ratio": p["ratio"]}
        for p in vol_report["phase_log"]
    ]
    if trace_sink is not None:
        trace_sink.append(trace.format_rows())
    return VolumeReport(
        volume=math.exp(log_volume),
        log_volume=log_volume,
        eps=eps,
        seed=seed,
        mode=mode,
        body_kind=body.kind,
        dim=n,
        rounding_phases=len(trace.phase_ts),
        cooling_phases=vol_report["phases"],
        rel_stderr=vol_report["rel_stderr_total"],
        log_abs_det=amap.log_abs_det,
        image_inner_radius=r_img,
        queries_round=queries_round,
        queries_volume=queries_volume,
        queries_total=queries_round + queries_volume,
        phase_summaries=phase_summaries,
        wall_time_s=time.perf_counter() - t_start,
    )


def _round_body(body: ConvexBody, seed: int, mode: str):
    iso_cfg = paper_config() if mode == "paper" else IsotropizeConfig()
    _, amap, trace = iterative_isotropization(
        body, body.inner_radius, body.outer_radius, iso_cfg,
        stage_generator(seed, "round"))
    handle = TransformedBody(amap, body)
    X = sample_well_rounded(handle, 50 * body.dim,
                            stage_generator(seed, "round-check"))
    D = X - X.mean(axis=0)
    eigvals = np.linalg.eigvalsh((D.T @ D) / X.shape[0])
    return amap, trace, eigvals


def _write(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volumetrica",
                                description="Convex body volume via rounding "
                                            "and Gaussian cooling")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--body", required=True, help="body description file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--mode", choices=("paper", "practical"),
                        default="practical")
        sp.add_argument("--out", default=None, help="output path (default stdout)")
        sp.add_argument("--chains", type=int, default=None)
        sp.add_argument("--trace", default=None, help="write per-stage trace rows")

    sp = sub.add_parser("volume", help="estimate the volume")
    common(sp)
    sp.add_argument("--eps", type=float, default=0.1)

    sp = sub.add_parser("round", help="compute the rounding transform")
    common(sp)

    sp = sub.add_parser("sample", help="draw near-uniform points")
    common(sp)
    sp.add_argument("--n", type=int, default=1000)
    return p


def cli_main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        body = parse_body_file(args.body)
    except FileNotFoundError:
        print(f"error: body file not found: {args.body}", file=sys.stderr)
        return 1
    except BodyFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    anneal_cfg = AnnealConfig()
    iso_cfg = paper_config() if args.mode == "paper" else IsotropizeConfig()
    if args.chains:
        anneal_cfg.chains = args.chains
        iso_cfg.anneal.chains = args.chains

    try:
        if args.command == "volume":
            sink = [] if args.trace else None
            report = compute_volume(body, eps=args.eps, seed=args.seed,
                                    mode=args.mode, iso_cfg=iso_cfg,
                                    anneal_cfg=anneal_cfg, trace_sink=sink)
            _write(args.out, report.to_text())
            if args.trace:
                _write(args.trace, "\n".join(sink) + "\n")
        elif args.command == "round":
            amap, trace, eigvals = _round_body(body, args.seed, args.mode)
            lines = ["T"]
            lines += [" ".join(repr(float(v)) for v in row) for row in amap.T]
            lines.append("x0 " + " ".join(repr(float(v)) for v in amap.x0))
            lines.append(f"log_abs_det {amap.log_abs_det!r}")
            lines.append("cov_eigenvalues " +
                         " ".join(repr(float(v)) for v in eigvals))
            _write(args.out, "\n".join(lines) + "\n")
            if args.trace:
                _write(args.trace, trace.format_rows() + "\n")
        else:  # sample
            amap, trace, _ = _round_body(body, args.seed, args.mode)
            handle = TransformedBody(amap, body)
            Y = sample_well_rounded(handle, args.n,
                                    stage_generator(args.seed, "sample"))
            X = amap.invert_batch(Y)
            _write(args.out, "\n".join(
                ",".join(f"{v:.6f}" for v in row) for row in X) + "\n")
            if args.trace:
                _write(args.trace, trace.format_rows() + "\n")
    except (BodyFormatError, DimensionMismatchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, SamplingFailureError, InvariantViolationError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> int:
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
