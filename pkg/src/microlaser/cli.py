"""Command-line front end: config files in, CSV and report artifacts out.

Subcommands wire the theory, simulation, and analysis modules together:

    sweep          pump sweep (rate-equation branches + number-basis theory)
    predict-g2     theoretical g2(tau) curve with fitted C0, tau_c, Q
    simulate       stochastic run producing two binary timestamp streams
    correlate-fit  multi-start multi-stop histogram, g2, exponential fit
    pipeline       simulate -> correlate -> fit -> compare against theory

Exit codes: 0 success, 2 configuration error, 3 numerical/truncation error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, correlator, quantum, semiclassical, trajectory
from .core import VelocityDistribution, load_config
from .errors import ConfigError, MicrolaserError
from .streams import read_stream, write_mlts1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


@dataclass
class RunManifest:
    """Provenance record for one command invocation.

    The hash covers everything that determines the outputs (command, config,
    inputs, outputs, seed, version) and deliberately excludes the wall clock,
    so a rerun with the same inputs reproduces the same hash.
    """

    command: str
    config_snapshot: dict
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    seed: int | None = None
    version: str = __version__
    wall_clock_s: float | None = None

    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.command.encode())
        for key, value in sorted(self.config_snapshot.items()):
            h.update(f"{key}={value!r};".encode())
        for name in self.inputs:
            h.update(f"in:{name};".encode())
        for name in self.outputs:
            h.update(f"out:{name};".encode())
        h.update(f"seed={self.seed};version={self.version}".encode())
        return h.hexdigest()

    def header_lines(self) -> list[str]:
        lines = [
            f"manifest_hash = {self.hash()}",
            f"command = {self.command}",
            f"version = {self.version}",
        ]
        if self.seed is not None:
            lines.append(f"seed = {self.seed}")
        lines.extend(
            f"config.{key} = {value}" for key, value in self.config_snapshot.items()
        )
        return lines

    def write(self, path) -> None:
        lines = [f"{line}" for line in self.header_lines()]
        for name in self.inputs:
            lines.append(f"input = {name}")
        for name in self.outputs:
            lines.append(f"output = {name}")
        if self.wall_clock_s is not None:
            lines.append(f"wall_clock_s = {self.wall_clock_s!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def _parse_n_range(text: str) -> list[float]:
    """'a:b:step' inclusive range, or a single value."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) == 3:
            a, b, step = (float(p) for p in parts)
            if step <= 0.0 or b < a:
                raise ConfigError(f"bad n-range {text!r}: need a <= b and step > 0")
            values = np.arange(a, b + 0.5 * step, step)
            return [float(v) for v in values]
    except ValueError:
        pass
    raise ConfigError(f"bad n-range {text!r}: expected 'a:b:step' or a single number")


def _load(config_path, quadrature_nodes: int):
    cfg = load_config(config_path)
    dist = VelocityDistribution.from_config(cfg, n_nodes=quadrature_nodes)
    return cfg, dist


def _fmt(value, precision=".10g") -> str:
    if value is None:
        return "nan"
    return format(value, precision)


def cmd_sweep(args) -> int:
    cfg, dist = _load(args.config, args.quadrature_nodes)
    n_list = _parse_n_range(args.n_range)
    if args.direction == "down":
        n_list = list(reversed(n_list))
    result = semiclassical.sweep(cfg, dist, n_list, args.direction)

    manifest = RunManifest(
        command="sweep",
        config_snapshot=cfg.to_dict(),
        inputs=[str(args.config)],
        outputs=[str(args.out)],
    )
    t0 = time.perf_counter()
    rows = []
    for pt in result.points:
        point_cfg = cfg.with_n_atoms(pt.n_atoms_mean)
        n_q = q_q = tau_q = None
        if pt.n_atoms_mean > 0.0:
            p = quantum.steady_state(point_cfg, dist)
            n_q = p.mean
            q_q = p.mandel_q
            if n_q > 0.0:
                curve = quantum.g2_regression(point_cfg, dist)
                tau_q = quantum.q_and_tau_from_g2(curve, n_q).tau_c
        else:
            n_q = 0.0
        tau_sc = pt.selected.tau_c if pt.selected is not None else None
        n0 = pt.selected.n0 if pt.selected is not None else None
        rows.append(
            f"{pt.n_atoms_mean:.10g},{_fmt(n0)},{_fmt(n_q)},{_fmt(q_q)},"
            f"{_fmt(tau_q)},{_fmt(tau_sc)}"
        )
    manifest.wall_clock_s = time.perf_counter() - t0

    lines = [f"# {line}" for line in manifest.header_lines()]
    lines.append(f"# direction = {result.direction}")
    lines.append("N_mean,n0_selected,n_mean_quantum,Q_quantum,tau_c_quantum_s,tau_c_semiclassical_s")
    lines.extend(rows)
    Path(args.out).write_text("\n".join(lines) + "\n")
    manifest.write(str(args.out) + ".manifest.txt")
    return EXIT_OK


def cmd_predict_g2(args) -> int:
    cfg, dist = _load(args.config, args.quadrature_nodes)
    manifest = RunManifest(
        command="predict-g2",
        config_snapshot=cfg.to_dict(),
        inputs=[str(args.config)],
        outputs=[str(args.out)],
    )
    t0 = time.perf_counter()
    p = quantum.steady_state(cfg, dist)
    if p.mean <= 0.0:
        raise ConfigError("predict-g2 needs a nonempty steady state (n_atoms_mean > 0)")
    curve = quantum.g2_regression(cfg, dist)
    fit = quantum.q_and_tau_from_g2(curve, p.mean)
    manifest.wall_clock_s = time.perf_counter() - t0

    header = manifest.header_lines()
    header.append(f"n_mean = {p.mean!r}")
    header.append(f"mandel_q_moments = {p.mandel_q!r}")
    header.append(f"c0 = {fit.c0!r}")
    header.append(f"tau_c_s = {fit.tau_c!r}")
    header.append(f"q_from_fit = {fit.q!r}")
    if fit.warning:
        header.append(f"fit_warning = {fit.warning}")
    Path(args.out).write_text(quantum.g2_csv(curve, header))
    manifest.write(str(args.out) + ".manifest.txt")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, dist = _load(args.config, args.quadrature_nodes)
    out1 = f"{args.out_prefix}.ch1.mlts1"
    out2 = f"{args.out_prefix}.ch2.mlts1"
    outputs = [out1, out2]
    if args.path_csv:
        outputs.append(f"{args.out_prefix}.path.csv")
    manifest = RunManifest(
        command="simulate",
        config_snapshot=cfg.to_dict(),
        inputs=[str(args.config)],
        outputs=outputs,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    rec = trajectory.simulate(
        cfg,
        dist,
        duration=args.duration_s,
        seed=args.seed,
        initial_n=args.cold_start,
        record_path=args.path_csv,
    )
    manifest.wall_clock_s = time.perf_counter() - t0

    write_mlts1(rec.stream1, out1)
    write_mlts1(rec.stream2, out2)
    if args.path_csv:
        with open(outputs[2], "w") as fh:
            for line in manifest.header_lines():
                fh.write(f"# {line}\n")
            fh.write("time_s,n\n")
            for t, n in zip(rec.path_times, rec.path_values):
                fh.write(f"{t:.12g},{n}\n")
    manifest.write(f"{args.out_prefix}.manifest.txt")
    print(
        f"simulate: duration {rec.duration:g} s, atoms {rec.atoms_injected}, "
        f"emissions {rec.emissions}, decays {rec.decays}, detections {rec.detections} "
        f"(ch1 {rec.stream1.count}, ch2 {rec.stream2.count})"
    )
    return EXIT_OK


def cmd_correlate_fit(args) -> int:
    a = read_stream(args.stream1)
    b = read_stream(args.stream2)
    bin_width = args.bin_ns * 1e-9
    window = args.window_us * 1e-6
    cfg = None
    if args.config is not None:
        cfg, dist = _load(args.config, args.quadrature_nodes)
    manifest = RunManifest(
        command="correlate-fit",
        config_snapshot=cfg.to_dict() if cfg is not None else {},
        inputs=[str(args.stream1), str(args.stream2)],
        outputs=[str(args.out)],
    )
    t0 = time.perf_counter()
    if args.symmetric:
        est = correlator.g2_symmetric(a, b, bin_width, window)
    else:
        hist = correlator.correlate(a, b, bin_width, window)
        est = correlator.normalize(hist, mode="tail" if args.tail_normalize else "rates")
    fit = correlator.fit_exponential(est, exclude_below=args.exclude_bins * bin_width)
    q_est = None
    extra = {
        "rate1_hz": est.rate1,
        "rate2_hz": est.rate2,
        "t_acq_s": est.t_acq,
        "bin_width_s": bin_width,
        "window_s": window,
        "shot_noise_rms": correlator.shot_noise_rms(est.rate1, est.rate2, bin_width, est.t_acq)
        if est.rate1 > 0 and est.rate2 > 0
        else None,
    }
    if cfg is not None:
        p = quantum.steady_state(cfg, dist)
        if p.mean > 0.0:
            q_est = correlator.estimate_q(fit, p.mean, cfg.gamma_c)
            extra["n_mean_theory"] = p.mean
    manifest.wall_clock_s = time.perf_counter() - t0

    report = correlator.fit_report(fit, q_est, extra, manifest.header_lines())
    Path(args.out).write_text(report)
    if args.g2_csv:
        Path(args.g2_csv).write_text(
            correlator.g2_estimate_csv(est, manifest.header_lines())
        )
    manifest.write(str(args.out) + ".manifest.txt")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg, dist = _load(args.config, args.quadrature_nodes)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out1 = out_dir / "ch1.mlts1"
    out2 = out_dir / "ch2.mlts1"
    g2_csv_path = out_dir / "g2.csv"
    report_path = out_dir / "report.txt"
    manifest = RunManifest(
        command="pipeline",
        config_snapshot=cfg.to_dict(),
        inputs=[str(args.config)],
        outputs=[str(out1), str(out2), str(g2_csv_path), str(report_path)],
        seed=args.seed,
    )
    t0 = time.perf_counter()

    stage = "theory"
    try:
        p = quantum.steady_state(cfg, dist)
        if p.mean <= 0.0:
            raise ConfigError("pipeline needs a nonempty steady state")
        curve = quantum.g2_regression(cfg, dist)
        theory = quantum.q_and_tau_from_g2(curve, p.mean)

        stage = "simulate"
        rec = trajectory.simulate(
            cfg, dist, duration=args.duration_s, seed=args.seed, record_path=False
        )
        write_mlts1(rec.stream1, out1)
        write_mlts1(rec.stream2, out2)

        stage = "correlate"
        bin_width = args.bin_ns * 1e-9
        window = args.window_us * 1e-6 if args.window_us else 5.0 / cfg.gamma_c
        hist = correlator.correlate(rec.stream1, rec.stream2, bin_width, window)
        est = correlator.normalize(hist)

        stage = "fit"
        fit = correlator.fit_exponential(est)
        q_est = correlator.estimate_q(fit, p.mean, cfg.gamma_c)
    except Exception as exc:
        # keep the exception type (it drives the exit code), add the stage label
        exc.args = (f"pipeline stage '{stage}': {exc}",)
        raise

    z_tau = None
    if fit.tau_c is not None and fit.tau_c_sigma and theory.tau_c is not None:
        z_tau = (fit.tau_c - theory.tau_c) / fit.tau_c_sigma
    z_c0 = (fit.c0 - theory.c0) / fit.c0_sigma if fit.c0_sigma else None
    manifest.wall_clock_s = time.perf_counter() - t0

    extra = {
        "n_mean_theory": p.mean,
        "q_theory_moments": p.mandel_q,
        "q_theory_fit": theory.q,
        "tau_c_theory_s": theory.tau_c,
        "c0_theory": theory.c0,
        "z_tau_c": z_tau,
        "z_c0": z_c0,
        "sign_match_c0": (fit.c0 * theory.c0 > 0.0),
        "detections_ch1": rec.stream1.count,
        "detections_ch2": rec.stream2.count,
        "duration_s": args.duration_s,
    }
    report_path.write_text(
        correlator.fit_report(fit, q_est, extra, manifest.header_lines())
    )
    g2_csv_path.write_text(correlator.g2_estimate_csv(est, manifest.header_lines()))
    manifest.write(out_dir / "manifest.txt")
    tau_line = (
        f"theory tau_c {theory.tau_c:.4g} s vs fitted {fit.tau_c:.4g} s (z={z_tau:+.2f})"
        if fit.tau_c is not None and z_tau is not None
        else "fitted curve is flat (no resolvable decay)"
    )
    print(
        f"pipeline: {tau_line}, theory Q {theory.q:+.4g} vs "
        f"Q_from_C0 {q_est.q_from_c0:+.4g}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microlaser",
        description="Cavity-QED microlaser photon statistics toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="flat key = value configuration file")
        p.add_argument(
            "--quadrature-nodes", type=int, default=64,
            help="velocity quadrature node count (default 64)",
        )

    p = sub.add_parser("sweep", help="pump sweep: fixed points and quantum moments per N")
    add_common(p)
    p.add_argument("--n-range", required=True, help="'a:b:step' (inclusive) or single value")
    p.add_argument("--direction", choices=("up", "down"), default="up")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict-g2", help="theoretical g2(tau) with fitted C0, tau_c, Q")
    add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_g2)

    p = sub.add_parser("simulate", help="stochastic run writing two MLTS1 streams")
    add_common(p)
    p.add_argument("--duration-s", type=float, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--path-csv", action="store_true", help="also write the photon-number path")
    p.add_argument(
        "--cold-start", type=int, default=None, metavar="N",
        help="start from photon number N instead of a steady-state sample",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate-fit", help="histogram two streams, normalize, fit g2")
    p.add_argument("stream1")
    p.add_argument("stream2")
    p.add_argument("--bin-ns", type=float, default=20.0)
    p.add_argument("--window-us", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--g2-csv", default=None, help="also write the normalized g2 estimate")
    p.add_argument("--config", default=None, help="optional config for Q extraction")
    p.add_argument(
        "--quadrature-nodes", type=int, default=64,
        help="velocity quadrature node count (default 64)",
    )
    p.add_argument("--symmetric", action="store_true", help="average (a,b) and (b,a) histograms")
    p.add_argument("--tail-normalize", action="store_true", help="normalize by far-tau tail")
    p.add_argument(
        "--exclude-bins", type=int, default=1,
        help="number of leading bins excluded from the fit (default 1)",
    )
    p.set_defaults(func=cmd_correlate_fit)

    p = sub.add_parser("pipeline", help="simulate -> correlate -> fit -> compare to theory")
    add_common(p)
    p.add_argument("--duration-s", type=float, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--bin-ns", type=float, default=20.0)
    p.add_argument("--window-us", type=float, default=None, help="default 5 / Gamma_c")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which matches our config-error code
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"microlaser {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"microlaser {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MicrolaserError, ValueError, ArithmeticError) as exc:
        print(f"microlaser {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
