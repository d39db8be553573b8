"""Command-line front end.

Every command takes ``--config file.json`` (keys are the long option names
with dashes turned into underscores), explicit flags override the file, and
``--dry-run`` prints the resolved parameters without computing anything.
stdout carries only requested results; logs go to stderr.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import acquisition as acq
from . import experiments as ex
from . import fading
from .cyclostat import cyclic_periodogram, smooth_spectrum, write_spectrum_csv
from .signal_model import (CHIP_RATE, SampledSignal, SignalParams, generate_ca_code, read_cgps, read_csv,
                           synthesize, write_cgps, write_csv)

log = logging.getLogger("cyclogps")


class UsageError(Exception):
    pass


# option tables: name -> (type, default, help)
SIGNAL_OPTS = {
    "prn": (int, 1, "satellite PRN 1..32"),
    "fs": (float, 2.046e6, "sample rate, Hz"),
    "duration_ms": (float, 4.0, "record length, ms (whole code periods)"),
}

COMMANDS: dict[str, dict] = {
    "synth": {**SIGNAL_OPTS,
              "cnr": (float, None, "C/N0 in dB-Hz; omit for noiseless"),
              "delay_samples": (float, 0.0, "code delay, samples"),
              "doppler": (float, 0.0, "Doppler, Hz"),
              "phase": (float, 0.0, "carrier phase, rad"),
              "amplitude": (float, 1.0, "carrier amplitude"),
              "mode": (str, "complex", "complex or real"),
              "out": (str, None, "output file (.cgps or .csv)")},
    "cacode": {"prn": (int, 1, "satellite PRN 1..32"),
               "octal": (bool, False, "print the first-10-chip octal instead of chips")},
    "spectrum": {"input": (str, None, "input signal file"), "fs": (float, None, "sample rate for .csv input"),
                 "alpha": (float, 1000.0, "cyclic frequency, Hz"), "segment_len": (int, None, "segment length M"),
                 "segments": (int, None, "segment count N (default: all)"),
                 "smooth_hz": (float, None, "smoothing width, Hz"), "out": (str, None, "output CSV")},
    "acquire": {"input": (str, None, "input signal file"), "fs": (float, None, "sample rate for .csv input"),
                "prn": (int, 1, "satellite PRN"), "alpha": (float, 1000.0, "cyclic frequency, Hz"),
                "doppler_min": (float, -5000.0, "Hz"), "doppler_max": (float, 5000.0, "Hz"),
                "doppler_step": (float, 250.0, "Hz"), "threshold": (float, 0.0, "detection threshold"),
                "smoothing_bins": (int, 11, "frequency smoothing width, bins"),
                "mu": (float, 0.03, "iterative step size"), "iters": (int, 500, "iterations"),
                "P": (int, 2500, "sinc half-width, samples"), "n_tau_max": (int, 2500, "lag bound, samples"),
                "d0": (float, 1.0, "initial delay estimate"), "out": (str, None, "output directory")},
    "calibrate": {**SIGNAL_OPTS, "duration_ms": (float, 20.0, "record length, ms"),
                  "method": (str, "conventional", "grid method"), "trials": (int, 1000, "noise-only trials"),
                  "pfa": (float, 0.01, "target false-alarm probability"), "alpha": (float, 1000.0, "Hz"),
                  "doppler_min": (float, -1000.0, "Hz"), "doppler_max": (float, 1000.0, "Hz"),
                  "doppler_step": (float, 250.0, "Hz")},
    "roc": {"methods": (str, "joint,conventional", "comma-separated methods"), "cnr": (float, 30.0, "dB-Hz"),
            "trials": (int, 500, "paired trials"), "duration_ms": (float, 20.0, "ms"), "prn": (int, 1, "PRN"),
            "fs": (float, 2.046e6, "Hz"), "alpha": (float, 1000.0, "Hz"), "out": (str, "runs", "run root")},
    "pd_curve": {"methods": (str, "joint,conventional", "comma-separated methods"),
                 "cnr_list": (str, "26,28,30,32,34,36", "comma-separated dB-Hz"),
                 "trials": (int, 2000, "paired trials per CNR"), "noise_trials": (int, 10000, "calibration trials"),
                 "pfa": (float, 0.01, "target Pfa"), "duration_ms": (float, 20.0, "ms"), "prn": (int, 1, "PRN"),
                 "fs": (float, 2.046e6, "Hz"), "alpha": (float, 1000.0, "Hz"), "out": (str, "runs", "run root")},
    "converge": {"cnr": (float, 44.0, "dB-Hz"), "seeds": (int, 10, "independent runs"),
                 "mu": (float, 0.03, "step"), "iters": (int, 500, "iterations"), "P": (int, 2500, "samples"),
                 "n_tau_max": (int, 2500, "samples"), "d0": (float, 1.0, "initial estimate"),
                 "tol": (float, 0.5, "error tolerance, samples"), "out": (str, "runs", "run root")},
    "fading_gen": {"L": (int, 16, "sinusoid count"), "fd": (float, 100.0, "max Doppler, Hz"),
                   "T": (float, 1e-4, "update period, s"), "P": (int, None, "coefficient bits (omit: unquantized)"),
                   "n": (int, 10000, "samples"), "out": (str, None, "output CSV")},
    "fading_bias": {"omega": (float, math.pi / 8, "rad/sample"), "delta_b": (float, None, "quantization error"),
                    "P": (int, None, "bits; uses delta_b = 2^-(P+1)")},
    "fading_separation": {"L": (int, None, "sinusoid count"), "P": (int, 12, "bits")},
    "fading_mse": {"P": (int, 12, "bits"), "T": (float, 1e-3, "update period, s"), "fd": (float, 100.0, "Hz")},
    "fading_optimize": {"C": (float, 1e6, "bit-rate budget, bit/s"), "fd": (float, 100.0, "Hz"),
                        "P_min": (int, 8, "bits"), "P_max": (int, 24, "bits"), "out": (str, None, "report JSON")},
}

ACQUIRE_METHODS = {"conventional": "conventional", "cyclic-phase": "cyclic_phase",
                   "cyclic-doppler": "cyclic_doppler", "joint": "joint", "iterative": "iterative"}
FADING_OPS = ("gen", "bias", "separation", "mse", "optimize")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_options(p: argparse.ArgumentParser, table: dict):
    for name, (typ, _default, help_) in table.items():
        if typ is bool:
            p.add_argument(_flag(name), dest=name, action="store_const", const=True, default=None, help=help_)
        else:
            flags = ("--in", "--input") if name == "input" else (_flag(name),)
            p.add_argument(*flags, dest=name, type=typ, default=None, help=help_)
    p.add_argument("--config", default=None, help="JSON file of option values")
    p.add_argument("--seed", type=int, default=None, help="base random seed")
    p.add_argument("--dry-run", action="store_true", help="print resolved parameters and exit")
    p.add_argument("--threads", type=int, default=None, help="worker cap (library code is single-threaded)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="cyclogps", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True)
    for cmd in ("synth", "cacode", "spectrum", "calibrate", "roc", "converge"):
        _add_options(sub.add_parser(cmd), COMMANDS[cmd])
    _add_options(sub.add_parser("pd-curve"), COMMANDS["pd_curve"])
    p = sub.add_parser("acquire")
    p.add_argument("method", choices=list(ACQUIRE_METHODS))
    _add_options(p, COMMANDS["acquire"])
    p = sub.add_parser("fading")
    fsub = p.add_subparsers(dest="op", required=True)
    for op in FADING_OPS:
        _add_options(fsub.add_parser(op), COMMANDS[f"fading_{op}"])
    return top


def _table_key(args) -> str:
    if args.command == "fading":
        return f"fading_{args.op}"
    return args.command.replace("-", "_")


def resolve(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    table = COMMANDS[_table_key(args)]
    cfg = {k: v[1] for k, v in table.items()}
    cfg["seed"] = 0
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"--config: cannot read {args.config}: {e}") from e
        if not isinstance(loaded, dict):
            raise UsageError("--config: top level must be a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise UsageError(f"--config: unknown key(s) {unknown}")
        cfg.update(loaded)
    for k in table:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


def _require(cfg: dict, *names):
    for n in names:
        if cfg.get(n) is None:
            raise UsageError(f"{_flag(n)} is required")


def _load_signal(cfg: dict) -> SampledSignal:
    _require(cfg, "input")
    path = cfg["input"]
    if path.endswith(".csv"):
        if cfg.get("fs") is None:
            raise UsageError("--fs is required for .csv input")
        return read_csv(path, cfg["fs"])
    return read_cgps(path)


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).split(",") if t.strip()]


def _emit(*values):
    print(" ".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in values))


# --- commands -------------------------------------------------------------------

def cmd_synth(cfg):
    _require(cfg, "out")
    fs = cfg["fs"]
    params = SignalParams(prn=cfg["prn"], code_delay=cfg["delay_samples"] * CHIP_RATE / fs,
                          doppler=cfg["doppler"], carrier_phase=cfg["phase"], amplitude=cfg["amplitude"],
                          sample_rate=fs, duration=cfg["duration_ms"] * 1e-3, cnr=cfg["cnr"], mode=cfg["mode"])
    sig = synthesize(params, rng_seed=cfg["seed"])
    out = cfg["out"]
    if out.endswith(".csv"):
        write_csv(out, sig)
    elif out.endswith(".cgps"):
        write_cgps(out, sig)
    else:
        raise UsageError("--out must end in .cgps or .csv")
    log.info("wrote %d samples to %s", len(sig), out)


def cmd_cacode(cfg):
    code = generate_ca_code(cfg["prn"])
    if cfg["octal"]:
        _emit(code.first_chips_octal())
    else:
        print("".join(str(b) for b in code.bits()))


def cmd_spectrum(cfg):
    sig = _load_signal(cfg)
    m = cfg["segment_len"] or acq.SpectrumConfig().resolve_segment_len(cfg["alpha"], sig.sample_rate)
    n = cfg["segments"] or len(sig) // m
    s = cyclic_periodogram(sig, sig, cfg["alpha"], m, n)
    if cfg["smooth_hz"]:
        s = smooth_spectrum(s, cfg["smooth_hz"])
    if cfg["out"]:
        write_spectrum_csv(cfg["out"], s)
    _emit(float(np.max(np.abs(s.values))))


def _grid_config(cfg, fs, n):
    return acq.AcquisitionConfig(prn=cfg["prn"], sample_rate=fs, duration=n / fs, alpha=cfg["alpha"],
                                 doppler_min=cfg["doppler_min"], doppler_max=cfg["doppler_max"],
                                 doppler_step=cfg["doppler_step"],
                                 spectrum=acq.SpectrumConfig(smoothing_bins=cfg["smoothing_bins"]))


def cmd_acquire(cfg, method):
    sig = _load_signal(cfg)
    out = Path(cfg["out"]) if cfg["out"] else None
    if method == "iterative":
        tr = acq.iterative_phase_estimate(sig, cfg["prn"], cfg["alpha"], cfg["mu"], cfg["iters"], cfg["P"],
                                          cfg["n_tau_max"], cfg["d0"])
        if out:
            out.mkdir(parents=True, exist_ok=True)
            np.savetxt(out / "trace.csv", np.column_stack([np.arange(tr.d_hat_per_iter.size), tr.d_hat_per_iter]),
                       delimiter=",", header="iteration,d_hat", comments="", fmt=["%d", "%.17g"])
            (out / "result.json").write_text(json.dumps({
                "method": "iterative", "d_hat": float(tr.d_hat_per_iter[-1]), "converged": tr.converged,
                "converged_at": tr.converged_at, "diverged": tr.diverged, "parameters": cfg}, indent=2) + "\n")
        _emit(float(tr.d_hat_per_iter[-1]))
        return
    gcfg = _grid_config(cfg, sig.sample_rate, len(sig))
    d, f = gcfg.delay_axis(), gcfg.doppler_axis()
    name = ACQUIRE_METHODS[method]
    if name == "conventional":
        grid, res = acq.conventional_acquire(sig, cfg["prn"], d, f, cfg["threshold"])
    elif name == "cyclic_phase":
        grid, res = acq.cyclic_phase_estimate(sig, cfg["prn"], cfg["alpha"], d, gcfg.spectrum, cfg["threshold"])
    elif name == "cyclic_doppler":
        grid, res = acq.cyclic_doppler_estimate(sig, cfg["prn"], cfg["alpha"], f, gcfg.spectrum, cfg["threshold"])
    else:
        grid, res = acq.joint_acquire(sig, cfg["prn"], cfg["alpha"], d, f, gcfg.spectrum, cfg["threshold"])
    if out:
        out.mkdir(parents=True, exist_ok=True)
        grid.write_csv(out / "grid.csv")
        (out / "result.json").write_text(res.to_json(parameters=cfg, seed=cfg["seed"]) + "\n")
    _emit(res.d_hat, res.fd_hat, res.peak, int(res.detected))


def cmd_calibrate(cfg):
    gcfg = acq.AcquisitionConfig(prn=cfg["prn"], sample_rate=cfg["fs"], duration=cfg["duration_ms"] * 1e-3,
                                 alpha=cfg["alpha"], doppler_min=cfg["doppler_min"],
                                 doppler_max=cfg["doppler_max"], doppler_step=cfg["doppler_step"])
    method = cfg["method"].replace("-", "_")
    _emit(acq.calibrate_threshold(method, cfg["trials"], cfg["pfa"], gcfg, cfg["seed"]))


def _trial_config(cfg, **kw) -> ex.TrialConfig:
    return ex.TrialConfig(methods=tuple(m.strip().replace("-", "_") for m in cfg["methods"].split(",")),
                          prn=cfg["prn"], sample_rate=cfg["fs"], duration=cfg["duration_ms"] * 1e-3,
                          alpha=cfg["alpha"], base_seed=cfg["seed"], **kw)


PFA_NOTE = "desk-scale false-alarm rate; the 1e-6 operating point needs ~1e8 calibration trials"


def cmd_roc(cfg):
    tc = _trial_config(cfg, trials_per_point=cfg["trials"], cnr_list=(cfg["cnr"],))
    curves, wall = ex.timed(ex.run_roc, tc, cfg["cnr"])
    run = ex.write_run(cfg["out"], "roc", tc.to_dict(), curves, wall_time=wall, header_note=f"ROC at {cfg['cnr']} dB-Hz")
    print(run)


def cmd_pd_curve(cfg):
    tc = _trial_config(cfg, trials_per_point=cfg["trials"], noise_trials=cfg["noise_trials"],
                       pfa_target=cfg["pfa"], cnr_list=tuple(_floats(cfg["cnr_list"])))
    curves, wall = ex.timed(ex.run_pd_curve, tc)
    crossings = {m: (c.x if (c := ex.crossing(v)) else None) for m, v in curves.items()}
    run = ex.write_run(cfg["out"], "pd", tc.to_dict(), curves, extra={"pd90_crossing": crossings},
                       wall_time=wall, header_note=f"Pfa {tc.pfa_target}: {PFA_NOTE}")
    print(run)


def cmd_converge(cfg):
    cc = ex.ConvergenceConfig(cnr=cfg["cnr"], seeds=cfg["seeds"], mu=cfg["mu"], max_iters=cfg["iters"],
                              P=cfg["P"], n_tau_max=cfg["n_tau_max"], d0=cfg["d0"], error_tol=cfg["tol"],
                              base_seed=cfg["seed"])
    res, wall = ex.timed(ex.run_convergence, cc)
    summary = {k: {kk: vv for kk, vv in v.items() if kk != "errors"} for k, v in res.items()}
    run = ex.write_run(cfg["out"], "converge", cc.to_dict(), {}, extra={"summary": summary}, wall_time=wall)
    for name, v in res.items():
        errs = v["errors"]
        width = max(e.size for e in errs)
        table = np.full((width, len(errs)), np.nan)
        for j, e in enumerate(errs):
            table[: e.size, j] = e
        np.savetxt(run / f"{name}_errors.csv", np.column_stack([np.arange(width), table]), delimiter=",",
                   header="iteration," + ",".join(f"seed{j}" for j in range(len(errs))), comments="", fmt="%.10g")
    _emit(*(res[k]["converged"] for k in res))


def cmd_fading(cfg, op):
    if op == "gen":
        ch = fading.SosChannel(cfg["L"], cfg["fd"], cfg["T"], P=cfg["P"], rng_seed=cfg["seed"])
        i, q = ch.advance(cfg["n"])
        if cfg["out"]:
            fading.write_trace_csv(cfg["out"], i, q, cfg["L"])
        _emit(float(np.mean(fading.envelope(i, q, cfg["L"]) ** 2)))
    elif op == "bias":
        if (cfg["delta_b"] is None) == (cfg["P"] is None):
            raise UsageError("give exactly one of --delta-b and --P")
        db = cfg["delta_b"] if cfg["delta_b"] is not None else 2.0 ** -(cfg["P"] + 1)
        _emit(fading.frequency_bias(cfg["omega"], db), fading.exact_frequency_bias(cfg["omega"], db))
    elif op == "separation":
        if cfg["L"] is None:
            _emit(fading.max_feasible_L(cfg["P"]))
        else:
            _emit(int(fading.check_separation(cfg["L"], cfg["P"])))
    elif op == "mse":
        _emit(fading.mse_model(cfg["P"], cfg["T"], cfg["fd"]))
    elif op == "optimize":
        res = fading.optimize_wordlength(cfg["C"], cfg["fd"], (cfg["P_min"], cfg["P_max"]))
        if cfg["out"]:
            Path(cfg["out"]).write_text(res.to_json() + "\n")
        _emit(res.P, res.T, res.e_s)


def dispatch(args, cfg):
    c = args.command
    if c == "acquire":
        return cmd_acquire(cfg, args.method)
    if c == "fading":
        return cmd_fading(cfg, args.op)
    return {"synth": cmd_synth, "cacode": cmd_cacode, "spectrum": cmd_spectrum, "calibrate": cmd_calibrate,
            "roc": cmd_roc, "pd-curve": cmd_pd_curve, "converge": cmd_converge}[c](cfg)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        if args.dry_run:
            print(json.dumps({"command": args.command, **({"method": args.method} if args.command == "acquire" else {}),
                              **({"op": args.op} if args.command == "fading" else {}), "parameters": cfg},
                             indent=2, sort_keys=True))
            return 0
        dispatch(args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
